#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "elastobayes/fem.hpp"
#include "elastobayes/qmc.hpp"

namespace eb::bayes {

/// Sensors, noise covariance scale sigma (the covariance is sigma * I) and
/// the observed data vector of length 2K.
struct ObservationSetup {
    std::vector<Vec2> sensors;
    double sigma = 0.1;
    std::vector<double> delta;

    int sensor_count() const { return static_cast<int>(sensors.size()); }
    void validate() const;
};

/// The ten default sensors on the vertical mid line:
/// x_k = (0.5, 1e-3 + k (1e-1 - 1e-4)), k = 0..9.
std::vector<Vec2> default_sensors();
/// K sensors evenly spread over the vertical mid line.
std::vector<Vec2> line_sensors(int count);

/// Point values (u1, u2) at each sensor, sensor order preserved,
/// component-major within each sensor.
std::vector<double> observe(const fem::Displacement& u, const ObservationSetup& setup);

/// Covariance-weighted least squares misfit: ||delta - predicted||^2 / (2 sigma).
double misfit_potential(std::span<const double> predicted, const ObservationSetup& setup);

struct SampleValue {
    double likelihood = 0.0;  // exp(-potential), in (0, 1]
    double qoi = 0.0;
    double weighted_qoi = 0.0;  // likelihood * qoi
    double potential = 0.0;
};

/// Shared state for posterior evaluations: one forward solver plus the
/// observation setup and the quantity-of-interest functional. The forward
/// solve of a sample is shared between the likelihood and the QoI.
class ForwardContext {
public:
    ForwardContext(const fem::TriMeshP2& mesh, const fem::DofMap& dofs, KLField field,
                   fem::BodyForce force, ObservationSetup setup,
                   std::function<double(const fem::Displacement&)> qoi = fem::qoi_integral);

    SampleValue eval(std::span<const double> y);
    double likelihood(std::span<const double> y) { return eval(y).likelihood; }
    double weighted_qoi(std::span<const double> y) { return eval(y).weighted_qoi; }

    const ObservationSetup& setup() const { return setup_; }
    const fem::ForwardSolver& solver() const { return solver_; }

    ForwardContext clone() const;

private:
    fem::ForwardSolver solver_;
    ObservationSetup setup_;
    std::function<double(const fem::Displacement&)> qoi_;
};

struct PosteriorEstimate {
    double z_prime = 0.0;
    double z = 0.0;
    double ratio = 0.0;
    std::uint64_t point_count = 0;
    int dim = 0;
    int mesh_n = 0;
    std::string rule_provenance;
};

/// Deterministic reduction of per-sample (likelihood, weighted qoi) pairs:
/// z = mean likelihood, z' = mean weighted qoi, ratio = z'/z. Raises
/// DegeneratePosteriorError when z falls below 1e-300.
PosteriorEstimate combine_samples(std::span<const double> likelihoods,
                                  std::span<const double> weighted_qois);

/// Equal-weight ratio estimator over a point set in the prior box. Forward
/// solves may run on `workers` threads; the reduction order is fixed by the
/// point index, so the result does not depend on the worker count.
PosteriorEstimate estimate(const qmc::PointSet& points, ForwardContext& context, int workers = 1);

/// Uniform [0,1) double from the top 53 bits of a 64-bit draw.
double uniform01(std::mt19937_64& rng);

/// Seed-stable Gaussian stream: mt19937_64 feeding the Box-Muller transform,
/// pairs consumed cosine first.
class GaussianSampler {
public:
    explicit GaussianSampler(std::uint64_t seed) : rng_(seed) {}
    double next();

private:
    std::mt19937_64 rng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

struct SynthesisResult {
    ObservationSetup setup;
    std::vector<double> truth;      // parameter vector used
    std::vector<double> noiseless;  // predictions before noise
    std::uint64_t seed = 0;
    int data_mesh_n = 0;
};

/// Forward-solves at y_star on the data mesh and adds N(0, sigma I) noise
/// (standard deviation sqrt(sigma)) from the seeded Gaussian stream.
SynthesisResult synthesize_observations(const KLField& field, const fem::BodyForce& force,
                                        std::span<const double> y_star,
                                        const std::vector<Vec2>& sensors, double sigma,
                                        std::uint64_t seed, int data_mesh_n);

/// Observation CSV: provenance comments, then sensor x, y, observed u1, u2.
void save_observations(const SynthesisResult& result, const std::string& path,
                       const std::vector<std::pair<std::string, std::string>>& provenance = {});
ObservationSetup load_observations(const std::string& path);

}  // namespace eb::bayes
