#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "elastobayes/bayes.hpp"
#include "elastobayes/cbc.hpp"
#include "elastobayes/config.hpp"

namespace eb::run {

/// Manufactured displacement for the convergence harness:
///   u*(x) = (sin(pi x1) sin(pi x2), x1 (1-x1) x2 (1-x2)),
/// vanishing on the boundary of the unit square.
Vec2 manufactured_solution(Vec2 p);
/// Matching body force for constant Lame parameters, f = -div sigma(u*).
fem::BodyForce manufactured_force(double mu, double lambda);
/// Exact value of int (u1* + u2*) dx.
double manufactured_qoi();

KLField field_from(const RunConfig& config);
fem::BodyForce force_from(const RunConfig& config);
std::vector<Vec2> sensors_from(const RunConfig& config);

/// Generating vector for (base, m, alpha, s): loaded from
/// "<vectors_dir>/b<base>_m<m>_a<alpha>_s<s>.txt" when present, otherwise
/// constructed by the component-by-component search (slow for large m).
qmc::LatticeRule obtain_rule(const RunConfig& config, int m, int s_override = 0);

struct SynthPaths {
    std::string observations;
    std::string truth;
};
/// Draws the truth sample from the prior with the run seed, forward-solves
/// on the data mesh, adds noise, writes the observation and truth files.
SynthPaths run_synth(const RunConfig& config, const std::string& dump_mesh_path = {},
                     const std::string& dump_solution_path = {});

struct DensityResult {
    std::string csv_path;
    std::string plot_path;
    int grid = 0;
    double max_likelihood = 0.0;
    Vec2 argmax{};
};
/// Likelihood surface on a grid over the two-dimensional prior box.
DensityResult run_density(const RunConfig& config);

struct ConvergenceRow {
    std::uint64_t n_points = 0;
    double z_prime = 0.0;
    double z = 0.0;
    double ratio = 0.0;
    double err = 0.0;
    double eoc = 0.0;
    bool has_eoc = false;
};
struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;
    bayes::PosteriorEstimate reference;
    std::string csv_path;
};
/// Ratio estimates for every study m against the reference rule, with the
/// error and empirical-order columns.
ConvergenceTable run_converge(const RunConfig& config);

struct FemConvergenceRow {
    int n = 0;
    double l2_err = 0.0;
    double l2_eoc = 0.0;
    double qoi_err = 0.0;
    double qoi_eoc = 0.0;
    bool has_eoc = false;
};
struct FemConvergenceTable {
    std::vector<FemConvergenceRow> rows;
    std::string csv_path;
};
/// Manufactured-solution study over the given mesh resolutions.
FemConvergenceTable run_fem_convergence(const RunConfig& config,
                                        std::vector<int> mesh_sizes = {8, 16, 32, 64});

/// Point-set export for one rule.
std::string run_gen_points(const RunConfig& config, int m, bool prior_box,
                           const std::string& out_path = {});

/// Construct a generating vector and write it in the plain-text format.
/// `bank_members` truncates the standard calibration bank to its first
/// members (0 keeps all of them).
std::string run_save_vector(const RunConfig& config, int m, const std::string& out_path = {},
                            int bank_members = 0);

/// err -> order column; entry i is empty for i = 0 (no predecessor).
std::vector<double> eoc_column(std::span<const double> errs, std::span<const double> n_values);

}  // namespace eb::run
