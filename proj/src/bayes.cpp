#include "elastobayes/bayes.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

namespace eb::bayes {

void ObservationSetup::validate() const {
    if (sensors.empty()) throw ConfigError("observations: need at least one sensor");
    for (const auto& p : sensors)
        if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0))
            throw ConfigError("observations: sensor outside the domain");
    if (!(sigma > 0.0)) throw ConfigError("observations: sigma must be positive");
    if (delta.size() != 2 * sensors.size())
        throw ConfigError("observations: data vector must have length 2K");
}

std::vector<Vec2> default_sensors() {
    std::vector<Vec2> sensors;
    for (int k = 0; k < 10; ++k)
        sensors.push_back({0.5, 1e-3 + k * (1e-1 - 1e-4)});
    return sensors;
}

std::vector<Vec2> line_sensors(int count) {
    if (count < 1) throw ConfigError("observations: sensor count must be positive");
    std::vector<Vec2> sensors;
    for (int k = 1; k <= count; ++k)
        sensors.push_back({0.5, static_cast<double>(k) / (count + 1)});
    return sensors;
}

std::vector<double> observe(const fem::Displacement& u, const ObservationSetup& setup) {
    std::vector<double> values;
    values.reserve(2 * setup.sensors.size());
    for (const auto& p : setup.sensors) {
        const Vec2 v = fem::evaluate_at(u, p);
        values.push_back(v.x);
        values.push_back(v.y);
    }
    return values;
}

double misfit_potential(std::span<const double> predicted, const ObservationSetup& setup) {
    if (!(setup.sigma > 0.0)) throw ConfigError("potential: sigma must be positive");
    if (predicted.size() != setup.delta.size())
        throw InputError("potential: prediction length does not match the data");
    double sq = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double d = setup.delta[i] - predicted[i];
        sq += d * d;
    }
    return sq / (2.0 * setup.sigma);
}

ForwardContext::ForwardContext(const fem::TriMeshP2& mesh, const fem::DofMap& dofs, KLField field,
                               fem::BodyForce force, ObservationSetup setup,
                               std::function<double(const fem::Displacement&)> qoi)
    : solver_(mesh, dofs, std::move(field), std::move(force)),
      setup_(std::move(setup)),
      qoi_(std::move(qoi)) {
    setup_.validate();
}

SampleValue ForwardContext::eval(std::span<const double> y) {
    const fem::Displacement u = solver_.solve_at(y);
    SampleValue out;
    out.potential = misfit_potential(observe(u, setup_), setup_);
    out.likelihood = std::exp(-out.potential);
    out.qoi = qoi_(u);
    out.weighted_qoi = out.likelihood * out.qoi;
    return out;
}

ForwardContext ForwardContext::clone() const {
    return ForwardContext(solver_.mesh(), solver_.dofs(), solver_.field(), solver_.force(),
                          setup_, qoi_);
}

PosteriorEstimate combine_samples(std::span<const double> likelihoods,
                                  std::span<const double> weighted_qois) {
    if (likelihoods.empty() || likelihoods.size() != weighted_qois.size())
        throw InputError("estimate: sample arrays must be non-empty and of equal length");
    KahanSum z_sum, zp_sum;
    for (double v : likelihoods) z_sum.add(v);
    for (double v : weighted_qois) zp_sum.add(v);
    PosteriorEstimate out;
    out.point_count = likelihoods.size();
    out.z = z_sum.value() / static_cast<double>(likelihoods.size());
    out.z_prime = zp_sum.value() / static_cast<double>(likelihoods.size());
    if (!(out.z > 1e-300))
        throw DegeneratePosteriorError(
            "estimate: normalization below 1e-300, data incompatible with the prior");
    out.ratio = out.z_prime / out.z;
    return out;
}

PosteriorEstimate estimate(const qmc::PointSet& points, ForwardContext& context, int workers) {
    if (points.count == 0) throw InputError("estimate: empty point set");
    if (points.domain != qmc::Domain::prior)
        throw InputError("estimate: points must be shifted to the prior box");

    std::vector<double> likelihoods(points.count), weighted(points.count);
    const auto run_range = [&](ForwardContext& ctx, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const SampleValue v = ctx.eval(points.point(i));
            likelihoods[i] = v.likelihood;
            weighted[i] = v.weighted_qoi;
        }
    };

    if (workers <= 1) {
        run_range(context, 0, points.count);
    } else {
        const std::size_t chunk = (points.count + workers - 1) / workers;
        std::vector<ForwardContext> contexts;
        contexts.reserve(workers - 1);
        for (int w = 1; w < workers; ++w) contexts.push_back(context.clone());
        std::vector<std::thread> threads;
        std::exception_ptr failure;
        std::mutex failure_mutex;
        for (int w = 1; w < workers; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(points.count, begin + chunk);
            if (begin >= end) break;
            threads.emplace_back([&, w, begin, end] {
                try {
                    run_range(contexts[w - 1], begin, end);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            });
        }
        run_range(context, 0, std::min(points.count, chunk));
        for (auto& t : threads) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    PosteriorEstimate out = combine_samples(likelihoods, weighted);
    out.dim = points.dim;
    out.mesh_n = context.solver().mesh().n;
    out.rule_provenance = points.provenance;
    return out;
}

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double GaussianSampler::next() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    const double u1 = uniform01(rng_);
    const double u2 = uniform01(rng_);
    const double radius = std::sqrt(-2.0 * std::log1p(-u1));  // log(1-u1), u1 < 1
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
}

SynthesisResult synthesize_observations(const KLField& field, const fem::BodyForce& force,
                                        std::span<const double> y_star,
                                        const std::vector<Vec2>& sensors, double sigma,
                                        std::uint64_t seed, int data_mesh_n) {
    if (sigma < 0.0) throw ConfigError("synthesize: sigma must be non-negative");
    SynthesisResult result;
    result.truth.assign(y_star.begin(), y_star.end());
    result.seed = seed;
    result.data_mesh_n = data_mesh_n;

    const fem::TriMeshP2 mesh = fem::build_mesh(data_mesh_n);
    const fem::DofMap dofs = fem::make_dof_map(mesh);
    fem::ForwardSolver solver(mesh, dofs, field, force);
    const fem::Displacement u = solver.solve_at(y_star);

    ObservationSetup setup;
    setup.sensors = sensors;
    setup.sigma = sigma;  // sigma 0 gives a noise-free file, unusable for inversion
    for (const auto& p : sensors) {
        const Vec2 v = fem::evaluate_at(u, p);
        result.noiseless.push_back(v.x);
        result.noiseless.push_back(v.y);
    }

    GaussianSampler noise(seed);
    const double stddev = std::sqrt(sigma);
    setup.delta.resize(result.noiseless.size());
    for (std::size_t i = 0; i < setup.delta.size(); ++i)
        setup.delta[i] = result.noiseless[i] + stddev * noise.next();
    result.setup = std::move(setup);
    return result;
}

void save_observations(const SynthesisResult& result, const std::string& path,
                       const std::vector<std::pair<std::string, std::string>>& provenance) {
    std::ofstream out(path);
    if (!out) throw ConfigError("observations: cannot write " + path);
    std::ostringstream truth_blob;
    truth_blob.precision(17);
    for (double v : result.truth) truth_blob << v << ',';

    out << "# " << kProgramName << ' ' << kVersion << '\n';
    out << "# seed = " << result.seed << '\n';
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", result.setup.sigma);
    out << "# sigma = " << buf << '\n';
    out << "# data_mesh_n = " << result.data_mesh_n << '\n';
    out << "# truth_s = " << result.truth.size() << '\n';
    out << "# truth_hash = 0x" << std::hex << fnv1a64(truth_blob.str()) << std::dec << '\n';
    for (const auto& [k, v] : provenance) out << "# " << k << " = " << v << '\n';
    out << "sensor_x,sensor_y,u1,u2\n";
    for (std::size_t k = 0; k < result.setup.sensors.size(); ++k) {
        const auto& p = result.setup.sensors[k];
        char line[160];
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n", p.x, p.y,
                      result.setup.delta[2 * k], result.setup.delta[2 * k + 1]);
        out << line;
    }
}

ObservationSetup load_observations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open observation file");
    ObservationSetup setup;
    setup.sigma = 0.0;
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream is(line.substr(1));
            std::string key, eq;
            if (is >> key >> eq && eq == "=" && key == "sigma") is >> setup.sigma;
            continue;
        }
        if (!header_seen) {  // column header
            header_seen = true;
            continue;
        }
        std::istringstream is(line);
        double x, y, u1, u2;
        char c1, c2, c3;
        if (!(is >> x >> c1 >> y >> c2 >> u1 >> c3 >> u2) || c1 != ',' || c2 != ',' || c3 != ',')
            throw ParseError(path, line_no, "expected 'sensor_x,sensor_y,u1,u2'");
        setup.sensors.push_back({x, y});
        setup.delta.push_back(u1);
        setup.delta.push_back(u2);
    }
    if (setup.sensors.empty()) throw ParseError(path, line_no, "no observation rows found");
    if (!(setup.sigma > 0.0)) throw ParseError(path, 0, "missing or non-positive sigma header");
    setup.validate();
    return setup;
}

}  // namespace eb::bayes
