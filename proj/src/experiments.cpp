#include "elastobayes/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

namespace eb::run {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir);
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write output file " + path);
    return out;
}

void write_provenance(std::ofstream& out, const RunConfig& config,
                      const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    out << "# " << kProgramName << ' ' << kVersion << '\n';
    out << "# config_hash = 0x" << std::hex << config.hash() << std::dec << '\n';
    out << "# seed = " << config.seed << '\n';
    for (const auto& [k, v] : extra) out << "# " << k << " = " << v << '\n';
}

std::string default_vectors_dir() {
#ifdef EB_DATA_DIR
    return std::string(EB_DATA_DIR) + "/vectors";
#else
    return "data/vectors";
#endif
}

}  // namespace

Vec2 manufactured_solution(Vec2 p) {
    const double pi = std::numbers::pi;
    return {std::sin(pi * p.x) * std::sin(pi * p.y),
            p.x * (1.0 - p.x) * p.y * (1.0 - p.y)};
}

fem::BodyForce manufactured_force(double mu, double lambda) {
    // -div sigma(u*) for constant coefficients:
    //   f = -mu lap(u*) - (lambda + mu) grad(div u*).
    return [mu, lambda](Vec2 p) {
        const double pi = std::numbers::pi;
        const double pi2 = pi * pi;
        const double sx = std::sin(pi * p.x), sy = std::sin(pi * p.y);
        const double cx = std::cos(pi * p.x), cy = std::cos(pi * p.y);
        const double gx = p.x * (1.0 - p.x), hy = p.y * (1.0 - p.y);
        const double dgx = 1.0 - 2.0 * p.x, dhy = 1.0 - 2.0 * p.y;
        const double f1 = (3.0 * mu + lambda) * pi2 * sx * sy - (lambda + mu) * dgx * dhy;
        const double f2 = (4.0 * mu + 2.0 * lambda) * gx + 2.0 * mu * hy -
                          (lambda + mu) * pi2 * cx * cy;
        return Vec2{f1, f2};
    };
}

double manufactured_qoi() {
    const double pi = std::numbers::pi;
    return 4.0 / (pi * pi) + 1.0 / 36.0;
}

KLField field_from(const RunConfig& config) {
    return make_field(config.family, config.s, config.nu);
}

fem::BodyForce force_from(const RunConfig& config) {
    return fem::affine_body_force(config.force);
}

std::vector<Vec2> sensors_from(const RunConfig& config) {
    const std::string& spec = config.sensors;
    if (spec == "default") return bayes::default_sensors();
    if (spec.rfind("line:", 0) == 0) return bayes::line_sensors(std::stoi(spec.substr(5)));
    if (spec.rfind("file:", 0) == 0) {
        const std::string path = spec.substr(5);
        std::ifstream in(path);
        if (!in) throw ConfigError("sensors: cannot open " + path);
        std::vector<Vec2> sensors;
        double x, y;
        while (in >> x >> y) sensors.push_back({x, y});
        if (sensors.empty()) throw ConfigError("sensors: no coordinates in " + path);
        return sensors;
    }
    throw ConfigError("sensors: unknown spec '" + spec + "'");
}

qmc::LatticeRule obtain_rule(const RunConfig& config, int m, int s_override) {
    const int s = s_override > 0 ? s_override : config.s;
    const std::string dir = config.vectors_dir.empty() ? default_vectors_dir() : config.vectors_dir;
    std::ostringstream name;
    name << dir << "/b" << config.base << "_m" << m << "_a" << config.alpha << "_s" << s << ".txt";
    if (std::filesystem::exists(name.str())) {
        qmc::LatticeRule rule = qmc::load_generating_vector(name.str());
        if (rule.base != config.base || rule.precision != m || rule.alpha != config.alpha ||
            rule.dim != s)
            throw ConfigError("vectors: file " + name.str() + " does not match its name");
        return rule;
    }
    return qmc::cbc_construct(config.base, m, config.alpha, s, qmc::CalibrationBank::standard(s));
}

SynthPaths run_synth(const RunConfig& config, const std::string& dump_mesh_path,
                     const std::string& dump_solution_path) {
    config.validate();
    ensure_dir(config.outdir);

    const KLField field = field_from(config);
    const fem::BodyForce force = force_from(config);
    const std::vector<Vec2> sensors = sensors_from(config);

    // Truth sample from the prior box; the noise stream is seeded separately.
    std::mt19937_64 rng(config.seed);
    std::vector<double> y_star(config.s);
    for (auto& v : y_star) v = bayes::uniform01(rng) - 0.5;

    const int data_n = config.effective_data_mesh_n();
    const bayes::SynthesisResult result = bayes::synthesize_observations(
        field, force, y_star, sensors, config.sigma, config.seed + 1, data_n);

    SynthPaths paths;
    paths.observations = config.observation_path();
    paths.truth = config.outdir + "/truth.csv";

    {
        std::ostringstream hash;
        hash << "0x" << std::hex << config.hash();
        bayes::save_observations(result, paths.observations,
                                 {{"config_hash", hash.str()},
                                  {"s", std::to_string(config.s)},
                                  {"family", config.family},
                                  {"nu", fmt(config.nu)}});
    }
    {
        std::ofstream out = open_output(paths.truth);
        write_provenance(out, config, {{"data_mesh_n", std::to_string(data_n)}});
        out << "j,y_star\n";
        for (std::size_t j = 0; j < y_star.size(); ++j)
            out << (j + 1) << ',' << fmt(y_star[j]) << '\n';
    }

    if (!dump_mesh_path.empty() || !dump_solution_path.empty()) {
        const fem::TriMeshP2 mesh = fem::build_mesh(data_n);
        if (!dump_mesh_path.empty()) fem::dump_mesh(mesh, dump_mesh_path);
        if (!dump_solution_path.empty()) {
            const fem::DofMap dofs = fem::make_dof_map(mesh);
            fem::ForwardSolver solver(mesh, dofs, field, force);
            fem::dump_solution(solver.solve_at(y_star), dump_solution_path);
        }
    }
    return paths;
}

DensityResult run_density(const RunConfig& config) {
    config.validate();
    if (config.s != 2) throw ConfigError("density: requires s = 2");
    if (config.grid < 2) throw ConfigError("density: grid must be at least 2");
    ensure_dir(config.outdir);

    const bayes::ObservationSetup setup = bayes::load_observations(config.observation_path());
    const fem::TriMeshP2 mesh = fem::build_mesh(config.mesh_n);
    const fem::DofMap dofs = fem::make_dof_map(mesh);
    bayes::ForwardContext context(mesh, dofs, field_from(config), force_from(config), setup);

    const int g = config.grid;
    std::vector<double> likelihood(static_cast<std::size_t>(g) * g);
    auto node = [g](int i) { return -0.5 + (i + 0.5) / static_cast<double>(g); };
    auto fill_rows = [&](bayes::ForwardContext& ctx, int row_begin, int row_end) {
        for (int i = row_begin; i < row_end; ++i)
            for (int j = 0; j < g; ++j) {
                const double y[2] = {node(i), node(j)};
                likelihood[static_cast<std::size_t>(i) * g + j] = ctx.likelihood(y);
            }
    };
    if (config.workers <= 1) {
        fill_rows(context, 0, g);
    } else {
        const int chunk = (g + config.workers - 1) / config.workers;
        std::vector<bayes::ForwardContext> contexts;
        for (int w = 1; w < config.workers; ++w) contexts.push_back(context.clone());
        std::vector<std::thread> threads;
        for (int w = 1; w < config.workers; ++w) {
            const int begin = w * chunk, end = std::min(g, begin + chunk);
            if (begin >= end) break;
            threads.emplace_back([&, w, begin, end] { fill_rows(contexts[w - 1], begin, end); });
        }
        fill_rows(context, 0, std::min(g, chunk));
        for (auto& t : threads) t.join();
    }

    DensityResult result;
    result.grid = g;
    result.csv_path = config.outdir + "/density.csv";
    result.plot_path = config.outdir + "/density.gp";
    result.max_likelihood = -1.0;
    {
        std::ofstream out = open_output(result.csv_path);
        write_provenance(out, config, {{"grid", std::to_string(g)}});
        out << "y1,y2,theta\n";
        for (int i = 0; i < g; ++i)
            for (int j = 0; j < g; ++j) {
                const double v = likelihood[static_cast<std::size_t>(i) * g + j];
                out << fmt(node(i)) << ',' << fmt(node(j)) << ',' << fmt(v) << '\n';
                if (v > result.max_likelihood) {
                    result.max_likelihood = v;
                    result.argmax = {node(i), node(j)};
                }
            }
    }
    {
        std::ofstream out = open_output(result.plot_path);
        write_provenance(out, config, {{"grid", std::to_string(g)}});
        // 4 provenance comments + 1 column header before the data rows.
        out << "set datafile separator ','\n"
               "set pm3d map\n"
               "set xlabel 'y1'\nset ylabel 'y2'\n"
               "set title 'un-normalized posterior density'\n"
               "splot 'density.csv' skip 5 using 1:2:3 with pm3d notitle\n";
    }
    return result;
}

namespace {

bayes::PosteriorEstimate estimate_for_rule(bayes::ForwardContext& context,
                                           const qmc::LatticeRule& rule, int workers) {
    const qmc::PointSet points = qmc::shift_to_prior(qmc::generate_points(rule));
    return bayes::estimate(points, context, workers);
}

}  // namespace

ConvergenceTable run_converge(const RunConfig& config) {
    config.validate();
    ensure_dir(config.outdir);
    const std::string obs_path = config.observation_path();
    if (!std::filesystem::exists(obs_path))
        throw ConfigError("converge: observation file " + obs_path + " not found; run synth first");
    const bayes::ObservationSetup setup = bayes::load_observations(obs_path);

    const fem::TriMeshP2 mesh = fem::build_mesh(config.mesh_n);
    const fem::DofMap dofs = fem::make_dof_map(mesh);
    bayes::ForwardContext context(mesh, dofs, field_from(config), force_from(config), setup);

    ConvergenceTable table;
    std::vector<bayes::PosteriorEstimate> estimates;
    for (int m : config.m_list)
        estimates.push_back(estimate_for_rule(context, obtain_rule(config, m), config.workers));
    table.reference =
        estimate_for_rule(context, obtain_rule(config, config.ref_m), config.workers);

    for (std::size_t i = 0; i < estimates.size(); ++i) {
        ConvergenceRow row;
        row.n_points = estimates[i].point_count;
        row.z_prime = estimates[i].z_prime;
        row.z = estimates[i].z;
        row.ratio = estimates[i].ratio;
        row.err = std::abs(estimates[i].ratio - table.reference.ratio);
        if (i > 0) {
            row.eoc = empirical_order(table.rows[i - 1].err, row.err,
                                      static_cast<double>(table.rows[i - 1].n_points),
                                      static_cast<double>(row.n_points));
            row.has_eoc = true;
        }
        table.rows.push_back(row);
    }

    table.csv_path = config.outdir + "/converge.csv";
    std::ofstream out = open_output(table.csv_path);
    write_provenance(out, config,
                     {{"mesh_n", std::to_string(config.mesh_n)},
                      {"s", std::to_string(config.s)},
                      {"alpha", std::to_string(config.alpha)},
                      {"ref_n", std::to_string(table.reference.point_count)},
                      {"ref_ratio", fmt(table.reference.ratio)},
                      {"ref_rule", table.reference.rule_provenance}});
    out << "N,z_prime,z,ratio,err,eoc\n";
    for (const auto& row : table.rows) {
        out << row.n_points << ',' << fmt(row.z_prime) << ',' << fmt(row.z) << ','
            << fmt(row.ratio) << ',' << fmt(row.err) << ',';
        if (row.has_eoc) out << fmt(row.eoc);
        out << '\n';
    }
    return table;
}

FemConvergenceTable run_fem_convergence(const RunConfig& config, std::vector<int> mesh_sizes) {
    config.validate();
    ensure_dir(config.outdir);
    if (mesh_sizes.empty()) throw ConfigError("fem-converge: empty mesh list");

    // Constant unit modulus: the built-in family at y = 0.
    const KLField field = make_field("sine-product", 1, config.nu);
    const auto [mu, lambda] = field.lame(1.0);
    const fem::BodyForce force = manufactured_force(mu, lambda);
    const double qoi_exact = manufactured_qoi();

    FemConvergenceTable table;
    for (std::size_t i = 0; i < mesh_sizes.size(); ++i) {
        const int n = mesh_sizes[i];
        const fem::TriMeshP2 mesh = fem::build_mesh(n);
        const fem::DofMap dofs = fem::make_dof_map(mesh);
        fem::ForwardSolver solver(mesh, dofs, field, force);
        const std::vector<double> zero(1, 0.0);
        const fem::Displacement u = solver.solve_at(zero);

        FemConvergenceRow row;
        row.n = n;
        row.l2_err = fem::l2_error(u, manufactured_solution);
        row.qoi_err = std::abs(fem::qoi_integral(u) - qoi_exact);
        if (i > 0) {
            const auto& prev = table.rows[i - 1];
            row.l2_eoc = empirical_order(prev.l2_err, row.l2_err, prev.n, n);
            row.qoi_eoc = empirical_order(prev.qoi_err, row.qoi_err, prev.n, n);
            row.has_eoc = true;
        }
        table.rows.push_back(row);
    }

    table.csv_path = config.outdir + "/fem_converge.csv";
    std::ofstream out = open_output(table.csv_path);
    write_provenance(out, config, {{"nu", fmt(config.nu)}});
    out << "n,l2_err,l2_eoc,qoi_err,qoi_eoc\n";
    for (const auto& row : table.rows) {
        out << row.n << ',' << fmt(row.l2_err) << ',';
        if (row.has_eoc) out << fmt(row.l2_eoc);
        out << ',' << fmt(row.qoi_err) << ',';
        if (row.has_eoc) out << fmt(row.qoi_eoc);
        out << '\n';
    }
    return table;
}

std::string run_gen_points(const RunConfig& config, int m, bool prior_box,
                           const std::string& out_path) {
    config.validate();
    ensure_dir(config.outdir);
    const qmc::LatticeRule rule = obtain_rule(config, m);
    qmc::PointSet points = qmc::generate_points(rule);
    if (prior_box) points = qmc::shift_to_prior(points);
    const std::string path =
        out_path.empty() ? config.outdir + "/points_m" + std::to_string(m) + ".csv" : out_path;
    std::ostringstream hash;
    hash << "0x" << std::hex << config.hash();
    qmc::save_points_csv(points, path,
                         {{"config_hash", hash.str()},
                          {"box", prior_box ? "prior" : "unit"}});
    return path;
}

std::string run_save_vector(const RunConfig& config, int m, const std::string& out_path,
                            int bank_members) {
    config.validate();
    qmc::CalibrationBank bank = qmc::CalibrationBank::standard(config.s);
    if (bank_members < 0 || bank_members > static_cast<int>(bank.members.size()))
        throw ConfigError("save-vector: bank member count out of range");
    if (bank_members > 0) bank.members.resize(bank_members);
    const qmc::LatticeRule rule =
        qmc::cbc_construct(config.base, m, config.alpha, config.s, bank);
    std::string path = out_path;
    if (path.empty()) {
        ensure_dir(config.outdir);
        std::ostringstream name;
        name << config.outdir << "/b" << config.base << "_m" << m << "_a" << config.alpha << "_s"
             << config.s << ".txt";
        path = name.str();
    }
    qmc::save_generating_vector(rule, path);
    return path;
}

std::vector<double> eoc_column(std::span<const double> errs, std::span<const double> n_values) {
    if (errs.size() != n_values.size())
        throw InputError("eoc: err and N columns must have equal length");
    std::vector<double> eoc(errs.size(), 0.0);
    for (std::size_t i = 1; i < errs.size(); ++i)
        eoc[i] = empirical_order(errs[i - 1], errs[i], n_values[i - 1], n_values[i]);
    return eoc;
}

}  // namespace eb::run
