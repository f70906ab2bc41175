#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <sstream>
#include <string>

#include "elastobayes/experiments.hpp"

namespace {

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) values.push_back(std::stoi(item));
    }
    return values;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian estimation of an uncertain elastic modulus with "
                 "interlaced polynomial lattice quadrature"};
    app.set_config("--config")->description("flat key = value configuration file");

    eb::run::RunConfig config;
    bool desk = false;
    std::string m_list_text;
    std::string force_text;

    app.add_option("--s", config.s, "expansion truncation dimension");
    app.add_option("--mesh-n", config.mesh_n, "mesh subdivisions per side");
    app.add_option("--data-mesh-n", config.data_mesh_n,
                   "data-generation mesh (0: one refinement finer)");
    app.add_option("--base", config.base, "digit base of the lattice rules");
    app.add_option("--m-list", m_list_text, "comma-separated study precisions");
    app.add_option("--ref-m", config.ref_m, "reference precision");
    app.add_option("--alpha", config.alpha, "digit interlacing factor");
    app.add_option("--nu", config.nu, "Poisson ratio");
    app.add_option("--sigma", config.sigma, "noise covariance scale");
    app.add_option("--seed", config.seed, "run seed");
    app.add_option("--sensors", config.sensors, "default | line:<K> | file:<path>");
    app.add_option("--family", config.family, "modulus basis family");
    app.add_option("--outdir", config.outdir, "output directory");
    app.add_option("--vectors", config.vectors_dir, "generating-vector directory");
    app.add_option("--obs-file", config.obs_file, "observation file path");
    app.add_option("--workers", config.workers, "forward-solve worker threads");
    app.add_option("--grid", config.grid, "density grid resolution");
    app.add_flag("--same-mesh-data", config.same_mesh_data,
                 "generate data on the inversion mesh");
    app.add_option("--force", force_text, "affine body force a1,b1,c1,a2,b2,c2");
    app.add_flag("--desk", desk, "desk-scale preset (s=16, mesh 16, ref m 13)");

    auto* synth = app.add_subcommand("synth", "synthesize noisy observations");
    std::string dump_mesh_path, dump_solution_path;
    synth->add_option("--dump-mesh", dump_mesh_path, "write the data mesh as plain text");
    synth->add_option("--dump-solution", dump_solution_path, "write the truth solution as CSV");

    auto* density = app.add_subcommand("density", "likelihood surface on the s=2 prior box");
    auto* converge = app.add_subcommand("converge", "ratio-estimate convergence table");
    auto* fem_converge =
        app.add_subcommand("fem-converge", "manufactured-solution mesh convergence study");
    std::string fem_ns_text = "8,16,32,64";
    fem_converge->add_option("--mesh-list", fem_ns_text, "comma-separated mesh resolutions");

    auto* gen_points = app.add_subcommand("gen-points", "export a rule's point set as CSV");
    int gen_m = 10;
    bool gen_prior = false;
    std::string gen_out;
    gen_points->add_option("--m", gen_m, "precision of the rule");
    gen_points->add_flag("--prior", gen_prior, "shift points to the prior box");
    gen_points->add_option("--out", gen_out, "output CSV path");

    auto* save_vector =
        app.add_subcommand("save-vector", "construct a generating vector and write it");
    int sv_m = 10;
    int sv_bank = 0;
    std::string sv_out;
    save_vector->add_option("--m", sv_m, "precision of the rule");
    save_vector->add_option("--out", sv_out, "output path");
    save_vector->add_option("--bank-members", sv_bank,
                            "truncate the calibration bank to its first members");

    app.require_subcommand(1);
    for (auto* sub : app.get_subcommands({})) sub->fallthrough();
    CLI11_PARSE(app, argc, argv);

    if (desk) config.apply_desk_preset();
    if (!m_list_text.empty()) config.m_list = parse_int_list(m_list_text);
    if (!force_text.empty()) {
        std::vector<double> dvalues;
        std::stringstream ss(force_text);
        std::string item;
        while (std::getline(ss, item, ',')) dvalues.push_back(std::stod(item));
        if (dvalues.size() != 6) {
            std::cerr << "error: --force needs six comma-separated coefficients\n";
            return 1;
        }
        for (int i = 0; i < 6; ++i) config.force[i] = dvalues[i];
    }

    try {
        if (*synth) {
            const auto result = eb::run::run_synth(config, dump_mesh_path, dump_solution_path);
            std::cout << "wrote " << result.observations << " and " << result.truth << '\n';
        } else if (*density) {
            const auto result = eb::run::run_density(config);
            std::cout << "wrote " << result.csv_path << " and " << result.plot_path
                      << " (argmax theta = " << result.max_likelihood << " at y = ("
                      << result.argmax.x << ", " << result.argmax.y << "))\n";
        } else if (*converge) {
            const auto table = eb::run::run_converge(config);
            std::cout << "wrote " << table.csv_path << " (reference ratio "
                      << table.reference.ratio << " at N = " << table.reference.point_count
                      << ")\n";
            for (const auto& row : table.rows) {
                std::printf("N=%-8llu ratio=%-12.6g err=%-12.4g",
                            static_cast<unsigned long long>(row.n_points), row.ratio, row.err);
                if (row.has_eoc) std::printf(" eoc=%.4f", row.eoc);
                std::printf("\n");
            }
        } else if (*fem_converge) {
            const auto table = eb::run::run_fem_convergence(config, parse_int_list(fem_ns_text));
            std::cout << "wrote " << table.csv_path << '\n';
            for (const auto& row : table.rows) {
                std::printf("n=%-4d l2=%-12.4e", row.n, row.l2_err);
                if (row.has_eoc) std::printf(" l2_eoc=%-7.3f", row.l2_eoc);
                std::printf(" qoi=%-12.4e", row.qoi_err);
                if (row.has_eoc) std::printf(" qoi_eoc=%.3f", row.qoi_eoc);
                std::printf("\n");
            }
        } else if (*gen_points) {
            std::cout << "wrote " << eb::run::run_gen_points(config, gen_m, gen_prior, gen_out)
                      << '\n';
        } else if (*save_vector) {
            std::cout << "wrote " << eb::run::run_save_vector(config, sv_m, sv_out, sv_bank)
                      << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
