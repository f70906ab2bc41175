#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "elastobayes/core.hpp"

namespace eb::run {

/// Everything a command run depends on. Flags mirror the field names; a
/// flat key = value config file may set any of them, with command-line
/// flags taking precedence. Environment variables are never consulted.
struct RunConfig {
    int s = 64;
    int mesh_n = 32;
    int data_mesh_n = 0;  // 0: one refinement finer than mesh_n
    int base = 2;
    std::vector<int> m_list{8, 10, 11, 12};
    int ref_m = 15;
    int alpha = 2;
    double nu = 0.4;
    double sigma = 0.1;
    std::uint64_t seed = 20240501;
    std::string sensors = "default";  // "default" | "line:<K>" | "file:<path>"
    std::string family = "sine-product";
    std::string outdir = "out";
    std::string vectors_dir;          // empty: built-in data directory
    std::string obs_file;             // empty: <outdir>/observations.csv
    int workers = 1;
    int grid = 65;
    bool same_mesh_data = false;
    std::array<double, 6> force{2.0, 0.0, 10.0, 0.0, 1.0, -3.0};

    int effective_data_mesh_n() const {
        return same_mesh_data ? mesh_n : (data_mesh_n > 0 ? data_mesh_n : 2 * mesh_n);
    }
    std::string observation_path() const {
        return obs_file.empty() ? outdir + "/observations.csv" : obs_file;
    }

    /// CI-scale preset: s = 16, mesh 16, reference m = 13.
    void apply_desk_preset();

    void validate() const;

    /// Canonical text form; hashed into output provenance headers.
    std::string canonical_text() const;
    std::uint64_t hash() const { return fnv1a64(canonical_text()); }
};

}  // namespace eb::run
