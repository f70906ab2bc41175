#include "elastobayes/config.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace eb::run {

void RunConfig::apply_desk_preset() {
    s = 16;
    mesh_n = 16;
    data_mesh_n = 0;
    m_list = {8, 10, 11, 12};
    ref_m = 13;
}

void RunConfig::validate() const {
    if (s < 1) throw ConfigError("config: s must be positive");
    if (mesh_n < 2) throw ConfigError("config: mesh_n must be at least 2");
    if (data_mesh_n != 0 && data_mesh_n < 2)
        throw ConfigError("config: data_mesh_n must be at least 2");
    if (base < 2) throw ConfigError("config: base must be at least 2");
    if (alpha < 1) throw ConfigError("config: alpha must be at least 1");
    if (m_list.empty()) throw ConfigError("config: m_list must not be empty");
    for (int m : m_list) {
        if (m < 1) throw ConfigError("config: every m must be positive");
        if (m >= ref_m)
            throw ConfigError("config: reference m must exceed every study m");
    }
    if (!std::is_sorted(m_list.begin(), m_list.end()) ||
        std::adjacent_find(m_list.begin(), m_list.end()) != m_list.end())
        throw ConfigError("config: m_list must be strictly increasing");
    if (!(nu > 0.0 && nu < 0.5)) throw ConfigError("config: nu must lie in (0, 1/2)");
    if (!(sigma > 0.0)) throw ConfigError("config: sigma must be positive");
    if (workers < 1) throw ConfigError("config: workers must be at least 1");
    if (grid < 2) throw ConfigError("config: grid must be at least 2");
}

std::string RunConfig::canonical_text() const {
    std::ostringstream os;
    os << "s=" << s << "\nmesh_n=" << mesh_n << "\ndata_mesh_n=" << effective_data_mesh_n()
       << "\nbase=" << base << "\nm_list=";
    for (std::size_t i = 0; i < m_list.size(); ++i) os << (i ? "," : "") << m_list[i];
    os << "\nref_m=" << ref_m << "\nalpha=" << alpha;
    char buf[64];
    std::snprintf(buf, sizeof buf, "\nnu=%.17g\nsigma=%.17g", nu, sigma);
    os << buf << "\nseed=" << seed << "\nsensors=" << sensors << "\nfamily=" << family
       << "\ngrid=" << grid << "\nsame_mesh_data=" << (same_mesh_data ? 1 : 0) << "\nforce=";
    for (std::size_t i = 0; i < force.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s%.17g", i ? "," : "", force[i]);
        os << buf;
    }
    os << '\n';
    return os.str();
}

}  // namespace eb::run
