#include "elastobayes/cbc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace eb::qmc {

double calibration_factor(int power, double rate, double u) {
    const double c = u - 0.5;
    switch (power) {
        case 0:
            if (!(rate > 0.0)) throw ConfigError("cbc: exponential factor needs a positive rate");
            return rate * std::exp(-rate * u) / (1.0 - std::exp(-rate)) - 1.0;
        case 1: return c;
        case 2: return c * c - 1.0 / 12.0;
        case 3: return c * c * c;
        case 4: return c * c * c * c - 1.0 / 80.0;
        default: throw ConfigError("cbc: factor power must be in 0..4");
    }
}

std::function<double(std::span<const double>)> product_integrand(std::vector<double> gammas,
                                                                 int power, double rate) {
    (void)calibration_factor(power, rate, 0.0);  // validates the member kind
    return [g = std::move(gammas), power, rate](std::span<const double> u) {
        double prod = 1.0;
        const std::size_t dims = std::min(g.size(), u.size());
        for (std::size_t j = 0; j < dims; ++j)
            prod *= 1.0 + g[j] * calibration_factor(power, rate, u[j]);
        return prod;
    };
}

CalibrationBank CalibrationBank::standard(int dims) {
    CalibrationBank bank;
    std::vector<double> inv_j, inv_j2, inv_j3;
    for (int j = 1; j <= dims; ++j) {
        const double jd = j;
        inv_j.push_back(1.0 / jd);
        inv_j2.push_back(1.0 / (jd * jd));
        inv_j3.push_back(1.0 / (jd * jd * jd));
    }
    bank.members.push_back({inv_j, 2, 0.0});
    bank.members.push_back({inv_j2, 2, 0.0});
    bank.members.push_back({inv_j3, 2, 0.0});
    bank.members.push_back({inv_j, 0, 4.0});
    bank.members.push_back({inv_j2, 0, 4.0});
    bank.members.push_back({inv_j2, 0, 1.0});
    bank.members.push_back({inv_j, 0, 8.0});
    return bank;
}

double bank_max_error(const LatticeRule& rule, const CalibrationBank& bank) {
    const PointSet points = generate_points(rule);
    double worst = 0.0;
    for (const auto& member : bank.members) {
        std::vector<double> g(
            member.gammas.begin(),
            member.gammas.begin() + std::min<std::size_t>(member.gammas.size(), rule.dim));
        worst = std::max(
            worst,
            std::abs(equal_weight_mean(points, product_integrand(g, member.power, member.rate)) -
                     1.0));
    }
    return worst;
}

namespace {

constexpr int kMaxBankMembers = 8;

// Digit rows of (x^i g mod P)/P for i = 0..m-1, packed as bitmasks (base 2).
std::vector<std::uint32_t> digit_rows_bits(std::uint64_t g_index, const GFPoly& modulus, int m) {
    const GFPoly x_poly(2, {0, 1});
    GFPoly shifted = GFPoly::from_index(g_index, 2);
    std::vector<std::uint32_t> rows(m, 0);
    for (int i = 0; i < m; ++i) {
        const auto digits = fractional_digits(shifted, modulus, m);
        std::uint32_t bits = 0;
        for (int l = 0; l < m; ++l)
            if (digits[l]) bits |= 1u << l;
        rows[i] = bits;
        shifted = mul_mod(shifted, x_poly, modulus);
    }
    return rows;
}

std::vector<std::vector<std::uint8_t>> digit_rows_bytes(std::uint64_t g_index,
                                                        const GFPoly& modulus, int m) {
    const int base = modulus.base();
    const GFPoly x_poly(base, {0, 1});
    GFPoly shifted = GFPoly::from_index(g_index, base);
    std::vector<std::vector<std::uint8_t>> rows(m);
    for (int i = 0; i < m; ++i) {
        rows[i] = fractional_digits(shifted, modulus, m);
        shifted = mul_mod(shifted, x_poly, modulus);
    }
    return rows;
}

struct MemberEval {
    int power = 2;
    double rate = 0.0;
    double gamma = 0.0;   // weight in the open dimension
    double c_term = 0.0;  // completed-dimension error offset
};

// Per-sample factor value for the open coordinate x, exp part supplied by
// the caller when power == 0 (separable precomputation).
inline double open_factor(const MemberEval& m, double x, double exp_part) {
    switch (m.power) {
        case 0: return exp_part - 1.0;
        case 1: return x - 0.5;
        case 2: {
            const double c = x - 0.5;
            return c * c - 1.0 / 12.0;
        }
        case 3: {
            const double c = x - 0.5;
            return c * c * c;
        }
        default: {
            const double c = x - 0.5;
            return c * c * c * c - 1.0 / 80.0;
        }
    }
}

}  // namespace

LatticeRule cbc_construct(int base, int m, int alpha, int s, const CalibrationBank& bank) {
    if (bank.members.empty())
        throw ConfigError("cbc: calibration bank must not be empty");
    if (static_cast<int>(bank.members.size()) > kMaxBankMembers)
        throw ConfigError("cbc: calibration bank is limited to 8 members");
    if (m > 16)
        throw ConfigError("cbc: exhaustive search is limited to m <= 16");
    for (const auto& member : bank.members)
        (void)calibration_factor(member.power, member.power == 0 ? member.rate : 0.0, 0.0);
    const GFPoly modulus = first_irreducible(base, m);
    {
        // Validates base/m/alpha/s up front.
        std::vector<GFPoly> probe(static_cast<std::size_t>(alpha) * s, GFPoly::from_index(1, base));
        make_lattice_rule(base, m, alpha, s, modulus, std::move(probe));
    }

    std::uint64_t n_points = 1;
    for (int i = 0; i < m; ++i) n_points *= base;
    const std::size_t N = static_cast<std::size_t>(n_points);
    const int nb = static_cast<int>(bank.members.size());
    const double inv_n = 1.0 / static_cast<double>(N);

    auto gamma_at = [&](int k, int dim0) {
        const auto& g = bank.members[k].gammas;
        return dim0 < static_cast<int>(g.size()) ? g[dim0] : 0.0;
    };

    // State across component steps. `fixed` holds the bank factors of the
    // completed dimensions per point; `partial` is the interlaced value of
    // the dimension under construction.
    std::vector<double> fixed(N * nb, 1.0);
    std::vector<double> partial(N, 0.0);
    std::vector<std::uint64_t> chosen;
    chosen.reserve(static_cast<std::size_t>(alpha) * s);

    // Base-2 fast path precomputes every candidate's digit rows once.
    std::vector<std::uint32_t> all_rows;
    if (base == 2) {
        all_rows.resize(N * static_cast<std::size_t>(m));
        for (std::uint64_t g = 1; g < n_points; ++g) {
            const auto rows = digit_rows_bits(g, modulus, m);
            std::copy(rows.begin(), rows.end(), all_rows.begin() + g * m);
        }
    }

    // Distinct exponential rates; their point factors separate into a
    // partial-coordinate part and a candidate-digit part.
    std::vector<double> exp_rates;
    for (const auto& member : bank.members)
        if (member.power == 0 &&
            std::find(exp_rates.begin(), exp_rates.end(), member.rate) == exp_rates.end())
            exp_rates.push_back(member.rate);
    const int n_rates = static_cast<int>(exp_rates.size());

    for (int step = 0; step < alpha * s; ++step) {
        const int dim0 = step / alpha;
        const int slot = step % alpha;

        // Weight of digit l (0-based) of this slot inside its coordinate.
        std::vector<double> w(m);
        for (int l = 0; l < m; ++l) {
            double v = 1.0;
            for (int k = 0; k < l * alpha + slot + 1; ++k) v /= base;
            w[l] = v;
        }

        MemberEval members[kMaxBankMembers];
        for (int k = 0; k < nb; ++k) {
            double one = 0.0;
            for (std::size_t n = 0; n < N; ++n) one += fixed[n * nb + k];
            members[k].c_term = one * inv_n - 1.0;
            members[k].gamma = gamma_at(k, dim0);
            members[k].power = bank.members[k].power;
            members[k].rate = bank.members[k].rate;
        }
        int rate_of[kMaxBankMembers] = {};
        for (int k = 0; k < nb; ++k)
            if (members[k].power == 0)
                rate_of[k] = static_cast<int>(std::find(exp_rates.begin(), exp_rates.end(),
                                                        members[k].rate) -
                                              exp_rates.begin());

        // exp(-c * partial[n]) scaled by the normalization, one row per rate.
        std::vector<double> exp_partial(static_cast<std::size_t>(std::max(n_rates, 1)) * N);
        for (int r = 0; r < n_rates; ++r) {
            const double c = exp_rates[r];
            const double norm = c / (1.0 - std::exp(-c));
            for (std::size_t n = 0; n < N; ++n)
                exp_partial[static_cast<std::size_t>(r) * N + n] = norm * std::exp(-c * partial[n]);
        }

        double best_err = std::numeric_limits<double>::infinity();
        std::uint64_t best_g = 0;

        if (base == 2) {
            // Byte lookup tables turn a digit mask into its coordinate value
            // and into exp(-c * value) per exponential rate.
            double t_lo[256], t_hi[256];
            std::vector<std::array<double, 256>> e_lo(n_rates), e_hi(n_rates);
            for (int b8 = 0; b8 < 256; ++b8) {
                double lo = 0.0, hi = 0.0;
                for (int l = 0; l < 8; ++l)
                    if (b8 & (1 << l)) {
                        lo += w[l];
                        if (l + 8 < m) hi += w[l + 8];
                    }
                t_lo[b8] = lo;
                t_hi[b8] = hi;
                for (int r = 0; r < n_rates; ++r) {
                    e_lo[r][b8] = std::exp(-exp_rates[r] * lo);
                    e_hi[r][b8] = std::exp(-exp_rates[r] * hi);
                }
            }
            const double* fx = fixed.data();
            const double* pv = partial.data();
            for (std::uint64_t g = 1; g < n_points; ++g) {
                const std::uint32_t* rows = all_rows.data() + g * m;
                std::uint32_t acc = 0;
                double sacc[kMaxBankMembers] = {};
                for (std::size_t n = 0;;) {
                    const unsigned lo8 = acc & 0xFF, hi8 = (acc >> 8) & 0xFF;
                    const double x = pv[n] + t_lo[lo8] + t_hi[hi8];
                    double expv[8];
                    for (int r = 0; r < n_rates; ++r)
                        expv[r] = exp_partial[static_cast<std::size_t>(r) * N + n] * e_lo[r][lo8] *
                                  e_hi[r][hi8];
                    const double* f = fx + n * nb;
                    for (int k = 0; k < nb; ++k)
                        sacc[k] += f[k] * open_factor(members[k], x,
                                                      members[k].power == 0 ? expv[rate_of[k]] : 0.0);
                    if (++n == N) break;
                    std::uint64_t changed = (n - 1) ^ n;
                    do {
                        acc ^= rows[__builtin_ctzll(changed)];
                        changed &= changed - 1;
                    } while (changed);
                }
                double err = 0.0;
                for (int k = 0; k < nb; ++k)
                    err = std::max(err,
                                   std::abs(members[k].c_term + members[k].gamma * sacc[k] * inv_n));
                if (err < best_err) {
                    best_err = err;
                    best_g = g;
                }
            }
        } else {
            std::vector<std::uint8_t> acc(m), idx(m);
            for (std::uint64_t g = 1; g < n_points; ++g) {
                const auto rows = digit_rows_bytes(g, modulus, m);
                std::fill(acc.begin(), acc.end(), 0);
                std::fill(idx.begin(), idx.end(), 0);
                double sacc[kMaxBankMembers] = {};
                for (std::size_t n = 0;;) {
                    double v = 0.0;
                    for (int l = 0; l < m; ++l) v += acc[l] * w[l];
                    const double x = partial[n] + v;
                    const double* f = fixed.data() + n * nb;
                    for (int k = 0; k < nb; ++k) {
                        double exp_part = 0.0;
                        if (members[k].power == 0)
                            exp_part = exp_partial[static_cast<std::size_t>(rate_of[k]) * N + n] *
                                       std::exp(-members[k].rate * v);
                        sacc[k] += f[k] * open_factor(members[k], x, exp_part);
                    }
                    if (++n == N) break;
                    int pos = 0;
                    while (true) {
                        const int old = idx[pos];
                        const int fresh = (old + 1) % base;
                        idx[pos] = static_cast<std::uint8_t>(fresh);
                        int delta = fresh - old;
                        if (delta < 0) delta += base;
                        for (int l = 0; l < m; ++l)
                            acc[l] = static_cast<std::uint8_t>((acc[l] + delta * rows[pos][l]) % base);
                        if (fresh != 0) break;
                        ++pos;
                    }
                }
                double err = 0.0;
                for (int k = 0; k < nb; ++k)
                    err = std::max(err,
                                   std::abs(members[k].c_term + members[k].gamma * sacc[k] * inv_n));
                if (err < best_err) {
                    best_err = err;
                    best_g = g;
                }
            }
        }
        chosen.push_back(best_g);

        // Fold the winner into the running state.
        {
            const auto rows = digit_rows_bytes(best_g, modulus, m);
            std::vector<std::uint8_t> acc(m, 0), idx(m, 0);
            for (std::size_t n = 0;;) {
                double v = 0.0;
                for (int l = 0; l < m; ++l) v += acc[l] * w[l];
                partial[n] += v;
                if (slot == alpha - 1) {
                    for (int k = 0; k < nb; ++k)
                        fixed[n * nb + k] *=
                            1.0 + members[k].gamma *
                                      calibration_factor(members[k].power, members[k].rate,
                                                         partial[n]);
                }
                if (++n == N) break;
                int pos = 0;
                while (true) {
                    const int old = idx[pos];
                    const int fresh = (old + 1) % base;
                    idx[pos] = static_cast<std::uint8_t>(fresh);
                    int delta = fresh - old;
                    if (delta < 0) delta += base;
                    for (int l = 0; l < m; ++l)
                        acc[l] = static_cast<std::uint8_t>((acc[l] + delta * rows[pos][l]) % base);
                    if (fresh != 0) break;
                    ++pos;
                }
            }
            if (slot == alpha - 1) std::fill(partial.begin(), partial.end(), 0.0);
        }
    }

    std::vector<GFPoly> gen;
    gen.reserve(chosen.size());
    for (auto g : chosen) gen.push_back(GFPoly::from_index(g, base));
    std::ostringstream src;
    src << "cbc bank=" << bank.members.size();
    return make_lattice_rule(base, m, alpha, s, modulus, std::move(gen), src.str());
}

}  // namespace eb::qmc
