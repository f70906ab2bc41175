#include "elastobayes/qmc.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

namespace eb::qmc {

namespace {

void require_prime_base(int base) {
    if (base < 2) throw ConfigError("qmc: base must be a prime >= 2");
    for (int d = 2; d * d <= base; ++d)
        if (base % d == 0) throw ConfigError("qmc: base must be prime, got " + std::to_string(base));
}

void require_same_base(const GFPoly& a, const GFPoly& b) {
    if (a.base() != b.base())
        throw InputError("qmc: mixed polynomial bases " + std::to_string(a.base()) + " and " +
                         std::to_string(b.base()));
}

int mod_inverse(int a, int b) {
    // b prime and a != 0 mod b; Fermat.
    int result = 1;
    int power = a % b;
    int e = b - 2;
    while (e > 0) {
        if (e & 1) result = result * power % b;
        power = power * power % b;
        e >>= 1;
    }
    return result;
}

std::vector<std::uint8_t> strip(std::vector<std::uint8_t> c) {
    while (!c.empty() && c.back() == 0) c.pop_back();
    return c;
}

}  // namespace

GFPoly::GFPoly(int base, std::vector<std::uint8_t> coeffs) : base_(base) {
    require_prime_base(base);
    for (auto c : coeffs)
        if (c >= base) throw InputError("qmc: polynomial coefficient out of range for base");
    coeffs_ = strip(std::move(coeffs));
}

GFPoly GFPoly::from_index(std::uint64_t n, int base) {
    require_prime_base(base);
    std::vector<std::uint8_t> c;
    while (n > 0) {
        c.push_back(static_cast<std::uint8_t>(n % base));
        n /= base;
    }
    GFPoly p(base);
    p.coeffs_ = std::move(c);
    return p;
}

std::uint64_t GFPoly::index() const {
    std::uint64_t n = 0;
    for (int i = degree(); i >= 0; --i) n = n * base_ + coeffs_[i];
    return n;
}

GFPoly add(const GFPoly& a, const GFPoly& b) {
    require_same_base(a, b);
    const int base = a.base();
    std::vector<std::uint8_t> c(std::max(a.coeffs().size(), b.coeffs().size()), 0);
    for (std::size_t i = 0; i < c.size(); ++i)
        c[i] = static_cast<std::uint8_t>((a.coeff(static_cast<int>(i)) + b.coeff(static_cast<int>(i))) % base);
    return GFPoly(base, std::move(c));
}

GFPoly mul(const GFPoly& a, const GFPoly& b) {
    require_same_base(a, b);
    if (a.is_zero() || b.is_zero()) return GFPoly(a.base());
    const int base = a.base();
    std::vector<std::uint8_t> c(a.coeffs().size() + b.coeffs().size() - 1, 0);
    for (std::size_t i = 0; i < a.coeffs().size(); ++i)
        for (std::size_t j = 0; j < b.coeffs().size(); ++j)
            c[i + j] = static_cast<std::uint8_t>((c[i + j] + a.coeffs()[i] * b.coeffs()[j]) % base);
    return GFPoly(base, std::move(c));
}

std::pair<GFPoly, GFPoly> divmod(const GFPoly& a, const GFPoly& d) {
    require_same_base(a, d);
    if (d.is_zero()) throw InputError("qmc: polynomial division by zero");
    const int base = a.base();
    if (a.degree() < d.degree()) return {GFPoly(base), a};
    std::vector<std::uint8_t> rem(a.coeffs());
    std::vector<std::uint8_t> quot(a.degree() - d.degree() + 1, 0);
    const int lead_inv = mod_inverse(d.coeffs().back(), base);
    for (int k = a.degree() - d.degree(); k >= 0; --k) {
        const int factor = rem[k + d.degree()] * lead_inv % base;
        quot[k] = static_cast<std::uint8_t>(factor);
        if (factor == 0) continue;
        for (int i = 0; i <= d.degree(); ++i) {
            int v = rem[k + i] - factor * d.coeff(i) % base;
            v %= base;
            if (v < 0) v += base;
            rem[k + i] = static_cast<std::uint8_t>(v);
        }
    }
    return {GFPoly(base, std::move(quot)), GFPoly(base, std::move(rem))};
}

GFPoly mul_mod(const GFPoly& a, const GFPoly& g, const GFPoly& p) {
    require_same_base(a, g);
    require_same_base(a, p);
    return divmod(mul(a, g), p).second;
}

bool is_irreducible(const GFPoly& p) {
    const int base = p.base();
    const int deg = p.degree();
    if (deg <= 0) return false;
    for (int d = 1; 2 * d <= deg; ++d) {
        const std::uint64_t lead = 1;
        std::uint64_t power = 1;
        for (int i = 0; i < d; ++i) power *= base;
        for (std::uint64_t k = 0; k < power; ++k) {
            const GFPoly divisor = GFPoly::from_index(lead * power + k, base);
            if (divmod(p, divisor).second.is_zero()) return false;
        }
    }
    return true;
}

GFPoly first_irreducible(int base, int degree) {
    require_prime_base(base);
    if (degree < 1) throw ConfigError("qmc: irreducible degree must be >= 1");
    static std::map<std::pair<int, int>, GFPoly> cache;
    static std::mutex cache_mutex;
    std::lock_guard<std::mutex> lock(cache_mutex);
    const auto key = std::make_pair(base, degree);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    std::uint64_t power = 1;
    for (int i = 0; i < degree; ++i) power *= base;
    for (std::uint64_t k = 0; k < power; ++k) {
        GFPoly candidate = GFPoly::from_index(power + k, base);  // monic
        if (is_irreducible(candidate)) {
            cache.emplace(key, candidate);
            return candidate;
        }
    }
    throw ConfigError("qmc: no irreducible polynomial found");  // unreachable for prime base
}

std::vector<std::uint8_t> fractional_digits(const GFPoly& a, const GFPoly& p, int count) {
    require_same_base(a, p);
    const int base = a.base();
    const int deg_p = p.degree();
    if (deg_p < 1) throw InputError("qmc: modulus must have positive degree");
    if (a.degree() >= deg_p)
        throw InputError("qmc: numerator degree must be below the modulus degree");
    if (count < 0) throw InputError("qmc: digit count must be non-negative");
    // Matching coefficients of x^(deg_p - l) in a = p * sum_l t_l x^-l gives
    // t_l = lead(p)^-1 (a_{deg_p - l} - sum_{i<l} p_{deg_p - l + i} t_i).
    const int lead_inv = mod_inverse(p.coeffs().back(), base);
    std::vector<std::uint8_t> t(count, 0);
    for (int l = 1; l <= count; ++l) {
        int acc = a.coeff(deg_p - l);
        for (int i = std::max(1, l - deg_p); i < l; ++i)
            acc -= p.coeff(deg_p - l + i) * t[i - 1] % base;
        acc %= base;
        if (acc < 0) acc += base;
        t[l - 1] = static_cast<std::uint8_t>(acc * lead_inv % base);
    }
    return t;
}

double digits_to_value(std::span<const std::uint8_t> digits, int base) {
    double value = 0.0;
    for (std::size_t i = digits.size(); i-- > 0;)
        value = (value + digits[i]) / base;
    return value;
}

std::vector<std::uint8_t> interlace_digits(const std::vector<std::vector<std::uint8_t>>& blocks) {
    const int alpha = static_cast<int>(blocks.size());
    if (alpha == 0) throw InputError("qmc: interlacing needs at least one block");
    const std::size_t m = blocks[0].size();
    for (const auto& b : blocks)
        if (b.size() != m) throw InputError("qmc: interlacing blocks must have equal length");
    std::vector<std::uint8_t> out(alpha * m, 0);
    for (std::size_t i = 0; i < m; ++i)
        for (int j = 0; j < alpha; ++j)
            out[i * alpha + j] = blocks[j][i];
    return out;
}

std::vector<std::vector<std::uint8_t>> deinterlace_digits(std::span<const std::uint8_t> digits,
                                                          int alpha) {
    if (alpha < 1 || digits.size() % alpha != 0)
        throw InputError("qmc: digit count not divisible by the interlacing factor");
    const std::size_t m = digits.size() / alpha;
    std::vector<std::vector<std::uint8_t>> blocks(alpha, std::vector<std::uint8_t>(m, 0));
    for (std::size_t i = 0; i < m; ++i)
        for (int j = 0; j < alpha; ++j)
            blocks[j][i] = digits[i * alpha + j];
    return blocks;
}

std::uint64_t LatticeRule::point_count() const {
    std::uint64_t n = 1;
    for (int i = 0; i < precision; ++i) n *= base;
    return n;
}

LatticeRule make_lattice_rule(int base, int precision, int alpha, int dim, GFPoly modulus,
                              std::vector<GFPoly> gen, std::string provenance) {
    require_prime_base(base);
    if (precision < 1) throw ConfigError("qmc: precision m must be >= 1");
    if (base == 2 && precision > 20)
        throw ConfigError("qmc: precision m capped at 20 for base 2");
    if (alpha < 1) throw ConfigError("qmc: interlacing factor must be >= 1");
    if (dim < 1) throw ConfigError("qmc: dimension must be >= 1");
    if (modulus.base() != base) throw ConfigError("qmc: modulus base mismatch");
    if (modulus.degree() != precision)
        throw ConfigError("qmc: modulus degree must equal the precision m");
    if (!is_irreducible(modulus))
        throw ConfigError("qmc: modulus polynomial is not irreducible");
    if (static_cast<int>(gen.size()) != alpha * dim)
        throw ConfigError("qmc: generating vector must have alpha*s = " +
                          std::to_string(alpha * dim) + " components, got " +
                          std::to_string(gen.size()));
    for (const auto& g : gen) {
        if (g.base() != base) throw ConfigError("qmc: generating polynomial base mismatch");
        if (g.is_zero()) throw ConfigError("qmc: generating polynomials must be nonzero");
        if (g.degree() >= precision)
            throw ConfigError("qmc: generating polynomial degree must be below m");
    }
    LatticeRule rule{base, precision, alpha, dim, std::move(modulus), std::move(gen), {}};
    if (provenance.empty()) provenance = "direct";
    rule.source = std::move(provenance);
    return rule;
}

PointSet generate_points(const LatticeRule& rule, bool keep_digits) {
    const int base = rule.base;
    const int m = rule.precision;
    const int alpha = rule.alpha;
    const int s = rule.dim;
    const int raw = alpha * s;
    const std::uint64_t n_points = rule.point_count();

    // Digit matrix per raw component: row i holds the expansion digits of
    // (x^i g_c mod P)/P. The digits of point n are the mod-b combination of
    // the rows selected by the base-b digits of n.
    std::vector<std::vector<std::uint8_t>> rows(static_cast<std::size_t>(raw) * m);
    for (int c = 0; c < raw; ++c) {
        GFPoly shifted = divmod(rule.gen[c], rule.modulus).second;
        const GFPoly x_poly(base, {0, 1});
        for (int i = 0; i < m; ++i) {
            rows[static_cast<std::size_t>(c) * m + i] = fractional_digits(shifted, rule.modulus, m);
            shifted = mul_mod(shifted, x_poly, rule.modulus);
        }
    }

    PointSet out;
    out.dim = s;
    out.count = n_points;
    out.domain = Domain::unit;
    out.coords.resize(n_points * s);
    if (keep_digits) {
        out.digits_per_coord = alpha * m;
        out.digits.assign(n_points * s * out.digits_per_coord, 0);
    }
    {
        std::ostringstream os;
        os << "b=" << base << " m=" << m << " alpha=" << alpha << " s=" << s
           << " P=" << rule.modulus.index() << " src=" << rule.source;
        out.provenance = os.str();
    }

    // Per-l weight of digit l of raw slot j inside its interlaced coordinate.
    std::vector<double> weight(static_cast<std::size_t>(alpha) * m);
    for (int j = 0; j < alpha; ++j)
        for (int i = 0; i < m; ++i) {
            double w = 1.0;
            for (int k = 0; k < i * alpha + j + 1; ++k) w /= base;
            weight[static_cast<std::size_t>(j) * m + i] = w;
        }

    std::vector<std::uint8_t> acc(static_cast<std::size_t>(raw) * m, 0);
    std::vector<std::uint8_t> index_digits(m, 0);
    for (std::uint64_t n = 0; n < n_points; ++n) {
        if (n > 0) {
            // Increment the base-b digits of n and fold the change into acc.
            int pos = 0;
            while (true) {
                const int old = index_digits[pos];
                const int fresh = (old + 1) % base;
                index_digits[pos] = static_cast<std::uint8_t>(fresh);
                int delta = fresh - old;
                if (delta < 0) delta += base;
                for (int c = 0; c < raw; ++c) {
                    const std::uint8_t* row = rows[static_cast<std::size_t>(c) * m + pos].data();
                    std::uint8_t* a = acc.data() + static_cast<std::size_t>(c) * m;
                    for (int l = 0; l < m; ++l)
                        a[l] = static_cast<std::uint8_t>((a[l] + delta * row[l]) % base);
                }
                if (fresh != 0) break;
                ++pos;
            }
        }
        for (int d = 0; d < s; ++d) {
            double value = 0.0;
            for (int j = 0; j < alpha; ++j) {
                const std::uint8_t* a = acc.data() + static_cast<std::size_t>(d * alpha + j) * m;
                const double* w = weight.data() + static_cast<std::size_t>(j) * m;
                for (int i = 0; i < m; ++i) value += a[i] * w[i];
            }
            out.coords[n * s + d] = value;
            if (keep_digits) {
                std::uint8_t* dst =
                    out.digits.data() + (n * s + d) * static_cast<std::size_t>(out.digits_per_coord);
                for (int j = 0; j < alpha; ++j) {
                    const std::uint8_t* a = acc.data() + static_cast<std::size_t>(d * alpha + j) * m;
                    for (int i = 0; i < m; ++i) dst[i * alpha + j] = a[i];
                }
            }
        }
    }
    return out;
}

PointSet shift_to_prior(const PointSet& points) {
    if (points.domain != Domain::unit)
        throw InputError("qmc: shift_to_prior expects points in the unit box");
    PointSet out = points;
    out.domain = Domain::prior;
    for (auto& c : out.coords) c -= 0.5;
    return out;
}

double equal_weight_mean(const PointSet& points,
                         const std::function<double(std::span<const double>)>& integrand) {
    if (points.count == 0) throw InputError("qmc: quadrature over an empty point set");
    KahanSum sum;
    for (std::size_t n = 0; n < points.count; ++n) {
        const double v = integrand(points.point(n));
        if (!std::isfinite(v))
            throw SampleError(n, "integrand returned a non-finite value");
        sum.add(v);
    }
    return sum.value() / static_cast<double>(points.count);
}

LatticeRule load_generating_vector(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw ParseError(path, 0, "cannot open generating-vector file");
    std::ostringstream raw;
    raw << file.rdbuf();
    const std::string content = raw.str();
    std::istringstream in(content);
    std::string line;
    int line_no = 0;
    auto next_line = [&]() {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) return true;
        }
        ++line_no;
        return false;
    };

    if (!next_line()) throw ParseError(path, line_no, "missing header line 'b m s alpha'");
    int base = 0, m = 0, s = 0, alpha = 0;
    {
        std::istringstream hs(line);
        if (!(hs >> base >> m >> s >> alpha))
            throw ParseError(path, line_no, "header must be 'b m s alpha'");
    }
    if (!next_line()) throw ParseError(path, line_no, "missing modulus line");
    std::uint64_t p_index = 0;
    {
        std::istringstream ps(line);
        if (!(ps >> p_index)) throw ParseError(path, line_no, "modulus must be an integer");
    }
    std::vector<GFPoly> gen;
    const long long expected = static_cast<long long>(alpha) * s;
    for (long long i = 0; i < expected; ++i) {
        if (!next_line())
            throw ParseError(path, line_no, "expected " + std::to_string(expected) +
                                                " generating polynomials, file ends early");
        std::istringstream gs(line);
        std::uint64_t g_index = 0;
        if (!(gs >> g_index))
            throw ParseError(path, line_no, "generating polynomial must be an integer");
        gen.push_back(GFPoly::from_index(g_index, base));
    }
    std::ostringstream src;
    src << "file:" << path << " fnv1a=0x" << std::hex << fnv1a64(content);
    return make_lattice_rule(base, m, alpha, s, GFPoly::from_index(p_index, base), std::move(gen),
                             src.str());
}

void save_generating_vector(const LatticeRule& rule, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("qmc: cannot write generating-vector file " + path);
    out << rule.base << ' ' << rule.precision << ' ' << rule.dim << ' ' << rule.alpha << '\n';
    out << rule.modulus.index() << '\n';
    for (const auto& g : rule.gen) out << g.index() << '\n';
    if (!out) throw ConfigError("qmc: failed writing " + path);
}

void save_points_csv(const PointSet& points, const std::string& path,
                     const std::vector<std::pair<std::string, std::string>>& provenance) {
    std::ofstream out(path);
    if (!out) throw ConfigError("qmc: cannot write point file " + path);
    out << "# " << kProgramName << ' ' << kVersion << '\n';
    out << "# points = " << points.provenance << '\n';
    for (const auto& [k, v] : provenance) out << "# " << k << " = " << v << '\n';
    char buf[32];
    for (std::size_t n = 0; n < points.count; ++n) {
        for (int j = 0; j < points.dim; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", points.coord(n, j));
            if (j) out << ',';
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace eb::qmc
