#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "elastobayes/core.hpp"

namespace eb::qmc {

/// Polynomial over the prime field Z_b, coefficients stored lowest degree
/// first with no trailing zeros. The zero polynomial has no coefficients.
class GFPoly {
public:
    GFPoly() = default;
    explicit GFPoly(int base) : base_(base) {}
    GFPoly(int base, std::vector<std::uint8_t> coeffs);

    /// Coefficients are the base-b digits of n, least significant first.
    static GFPoly from_index(std::uint64_t n, int base);
    std::uint64_t index() const;

    int base() const { return base_; }
    int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
    bool is_zero() const { return coeffs_.empty(); }
    std::uint8_t coeff(int i) const {
        return (i >= 0 && i < static_cast<int>(coeffs_.size())) ? coeffs_[i] : 0;
    }
    const std::vector<std::uint8_t>& coeffs() const { return coeffs_; }

    friend bool operator==(const GFPoly& a, const GFPoly& b) {
        return a.base_ == b.base_ && a.coeffs_ == b.coeffs_;
    }

private:
    int base_ = 2;
    std::vector<std::uint8_t> coeffs_;
};

GFPoly add(const GFPoly& a, const GFPoly& b);
GFPoly mul(const GFPoly& a, const GFPoly& b);
/// Quotient and remainder of a / d.
std::pair<GFPoly, GFPoly> divmod(const GFPoly& a, const GFPoly& d);
/// (a * g) mod p. Throws InputError on base mismatch.
GFPoly mul_mod(const GFPoly& a, const GFPoly& g, const GFPoly& p);

/// Trial division by all monic polynomials of degree up to deg(p)/2.
bool is_irreducible(const GFPoly& p);
/// Smallest-encoding monic irreducible of the given degree; cached per (base, degree).
GFPoly first_irreducible(int base, int degree);

/// First `count` digits t_1..t_count of the Laurent expansion of a(x)/p(x),
/// by synthetic division. Requires deg a < deg p. The represented value is
/// sum_l t_l b^-l.
std::vector<std::uint8_t> fractional_digits(const GFPoly& a, const GFPoly& p, int count);

/// sum_l digits[l-1] * b^-l, evaluated back to front.
double digits_to_value(std::span<const std::uint8_t> digits, int base);

/// Digit interlacing: output position j + (i-1)*alpha takes digit i of
/// component j (both 1-based). Input: alpha blocks of equal length.
std::vector<std::uint8_t> interlace_digits(const std::vector<std::vector<std::uint8_t>>& blocks);
std::vector<std::vector<std::uint8_t>> deinterlace_digits(std::span<const std::uint8_t> digits,
                                                          int alpha);

/// Interlaced polynomial lattice rule: b^m points in s dimensions built from
/// alpha*s generating polynomials modulo an irreducible P of degree m.
struct LatticeRule {
    int base = 2;
    int precision = 0;  // m
    int alpha = 1;
    int dim = 0;  // s
    GFPoly modulus;
    std::vector<GFPoly> gen;
    std::string source;  // construction or ingestion provenance

    std::uint64_t point_count() const;
};

/// Validates all rule invariants (irreducible modulus, vector length,
/// nonzero components of degree < m, precision cap) and returns the rule.
LatticeRule make_lattice_rule(int base, int precision, int alpha, int dim, GFPoly modulus,
                              std::vector<GFPoly> gen, std::string provenance = {});

enum class Domain { unit, prior };

struct PointSet {
    int dim = 0;
    std::size_t count = 0;
    Domain domain = Domain::unit;
    int digits_per_coord = 0;         // alpha*m when digits were retained
    std::vector<double> coords;       // count x dim, row major
    std::vector<std::uint8_t> digits; // count x dim x digits_per_coord, optional
    std::string provenance;

    std::span<const double> point(std::size_t i) const {
        return {coords.data() + i * dim, static_cast<std::size_t>(dim)};
    }
    double coord(std::size_t i, int j) const { return coords[i * dim + j]; }
    std::span<const std::uint8_t> digit_row(std::size_t i, int j) const {
        return {digits.data() + (i * dim + j) * digits_per_coord,
                static_cast<std::size_t>(digits_per_coord)};
    }
};

/// All b^m points of the rule, in index order; point 0 is the origin.
/// Digits are carried exactly end to end; floats are produced last.
PointSet generate_points(const LatticeRule& rule, bool keep_digits = false);

/// Componentwise shift from [0,1)^s to the prior box [-1/2, 1/2)^s.
PointSet shift_to_prior(const PointSet& points);

/// Equal-weight rule (1/N) sum F(y_n), accumulated with compensated
/// summation in point order. Non-finite F values raise SampleError.
double equal_weight_mean(const PointSet& points,
                         const std::function<double(std::span<const double>)>& integrand);

/// Plain-text generating vector file:
///   line 1: "b m s alpha"
///   line 2: modulus as an integer whose base-b digits are the coefficients
///   then alpha*s lines, one integer-encoded polynomial per line.
LatticeRule load_generating_vector(const std::string& path);
void save_generating_vector(const LatticeRule& rule, const std::string& path);

/// Point-set CSV export, s columns per row, full decimal precision.
void save_points_csv(const PointSet& points, const std::string& path,
                     const std::vector<std::pair<std::string, std::string>>& provenance = {});

}  // namespace eb::qmc
