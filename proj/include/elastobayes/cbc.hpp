#pragma once

#include <functional>
#include <span>
#include <vector>

#include "elastobayes/qmc.hpp"

namespace eb::qmc {

/// Zero-mean analytic factor families for the calibration integrands:
///   power p in 1..4:  centered monomials c, c^2 - 1/12, c^3, c^4 - 1/80
///                     with c = u - 1/2;
///   power 0:          normalized decaying exponential
///                     rate * exp(-rate u) / (1 - exp(-rate)) - 1.
/// Every base-2 Walsh coefficient of the exponential factor is positive, so
/// its quadrature error accumulates without cancellation and scores genuine
/// equidistribution at all digit scales.
double calibration_factor(int power, double rate, double u);

/// Analytic product integrand F(u) = prod_j (1 + gamma_j B(u_j)), exact
/// integral 1. The default power 2 is the smooth quadratic family.
std::function<double(std::span<const double>)> product_integrand(std::vector<double> gammas,
                                                                 int power = 2, double rate = 0.0);

/// Calibration integrands used to score candidate generating polynomials.
struct CalibrationBank {
    struct Member {
        std::vector<double> gammas;  // per dimension
        int power = 2;               // 0 selects the exponential factor
        double rate = 0.0;           // used when power == 0
    };
    std::vector<Member> members;

    /// Quadratic members with j^-1, j^-2, j^-3 and exponential members that
    /// pin the fine digit scales, truncated to `dims` entries.
    static CalibrationBank standard(int dims);
};

/// Largest |Q(F)-1| over the bank for the rule's full point set.
double bank_max_error(const LatticeRule& rule, const CalibrationBank& bank);

/// Greedy component-by-component search: each of the alpha*s generating
/// polynomials is chosen by exhaustive scan over all b^m - 1 nonzero
/// candidates of degree < m, minimizing the worst calibration-bank
/// quadrature error of the partially interlaced rule. Ties break toward the
/// smallest integer encoding. Cost grows like b^(2m) per component, so the
/// precision is capped at m <= 16.
LatticeRule cbc_construct(int base, int m, int alpha, int s, const CalibrationBank& bank);

}  // namespace eb::qmc
