#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "elastobayes/core.hpp"

namespace eb {

/// One L2-orthogonal basis family for the modulus expansion. Amplitudes are
/// the sup norms of the basis functions and must be non-increasing in j.
class BasisFamily {
public:
    virtual ~BasisFamily() = default;
    virtual std::string name() const = 0;
    virtual double mean(Vec2 p) const = 0;
    virtual double basis(int j, Vec2 p) const = 0;  // j is 1-based
    virtual double amplitude(int j) const = 0;
    virtual double mean_min() const = 0;
    virtual double mean_max() const = 0;
};

/// Built-in family: mean 1, psi_j(x) = j^-2 sin(2 pi j x1) sin(2 pi (j+1) x2).
class SineProductFamily final : public BasisFamily {
public:
    std::string name() const override { return "sine-product"; }
    double mean(Vec2) const override { return 1.0; }
    double basis(int j, Vec2 p) const override;
    double amplitude(int j) const override;
    double mean_min() const override { return 1.0; }
    double mean_max() const override { return 1.0; }
};

struct LameParameters {
    double mu = 0.0;
    double lambda = 0.0;
};

/// Parameter vectors live in the box [-1/2, 1/2)^s.
using ParamVector = std::vector<double>;

/// Truncated expansion of the Young's modulus plus the Poisson ratio.
/// Immutable after construction; safe for concurrent reads.
class KLField {
public:
    KLField(std::shared_ptr<const BasisFamily> family, int dimension, double poisson_ratio);

    /// E(x, y) = E0(x) + sum_{j=1..s} y_j psi_j(x).
    double youngs_modulus(std::span<const double> y, Vec2 p) const;

    /// mu = E / (2(1+nu)), lambda = E nu / ((1+nu)(1-2nu)).
    LameParameters lame(double youngs) const;

    /// Sum of amplitudes over j in (s_low, s]; the truncation-error budget.
    double truncation_tail(int s_low) const;

    /// Analytic bracket of E over the parameter box.
    double modulus_lower_bound() const;
    double modulus_upper_bound() const;

    int dimension() const { return dim_; }
    double poisson_ratio() const { return nu_; }
    const BasisFamily& family() const { return *family_; }
    std::shared_ptr<const BasisFamily> family_ptr() const { return family_; }

private:
    std::shared_ptr<const BasisFamily> family_;
    int dim_;
    double nu_;
    double amplitude_sum_;
};

/// Factory keyed by family name ("sine-product" is the only built-in).
KLField make_field(const std::string& family_name, int dimension, double poisson_ratio);

}  // namespace eb
