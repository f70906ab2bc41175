#include "elastobayes/field.hpp"

#include <cmath>
#include <numbers>

namespace eb {

double SineProductFamily::basis(int j, Vec2 p) const {
    const double two_pi = 2.0 * std::numbers::pi;
    const double amp = 1.0 / (static_cast<double>(j) * j);
    return amp * std::sin(two_pi * j * p.x) * std::sin(two_pi * (j + 1) * p.y);
}

double SineProductFamily::amplitude(int j) const {
    return 1.0 / (static_cast<double>(j) * j);
}

KLField::KLField(std::shared_ptr<const BasisFamily> family, int dimension, double poisson_ratio)
    : family_(std::move(family)), dim_(dimension), nu_(poisson_ratio) {
    if (!family_) throw ConfigError("field: basis family must not be null");
    if (dim_ < 1) throw ConfigError("field: truncation dimension must be positive");
    if (!(nu_ > 0.0 && nu_ < 0.5))
        throw ConfigError("field: Poisson ratio must lie in (0, 1/2), got " + std::to_string(nu_));
    double sum = 0.0;
    double prev = family_->amplitude(1);
    for (int j = 1; j <= dim_; ++j) {
        const double a = family_->amplitude(j);
        if (a > prev)
            throw ConfigError("field: basis amplitudes must be non-increasing in j");
        prev = a;
        sum += a;
    }
    amplitude_sum_ = sum;
}

double KLField::youngs_modulus(std::span<const double> y, Vec2 p) const {
    if (static_cast<int>(y.size()) != dim_)
        throw InputError("field: parameter vector has length " + std::to_string(y.size()) +
                         ", field dimension is " + std::to_string(dim_));
    double value = family_->mean(p);
    for (int j = 1; j <= dim_; ++j) value += y[j - 1] * family_->basis(j, p);
    return value;
}

LameParameters KLField::lame(double youngs) const {
    return {youngs / (2.0 * (1.0 + nu_)),
            youngs * nu_ / ((1.0 + nu_) * (1.0 - 2.0 * nu_))};
}

double KLField::truncation_tail(int s_low) const {
    if (s_low > dim_)
        throw InputError("field: truncation_tail requires s_low <= dimension");
    double sum = 0.0;
    for (int j = s_low + 1; j <= dim_; ++j) sum += family_->amplitude(j);
    return sum;
}

double KLField::modulus_lower_bound() const {
    return family_->mean_min() - 0.5 * amplitude_sum_;
}

double KLField::modulus_upper_bound() const {
    return family_->mean_max() + 0.5 * amplitude_sum_;
}

KLField make_field(const std::string& family_name, int dimension, double poisson_ratio) {
    if (family_name == "sine-product")
        return KLField(std::make_shared<SineProductFamily>(), dimension, poisson_ratio);
    throw ConfigError("field: unknown basis family '" + family_name + "'");
}

}  // namespace eb
