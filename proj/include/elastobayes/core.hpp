#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace eb {

inline constexpr std::string_view kProgramName = "elastobayes";
inline constexpr std::string_view kVersion = "0.1.0";

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double c, Vec2 a) { return {c * a.x, c * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

/// Configuration values outside their validated range.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Arguments that violate an operation's contract.
struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Malformed input file; carries the offending line.
struct ParseError : std::runtime_error {
    ParseError(const std::string& path, int line, const std::string& what)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + what),
          line_number(line) {}
    int line_number;
};

/// Linear solver failed to reach the requested residual.
struct SolveError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The coefficient field left its admissible range during assembly.
struct ModelViolationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A quadrature sample produced an unusable value.
struct SampleError : std::runtime_error {
    SampleError(std::size_t index, const std::string& what)
        : std::runtime_error("sample " + std::to_string(index) + ": " + what),
          point_index(index) {}
    std::size_t point_index;
};

/// Posterior normalization vanished; data incompatible with the prior.
struct DegeneratePosteriorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Neumaier compensated accumulator. Deterministic for a fixed input order.
class KahanSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// log(err_prev/err_cur) / log(n_cur/n_prev); the standard empirical order.
inline double empirical_order(double err_prev, double err_cur, double n_prev, double n_cur) {
    return std::log(err_prev / err_cur) / std::log(n_cur / n_prev);
}

}  // namespace eb
