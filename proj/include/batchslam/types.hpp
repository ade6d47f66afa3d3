#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <compare>
#include <cstdint>
#include <numbers>

namespace batchslam {

using Vector5d = Eigen::Matrix<double, 5, 1>;
using Matrix5d = Eigen::Matrix<double, 5, 5>;
using Matrix53d = Eigen::Matrix<double, 5, 3>;

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double theta) {
    double r = std::remainder(theta, 2.0 * std::numbers::pi);
    if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
    return r;
}

/// Axis-aligned box in R^3.
struct Box3 {
    Eigen::Vector3d lo = Eigen::Vector3d::Zero();
    Eigen::Vector3d hi = Eigen::Vector3d::Zero();

    [[nodiscard]] double volume() const {
        return (hi - lo).cwiseMax(0.0).prod();
    }
    [[nodiscard]] bool contains(const Eigen::Vector3d& p) const {
        return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    }
};

/// Time-indexed measurement handle: scan k in 1..K, position alpha in 1..|Z_k|.
struct MeasurementIndex {
    int k = 0;
    int alpha = 0;

    friend auto operator<=>(const MeasurementIndex&, const MeasurementIndex&) = default;
};

/// Packed key, usable in hash maps and for canonical ordering.
inline std::uint64_t pack(const MeasurementIndex& m) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(m.k)) << 32) |
           static_cast<std::uint32_t>(m.alpha);
}

} // namespace batchslam
