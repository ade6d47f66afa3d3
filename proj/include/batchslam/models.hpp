#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "batchslam/gaussian.hpp"
#include "batchslam/rfs.hpp"
#include "batchslam/types.hpp"

namespace batchslam {

inline constexpr int kSensorDim = 5;   // [x, y, z, heading, clock bias]
inline constexpr int kLandmarkDim = 3; // [x, y, z]
inline constexpr int kMeasDim = 5;     // [bistatic range, AOD az, AOD el, AOA az, AOA el]

/// Mobile sensor state: 3-D position (m), heading in (-pi, pi], clock bias (m).
struct SensorState {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    double heading = 0.0;
    double clock_bias = 0.0;

    [[nodiscard]] Vector5d flatten() const {
        Vector5d v;
        v << position(0), position(1), position(2), heading, clock_bias;
        return v;
    }
    static SensorState from_vector(const Vector5d& v) {
        SensorState s;
        s.position = v.head<3>();
        s.heading = wrap_angle(v(3));
        s.clock_bias = v(4);
        return s;
    }
};

struct Landmark {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

/// Scenario parameters: models, priors, and generation knobs.
struct ScenarioConfig {
    Eigen::Vector3d bs_position{0.0, 0.0, 40.0};
    std::vector<Landmark> true_landmarks;
    int steps = 40;                      // K
    double detection_probability = 0.9;  // pD inside the FOV
    double fov_radius = 50.0;            // m around the sensor
    double clutter_rate = 1.0;           // Upsilon, expected clutter per scan
    Matrix5d measurement_cov = Matrix5d::Identity(); // R
    Matrix5d process_cov = Matrix5d::Identity();     // Q
    double speed = 1.0;                  // m per step
    double turn_rate = 0.0;              // rad per step
    Box3 env_box;
    double lambda_rate = 0.0;            // birth intensity density (per m^3)
    GaussianDensity s0_prior;            // over the flattened SensorState
};

/// Sampler / backend / merge thresholds (config-exposed).
struct Thresholds {
    double r_min = 0.1;          // MB prune
    double dist_max = 1.0;       // MB merge distance (m)
    double r_report = 0.5;       // map point-estimate threshold
    double psi_floor = 1e-4;     // existence shortcut: r below this forces psi = 0
    double gate_distance = 30.0; // Gibbs/MH move gate (m)
    double birth_sigma = 100.0;  // birth covariance = birth_sigma^2 I
};

/// Coordinated turn with constant configured speed and turn rate; the clock
/// bias is a random walk (noise only).
inline SensorState motion_mean(const SensorState& s, const ScenarioConfig& cfg) {
    SensorState out;
    out.heading = wrap_angle(s.heading + cfg.turn_rate);
    out.position = s.position +
                   cfg.speed * Eigen::Vector3d(std::cos(out.heading), std::sin(out.heading), 0.0);
    out.clock_bias = s.clock_bias;
    return out;
}

/// Jacobian of motion_mean w.r.t. the flattened state, evaluated at s.
inline Matrix5d motion_jacobian(const SensorState& s, const ScenarioConfig& cfg) {
    Matrix5d f = Matrix5d::Identity();
    const double h = s.heading + cfg.turn_rate;
    f(0, 3) = -cfg.speed * std::sin(h);
    f(1, 3) = cfg.speed * std::cos(h);
    return f;
}

template <typename Rng>
SensorState motion_sample(const SensorState& s, const ScenarioConfig& cfg, Rng& rng) {
    const SensorState m = motion_mean(s, cfg);
    GaussianDensity noise{Eigen::VectorXd::Zero(kSensorDim), cfg.process_cov};
    const Eigen::VectorXd w = gaussian_sample(noise, rng);
    return SensorState::from_vector(m.flatten() + Vector5d(w));
}

namespace detail {

inline void check_separation(const Eigen::Vector3d& d, const char* what) {
    if (d.head<2>().norm() < 1e-12)
        throw std::domain_error(std::string("measurement_mean: undefined angle, ") + what);
}

inline double azimuth(const Eigen::Vector3d& d) { return std::atan2(d(1), d(0)); }

inline double elevation(const Eigen::Vector3d& d) {
    return std::atan2(d(2), d.head<2>().norm());
}

// Rows of d(azimuth)/dd and d(elevation)/dd for a displacement d.
inline Eigen::RowVector3d azimuth_grad(const Eigen::Vector3d& d) {
    const double rho2 = d.head<2>().squaredNorm();
    return {-d(1) / rho2, d(0) / rho2, 0.0};
}

inline Eigen::RowVector3d elevation_grad(const Eigen::Vector3d& d) {
    const double rho = d.head<2>().norm();
    const double r2 = d.squaredNorm();
    return {-d(2) * d(0) / (rho * r2), -d(2) * d(1) / (rho * r2), rho / r2};
}

} // namespace detail

/// Noise-free bistatic measurement of landmark x from sensor s:
/// [ |bs-x| + |x-pos| + bias, AOD az/el seen from the BS,
///   AOA az (rotated into the sensor frame) / el seen from the sensor ].
inline Vector5d measurement_mean(const Landmark& x, const SensorState& s,
                                 const ScenarioConfig& cfg) {
    const Eigen::Vector3d d_bs = x.position - cfg.bs_position;
    const Eigen::Vector3d d_ue = x.position - s.position;
    detail::check_separation(d_bs, "landmark over the BS");
    detail::check_separation(d_ue, "landmark over the sensor");
    Vector5d z;
    z(0) = d_bs.norm() + d_ue.norm() + s.clock_bias;
    z(1) = detail::azimuth(d_bs);
    z(2) = detail::elevation(d_bs);
    z(3) = wrap_angle(detail::azimuth(d_ue) - s.heading);
    z(4) = detail::elevation(d_ue);
    return z;
}

struct MeasurementJacobians {
    Matrix53d wrt_landmark; // H_L
    Matrix5d wrt_sensor;    // H_S, columns [x, y, z, heading, bias]
};

inline MeasurementJacobians measurement_jacobians(const Landmark& x, const SensorState& s,
                                                  const ScenarioConfig& cfg) {
    const Eigen::Vector3d d_bs = x.position - cfg.bs_position;
    const Eigen::Vector3d d_ue = x.position - s.position;
    detail::check_separation(d_bs, "landmark over the BS");
    detail::check_separation(d_ue, "landmark over the sensor");

    MeasurementJacobians j;
    j.wrt_landmark.setZero();
    j.wrt_sensor.setZero();

    const Eigen::RowVector3d u_bs = d_bs.normalized().transpose();
    const Eigen::RowVector3d u_ue = d_ue.normalized().transpose();
    j.wrt_landmark.row(0) = u_bs + u_ue;
    j.wrt_sensor.block<1, 3>(0, 0) = -u_ue;
    j.wrt_sensor(0, 4) = 1.0;

    j.wrt_landmark.row(1) = detail::azimuth_grad(d_bs);
    j.wrt_landmark.row(2) = detail::elevation_grad(d_bs);

    j.wrt_landmark.row(3) = detail::azimuth_grad(d_ue);
    j.wrt_sensor.block<1, 3>(3, 0) = -j.wrt_landmark.row(3);
    j.wrt_sensor(3, 3) = -1.0;

    j.wrt_landmark.row(4) = detail::elevation_grad(d_ue);
    j.wrt_sensor.block<1, 3>(4, 0) = -j.wrt_landmark.row(4);
    return j;
}

/// Constant pD inside the (closed) FOV ball around the sensor, 0 outside.
inline double detection_prob(const Landmark& x, const SensorState& s, const ScenarioConfig& cfg) {
    return (x.position - s.position).norm() <= cfg.fov_radius ? cfg.detection_probability : 0.0;
}

/// Back-project a measurement onto the bistatic ellipse along the AOA ray.
/// Returns the landmark position, or nullopt when no positive-range solution
/// exists (range below the direct BS-sensor path).
inline std::optional<Eigen::Vector3d> back_project(const Vector5d& z, const SensorState& s,
                                                   const ScenarioConfig& cfg) {
    const double total = z(0) - s.clock_bias; // |bs - x| + |x - pos|
    const Eigen::Vector3d baseline = cfg.bs_position - s.position;
    const double az = wrap_angle(z(3) + s.heading);
    const double el = z(4);
    const Eigen::Vector3d dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                              std::sin(el));
    // Solve |baseline - d*dir| = total - d for d > 0.
    const double denom = 2.0 * (total - dir.dot(baseline));
    if (denom <= 0.0) return std::nullopt;
    const double d = (total * total - baseline.squaredNorm()) / denom;
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    return s.position + d * dir;
}

/// Gaussian landmark birth from a single measurement: mean back-projects z,
/// covariance is the configured (large) birth covariance regardless of z.
/// Throws std::domain_error on infeasible geometry.
inline GaussianDensity inverse_measurement(const Vector5d& z, const SensorState& s,
                                           const ScenarioConfig& cfg, const Thresholds& th) {
    const auto x = back_project(z, s, cfg);
    if (!x) throw std::domain_error("inverse_measurement: no positive-range solution");
    GaussianDensity g;
    g.mean = *x;
    g.cov = th.birth_sigma * th.birth_sigma * Eigen::Matrix3d::Identity();
    return g;
}

/// Measurement-space clutter box at one step: range anchored at the current
/// bistatic baseline (plus bias), full azimuth/elevation spans.
struct ClutterBox {
    double range_lo = 0.0;
    double range_hi = 0.0;
    static constexpr double az_lo = -std::numbers::pi;
    static constexpr double az_hi = std::numbers::pi;
    static constexpr double el_lo = -0.5 * std::numbers::pi;
    static constexpr double el_hi = 0.5 * std::numbers::pi;
};

inline ClutterBox clutter_box(const SensorState& s, const ScenarioConfig& cfg) {
    ClutterBox b;
    const double base = (cfg.bs_position - s.position).norm() + s.clock_bias;
    b.range_lo = base;
    b.range_hi = base + 2.0 * cfg.fov_radius;
    return b;
}

/// Volume of the clutter box; the range-interval length is position
/// independent, so the uniform density c = Upsilon / volume is a constant.
inline double clutter_box_volume(const ScenarioConfig& cfg) {
    const double pi = std::numbers::pi;
    return 2.0 * cfg.fov_radius * (2.0 * pi) * pi * (2.0 * pi) * pi;
}

/// log c(z) = log(Upsilon / volume); -inf when the clutter rate is zero.
inline double clutter_log_density(const ScenarioConfig& cfg) {
    if (cfg.clutter_rate <= 0.0) return -std::numeric_limits<double>::infinity();
    return std::log(cfg.clutter_rate / clutter_box_volume(cfg));
}

} // namespace batchslam
