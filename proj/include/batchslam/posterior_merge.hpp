#pragma once

#include <map>
#include <vector>

#include "batchslam/graph_slam.hpp"
#include "batchslam/rfs.hpp"

namespace batchslam {

/// One kept outer iteration: the sampled DA, its existence flags, the
/// GraphSLAM result, and each kept cell's first measurement index.
struct SampleRecord {
    Partition partition;
    ExistenceVector psi;
    GraphSlamResult result;
    std::vector<MeasurementIndex> cell_first_indices;
};

/// Registry of unique first-measurement indices across samples, with the
/// per-sample presence indicators sigma~.
struct LandmarkRegistry {
    std::vector<MeasurementIndex> ids;            // sorted lexicographically
    std::vector<std::vector<std::uint8_t>> present; // [sample][registry entry]

    [[nodiscard]] std::size_t size() const { return ids.size(); }
};

/// Mixture of the per-sample trajectory Gaussians with uniform weights:
/// mean = average of means, cov = average of (P^t + spread term).
inline GaussianDensity merge_trajectories(const std::vector<SampleRecord>& samples) {
    if (samples.empty()) throw std::invalid_argument("merge_trajectories: no samples");
    const Eigen::Index n = samples.front().result.traj_mean.size();
    for (const auto& s : samples)
        if (s.result.traj_mean.size() != n)
            throw std::invalid_argument("merge_trajectories: trajectory dimension mismatch");
    const double g = static_cast<double>(samples.size());
    GaussianDensity out;
    out.mean = Eigen::VectorXd::Zero(n);
    for (const auto& s : samples) out.mean += s.result.traj_mean;
    out.mean /= g;
    out.cov = Eigen::MatrixXd::Zero(n, n);
    for (const auto& s : samples) {
        const Eigen::VectorXd d = s.result.traj_mean - out.mean;
        out.cov += s.result.traj_cov + d * d.transpose();
    }
    out.cov /= g;
    return out;
}

inline LandmarkRegistry register_landmarks(const std::vector<SampleRecord>& samples) {
    LandmarkRegistry reg;
    std::map<MeasurementIndex, std::size_t> slot;
    for (const auto& s : samples)
        for (const auto& m : s.cell_first_indices) slot.emplace(m, 0);
    std::size_t next = 0;
    for (auto& [m, idx] : slot) {
        idx = next++;
        reg.ids.push_back(m);
    }
    for (const auto& s : samples) {
        std::vector<std::uint8_t> row(reg.ids.size(), 0);
        for (const auto& m : s.cell_first_indices) row[slot.at(m)] = 1;
        reg.present.push_back(std::move(row));
    }
    return reg;
}

/// Per registry entry: r = presence count / Gamma, moments mixed over the
/// contributing samples; then prune(r_min) and merge(dist_max).
inline MultiBernoulli merge_landmarks(const std::vector<SampleRecord>& samples,
                                      const LandmarkRegistry& reg, const Thresholds& th) {
    const double g = static_cast<double>(samples.size());
    MultiBernoulli mb;
    for (std::size_t i = 0; i < reg.size(); ++i) {
        std::vector<BernoulliComponent> parts;
        for (std::size_t t = 0; t < samples.size(); ++t) {
            if (!reg.present[t][i]) continue;
            const auto& rec = samples[t];
            const auto it = std::find(rec.cell_first_indices.begin(),
                                      rec.cell_first_indices.end(), reg.ids[i]);
            const int local = static_cast<int>(it - rec.cell_first_indices.begin());
            parts.push_back(rec.result.landmark(local));
        }
        if (parts.empty()) continue;
        BernoulliComponent c;
        c.r = static_cast<double>(parts.size()) / g;
        c.density.mean = Eigen::VectorXd::Zero(parts.front().density.mean.size());
        for (const auto& p : parts) c.density.mean += p.density.mean;
        c.density.mean /= static_cast<double>(parts.size());
        c.density.cov = Eigen::MatrixXd::Zero(c.density.mean.size(), c.density.mean.size());
        for (const auto& p : parts) {
            const Eigen::VectorXd d = p.density.mean - c.density.mean;
            c.density.cov += p.density.cov + d * d.transpose();
        }
        c.density.cov /= static_cast<double>(parts.size());
        mb.components.push_back(std::move(c));
    }
    return mb_merge_close(mb_prune(mb, th.r_min), th.dist_max);
}

/// Eq.-(41) intensity with the trajectory integral collapsed onto the merged
/// mean trajectory: lambda(x) * prod_k (1 - pD(x, eps_k)) over steps 1..K.
inline ThinnedPoissonIntensity update_undetected_intensity(
    const std::vector<SensorState>& traj_mean, const ScenarioConfig& cfg) {
    ThinnedPoissonIntensity out;
    out.base.rate_density = cfg.lambda_rate;
    out.base.region = cfg.env_box;
    std::vector<SensorState> scan_states(traj_mean.begin() + 1, traj_mean.end());
    const double pd = cfg.detection_probability;
    const double fov = cfg.fov_radius;
    out.thinning = [scan_states, pd, fov](const Eigen::Vector3d& x) {
        double t = 1.0;
        for (const auto& s : scan_states)
            if ((x - s.position).norm() <= fov) t *= 1.0 - pd;
        return t;
    };
    return out;
}

/// Expected undetected-landmark count by midpoint quadrature over the region.
inline double expected_count(const ThinnedPoissonIntensity& intensity, int cells_per_axis = 24) {
    const Box3& b = intensity.base.region;
    const Eigen::Vector3d step = (b.hi - b.lo) / static_cast<double>(cells_per_axis);
    const double dv = step.prod();
    if (!(dv > 0.0)) return 0.0;
    double total = 0.0;
    for (int i = 0; i < cells_per_axis; ++i)
        for (int j = 0; j < cells_per_axis; ++j)
            for (int k = 0; k < cells_per_axis; ++k) {
                const Eigen::Vector3d x =
                    b.lo + step.cwiseProduct(Eigen::Vector3d(i + 0.5, j + 0.5, k + 0.5));
                total += intensity.value(x) * dv;
            }
    return total;
}

/// Point estimates for map evaluation: means of components with r >= r_report.
inline std::vector<Eigen::Vector3d> extract_map_estimate(const MultiBernoulli& mb,
                                                         double r_report) {
    if (r_report < 0.0 || r_report > 1.0)
        throw std::invalid_argument("extract_map_estimate: r_report outside [0,1]");
    std::vector<Eigen::Vector3d> out;
    for (const auto& c : mb.components)
        if (c.r >= r_report) out.emplace_back(c.density.mean);
    return out;
}

/// Fused output of the kept tail: trajectory density, landmark MB, and the
/// undetected-landmark intensity.
struct MergedPosterior {
    GaussianDensity traj;
    MultiBernoulli map;
    ThinnedPoissonIntensity undetected;
};

inline MergedPosterior merge_posterior(const std::vector<SampleRecord>& samples,
                                       const ScenarioConfig& cfg, const Thresholds& th) {
    MergedPosterior out;
    out.traj = merge_trajectories(samples);
    const LandmarkRegistry reg = register_landmarks(samples);
    out.map = merge_landmarks(samples, reg, th);
    const int steps = samples.front().result.steps;
    std::vector<SensorState> traj(static_cast<std::size_t>(steps) + 1);
    for (int k = 0; k <= steps; ++k)
        traj[static_cast<std::size_t>(k)] = SensorState::from_vector(
            Vector5d(out.traj.mean.segment<kSensorDim>(kSensorDim * k)));
    out.undetected = update_undetected_intensity(traj, cfg);
    return out;
}

} // namespace batchslam
