#pragma once

#include <random>
#include <stdexcept>
#include <vector>

#include "batchslam/models.hpp"
#include "batchslam/partition.hpp"

namespace batchslam {

/// All measurements over K scans, addressed by (k, alpha) with k in 1..K and
/// alpha in 1..|Z_k|.
struct MeasurementBatch {
    std::vector<std::vector<Vector5d>> scans;

    [[nodiscard]] int steps() const { return static_cast<int>(scans.size()); }

    [[nodiscard]] const Vector5d& at(const MeasurementIndex& m) const {
        if (m.k < 1 || m.k > steps()) throw std::out_of_range("MeasurementBatch: bad step");
        const auto& scan = scans[static_cast<std::size_t>(m.k - 1)];
        if (m.alpha < 1 || m.alpha > static_cast<int>(scan.size()))
            throw std::out_of_range("MeasurementBatch: bad in-scan index");
        return scan[static_cast<std::size_t>(m.alpha - 1)];
    }

    [[nodiscard]] std::vector<MeasurementIndex> index_set() const {
        std::vector<MeasurementIndex> out;
        for (int k = 1; k <= steps(); ++k)
            for (int a = 1; a <= static_cast<int>(scans[static_cast<std::size_t>(k - 1)].size());
                 ++a)
                out.push_back({k, a});
        return out;
    }

    [[nodiscard]] std::size_t total() const {
        std::size_t n = 0;
        for (const auto& s : scans) n += s.size();
        return n;
    }
};

/// Simulation oracle: true trajectory (K+1 states), true association, landmarks.
struct GroundTruth {
    std::vector<SensorState> trajectory;
    Partition associations;
    std::vector<Landmark> landmarks;
};

template <typename Rng>
Vector5d sample_clutter(const SensorState& s, const ScenarioConfig& cfg, Rng& rng) {
    const ClutterBox b = clutter_box(s, cfg);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Vector5d z;
    z(0) = b.range_lo + (b.range_hi - b.range_lo) * u01(rng);
    z(1) = ClutterBox::az_lo + (ClutterBox::az_hi - ClutterBox::az_lo) * u01(rng);
    z(2) = ClutterBox::el_lo + (ClutterBox::el_hi - ClutterBox::el_lo) * u01(rng);
    z(3) = ClutterBox::az_lo + (ClutterBox::az_hi - ClutterBox::az_lo) * u01(rng);
    z(4) = ClutterBox::el_lo + (ClutterBox::el_hi - ClutterBox::el_lo) * u01(rng);
    return z;
}

/// Sample a trajectory from the prior mean, then per step detect each in-FOV
/// landmark with probability pD (noise R) and add Poisson(Upsilon) clutter
/// uniform over the measurement-space box. The true partition holds one cell
/// per detected landmark and a singleton per clutter measurement.
template <typename Rng>
std::pair<GroundTruth, MeasurementBatch> generate_scenario(const ScenarioConfig& cfg, Rng& rng) {
    GroundTruth gt;
    gt.landmarks = cfg.true_landmarks;
    gt.trajectory.resize(static_cast<std::size_t>(cfg.steps) + 1);
    gt.trajectory[0] = SensorState::from_vector(Vector5d(cfg.s0_prior.mean));
    for (int k = 1; k <= cfg.steps; ++k)
        gt.trajectory[static_cast<std::size_t>(k)] =
            motion_sample(gt.trajectory[static_cast<std::size_t>(k - 1)], cfg, rng);

    MeasurementBatch batch;
    batch.scans.resize(static_cast<std::size_t>(cfg.steps));

    GaussianDensity meas_noise{Eigen::VectorXd::Zero(kMeasDim), cfg.measurement_cov};
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::poisson_distribution<int> n_clutter(cfg.clutter_rate);

    // source id per (k, slot): landmark index or -1 for clutter
    std::vector<std::vector<int>> sources(static_cast<std::size_t>(cfg.steps));

    for (int k = 1; k <= cfg.steps; ++k) {
        const SensorState& s = gt.trajectory[static_cast<std::size_t>(k)];
        auto& scan = batch.scans[static_cast<std::size_t>(k - 1)];
        auto& src = sources[static_cast<std::size_t>(k - 1)];
        for (std::size_t i = 0; i < cfg.true_landmarks.size(); ++i) {
            const double pd = detection_prob(cfg.true_landmarks[i], s, cfg);
            if (pd <= 0.0 || u01(rng) > pd) continue;
            Vector5d z = measurement_mean(cfg.true_landmarks[i], s, cfg) +
                         Vector5d(gaussian_sample(meas_noise, rng));
            for (int c = 1; c < kMeasDim; ++c) z(c) = wrap_angle(z(c));
            scan.push_back(z);
            src.push_back(static_cast<int>(i));
        }
        const int nc = cfg.clutter_rate > 0.0 ? n_clutter(rng) : 0;
        for (int c = 0; c < nc; ++c) {
            scan.push_back(sample_clutter(s, cfg, rng));
            src.push_back(-1);
        }
        // Shuffle within the scan so in-scan order carries no origin hint.
        for (std::size_t i = scan.size(); i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            const std::size_t j = pick(rng);
            std::swap(scan[i - 1], scan[j]);
            std::swap(src[i - 1], src[j]);
        }
    }

    std::vector<Cell> landmark_cells(cfg.true_landmarks.size());
    for (int k = 1; k <= cfg.steps; ++k) {
        const auto& src = sources[static_cast<std::size_t>(k - 1)];
        for (std::size_t a = 0; a < src.size(); ++a) {
            const MeasurementIndex m{k, static_cast<int>(a) + 1};
            if (src[a] >= 0)
                landmark_cells[static_cast<std::size_t>(src[a])].indices.push_back(m);
            else
                gt.associations.cells.push_back(Cell{{m}});
        }
    }
    for (auto& c : landmark_cells)
        if (!c.indices.empty()) gt.associations.cells.push_back(std::move(c));
    gt.associations.canonicalize();
    return {std::move(gt), std::move(batch)};
}

/// Dead-reckoned chain from the prior mean: s_k = v(s_{k-1}).
inline std::vector<SensorState> prior_trajectory(const ScenarioConfig& cfg) {
    std::vector<SensorState> traj(static_cast<std::size_t>(cfg.steps) + 1);
    traj[0] = SensorState::from_vector(Vector5d(cfg.s0_prior.mean));
    for (int k = 1; k <= cfg.steps; ++k)
        traj[static_cast<std::size_t>(k)] = motion_mean(traj[static_cast<std::size_t>(k - 1)], cfg);
    return traj;
}

} // namespace batchslam
