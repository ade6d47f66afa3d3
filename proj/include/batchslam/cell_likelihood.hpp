#pragma once

#include <limits>
#include <unordered_map>
#include <vector>

#include "batchslam/models.hpp"
#include "batchslam/partition.hpp"
#include "batchslam/scenario.hpp"

namespace batchslam {

/// Likelihood of one cell under Eq.-(18) semantics:
///   singleton: log_l = logsumexp(log c, detect_term)
///   multi:     log_l = detect_term
/// where detect_term = log <prod_k l_k ; lambda> evaluated by a linearized
/// Gaussian-filter recursion over the cell's time span.
struct CellLikelihood {
    double log_l = -std::numeric_limits<double>::infinity();
    double detect_term = -std::numeric_limits<double>::infinity();
    GaussianDensity birth; // posterior landmark density; undefined if !feasible
    bool is_singleton = false;
    bool feasible = false;
};

namespace detail {

struct CellKeyHash {
    std::size_t operator()(const std::vector<std::uint64_t>& v) const noexcept {
        std::size_t h = 1469598103934665603ull;
        for (std::uint64_t x : v) {
            h ^= static_cast<std::size_t>(x);
            h *= 1099511628211ull;
        }
        return h;
    }
};

inline std::vector<std::uint64_t> cell_key(const Cell& c) {
    std::vector<std::uint64_t> k;
    k.reserve(c.size());
    for (const auto& m : c.indices) k.push_back(pack(m));
    return k;
}

} // namespace detail

/// Computes and caches cell likelihoods against one fixed trajectory.
/// Chain-local: rebuild whenever the trajectory estimate changes.
class CellLikelihoodEvaluator {
public:
    /// pose_cov, when given, holds the conditioning trajectory's per-step
    /// covariance blocks; measurement predictions are then widened by
    /// H_S P_k H_S', which keeps merge decisions honest when the measurement
    /// noise is small against the trajectory estimate's own error.
    CellLikelihoodEvaluator(const MeasurementBatch& batch, std::vector<SensorState> trajectory,
                            const ScenarioConfig& cfg, const Thresholds& th,
                            std::vector<Matrix5d> pose_cov = {})
        : batch_(&batch),
          trajectory_(std::move(trajectory)),
          pose_cov_(std::move(pose_cov)),
          cfg_(&cfg),
          th_(&th),
          log_clutter_(clutter_log_density(cfg)) {
        if (static_cast<int>(trajectory_.size()) < batch.steps() + 1)
            throw std::invalid_argument("CellLikelihoodEvaluator: trajectory shorter than batch");
        if (!pose_cov_.empty() && pose_cov_.size() != trajectory_.size())
            throw std::invalid_argument("CellLikelihoodEvaluator: pose_cov size mismatch");
    }

    [[nodiscard]] double log_clutter() const { return log_clutter_; }
    [[nodiscard]] const std::vector<SensorState>& trajectory() const { return trajectory_; }
    [[nodiscard]] const MeasurementBatch& batch() const { return *batch_; }
    [[nodiscard]] const ScenarioConfig& config() const { return *cfg_; }
    [[nodiscard]] const Thresholds& thresholds() const { return *th_; }

    const CellLikelihood& evaluate(const Cell& cell) {
        auto key = detail::cell_key(cell);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        return cache_.emplace(std::move(key), compute(cell)).first->second;
    }

    /// Back-projection of a single measurement against the fixed trajectory
    /// (cached); nullopt when infeasible.
    std::optional<Eigen::Vector3d> back_projection(const MeasurementIndex& m) {
        const std::uint64_t key = pack(m);
        auto it = backproj_.find(key);
        if (it != backproj_.end()) return it->second;
        const auto x =
            back_project(batch_->at(m), trajectory_[static_cast<std::size_t>(m.k)], *cfg_);
        backproj_.emplace(key, x);
        return x;
    }

private:
    /// Measurement noise at step k, widened by the pose-estimate covariance.
    Matrix5d effective_noise(int k, const MeasurementJacobians& jac) const {
        Matrix5d r = cfg_->measurement_cov;
        if (!pose_cov_.empty())
            r += jac.wrt_sensor * pose_cov_[static_cast<std::size_t>(k)] *
                 jac.wrt_sensor.transpose();
        return r;
    }

    CellLikelihood compute(const Cell& cell) const {
        constexpr double neg_inf = -std::numeric_limits<double>::infinity();
        CellLikelihood out;
        out.is_singleton = cell.size() == 1;

        const MeasurementIndex m0 = cell.earliest();
        const SensorState& s0 = trajectory_[static_cast<std::size_t>(m0.k)];
        const Vector5d& z0 = batch_->at(m0);
        const auto seed = back_project(z0, s0, *cfg_);
        if (!seed) {
            out.detect_term = neg_inf;
            out.log_l = out.is_singleton ? log_clutter_ : neg_inf;
            return out;
        }

        // First detection against the flat birth intensity:
        //   rho * pD * integral N(z0; h(x), R) dx, linearized at the seed.
        Landmark lm{*seed};
        double detect = 0.0;
        Eigen::Vector3d mean = *seed;
        Eigen::Matrix3d cov;
        {
            const double pd = detection_prob(lm, s0, *cfg_);
            if (pd <= 0.0) return infeasible_result(out);
            const auto jac = measurement_jacobians(lm, s0, *cfg_);
            const Matrix5d r_eff = effective_noise(m0.k, jac);
            const Matrix5d r_inv = regularized(r_eff).inverse();
            Eigen::Matrix3d info = jac.wrt_landmark.transpose() * r_inv * jac.wrt_landmark;
            info = regularized(info);
            const Eigen::LLT<Eigen::Matrix3d> llt(info);
            if (llt.info() != Eigen::Success) return infeasible_result(out);
            cov = llt.solve(Eigen::Matrix3d::Identity());
            Vector5d innov = z0 - measurement_mean(lm, s0, *cfg_);
            for (int c = 1; c < kMeasDim; ++c) innov(c) = wrap_angle(innov(c));
            mean += cov * (jac.wrt_landmark.transpose() * (r_inv * innov));
            // log of the x-integrated Gaussian: -(nz-nx)/2 log 2pi
            //   - 1/2 log|R| - 1/2 log|H'R^-1H| - 1/2 innov' Pi innov
            double log_det_r = 0.0;
            {
                const Eigen::LLT<Matrix5d> lr(regularized(r_eff));
                for (int i = 0; i < kMeasDim; ++i) log_det_r += 2.0 * std::log(lr.matrixL()(i, i));
            }
            double log_det_info = 0.0;
            for (int i = 0; i < kLandmarkDim; ++i)
                log_det_info += 2.0 * std::log(llt.matrixL()(i, i));
            const Vector5d w = r_inv * innov;
            const Eigen::Vector3d hw = jac.wrt_landmark.transpose() * w;
            const double quad = innov.dot(w) - hw.dot(cov * hw);
            detect = std::log(pd) -
                     0.5 * (kMeasDim - kLandmarkDim) * std::log(2.0 * std::numbers::pi) -
                     0.5 * log_det_r - 0.5 * log_det_info - 0.5 * quad;
        }

        // Later steps inside the cell's span: predictive likelihood where the
        // cell has an index, misdetection factor where it does not and the
        // current mean is in FOV.
        const int k_last = cell.indices.back().k;
        for (int k = m0.k + 1; k <= k_last; ++k) {
            const SensorState& s = trajectory_[static_cast<std::size_t>(k)];
            lm.position = mean;
            const double pd = detection_prob(lm, s, *cfg_);
            const int pos = cell.find_step(k);
            if (pos < 0) {
                if (pd > 0.0) {
                    if (pd >= 1.0) return infeasible_result(out);
                    detect += std::log1p(-pd);
                }
                continue;
            }
            if (pd <= 0.0) return infeasible_result(out);
            const Vector5d& z = batch_->at(cell.indices[static_cast<std::size_t>(pos)]);
            const auto jac = measurement_jacobians(lm, s, *cfg_);
            const Matrix5d innov_cov = jac.wrt_landmark * cov * jac.wrt_landmark.transpose() +
                                       effective_noise(k, jac);
            Vector5d innov = z - measurement_mean(lm, s, *cfg_);
            for (int c = 1; c < kMeasDim; ++c) innov(c) = wrap_angle(innov(c));
            detect += std::log(pd) +
                      gaussian_log_eval({Eigen::VectorXd::Zero(kMeasDim), innov_cov}, innov);
            const Eigen::LLT<Matrix5d> llt(regularized(innov_cov));
            const Matrix53d sinv_hp = llt.solve(jac.wrt_landmark * cov); // S^-1 H P
            const Eigen::Matrix<double, 3, 5> gain = sinv_hp.transpose(); // K = P H' S^-1
            mean += gain * innov;
            cov = (cov - gain * jac.wrt_landmark * cov).eval();
            cov = 0.5 * (cov + cov.transpose()).eval();
        }

        detect += cfg_->lambda_rate > 0.0 ? std::log(cfg_->lambda_rate) : neg_inf;

        out.detect_term = detect;
        out.feasible = true;
        out.birth.mean = mean;
        out.birth.cov = cov;
        out.log_l = out.is_singleton ? log_sum_exp(log_clutter_, detect) : detect;
        return out;
    }

    CellLikelihood infeasible_result(CellLikelihood out) const {
        out.detect_term = -std::numeric_limits<double>::infinity();
        out.feasible = false;
        out.log_l = out.is_singleton ? log_clutter_ : out.detect_term;
        return out;
    }

    const MeasurementBatch* batch_;
    std::vector<SensorState> trajectory_;
    std::vector<Matrix5d> pose_cov_;
    const ScenarioConfig* cfg_;
    const Thresholds* th_;
    double log_clutter_;
    std::unordered_map<std::vector<std::uint64_t>, CellLikelihood, detail::CellKeyHash> cache_;
    std::unordered_map<std::uint64_t, std::optional<Eigen::Vector3d>> backproj_;
};

/// Unnormalized log weight of a partition: sum of its cells' log_l (Eq. 17).
inline double partition_log_weight(const Partition& p, CellLikelihoodEvaluator& eval) {
    double s = 0.0;
    for (const auto& c : p.cells) s += eval.evaluate(c).log_l;
    return s;
}

} // namespace batchslam
