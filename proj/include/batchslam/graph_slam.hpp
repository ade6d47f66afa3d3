#pragma once

#include <string>
#include <utility>
#include <vector>

#include "batchslam/cell_likelihood.hpp"
#include "batchslam/factor_graph.hpp"
#include "batchslam/da_sampler.hpp"

namespace batchslam {

/// Prior over one state block, with optional angle-wrapped components.
class GaussianPriorFactor final : public Factor {
public:
    GaussianPriorFactor(Eigen::VectorXd mean, const Eigen::MatrixXd& cov, Block block,
                        std::vector<int> angle_components = {})
        : Factor(regularized(cov).inverse(), {block}), mean_(std::move(mean)),
          angles_(std::move(angle_components)) {}

    [[nodiscard]] Eigen::VectorXd residual(const Eigen::VectorXd& q) const override {
        Eigen::VectorXd r = q.segment(blocks()[0].offset, blocks()[0].dim) - mean_;
        for (int c : angles_) r(c) = wrap_angle(r(c));
        return r;
    }

    [[nodiscard]] std::vector<Eigen::MatrixXd> jacobians(const Eigen::VectorXd&) const override {
        return {Eigen::MatrixXd::Identity(blocks()[0].dim, blocks()[0].dim)};
    }

private:
    Eigen::VectorXd mean_;
    std::vector<int> angles_;
};

/// Coordinated-turn motion residual s_k - v(s_{k-1}) with a wrapped heading.
class MotionFactor final : public Factor {
public:
    MotionFactor(const ScenarioConfig& cfg, Block prev, Block next)
        : Factor(regularized(cfg.process_cov).inverse(), {prev, next}), cfg_(&cfg) {}

    [[nodiscard]] Eigen::VectorXd residual(const Eigen::VectorXd& q) const override {
        const SensorState prev =
            SensorState::from_vector(Vector5d(q.segment<kSensorDim>(blocks()[0].offset)));
        Vector5d r = Vector5d(q.segment<kSensorDim>(blocks()[1].offset)) -
                     motion_mean(prev, *cfg_).flatten();
        r(3) = wrap_angle(r(3));
        return r;
    }

    [[nodiscard]] std::vector<Eigen::MatrixXd> jacobians(const Eigen::VectorXd& q) const override {
        const SensorState prev =
            SensorState::from_vector(Vector5d(q.segment<kSensorDim>(blocks()[0].offset)));
        return {-motion_jacobian(prev, *cfg_), Matrix5d::Identity()};
    }

private:
    const ScenarioConfig* cfg_;
};

/// Bistatic measurement residual z - h(x, s) with wrapped angle components.
class MeasurementFactor final : public Factor {
public:
    MeasurementFactor(const ScenarioConfig& cfg, Vector5d z, Block pose, Block landmark)
        : Factor(regularized(cfg.measurement_cov).inverse(), {pose, landmark}), cfg_(&cfg),
          z_(std::move(z)) {}

    [[nodiscard]] Eigen::VectorXd residual(const Eigen::VectorXd& q) const override {
        const SensorState s =
            SensorState::from_vector(Vector5d(q.segment<kSensorDim>(blocks()[0].offset)));
        const Landmark x{q.segment<kLandmarkDim>(blocks()[1].offset)};
        Vector5d r = z_ - measurement_mean(x, s, *cfg_);
        for (int c = 1; c < kMeasDim; ++c) r(c) = wrap_angle(r(c));
        return r;
    }

    [[nodiscard]] std::vector<Eigen::MatrixXd> jacobians(const Eigen::VectorXd& q) const override {
        const SensorState s =
            SensorState::from_vector(Vector5d(q.segment<kSensorDim>(blocks()[0].offset)));
        const Landmark x{q.segment<kLandmarkDim>(blocks()[1].offset)};
        const auto j = measurement_jacobians(x, s, *cfg_);
        return {-j.wrt_sensor, -j.wrt_landmark};
    }

private:
    const ScenarioConfig* cfg_;
    Vector5d z_;
};

struct DroppedCell {
    std::size_t cell_index = 0;
    std::string reason;
};

/// Conditional MAP problem for one (partition, psi) sample: the kept cells,
/// their birth priors, and the assembled factor graph over
/// q = [s_0 .. s_K, x^1 .. x^kappa].
struct GraphProblem {
    int steps = 0; // K
    int kappa = 0;
    std::vector<Cell> kept_cells;
    std::vector<MeasurementIndex> first_indices;
    std::vector<GaussianDensity> births;
    std::vector<DroppedCell> dropped;
    FactorGraph graph{0};

    [[nodiscard]] int pose_offset(int k) const { return kSensorDim * k; }
    [[nodiscard]] int landmark_offset(int i) const {
        return kSensorDim * (steps + 1) + kLandmarkDim * i;
    }
    [[nodiscard]] int dim() const { return kSensorDim * (steps + 1) + kLandmarkDim * kappa; }
};

/// Keep the cells with psi = 1, seed their landmark priors from the first
/// detected measurement against traj_init, and assemble all factors. Cells
/// with an infeasible birth are dropped with a warning record.
inline GraphProblem build_graph(const Partition& p, const ExistenceVector& psi,
                                const std::vector<SensorState>& traj_init,
                                const MeasurementBatch& batch, const ScenarioConfig& cfg,
                                const Thresholds& th) {
    if (psi.psi.size() != p.cells.size())
        throw std::invalid_argument("build_graph: psi not aligned with partition");
    GraphProblem prob;
    prob.steps = batch.steps();
    for (std::size_t i = 0; i < p.cells.size(); ++i) {
        if (!psi.psi[i]) continue;
        const Cell& c = p.cells[i];
        const MeasurementIndex m0 = c.earliest();
        try {
            GaussianDensity birth = inverse_measurement(
                batch.at(m0), traj_init[static_cast<std::size_t>(m0.k)], cfg, th);
            prob.kept_cells.push_back(c);
            prob.first_indices.push_back(m0);
            prob.births.push_back(std::move(birth));
        } catch (const std::domain_error& e) {
            prob.dropped.push_back({i, e.what()});
        }
    }
    prob.kappa = static_cast<int>(prob.kept_cells.size());

    prob.graph = FactorGraph(prob.dim());
    for (int k = 0; k <= prob.steps; ++k) prob.graph.mark_angle(prob.pose_offset(k) + 3);

    prob.graph.add(std::make_unique<GaussianPriorFactor>(
        cfg.s0_prior.mean, cfg.s0_prior.cov, Factor::Block{prob.pose_offset(0), kSensorDim},
        std::vector<int>{3}));
    for (int k = 1; k <= prob.steps; ++k)
        prob.graph.add(std::make_unique<MotionFactor>(
            cfg, Factor::Block{prob.pose_offset(k - 1), kSensorDim},
            Factor::Block{prob.pose_offset(k), kSensorDim}));
    for (int i = 0; i < prob.kappa; ++i) {
        const auto& birth = prob.births[static_cast<std::size_t>(i)];
        prob.graph.add(std::make_unique<GaussianPriorFactor>(
            birth.mean, birth.cov, Factor::Block{prob.landmark_offset(i), kLandmarkDim}));
        for (const auto& m : prob.kept_cells[static_cast<std::size_t>(i)].indices)
            prob.graph.add(std::make_unique<MeasurementFactor>(
                cfg, batch.at(m), Factor::Block{prob.pose_offset(m.k), kSensorDim},
                Factor::Block{prob.landmark_offset(i), kLandmarkDim}));
    }
    return prob;
}

/// E(q) of Eq. (30) for the assembled problem.
inline double cost(const Eigen::VectorXd& q, const GraphProblem& prob) {
    if (q.size() != prob.dim()) throw std::invalid_argument("cost: state dimension mismatch");
    return prob.graph.cost(q);
}

/// Default initial state: trajectory from traj_init, landmarks at birth means.
inline Eigen::VectorXd initial_joint_state(const GraphProblem& prob,
                                           const std::vector<SensorState>& traj_init) {
    Eigen::VectorXd q(prob.dim());
    for (int k = 0; k <= prob.steps; ++k)
        q.segment<kSensorDim>(prob.pose_offset(k)) =
            traj_init[static_cast<std::size_t>(k)].flatten();
    for (int i = 0; i < prob.kappa; ++i)
        q.segment<kLandmarkDim>(prob.landmark_offset(i)) =
            prob.births[static_cast<std::size_t>(i)].mean;
    return q;
}

/// MAP joint state plus the covariance blocks recovered from the final
/// undamped information matrix.
struct GraphSlamResult {
    Eigen::VectorXd traj_mean;
    Eigen::MatrixXd traj_cov;
    Eigen::VectorXd map_mean;
    Eigen::MatrixXd map_cov;
    int steps = 0;
    int kappa = 0;
    bool converged = false;
    double final_cost = 0.0;
    std::vector<double> cost_trace;
    Eigen::SparseMatrix<double> information;

    [[nodiscard]] std::vector<SensorState> trajectory() const {
        std::vector<SensorState> out(static_cast<std::size_t>(steps) + 1);
        for (int k = 0; k <= steps; ++k)
            out[static_cast<std::size_t>(k)] =
                SensorState::from_vector(Vector5d(traj_mean.segment<kSensorDim>(kSensorDim * k)));
        return out;
    }
    /// Bernoulli (r = 1, u^i, C^i) for kept landmark i.
    [[nodiscard]] BernoulliComponent landmark(int i) const {
        BernoulliComponent b;
        b.r = 1.0;
        b.density.mean = map_mean.segment<kLandmarkDim>(kLandmarkDim * i);
        b.density.cov = map_cov.block<kLandmarkDim, kLandmarkDim>(kLandmarkDim * i,
                                                                  kLandmarkDim * i);
        return b;
    }
};

/// Optimize and recover covariance blocks by solving the final information
/// matrix against unit vectors (trajectory block and full map block).
inline GraphSlamResult solve_graph(const GraphProblem& prob, const Eigen::VectorXd& q_init,
                                   const OptimizeOptions& opts = {}) {
    const OptimizeSummary sum = optimize(prob.graph, q_init, opts);
    GraphSlamResult res;
    res.steps = prob.steps;
    res.kappa = prob.kappa;
    res.converged = sum.converged;
    res.final_cost = sum.cost_trace.back();
    res.cost_trace = sum.cost_trace;

    const InformationSystem sys = prob.graph.linearize(sum.q);
    res.information = sys.omega;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(sys.omega);
    if (solver.info() != Eigen::Success)
        throw SolverDegenerateError("solve_graph: information matrix factorization failed");

    const int nt = kSensorDim * (prob.steps + 1);
    const int nm = kLandmarkDim * prob.kappa;
    Eigen::VectorXd unit = Eigen::VectorXd::Zero(prob.dim());
    Eigen::MatrixXd cols(prob.dim(), prob.dim());
    for (int i = 0; i < prob.dim(); ++i) {
        unit(i) = 1.0;
        cols.col(i) = solver.solve(unit);
        unit(i) = 0.0;
    }
    if (!cols.allFinite())
        throw SolverDegenerateError("solve_graph: covariance recovery failed");

    res.traj_mean = sum.q.head(nt);
    res.traj_cov = 0.5 * (cols.topLeftCorner(nt, nt) + cols.topLeftCorner(nt, nt).transpose());
    res.map_mean = sum.q.tail(nm);
    res.map_cov = 0.5 * (cols.bottomRightCorner(nm, nm) +
                         cols.bottomRightCorner(nm, nm).transpose());
    return res;
}

} // namespace batchslam
