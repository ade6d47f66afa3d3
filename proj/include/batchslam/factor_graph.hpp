#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <memory>
#include <stdexcept>
#include <vector>

#include "batchslam/types.hpp"

namespace batchslam {

struct SolverDegenerateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One quadratic term r(q)' W r(q) over a few state blocks.
class Factor {
public:
    struct Block {
        int offset = 0;
        int dim = 0;
    };

    Factor(Eigen::MatrixXd weight, std::vector<Block> blocks)
        : weight_(std::move(weight)), blocks_(std::move(blocks)) {}
    virtual ~Factor() = default;

    [[nodiscard]] virtual Eigen::VectorXd residual(const Eigen::VectorXd& q) const = 0;
    /// Jacobians of the residual w.r.t. each block, evaluated at q.
    [[nodiscard]] virtual std::vector<Eigen::MatrixXd> jacobians(
        const Eigen::VectorXd& q) const = 0;

    [[nodiscard]] const Eigen::MatrixXd& weight() const { return weight_; }
    [[nodiscard]] const std::vector<Block>& blocks() const { return blocks_; }

private:
    Eigen::MatrixXd weight_;
    std::vector<Block> blocks_;
};

/// Generic linear factor r = A q_blocks - target (test fixtures, linear chains).
class LinearFactor final : public Factor {
public:
    LinearFactor(Eigen::MatrixXd a, Eigen::VectorXd target, Eigen::MatrixXd weight,
                 std::vector<Block> blocks)
        : Factor(std::move(weight), std::move(blocks)), a_(std::move(a)),
          target_(std::move(target)) {}

    [[nodiscard]] Eigen::VectorXd residual(const Eigen::VectorXd& q) const override {
        Eigen::VectorXd x(a_.cols());
        int at = 0;
        for (const auto& bl : blocks()) {
            x.segment(at, bl.dim) = q.segment(bl.offset, bl.dim);
            at += bl.dim;
        }
        return a_ * x - target_;
    }

    [[nodiscard]] std::vector<Eigen::MatrixXd> jacobians(const Eigen::VectorXd&) const override {
        std::vector<Eigen::MatrixXd> out;
        int at = 0;
        for (const auto& bl : blocks()) {
            out.push_back(a_.middleCols(at, bl.dim));
            at += bl.dim;
        }
        return out;
    }

private:
    Eigen::MatrixXd a_;
    Eigen::VectorXd target_;
};

/// Quadratic approximation around a linearization point (Eq.-(45) form):
/// E(q + dq) ~ e + 2 b' dq + dq' Omega dq, minimized by dq = -Omega^-1 b.
struct InformationSystem {
    Eigen::SparseMatrix<double> omega;
    Eigen::VectorXd b;
    double e = 0.0;
};

class FactorGraph {
public:
    explicit FactorGraph(int dim) : dim_(dim) {}

    void add(std::unique_ptr<Factor> f) { factors_.push_back(std::move(f)); }
    void mark_angle(int index) { angle_indices_.push_back(index); }

    [[nodiscard]] int dim() const { return dim_; }
    [[nodiscard]] std::size_t factor_count() const { return factors_.size(); }
    [[nodiscard]] const std::vector<int>& angle_indices() const { return angle_indices_; }

    void wrap(Eigen::VectorXd& q) const {
        for (int i : angle_indices_) q(i) = wrap_angle(q(i));
    }

    [[nodiscard]] double cost(const Eigen::VectorXd& q) const {
        double e = 0.0;
        for (const auto& f : factors_) {
            const Eigen::VectorXd r = f->residual(q);
            e += r.dot(f->weight() * r);
        }
        return e;
    }

    [[nodiscard]] InformationSystem linearize(const Eigen::VectorXd& q) const {
        InformationSystem sys;
        sys.b = Eigen::VectorXd::Zero(dim_);
        std::vector<Eigen::Triplet<double>> trips;
        for (const auto& f : factors_) {
            const Eigen::VectorXd r = f->residual(q);
            const auto js = f->jacobians(q);
            const auto& bls = f->blocks();
            sys.e += r.dot(f->weight() * r);
            for (std::size_t i = 0; i < bls.size(); ++i) {
                const Eigen::MatrixXd wji = f->weight() * js[i];
                sys.b.segment(bls[i].offset, bls[i].dim) += js[i].transpose() * (f->weight() * r);
                for (std::size_t j = 0; j < bls.size(); ++j) {
                    const Eigen::MatrixXd block = js[j].transpose() * wji;
                    for (int c = 0; c < bls[i].dim; ++c)
                        for (int rw = 0; rw < bls[j].dim; ++rw)
                            trips.emplace_back(bls[j].offset + rw, bls[i].offset + c,
                                               block(rw, c));
                }
            }
        }
        sys.omega.resize(dim_, dim_);
        sys.omega.setFromTriplets(trips.begin(), trips.end());
        return sys;
    }

private:
    int dim_;
    std::vector<std::unique_ptr<Factor>> factors_;
    std::vector<int> angle_indices_;
};

/// dq = -(Omega + tau I)^-1 b via sparse LDLT. Throws SolverDegenerateError on
/// factorization failure or an inconsistent solve.
inline Eigen::VectorXd solve_increment(const InformationSystem& sys, double tau = 0.0) {
    Eigen::SparseMatrix<double> a = sys.omega;
    if (tau > 0.0) {
        Eigen::SparseMatrix<double> id(a.rows(), a.cols());
        id.setIdentity();
        a += tau * id;
    }
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
    if (solver.info() != Eigen::Success)
        throw SolverDegenerateError("solve_increment: factorization failed");
    const Eigen::VectorXd dq = solver.solve(-sys.b);
    const double bn = sys.b.norm();
    if (bn > 0.0 && (a * dq + sys.b).norm() > 1e-8 * bn)
        throw SolverDegenerateError("solve_increment: inconsistent solve");
    if (!dq.allFinite()) throw SolverDegenerateError("solve_increment: non-finite increment");
    return dq;
}

struct OptimizeOptions {
    int max_iters = 50;
    double tau0 = 1e-6;
    double cost_rel_tol = 1e-8;
    double step_inf_tol = 1e-9;
    double tau_max = 1e12;
};

struct OptimizeSummary {
    Eigen::VectorXd q;
    std::vector<double> cost_trace; // accepted costs, starting at the initial point
    bool converged = false;
    int iterations = 0;
};

/// Gauss-Newton with a Levenberg safeguard: accept a step only when the cost
/// decreases, raise tau x10 on rejection and lower /10 on acceptance. A step
/// below step_inf_tol declares convergence.
inline OptimizeSummary optimize(const FactorGraph& graph, Eigen::VectorXd q0,
                                const OptimizeOptions& opts = {}) {
    OptimizeSummary out;
    graph.wrap(q0);
    out.q = std::move(q0);
    double cost = graph.cost(out.q);
    out.cost_trace.push_back(cost);
    double tau = opts.tau0;

    for (int it = 0; it < opts.max_iters; ++it) {
        const InformationSystem sys = graph.linearize(out.q);
        bool accepted = false;
        while (!accepted) {
            Eigen::VectorXd dq;
            try {
                dq = solve_increment(sys, tau);
            } catch (const SolverDegenerateError&) {
                tau = std::max(tau * 10.0, opts.tau0);
                if (tau > opts.tau_max) throw;
                continue;
            }
            if (dq.lpNorm<Eigen::Infinity>() < opts.step_inf_tol) {
                out.converged = true;
                return out;
            }
            Eigen::VectorXd q_new = out.q + dq;
            graph.wrap(q_new);
            const double cost_new = graph.cost(q_new);
            if (cost_new < cost) {
                out.q = std::move(q_new);
                const double drop = cost - cost_new;
                cost = cost_new;
                out.cost_trace.push_back(cost);
                out.iterations = it + 1;
                tau /= 10.0;
                accepted = true;
                if (drop < opts.cost_rel_tol * std::max(cost, 1e-12)) {
                    out.converged = true;
                    return out;
                }
            } else {
                tau = std::max(tau * 10.0, opts.tau0);
                if (tau > opts.tau_max) return out; // non-converged, not fatal
            }
        }
    }
    return out;
}

} // namespace batchslam
