#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>

namespace batchslam {

/// Plain mean/covariance pair. Covariance must be symmetric PSD
/// (eigenvalues >= -1e-9 * trace) and square with dim(mean) rows.
struct GaussianDensity {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    [[nodiscard]] Eigen::Index dim() const { return mean.size(); }
};

/// Diagonal regularization used before any covariance factorization:
/// eps = 1e-9 * trace/dim. Graph covariance blocks can be marginally PSD.
inline Eigen::MatrixXd regularized(const Eigen::MatrixXd& cov) {
    const Eigen::Index n = cov.rows();
    const double eps = 1e-9 * std::max(cov.trace(), 0.0) / static_cast<double>(n);
    return cov + eps * Eigen::MatrixXd::Identity(n, n);
}

inline void check_gaussian(const GaussianDensity& g) {
    if (g.cov.rows() != g.cov.cols() || g.cov.rows() != g.mean.size())
        throw std::invalid_argument("GaussianDensity: mean/cov dimension mismatch");
}

/// log N(x; mean, cov). Throws std::invalid_argument on dimension mismatch and
/// std::runtime_error (with a condition report) when cov is not PSD.
inline double gaussian_log_eval(const GaussianDensity& g, const Eigen::VectorXd& x) {
    check_gaussian(g);
    if (x.size() != g.mean.size())
        throw std::invalid_argument("gaussian_log_eval: point dimension mismatch");
    const Eigen::Index n = g.dim();
    const Eigen::MatrixXd c = regularized(g.cov);
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
        std::ostringstream msg;
        msg << "gaussian_log_eval: covariance not PSD (eigenvalues "
            << es.eigenvalues().minCoeff() << " .. " << es.eigenvalues().maxCoeff()
            << ", trace " << c.trace() << ")";
        throw std::runtime_error(msg.str());
    }
    const Eigen::VectorXd r = x - g.mean;
    const Eigen::VectorXd w = llt.matrixL().solve(r);
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) log_det += std::log(llt.matrixL()(i, i));
    return -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi) - log_det -
           0.5 * w.squaredNorm();
}

/// log(exp(a) + exp(b)) without overflow; handles -inf operands.
inline double log_sum_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (m == -std::numeric_limits<double>::infinity()) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

/// Draw from N(mean, cov); works for singular PSD covariances (eigenvalue clamp).
template <typename Rng>
Eigen::VectorXd gaussian_sample(const GaussianDensity& g, Rng& rng) {
    check_gaussian(g);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.cov);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("gaussian_sample: eigendecomposition failed");
    const Eigen::VectorXd scale = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    std::normal_distribution<double> n01(0.0, 1.0);
    Eigen::VectorXd z(g.dim());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = n01(rng);
    return g.mean + es.eigenvectors() * scale.asDiagonal() * z;
}

} // namespace batchslam
