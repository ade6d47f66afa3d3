#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "batchslam/models.hpp"
#include "batchslam/partition.hpp"

namespace batchslam {

namespace detail {

/// Exact minimum-cost perfect matching on a square matrix (shortest
/// augmenting paths with potentials, O(n^3)). Returns row -> column.
inline std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
    std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                                   v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j)
        if (p[static_cast<std::size_t>(j)] > 0)
            row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    return row_to_col;
}

} // namespace detail

/// GOSPA decomposition (alpha = 2): total^p = loc^p + missed^p + false^p,
/// all reported in meters.
struct GospaBreakdown {
    double total = 0.0;
    double localization = 0.0;
    double missed = 0.0;
    double false_alarm = 0.0;
    std::vector<std::pair<int, int>> assignment; // matched (truth, estimate) pairs
};

/// GOSPA with exact assignment: pairs closer than the cut-off c may match at
/// cost d^p, every unmatched point costs c^p / alpha.
inline GospaBreakdown gospa(const std::vector<Eigen::Vector3d>& truth,
                            const std::vector<Eigen::Vector3d>& est, double c = 5.0,
                            double p = 2.0, double alpha = 2.0) {
    if (!(c > 0.0) || !(p >= 1.0)) throw std::invalid_argument("gospa: need c > 0 and p >= 1");
    if (alpha != 2.0) throw std::invalid_argument("gospa: decomposition requires alpha = 2");
    const int n = static_cast<int>(truth.size());
    const int m = static_cast<int>(est.size());
    const double cp = std::pow(c, p);
    const double unmatched = cp / alpha;

    GospaBreakdown out;
    int n_missed = 0, n_false = 0;
    double loc_p = 0.0;

    if (n + m > 0) {
        const int dim = n + m;
        const double big = 1e9 * (cp + 1.0) * static_cast<double>(dim);
        Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(dim, dim, big);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                const double d = (truth[static_cast<std::size_t>(i)] -
                                  est[static_cast<std::size_t>(j)])
                                     .norm();
                if (d < c) cost(i, j) = std::pow(d, p);
            }
        for (int i = 0; i < n; ++i) cost(i, m + i) = unmatched;
        for (int j = 0; j < m; ++j) cost(n + j, j) = unmatched;
        cost.block(n, m, m, n).setZero();

        const auto row_to_col = detail::hungarian(cost);
        for (int i = 0; i < n; ++i) {
            const int j = row_to_col[static_cast<std::size_t>(i)];
            if (j < m) {
                loc_p += cost(i, j);
                out.assignment.emplace_back(i, j);
            } else {
                ++n_missed;
            }
        }
        for (int j = 0; j < m; ++j) {
            bool taken = false;
            for (int i = 0; i < n; ++i)
                if (row_to_col[static_cast<std::size_t>(i)] == j) taken = true;
            if (!taken) ++n_false;
        }
    }

    const double missed_p = unmatched * n_missed;
    const double false_p = unmatched * n_false;
    out.localization = std::pow(loc_p, 1.0 / p);
    out.missed = std::pow(missed_p, 1.0 / p);
    out.false_alarm = std::pow(false_p, 1.0 / p);
    out.total = std::pow(loc_p + missed_p + false_p, 1.0 / p);
    return out;
}

struct PartitionAgreement {
    double nmi = 1.0;
    std::vector<std::vector<int>> contingency;
};

/// Normalized mutual information over the cell-overlap contingency table,
/// arithmetic-mean normalization 2 I / (H_a + H_b). Both partitions must
/// cover the same index set. Two single-cell partitions give 1.
inline PartitionAgreement partition_agreement(const Partition& a, const Partition& b) {
    std::map<MeasurementIndex, std::size_t> in_a, in_b;
    for (std::size_t i = 0; i < a.cells.size(); ++i)
        for (const auto& m : a.cells[i].indices) in_a[m] = i;
    for (std::size_t j = 0; j < b.cells.size(); ++j)
        for (const auto& m : b.cells[j].indices) in_b[m] = j;
    if (in_a.size() != in_b.size())
        throw std::invalid_argument("nmi: partitions cover different index sets");
    for (const auto& [m, _] : in_a)
        if (!in_b.contains(m))
            throw std::invalid_argument("nmi: partitions cover different index sets");

    PartitionAgreement out;
    out.contingency.assign(a.cells.size(), std::vector<int>(b.cells.size(), 0));
    for (const auto& [m, i] : in_a) ++out.contingency[i][in_b.at(m)];

    const double n = static_cast<double>(in_a.size());
    if (n == 0.0) return out;
    std::vector<double> ra(a.cells.size(), 0.0), cb(b.cells.size(), 0.0);
    for (std::size_t i = 0; i < a.cells.size(); ++i)
        for (std::size_t j = 0; j < b.cells.size(); ++j) {
            ra[i] += out.contingency[i][j];
            cb[j] += out.contingency[i][j];
        }
    double h_a = 0.0, h_b = 0.0, mi = 0.0;
    for (double x : ra)
        if (x > 0.0) h_a -= x / n * std::log(x / n);
    for (double x : cb)
        if (x > 0.0) h_b -= x / n * std::log(x / n);
    for (std::size_t i = 0; i < a.cells.size(); ++i)
        for (std::size_t j = 0; j < b.cells.size(); ++j) {
            const double nij = out.contingency[i][j];
            if (nij > 0.0) mi += nij / n * std::log(n * nij / (ra[i] * cb[j]));
        }
    out.nmi = (h_a + h_b) > 0.0 ? std::clamp(2.0 * mi / (h_a + h_b), 0.0, 1.0) : 1.0;
    return out;
}

inline double nmi(const Partition& a, const Partition& b) { return partition_agreement(a, b).nmi; }

enum class StateComponent { kPosition, kHeading, kClockBias };

struct RmseResult {
    Eigen::VectorXd per_step;
    double aggregate = 0.0;
};

/// Per-step RMS of the selected component error over runs; aggregate = RMS
/// over steps. Heading errors are wrapped before squaring.
inline RmseResult rmse(const std::vector<std::vector<SensorState>>& truths,
                       const std::vector<std::vector<SensorState>>& estimates,
                       StateComponent sel) {
    if (truths.size() != estimates.size() || truths.empty())
        throw std::invalid_argument("rmse: run counts differ or empty");
    const std::size_t steps = truths.front().size();
    for (std::size_t r = 0; r < truths.size(); ++r)
        if (truths[r].size() != steps || estimates[r].size() != steps)
            throw std::invalid_argument("rmse: trajectory lengths differ");

    RmseResult out;
    out.per_step = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(steps));
    for (std::size_t t = 0; t < steps; ++t) {
        double acc = 0.0;
        for (std::size_t r = 0; r < truths.size(); ++r) {
            const SensorState& a = truths[r][t];
            const SensorState& b = estimates[r][t];
            double e = 0.0;
            switch (sel) {
                case StateComponent::kPosition: e = (a.position - b.position).norm(); break;
                case StateComponent::kHeading: e = wrap_angle(a.heading - b.heading); break;
                case StateComponent::kClockBias: e = a.clock_bias - b.clock_bias; break;
            }
            acc += e * e;
        }
        out.per_step(static_cast<Eigen::Index>(t)) =
            std::sqrt(acc / static_cast<double>(truths.size()));
    }
    out.aggregate = std::sqrt(out.per_step.squaredNorm() / static_cast<double>(steps));
    return out;
}

} // namespace batchslam
