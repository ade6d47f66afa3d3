#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "batchslam/gaussian.hpp"
#include "batchslam/types.hpp"

namespace batchslam {

/// Bernoulli landmark: empty with probability 1-r, a single landmark with
/// spatial density `density` with probability r.
struct BernoulliComponent {
    double r = 0.0;
    GaussianDensity density;
};

/// Multi-Bernoulli: one global hypothesis, an ordered list of Bernoullis.
struct MultiBernoulli {
    std::vector<BernoulliComponent> components;
};

/// Uniform PPP intensity over an axis-aligned region (landmarks per m^3).
struct UniformPoissonIntensity {
    double rate_density = 0.0;
    Box3 region;

    [[nodiscard]] double value(const Eigen::Vector3d& x) const {
        return region.contains(x) ? rate_density : 0.0;
    }
    [[nodiscard]] double expected_count() const { return rate_density * region.volume(); }
};

/// Uniform intensity thinned by a pointwise multiplier in [0,1] (built from a
/// trajectory and detection model by the posterior-merge stage).
struct ThinnedPoissonIntensity {
    UniformPoissonIntensity base;
    std::function<double(const Eigen::Vector3d&)> thinning;

    [[nodiscard]] double value(const Eigen::Vector3d& x) const {
        const double t = thinning ? std::clamp(thinning(x), 0.0, 1.0) : 1.0;
        return base.value(x) * t;
    }
};

/// Keep exactly the components with r >= r_min, order preserved.
inline MultiBernoulli mb_prune(const MultiBernoulli& mb, double r_min) {
    if (r_min < 0.0 || r_min > 1.0)
        throw std::invalid_argument("mb_prune: r_min outside [0,1]");
    MultiBernoulli out;
    for (const auto& c : mb.components)
        if (c.r >= r_min) out.components.push_back(c);
    return out;
}

namespace detail {

inline BernoulliComponent moment_match(const BernoulliComponent& a, const BernoulliComponent& b) {
    const double rs = a.r + b.r;
    const double wa = rs > 0.0 ? a.r / rs : 0.5;
    const double wb = 1.0 - wa;
    BernoulliComponent m;
    m.r = std::min(1.0, rs);
    m.density.mean = wa * a.density.mean + wb * b.density.mean;
    const Eigen::VectorXd da = a.density.mean - m.density.mean;
    const Eigen::VectorXd db = b.density.mean - m.density.mean;
    m.density.cov = wa * (a.density.cov + da * da.transpose()) +
                    wb * (b.density.cov + db * db.transpose());
    return m;
}

} // namespace detail

/// Repeatedly merge the closest component pair with mean distance < dist_max
/// (moment matching, weights proportional to r, merged r capped at 1).
inline MultiBernoulli mb_merge_close(const MultiBernoulli& mb, double dist_max) {
    if (dist_max < 0.0) throw std::invalid_argument("mb_merge_close: dist_max < 0");
    std::vector<BernoulliComponent> cs = mb.components;
    for (;;) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < cs.size(); ++i) {
            for (std::size_t j = i + 1; j < cs.size(); ++j) {
                const double d = (cs[i].density.mean - cs[j].density.mean).norm();
                if (d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        }
        if (!(best < dist_max)) break;
        cs[bi] = detail::moment_match(cs[bi], cs[bj]);
        cs.erase(cs.begin() + static_cast<std::ptrdiff_t>(bj));
    }
    return MultiBernoulli{std::move(cs)};
}

} // namespace batchslam
