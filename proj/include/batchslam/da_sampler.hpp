#pragma once

#include <cassert>
#include <random>
#include <vector>

#include "batchslam/cell_likelihood.hpp"

namespace batchslam {

enum class SamplerMode { kCombined, kGibbsOnly, kMhOnly };

struct SamplerOptions {
    SamplerMode mode = SamplerMode::kCombined;
    int mh_max_proposals = 0; // 0 = full |M|^2 ordered double loop per sweep
};

/// Per-cell existence flags, aligned to the canonical cell order.
struct ExistenceVector {
    std::vector<std::uint8_t> psi;

    [[nodiscard]] int count() const {
        int n = 0;
        for (auto v : psi) n += v;
        return n;
    }
};

/// Existence probability of a singleton cell (Eq.-(23) first case),
/// computed in the log domain.
inline double existence_probability(double detect_term, double log_clutter) {
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    if (detect_term == neg_inf) return 0.0;
    if (log_clutter == neg_inf) return 1.0;
    return std::exp(detect_term - log_sum_exp(log_clutter, detect_term));
}

struct GibbsMove {
    enum class Kind { kSelf, kNewCell, kMove, kSwap };
    Kind kind = Kind::kSelf;
    std::size_t target = 0; // existing-cell position for kMove/kSwap
    double log_score = -std::numeric_limits<double>::infinity();
};

namespace detail {

struct CellTotals {
    std::vector<double> log_l;
    double finite_sum = 0.0;
    int inf_count = 0;
};

inline CellTotals cell_totals(const Partition& p, CellLikelihoodEvaluator& eval) {
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    CellTotals t;
    t.log_l.reserve(p.cells.size());
    for (const auto& c : p.cells) {
        const double l = eval.evaluate(c).log_l;
        t.log_l.push_back(l);
        if (l == neg_inf)
            ++t.inf_count;
        else
            t.finite_sum += l;
    }
    return t;
}

/// Score of a candidate whose resulting partition replaces the touched cells
/// by `replacement_sum`: complement of the touched cells plus new terms.
inline double candidate_score(const CellTotals& t, std::initializer_list<std::size_t> touched,
                              double replacement_sum) {
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    if (replacement_sum == neg_inf) return neg_inf;
    double comp = t.finite_sum;
    int inf = t.inf_count;
    for (std::size_t j : touched) {
        if (t.log_l[j] == neg_inf)
            --inf;
        else
            comp -= t.log_l[j];
    }
    return inf > 0 ? neg_inf : comp + replacement_sum;
}

inline bool gate_blocks(CellLikelihoodEvaluator& eval, const MeasurementIndex& m,
                        const CellLikelihood& target_cell) {
    const double gate = eval.thresholds().gate_distance;
    if (!(gate > 0.0) || !target_cell.feasible) return false;
    const auto bp = eval.back_projection(m);
    if (!bp) return false;
    return (*bp - Eigen::Vector3d(target_cell.birth.mean)).norm() > gate;
}

} // namespace detail

/// Candidate moves for index m (Eq. 19/20 semantics): stay, move to a new
/// cell, or move/swap into each other cell. Duplicate self-moves and gated
/// moves carry score -inf.
inline std::vector<GibbsMove> gibbs_moves(const Partition& p, const MeasurementIndex& m,
                                          CellLikelihoodEvaluator& eval) {
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    std::size_t beta = p.cells.size();
    for (std::size_t j = 0; j < p.cells.size(); ++j)
        if (p.cells[j].find_step(m.k) >= 0 &&
            std::binary_search(p.cells[j].indices.begin(), p.cells[j].indices.end(), m)) {
            beta = j;
            break;
        }
    assert(beta < p.cells.size());
    const Cell& cell_b = p.cells[beta];
    const bool beta_singleton = cell_b.size() == 1;
    const auto totals = detail::cell_totals(p, eval);

    std::vector<GibbsMove> moves;
    moves.reserve(p.cells.size() + 2);

    // stay
    moves.push_back({GibbsMove::Kind::kSelf, beta,
                     detail::candidate_score(totals, {beta}, totals.log_l[beta])});

    // move to a fresh cell; identical to staying when beta is a singleton
    {
        double score = neg_inf;
        if (!beta_singleton) {
            Cell rest = cell_b;
            rest.erase(m);
            const double lr = eval.evaluate(rest).log_l;
            const double ln = eval.evaluate(Cell{{m}}).log_l;
            score = detail::candidate_score(totals, {beta}, lr == neg_inf ? neg_inf : lr + ln);
        }
        moves.push_back({GibbsMove::Kind::kNewCell, beta, score});
    }

    for (std::size_t j = 0; j < p.cells.size(); ++j) {
        if (j == beta) continue;
        const Cell& cell_g = p.cells[j];
        const int same_step = cell_g.find_step(m.k);
        GibbsMove mv;
        mv.target = j;
        mv.kind = same_step >= 0 ? GibbsMove::Kind::kSwap : GibbsMove::Kind::kMove;
        mv.log_score = neg_inf;
        const bool duplicate_swap = same_step >= 0 && beta_singleton && cell_g.size() == 1;
        if (!duplicate_swap && !detail::gate_blocks(eval, m, eval.evaluate(cell_g))) {
            Cell nb = cell_b;
            nb.erase(m);
            Cell ng = cell_g;
            if (same_step >= 0) {
                const MeasurementIndex other =
                    cell_g.indices[static_cast<std::size_t>(same_step)];
                ng.erase(other);
                nb.insert(other);
            }
            ng.insert(m);
            double sum = eval.evaluate(ng).log_l;
            if (!nb.indices.empty() && sum != neg_inf) sum += eval.evaluate(nb).log_l;
            mv.log_score = detail::candidate_score(totals, {beta, j}, sum);
        }
        moves.push_back(mv);
    }
    return moves;
}

inline Partition apply_gibbs_move(Partition p, const MeasurementIndex& m, const GibbsMove& mv) {
    if (mv.kind == GibbsMove::Kind::kSelf) return p;
    std::size_t beta = p.cells.size();
    for (std::size_t j = 0; j < p.cells.size(); ++j)
        if (std::binary_search(p.cells[j].indices.begin(), p.cells[j].indices.end(), m)) {
            beta = j;
            break;
        }
    Cell& cb = p.cells[beta];
    switch (mv.kind) {
        case GibbsMove::Kind::kNewCell:
            cb.erase(m);
            p.cells.push_back(Cell{{m}});
            break;
        case GibbsMove::Kind::kMove:
            cb.erase(m);
            p.cells[mv.target].insert(m);
            break;
        case GibbsMove::Kind::kSwap: {
            Cell& cg = p.cells[mv.target];
            const int pos = cg.find_step(m.k);
            const MeasurementIndex other = cg.indices[static_cast<std::size_t>(pos)];
            cg.erase(other);
            cg.insert(m);
            cb.erase(m);
            cb.insert(other);
            break;
        }
        case GibbsMove::Kind::kSelf:
            break;
    }
    std::erase_if(p.cells, [](const Cell& c) { return c.indices.empty(); });
    p.canonicalize();
    return p;
}

/// One Gibbs iteration (Alg. 2): visit every index in lexicographic order and
/// resample its cell from the move PMF. All-zero PMFs keep the current
/// assignment.
template <typename Rng>
Partition gibbs_sweep(Partition p, CellLikelihoodEvaluator& eval, Rng& rng) {
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    const auto index_set = eval.batch().index_set();
    for (const auto& m : index_set) {
        const auto moves = gibbs_moves(p, m, eval);
        double max_score = neg_inf;
        for (const auto& mv : moves) max_score = std::max(max_score, mv.log_score);
        if (max_score == neg_inf) continue; // keep current assignment
        double total = 0.0;
        for (const auto& mv : moves) total += std::exp(mv.log_score - max_score);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        double ticket = u01(rng) * total;
        std::size_t pick = 0;
        for (std::size_t i = 0; i < moves.size(); ++i) {
            ticket -= std::exp(moves[i].log_score - max_score);
            if (ticket <= 0.0) {
                pick = i;
                break;
            }
            if (i + 1 == moves.size()) pick = i;
        }
        p = apply_gibbs_move(std::move(p), m, moves[pick]);
    }
    assert(partition_valid(p, index_set));
    return p;
}

/// Two-means split of a cell on back-projected landmark positions, seeded at
/// the selected index pair (restricted split-merge structure): nearest-seed
/// assignment, one Lloyd centroid update and reassignment, the two anchors
/// pinned to their own sides. Deterministic in (cell, anchor_a, anchor_b), so
/// a merge can be checked to invert it exactly. Sub-cells of a valid cell are
/// always valid.
inline std::pair<Cell, Cell> pair_seeded_split(const Cell& cell, const MeasurementIndex& anchor_a,
                                               const MeasurementIndex& anchor_b,
                                               CellLikelihoodEvaluator& eval) {
    const std::size_t n = cell.size();
    assert(n >= 2);
    std::vector<Eigen::Vector3d> pts(n);
    std::size_t ia = n, ib = n;
    for (std::size_t i = 0; i < n; ++i) {
        const auto bp = eval.back_projection(cell.indices[i]);
        pts[i] = bp ? *bp
                    : eval.trajectory()[static_cast<std::size_t>(cell.indices[i].k)].position;
        if (cell.indices[i] == anchor_a) ia = i;
        if (cell.indices[i] == anchor_b) ib = i;
    }
    assert(ia < n && ib < n);
    std::vector<bool> in_second(n, false);
    auto assign = [&](const Eigen::Vector3d& c1, const Eigen::Vector3d& c2) {
        for (std::size_t i = 0; i < n; ++i) {
            if (i == ia || i == ib) {
                in_second[i] = i == ib;
                continue;
            }
            in_second[i] = (pts[i] - c2).squaredNorm() < (pts[i] - c1).squaredNorm();
        }
    };
    assign(pts[ia], pts[ib]);
    Eigen::Vector3d c1 = Eigen::Vector3d::Zero(), c2 = Eigen::Vector3d::Zero();
    double n1 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (in_second[i]) {
            c2 += pts[i];
            n2 += 1.0;
        } else {
            c1 += pts[i];
            n1 += 1.0;
        }
    }
    assign(c1 / n1, c2 / n2);
    Cell a, b;
    for (std::size_t i = 0; i < n; ++i)
        (in_second[i] ? b : a).indices.push_back(cell.indices[i]);
    std::sort(a.indices.begin(), a.indices.end());
    std::sort(b.indices.begin(), b.indices.end());
    assert(!a.indices.empty() && !b.indices.empty());
    return {std::move(a), std::move(b)};
}

namespace detail {

inline bool cells_share_step(const Cell& a, const Cell& b) {
    for (const auto& m : a.indices)
        if (b.has_step(m.k)) return true;
    return false;
}

inline bool merge_gate_blocks(CellLikelihoodEvaluator& eval, const CellLikelihood& a,
                              const CellLikelihood& b) {
    const double gate = eval.thresholds().gate_distance;
    if (!(gate > 0.0) || !a.feasible || !b.feasible) return false;
    return (Eigen::Vector3d(a.birth.mean) - Eigen::Vector3d(b.birth.mean)).norm() > gate;
}

} // namespace detail

/// One MH iteration (Alg. 3): for each ordered index pair, propose the
/// pair-seeded split when the two indices share a cell, otherwise a merge of
/// their cells; accept with the split/merge likelihood ratios. A merge is
/// proposed only when the pair-seeded split of the union reproduces the two
/// cells, which makes every per-pair move exactly invertible. A positive
/// mh_max_proposals replaces the |M|^2 loop by that many random pairs.
template <typename Rng>
Partition mh_sweep(Partition p, CellLikelihoodEvaluator& eval, const SamplerOptions& opt,
                   Rng& rng) {
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    const auto index_set = eval.batch().index_set();
    const std::size_t n = index_set.size();
    if (n < 2) return p;

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const std::size_t full = n * (n - 1);
    const bool capped = opt.mh_max_proposals > 0 &&
                        static_cast<std::size_t>(opt.mh_max_proposals) < full;
    const std::size_t n_proposals = capped ? static_cast<std::size_t>(opt.mh_max_proposals) : full;

    auto owner = [&p](const MeasurementIndex& m) {
        for (std::size_t j = 0; j < p.cells.size(); ++j)
            if (std::binary_search(p.cells[j].indices.begin(), p.cells[j].indices.end(), m))
                return j;
        assert(false);
        return std::size_t{0};
    };

    for (std::size_t t = 0; t < n_proposals; ++t) {
        std::size_t i, j;
        if (capped) {
            i = static_cast<std::size_t>(u01(rng) * static_cast<double>(n)) % n;
            j = static_cast<std::size_t>(u01(rng) * static_cast<double>(n - 1)) % (n - 1);
            if (j >= i) ++j;
        } else {
            i = t / (n - 1);
            j = t % (n - 1);
            if (j >= i) ++j;
        }
        const MeasurementIndex& ma = index_set[i];
        const MeasurementIndex& mb = index_set[j];
        const std::size_t a = owner(ma);
        const std::size_t b = owner(mb);
        if (a == b) {
            if (p.cells[a].size() < 2) continue; // a singleton cannot be split
            auto [c1, c2] = pair_seeded_split(p.cells[a], ma, mb, eval);
            const double lr = eval.evaluate(c1).log_l + eval.evaluate(c2).log_l -
                              eval.evaluate(p.cells[a]).log_l;
            const double u = u01(rng);
            if (std::log(u) <= std::min(0.0, lr)) {
                p.cells.erase(p.cells.begin() + static_cast<std::ptrdiff_t>(a));
                p.cells.push_back(std::move(c1));
                p.cells.push_back(std::move(c2));
                p.canonicalize();
            }
        } else {
            if (detail::cells_share_step(p.cells[a], p.cells[b])) continue;
            const CellLikelihood& la = eval.evaluate(p.cells[a]);
            const CellLikelihood& lb = eval.evaluate(p.cells[b]);
            if (detail::merge_gate_blocks(eval, la, lb)) continue;
            Cell merged = p.cells[a];
            for (const auto& m : p.cells[b].indices) merged.insert(m);
            // only invertible merges keep the per-pair kernel reversible
            const auto [r1, r2] = pair_seeded_split(merged, ma, mb, eval);
            if (!(r1 == p.cells[a] && r2 == p.cells[b])) continue;
            const double num = eval.evaluate(merged).log_l;
            const double den = la.log_l + lb.log_l;
            double lr;
            if (num == neg_inf)
                lr = neg_inf;
            else if (den == neg_inf)
                lr = 0.0; // ratio is +inf, always accept
            else
                lr = num - den;
            const double u = u01(rng);
            if (std::log(u) <= std::min(0.0, lr)) {
                const std::size_t hi = std::max(a, b), lo = std::min(a, b);
                p.cells.erase(p.cells.begin() + static_cast<std::ptrdiff_t>(hi));
                p.cells.erase(p.cells.begin() + static_cast<std::ptrdiff_t>(lo));
                p.cells.push_back(std::move(merged));
                p.canonicalize();
            }
        }
    }
    assert(partition_valid(p, index_set));
    return p;
}

/// Combined sampler (Alg. 1): alternate a Gibbs sweep and an MH sweep for
/// n_rounds and return the final partition.
template <typename Rng>
Partition da_sample(Partition init, CellLikelihoodEvaluator& eval, int n_rounds,
                    const SamplerOptions& opt, Rng& rng) {
    Partition p = std::move(init);
    for (int r = 0; r < n_rounds; ++r) {
        if (opt.mode != SamplerMode::kMhOnly) p = gibbs_sweep(std::move(p), eval, rng);
        if (opt.mode != SamplerMode::kGibbsOnly) p = mh_sweep(std::move(p), eval, opt, rng);
    }
    return p;
}

/// Sample per-cell existence flags (Eq. 23): psi = 1 deterministically for
/// multi-index cells; Bernoulli(r) for singletons, with the configured floor
/// forcing psi = 0 for negligible r.
template <typename Rng>
ExistenceVector sample_existence(const Partition& p, CellLikelihoodEvaluator& eval, Rng& rng) {
    ExistenceVector out;
    out.psi.reserve(p.cells.size());
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (const auto& c : p.cells) {
        if (c.size() > 1) {
            out.psi.push_back(1);
            continue;
        }
        const CellLikelihood& l = eval.evaluate(c);
        const double r = existence_probability(l.detect_term, eval.log_clutter());
        if (r < eval.thresholds().psi_floor) {
            out.psi.push_back(0);
            continue;
        }
        out.psi.push_back(u01(rng) < r ? 1 : 0);
    }
    return out;
}

} // namespace batchslam
