#include <doctest.h>

#include <map>
#include <set>

#include "batchslam/da_sampler.hpp"
#include "batchslam/harness.hpp"
#include "batchslam/metrics.hpp"

using namespace batchslam;

namespace {

// Independent oracle: enumerate all partitions by labeling indices with
// cluster ids, canonicalize, deduplicate, and filter the same-step rule.
std::vector<Partition> brute_force_partitions(const std::vector<MeasurementIndex>& index_set) {
    std::set<std::vector<std::uint64_t>> seen;
    std::vector<Partition> out;
    const std::size_t n = index_set.size();
    std::vector<int> label(n, 0);
    auto emit = [&]() {
        Partition p;
        std::map<int, Cell> cells;
        for (std::size_t i = 0; i < n; ++i) cells[label[i]].indices.push_back(index_set[i]);
        for (auto& [_, c] : cells) p.cells.push_back(std::move(c));
        p.canonicalize();
        for (const auto& c : p.cells)
            if (!cell_valid(c)) return;
        if (seen.insert(p.key()).second) out.push_back(std::move(p));
    };
    auto rec = [&](auto&& self, std::size_t i) -> void {
        if (i == n) {
            emit();
            return;
        }
        for (int l = 0; l < static_cast<int>(n); ++l) {
            label[i] = l;
            self(self, i + 1);
        }
    };
    rec(rec, 0);
    return out;
}

OracleFixture fixture(std::size_t i) {
    static const std::vector<OracleFixture> fx = oracle_fixtures();
    return fx[i];
}

} // namespace

TEST_CASE("enumerate_partitions counts on the small examples") {
    CHECK(enumerate_partitions({{1, 1}, {2, 1}}).size() == 2);
    CHECK(enumerate_partitions({{1, 1}, {1, 2}}).size() == 1);
    // Bell(3) = 5 minus the two partitions grouping the same-step pair
    const auto three = enumerate_partitions({{1, 1}, {2, 1}, {2, 2}});
    CHECK(three.size() == 3);
    CHECK(brute_force_partitions({{1, 1}, {2, 1}, {2, 2}}).size() == three.size());
}

TEST_CASE("enumerate_partitions matches the brute-force oracle") {
    const std::vector<std::vector<MeasurementIndex>> cases = {
        {{1, 1}, {1, 2}, {2, 1}, {3, 1}},
        {{1, 1}, {2, 1}, {2, 2}, {3, 1}, {3, 2}},
        {{1, 1}, {1, 2}, {2, 1}, {2, 2}, {3, 1}},
    };
    for (const auto& idx : cases) {
        const auto a = enumerate_partitions(idx);
        const auto b = brute_force_partitions(idx);
        CHECK(a.size() == b.size());
        std::set<std::vector<std::uint64_t>> ka, kb;
        for (const auto& p : a) {
            CHECK(partition_valid(p, idx));
            ka.insert(p.key());
        }
        for (const auto& p : b) kb.insert(p.key());
        CHECK(ka == kb);
    }
}

TEST_CASE("enumerate_partitions refuses oversized input") {
    std::vector<MeasurementIndex> big;
    for (int k = 1; k <= 11; ++k) big.push_back({k, 1});
    CHECK_THROWS_AS(enumerate_partitions(big), std::invalid_argument);
}

TEST_CASE("cell likelihood clutter-only limit") {
    auto f = fixture(1); // clutter present
    auto cfg = f.scenario;
    cfg.lambda_rate = 1e-280;
    CellLikelihoodEvaluator eval(f.batch, f.trajectory, cfg, f.thresholds);
    const Cell c{{f.batch.index_set().front()}};
    const auto& l = eval.evaluate(c);
    CHECK(l.is_singleton);
    CHECK(l.log_l == doctest::Approx(eval.log_clutter()).epsilon(1e-9));
}

TEST_CASE("noiseless landmark singleton favors existence at paper scales") {
    ScenarioConfig cfg;
    cfg.bs_position = {0.0, 0.0, 40.0};
    cfg.steps = 1;
    cfg.detection_probability = 0.9;
    cfg.fov_radius = 50.0;
    cfg.clutter_rate = 5.0;
    Vector5d r;
    r << 0.1 * 0.1, 0.01 * 0.01, 0.01 * 0.01, 0.01 * 0.01, 0.01 * 0.01;
    cfg.measurement_cov = r.asDiagonal();
    cfg.process_cov = Matrix5d::Identity();
    cfg.lambda_rate = 1.5e-5;
    cfg.env_box = {{-80.0, -80.0, -5.0}, {80.0, 80.0, 45.0}};
    Vector5d m0;
    m0 << 20.0, 0.0, 0.0, 0.0, 0.0;
    cfg.s0_prior = {m0, Eigen::MatrixXd(Matrix5d::Identity())};
    Thresholds th;

    std::vector<SensorState> traj(2, SensorState::from_vector(m0));
    const Landmark x{{35.0, 8.0, 3.0}};
    MeasurementBatch batch;
    batch.scans = {{measurement_mean(x, traj[1], cfg)}};

    CellLikelihoodEvaluator eval(batch, traj, cfg, th);
    const auto& l = eval.evaluate(Cell{{{1, 1}}});
    CHECK(l.detect_term > eval.log_clutter());
    CHECK(existence_probability(l.detect_term, eval.log_clutter()) > 0.5);
}

TEST_CASE("a far-apart two-index cell loses to the split") {
    ScenarioConfig cfg;
    cfg.bs_position = {0.0, 0.0, 40.0};
    cfg.steps = 2;
    cfg.detection_probability = 0.9;
    cfg.fov_radius = 1000.0; // keep both back-projections detectable
    cfg.clutter_rate = 1.0;
    Vector5d r;
    r << 0.1 * 0.1, 0.01 * 0.01, 0.01 * 0.01, 0.01 * 0.01, 0.01 * 0.01;
    cfg.measurement_cov = r.asDiagonal();
    cfg.process_cov = Matrix5d::Identity();
    cfg.lambda_rate = 1.5e-5;
    cfg.env_box = {{-300.0, -300.0, -5.0}, {300.0, 300.0, 45.0}};
    Vector5d m0;
    m0 << 0.0, 0.0, 0.0, 0.0, 0.0;
    cfg.s0_prior = {m0, Eigen::MatrixXd(Matrix5d::Identity())};
    Thresholds th;
    th.gate_distance = 1e9;

    std::vector<SensorState> traj(3, SensorState::from_vector(m0));
    const Landmark near_lm{{40.0, 10.0, 2.0}};
    const Landmark far_lm{{-120.0, -140.0, 2.0}}; // ~210 m from near_lm
    MeasurementBatch batch;
    batch.scans = {{measurement_mean(near_lm, traj[1], cfg)},
                   {measurement_mean(far_lm, traj[2], cfg)}};

    CellLikelihoodEvaluator eval(batch, traj, cfg, th);
    const double joint = eval.evaluate(Cell{{{1, 1}, {2, 1}}}).log_l;
    const double split =
        eval.evaluate(Cell{{{1, 1}}}).log_l + eval.evaluate(Cell{{{2, 1}}}).log_l;
    CHECK(joint < split);
}

TEST_CASE("infeasible earliest measurement") {
    auto f = fixture(0);
    auto batch = f.batch;
    // range below the direct BS-sensor path at step 1 cannot back-project
    Vector5d bad;
    const double baseline = (f.scenario.bs_position - f.trajectory[1].position).norm();
    bad << baseline - 5.0, 0.0, 0.0, 0.0, 0.0;
    batch.scans[0].push_back(bad);
    const int alpha = static_cast<int>(batch.scans[0].size());

    CellLikelihoodEvaluator eval(batch, f.trajectory, f.scenario, f.thresholds);
    const auto& singleton = eval.evaluate(Cell{{{1, alpha}}});
    CHECK(!singleton.feasible);
    CHECK(singleton.log_l == doctest::Approx(eval.log_clutter()));
    MeasurementIndex other{2, 1};
    Cell multi{{{1, alpha}}};
    multi.insert(other);
    CHECK(eval.evaluate(multi).log_l == -std::numeric_limits<double>::infinity());
}

TEST_CASE("partition weight is the sum of cell likelihoods") {
    auto f = fixture(0);
    CellLikelihoodEvaluator eval(f.batch, f.trajectory, f.scenario, f.thresholds);
    const auto idx = f.batch.index_set();
    Partition p;
    Cell all;
    for (const auto& m : idx)
        if (!all.has_step(m.k)) all.insert(m);
    p.cells.push_back(all);
    for (const auto& m : idx)
        if (!std::binary_search(all.indices.begin(), all.indices.end(), m))
            p.cells.push_back(Cell{{m}});
    p.canonicalize();
    double sum = 0.0;
    for (const auto& c : p.cells) sum += eval.evaluate(c).log_l;
    CHECK(partition_log_weight(p, eval) == doctest::Approx(sum).epsilon(1e-12));

    Partition one;
    one.cells.push_back(Cell{{idx.front()}});
    MeasurementBatch single;
    single.scans = {{f.batch.at(idx.front())}};
    std::vector<SensorState> traj{f.trajectory[0], f.trajectory[1]};
    CellLikelihoodEvaluator eval1(single, traj, f.scenario, f.thresholds);
    CHECK(partition_log_weight(one, eval1) ==
          doctest::Approx(eval1.evaluate(one.cells[0]).log_l));
}

TEST_CASE("enumerated posterior normalizes to one") {
    auto f = fixture(1);
    CellLikelihoodEvaluator eval(f.batch, f.trajectory, f.scenario, f.thresholds);
    const auto parts = enumerate_partitions(f.batch.index_set());
    std::vector<double> lw(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) lw[i] = partition_log_weight(parts[i], eval);
    const double norm = log_sum_exp(lw);
    double total = 0.0;
    for (double w : lw) total += std::exp(w - norm);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("a far disjoint-step measurement leaves the old posterior intact") {
    auto f = fixture(0); // K = 3, 6 measurements
    auto cfg = f.scenario;
    cfg.steps = 4;
    std::vector<SensorState> traj = f.trajectory;
    traj.push_back(motion_mean(traj.back(), cfg));

    auto batch_small = f.batch;
    batch_small.scans.emplace_back(); // step 4 empty
    auto batch_big = batch_small;
    const Landmark lonely{{-40.0, -38.0, 3.0}}; // far from every other source
    batch_big.scans[3].push_back(measurement_mean(lonely, traj[4], cfg));

    CellLikelihoodEvaluator eval_small(batch_small, traj, cfg, f.thresholds);
    CellLikelihoodEvaluator eval_big(batch_big, traj, cfg, f.thresholds);

    const auto parts_small = enumerate_partitions(batch_small.index_set());
    std::map<std::vector<std::uint64_t>, double> post_small;
    {
        std::vector<double> lw(parts_small.size());
        for (std::size_t i = 0; i < parts_small.size(); ++i)
            lw[i] = partition_log_weight(parts_small[i], eval_small);
        const double norm = log_sum_exp(lw);
        for (std::size_t i = 0; i < parts_small.size(); ++i)
            post_small[parts_small[i].key()] = std::exp(lw[i] - norm);
    }
    // marginalize the extended posterior onto partitions of the original indices
    const auto parts_big = enumerate_partitions(batch_big.index_set());
    std::map<std::vector<std::uint64_t>, double> post_marg;
    {
        std::vector<double> lw(parts_big.size());
        for (std::size_t i = 0; i < parts_big.size(); ++i)
            lw[i] = partition_log_weight(parts_big[i], eval_big);
        const double norm = log_sum_exp(lw);
        for (std::size_t i = 0; i < parts_big.size(); ++i) {
            Partition restricted;
            for (const auto& c : parts_big[i].cells) {
                Cell r;
                for (const auto& m : c.indices)
                    if (m.k <= 3) r.indices.push_back(m);
                if (!r.indices.empty()) restricted.cells.push_back(std::move(r));
            }
            restricted.canonicalize();
            post_marg[restricted.key()] += std::exp(lw[i] - norm);
        }
    }
    for (const auto& [key, prob] : post_small)
        CHECK(post_marg[key] == doctest::Approx(prob).epsilon(1e-6));
}

TEST_CASE("gibbs PMF degenerates for two same-step singletons") {
    auto f = fixture(0);
    int k2 = -1;
    for (int k = 1; k <= f.batch.steps(); ++k)
        if (f.batch.scans[static_cast<std::size_t>(k - 1)].size() >= 2) k2 = k;
    REQUIRE(k2 > 0);
    MeasurementBatch two;
    two.scans.resize(1);
    two.scans[0] = {f.batch.at({k2, 1}), f.batch.at({k2, 2})};
    std::vector<SensorState> traj{f.trajectory[0], f.trajectory[static_cast<std::size_t>(k2)]};
    CellLikelihoodEvaluator eval(two, traj, f.scenario, f.thresholds);
    Partition q = all_singletons(two.index_set());
    const auto moves = gibbs_moves(q, {1, 1}, eval);
    double self_score = -std::numeric_limits<double>::infinity();
    double best_other = -std::numeric_limits<double>::infinity();
    for (const auto& mv : moves) {
        if (mv.kind == GibbsMove::Kind::kSelf)
            self_score = mv.log_score;
        else
            best_other = std::max(best_other, mv.log_score);
    }
    CHECK(self_score > -std::numeric_limits<double>::infinity());
    CHECK(best_other == -std::numeric_limits<double>::infinity());
}

TEST_CASE("gibbs ratio weights equal full recomputation") {
    auto f = fixture(0);
    CellLikelihoodEvaluator eval(f.batch, f.trajectory, f.scenario, f.thresholds);
    const auto idx = f.batch.index_set();
    std::mt19937_64 rng = make_stream(3, 0);
    SamplerOptions opts;
    Partition p = all_singletons(idx);
    int moves_checked = 0;
    while (moves_checked < 1000) {
        p = da_sample(std::move(p), eval, 1, opts, rng);
        for (const auto& m : idx) {
            const auto moves = gibbs_moves(p, m, eval);
            const double base = partition_log_weight(p, eval);
            double self_score = 0.0;
            for (const auto& mv : moves)
                if (mv.kind == GibbsMove::Kind::kSelf) self_score = mv.log_score;
            for (const auto& mv : moves) {
                if (mv.log_score == -std::numeric_limits<double>::infinity()) continue;
                const Partition applied = apply_gibbs_move(p, m, mv);
                const double full = partition_log_weight(applied, eval);
                CHECK(std::abs((mv.log_score - self_score) - (full - base)) < 1e-10);
                ++moves_checked;
            }
        }
    }
}

TEST_CASE("gibbs move PMF sums to one after normalization") {
    auto f = fixture(1);
    CellLikelihoodEvaluator eval(f.batch, f.trajectory, f.scenario, f.thresholds);
    Partition p = all_singletons(f.batch.index_set());
    std::mt19937_64 rng = make_stream(4, 0);
    p = da_sample(std::move(p), eval, 2, SamplerOptions{}, rng);
    for (const auto& m : f.batch.index_set()) {
        const auto moves = gibbs_moves(p, m, eval);
        std::vector<double> scores;
        for (const auto& mv : moves) scores.push_back(mv.log_score);
        const double norm = log_sum_exp(scores);
        REQUIRE(norm > -std::numeric_limits<double>::infinity());
        double total = 0.0;
        for (double s : scores) total += std::exp(s - norm);
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("mh never merges cells sharing a time step") {
    auto f = fixture(0);
    int k2 = -1;
    for (int k = 1; k <= f.batch.steps(); ++k)
        if (f.batch.scans[static_cast<std::size_t>(k - 1)].size() >= 2) k2 = k;
    REQUIRE(k2 > 0);
    MeasurementBatch two;
    two.scans.resize(1);
    two.scans[0] = {f.batch.at({k2, 1}), f.batch.at({k2, 2})};
    std::vector<SensorState> traj{f.trajectory[0], f.trajectory[static_cast<std::size_t>(k2)]};
    CellLikelihoodEvaluator eval(two, traj, f.scenario, f.thresholds);
    Partition p = all_singletons(two.index_set());
    std::mt19937_64 rng = make_stream(5, 0);
    for (int i = 0; i < 100; ++i) {
        p = mh_sweep(std::move(p), eval, SamplerOptions{}, rng);
        CHECK(p.cells.size() == 2);
    }
}

TEST_CASE("mh accepts a merge whose likelihood ratio exceeds one") {
    auto f = fixture(2); // no clutter, landmarks only
    CellLikelihoodEvaluator eval(f.batch, f.trajectory, f.scenario, f.thresholds);
    const auto idx = f.batch.index_set();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < idx.size(); ++j) {
            if (i == j || idx[i].k == idx[j].k) continue;
            Cell merged{{idx[i]}};
            merged.insert(idx[j]);
            const double ratio = eval.evaluate(merged).log_l -
                                 eval.evaluate(Cell{{idx[i]}}).log_l -
                                 eval.evaluate(Cell{{idx[j]}}).log_l;
            const auto [r1, r2] = pair_seeded_split(merged, idx[i], idx[j], eval);
            const bool invertible = r1.size() == 1 && r2.size() == 1;
            if (ratio <= 0.0 || !invertible) continue;
            Partition p = all_singletons(idx);
            std::mt19937_64 rng = make_stream(6, 0);
            p = mh_sweep(std::move(p), eval, SamplerOptions{}, rng);
            bool found_multi = false;
            for (const auto& c : p.cells) found_multi = found_multi || c.size() > 1;
            CHECK(found_multi);
            return;
        }
    }
    FAIL("no ratio>1 merge pair found in fixture");
}

TEST_CASE("mh identity on a one-measurement batch") {
    auto f = fixture(1);
    MeasurementBatch one;
    one.scans.resize(1);
    one.scans[0] = {f.batch.at({1, 1})};
    std::vector<SensorState> traj{f.trajectory[0], f.trajectory[1]};
    CellLikelihoodEvaluator eval(one, traj, f.scenario, f.thresholds);
    Partition p = all_singletons(one.index_set());
    std::mt19937_64 rng = make_stream(7, 0);
    const Partition q = mh_sweep(p, eval, SamplerOptions{}, rng);
    CHECK(p == q);
}

TEST_CASE("split and merge acceptance obeys min-rule reversibility") {
    auto f = fixture(0);
    CellLikelihoodEvaluator eval(f.batch, f.trajectory, f.scenario, f.thresholds);
    const auto idx = f.batch.index_set();
    int checked = 0;
    for (std::size_t i = 0; i < idx.size() && checked < 50; ++i) {
        for (std::size_t j = 0; j < idx.size(); ++j) {
            if (i == j || idx[i].k == idx[j].k) continue;
            Cell merged{{idx[i]}};
            merged.insert(idx[j]);
            const double la = eval.evaluate(Cell{{idx[i]}}).log_l +
                              eval.evaluate(Cell{{idx[j]}}).log_l;
            const double lb = eval.evaluate(merged).log_l;
            const double a_merge = std::min(1.0, std::exp(lb - la));
            const double a_split = std::min(1.0, std::exp(la - lb));
            // flow balance of the two-state kernel: a(A->B) pi(A) == a(B->A) pi(B)
            CHECK(a_merge * std::exp(la) ==
                  doctest::Approx(a_split * std::exp(lb)).epsilon(1e-12));
            ++checked;
        }
    }
    CHECK(checked > 0);
}

TEST_CASE("da_sample with zero rounds returns the input") {
    auto f = fixture(0);
    CellLikelihoodEvaluator eval(f.batch, f.trajectory, f.scenario, f.thresholds);
    const Partition p = all_singletons(f.batch.index_set());
    std::mt19937_64 rng = make_stream(8, 0);
    CHECK(da_sample(p, eval, 0, SamplerOptions{}, rng) == p);
}

TEST_CASE("combined chain matches the enumerated posterior") {
    const auto res = enumeration_check(fixture(2), 30000, 1500, 42);
    CHECK(res.tv < 0.05);
}

TEST_CASE("existence sampling law") {
    auto f = fixture(1);
    CellLikelihoodEvaluator eval(f.batch, f.trajectory, f.scenario, f.thresholds);

    SUBCASE("multi-index cells always exist") {
        const auto idx = f.batch.index_set();
        Cell multi;
        for (const auto& m : idx)
            if (!multi.has_step(m.k)) multi.insert(m);
        REQUIRE(multi.size() >= 3);
        Partition p;
        p.cells.push_back(multi);
        for (const auto& m : idx)
            if (!std::binary_search(multi.indices.begin(), multi.indices.end(), m))
                p.cells.push_back(Cell{{m}});
        p.canonicalize();
        std::mt19937_64 rng = make_stream(9, 0);
        for (int i = 0; i < 200; ++i) {
            const auto psi = sample_existence(p, eval, rng);
            for (std::size_t c = 0; c < p.cells.size(); ++c)
                if (p.cells[c].size() > 1) CHECK(psi.psi[c] == 1);
        }
    }

    SUBCASE("equal detect and clutter terms give one half") {
        CHECK(existence_probability(-3.7, -3.7) == doctest::Approx(0.5));
    }

    SUBCASE("singleton frequencies match the existence probability") {
        auto cfg = f.scenario;
        double r = 0.0;
        for (double lam = 1e-6; lam < 1.0; lam *= 3.0) {
            cfg.lambda_rate = lam;
            CellLikelihoodEvaluator e2(f.batch, f.trajectory, cfg, f.thresholds);
            const auto& l = e2.evaluate(Cell{{{1, 1}}});
            r = existence_probability(l.detect_term, e2.log_clutter());
            if (r > 0.2 && r < 0.8) break;
        }
        REQUIRE(r > 0.2);
        REQUIRE(r < 0.8);
        CellLikelihoodEvaluator e2(f.batch, f.trajectory, cfg, f.thresholds);
        Partition p = all_singletons(f.batch.index_set());
        std::mt19937_64 rng = make_stream(10, 0);
        const int n = 100000;
        int ones = 0;
        for (int i = 0; i < n; ++i) {
            const auto psi = sample_existence(p, e2, rng);
            ones += psi.psi[0]; // canonical first cell is {(1,1)}
        }
        const double freq = static_cast<double>(ones) / n;
        CHECK(std::abs(freq - r) <= 3.0 * std::sqrt(r * (1.0 - r) / n));
    }

    SUBCASE("psi floor forces zero") {
        auto cfg = f.scenario;
        cfg.lambda_rate = 1e-280;
        Thresholds th = f.thresholds;
        th.psi_floor = 1e-4;
        CellLikelihoodEvaluator e2(f.batch, f.trajectory, cfg, th);
        Partition p = all_singletons(f.batch.index_set());
        std::mt19937_64 rng = make_stream(11, 0);
        for (int i = 0; i < 50; ++i) {
            const auto psi = sample_existence(p, e2, rng);
            for (auto v : psi.psi) CHECK(v == 0);
        }
    }
}

TEST_CASE("sweeps preserve partition validity") {
    auto f = fixture(1);
    CellLikelihoodEvaluator eval(f.batch, f.trajectory, f.scenario, f.thresholds);
    const auto idx = f.batch.index_set();
    Partition p = all_singletons(idx);
    std::mt19937_64 rng = make_stream(12, 0);
    for (int i = 0; i < 200; ++i) {
        p = gibbs_sweep(std::move(p), eval, rng);
        CHECK(partition_valid(p, idx));
        p = mh_sweep(std::move(p), eval, SamplerOptions{}, rng);
        CHECK(partition_valid(p, idx));
    }
}

TEST_CASE("more sampling rounds do not degrade the DA on average") {
    ScenarioConfig cfg = detail::small_scenario(
        5, 1.5, 0.9, {{{26.0, 4.0, 2.0}}, {{20.0, 12.0, 4.0}}, {{15.0, -9.0, 3.0}}}, 1.0, 0.04,
        1e-3);
    Thresholds th;
    th.gate_distance = 1e9;
    const std::vector<int> rounds = {1, 5, 20};
    std::vector<double> mean_nmi(rounds.size(), 0.0);
    const int seeds = 50;
    int used = 0;
    for (int s = 0; s < seeds; ++s) {
        std::mt19937_64 gen_rng = make_stream(100 + static_cast<std::uint64_t>(s), 1);
        const auto [truth, batch] = generate_scenario(cfg, gen_rng);
        if (batch.total() < 6) continue;
        ++used;
        CellLikelihoodEvaluator eval(batch, truth.trajectory, cfg, th);
        for (std::size_t ri = 0; ri < rounds.size(); ++ri) {
            std::mt19937_64 rng = make_stream(500 + static_cast<std::uint64_t>(s), 2);
            Partition p = all_singletons(batch.index_set());
            p = da_sample(std::move(p), eval, rounds[ri], SamplerOptions{}, rng);
            mean_nmi[ri] += nmi(p, truth.associations);
        }
    }
    REQUIRE(used > 30);
    int inversions = 0;
    for (std::size_t ri = 1; ri < rounds.size(); ++ri)
        if (mean_nmi[ri] < mean_nmi[ri - 1]) ++inversions;
    CHECK(inversions <= 1);
}
