#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>

#include "batchslam/config.hpp"
#include "batchslam/metrics.hpp"
#include "batchslam/posterior_merge.hpp"
#include "batchslam/rng.hpp"

namespace batchslam {

/// Everything reported for one run: DA accuracy, per-step state errors,
/// map GOSPA, traces, and the merged posterior itself.
struct RunReport {
    int run_index = 0;
    std::uint64_t seed = 0;
    bool completed = false;
    double nmi_final = 0.0;
    double nmi_tail_avg = 0.0;
    std::vector<double> pos_err_per_step;
    std::vector<double> heading_err_per_step;
    std::vector<double> bias_err_per_step;
    double rmse_pos = 0.0;
    double rmse_heading = 0.0;
    double rmse_bias = 0.0;
    GospaBreakdown gospa_map;
    double undetected_expected = 0.0;
    std::size_t map_components = 0;
    double wall_clock_s = 0.0;
    std::string config_echo;
    std::vector<double> outer_cost_trace;
    std::vector<std::string> iteration_errors;
    int kept_records = 0;
    int cost_increase_events = 0; // accepted-step cost increases (must stay 0)
    MergedPosterior merged;
    std::vector<SensorState> est_trajectory;
    GroundTruth truth;
    std::optional<Eigen::SparseMatrix<double>> debug_information;
};

inline std::uint64_t run_seed(const RunConfig& cfg, int run_index) {
    return splitmix64(cfg.base_seed + static_cast<std::uint64_t>(run_index));
}

/// One full pipeline run (Fig.-1 loop): scenario generation, outer
/// sample-then-optimize iterations, tail merge, metrics against the truth.
/// A failed outer iteration is recorded and the previous trajectory reused.
inline RunReport run_once(const RunConfig& cfg, std::uint64_t seed, int run_index = 0,
                          bool want_debug_dump = false) {
    const auto t0 = std::chrono::steady_clock::now();
    RunReport rep;
    rep.run_index = run_index;
    rep.seed = seed;
    rep.config_echo = cfg.raw_config_text.empty() ? dump_config(cfg) : cfg.raw_config_text;

    std::mt19937_64 rng = make_stream(seed, 0);
    auto [truth, batch] = generate_scenario(cfg.scenario, rng);
    rep.truth = truth;

    std::vector<SensorState> traj = prior_trajectory(cfg.scenario);
    // propagated prior covariance for the first conditioning trajectory
    std::vector<Matrix5d> pose_cov(traj.size());
    pose_cov[0] = cfg.scenario.s0_prior.cov;
    for (std::size_t k = 1; k < traj.size(); ++k) {
        const Matrix5d f = motion_jacobian(traj[k - 1], cfg.scenario);
        pose_cov[k] = f * pose_cov[k - 1] * f.transpose() + cfg.scenario.process_cov;
    }
    Partition partition = all_singletons(batch.index_set());
    SamplerOptions sampler_opts{cfg.sampler_mode, cfg.mh_max_proposals};

    std::vector<SampleRecord> records;
    std::map<MeasurementIndex, Eigen::Vector3d> warm_landmarks;
    const int tail_start = cfg.outer_iters - std::min(cfg.gamma, cfg.outer_iters);

    for (int tau = 1; tau <= cfg.outer_iters; ++tau) {
        try {
            if (cfg.test_fault_hook) cfg.test_fault_hook(tau);
            CellLikelihoodEvaluator eval(batch, traj, cfg.scenario, cfg.thresholds, pose_cov);
            if (cfg.da_restart) partition = all_singletons(batch.index_set());
            partition = da_sample(std::move(partition), eval, cfg.sweeps_per_da, sampler_opts,
                                  rng);
            const ExistenceVector psi = sample_existence(partition, eval, rng);
            GraphProblem prob =
                build_graph(partition, psi, traj, batch, cfg.scenario, cfg.thresholds);
            Eigen::VectorXd q0 = initial_joint_state(prob, traj);
            for (int i = 0; i < prob.kappa; ++i) {
                const auto it = warm_landmarks.find(prob.first_indices[static_cast<std::size_t>(i)]);
                if (it != warm_landmarks.end())
                    q0.segment<kLandmarkDim>(prob.landmark_offset(i)) = it->second;
            }
            GraphSlamResult result = solve_graph(prob, q0);
            for (std::size_t i = 1; i < result.cost_trace.size(); ++i)
                if (result.cost_trace[i] > result.cost_trace[i - 1]) ++rep.cost_increase_events;
            traj = result.trajectory();
            for (std::size_t k = 0; k < traj.size(); ++k)
                pose_cov[k] = result.traj_cov.block<kSensorDim, kSensorDim>(
                    kSensorDim * static_cast<int>(k), kSensorDim * static_cast<int>(k));
            rep.outer_cost_trace.push_back(result.final_cost);
            warm_landmarks.clear();
            for (int i = 0; i < prob.kappa; ++i)
                warm_landmarks[prob.first_indices[static_cast<std::size_t>(i)]] =
                    result.map_mean.segment<kLandmarkDim>(kLandmarkDim * i);
            if (tau > tail_start) {
                if (want_debug_dump) rep.debug_information = result.information;
                records.push_back(SampleRecord{partition, psi, std::move(result),
                                               prob.first_indices});
            }
        } catch (const std::exception& e) {
            rep.iteration_errors.push_back("outer iteration " + std::to_string(tau) + ": " +
                                           e.what());
        }
    }

    rep.kept_records = static_cast<int>(records.size());
    if (!records.empty()) {
        rep.merged = merge_posterior(records, cfg.scenario, cfg.thresholds);
        rep.completed = true;

        rep.nmi_final = nmi(partition, truth.associations);
        double tail = 0.0;
        for (const auto& r : records) tail += nmi(r.partition, truth.associations);
        rep.nmi_tail_avg = tail / static_cast<double>(records.size());

        rep.est_trajectory.resize(static_cast<std::size_t>(cfg.scenario.steps) + 1);
        for (int k = 0; k <= cfg.scenario.steps; ++k)
            rep.est_trajectory[static_cast<std::size_t>(k)] = SensorState::from_vector(
                Vector5d(rep.merged.traj.mean.segment<kSensorDim>(kSensorDim * k)));

        const auto rp = rmse({truth.trajectory}, {rep.est_trajectory}, StateComponent::kPosition);
        const auto rh = rmse({truth.trajectory}, {rep.est_trajectory}, StateComponent::kHeading);
        const auto rb = rmse({truth.trajectory}, {rep.est_trajectory}, StateComponent::kClockBias);
        rep.pos_err_per_step.assign(rp.per_step.begin(), rp.per_step.end());
        rep.heading_err_per_step.assign(rh.per_step.begin(), rh.per_step.end());
        rep.bias_err_per_step.assign(rb.per_step.begin(), rb.per_step.end());
        rep.rmse_pos = rp.aggregate;
        rep.rmse_heading = rh.aggregate;
        rep.rmse_bias = rb.aggregate;

        std::vector<Eigen::Vector3d> truth_pts;
        for (const auto& l : truth.landmarks) truth_pts.push_back(l.position);
        rep.gospa_map = gospa(truth_pts,
                              extract_map_estimate(rep.merged.map, cfg.thresholds.r_report));
        rep.map_components = rep.merged.map.components.size();
        rep.undetected_expected = expected_count(rep.merged.undetected);
    }

    rep.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

struct AggregateReport {
    int n_runs = 0;
    int n_completed = 0;
    double mean_nmi_final = 0.0;
    double mean_nmi_tail = 0.0;
    double mean_gospa = 0.0;
    double mean_gospa_missed = 0.0;
    double mean_gospa_false = 0.0;
    double mean_gospa_localization = 0.0;
    RmseResult rmse_pos;
    RmseResult rmse_heading;
    RmseResult rmse_bias;
};

/// Order-independent aggregation over completed runs.
inline AggregateReport aggregate_reports(const std::vector<RunReport>& runs) {
    AggregateReport agg;
    agg.n_runs = static_cast<int>(runs.size());
    std::vector<std::vector<SensorState>> truths, ests;
    for (const auto& r : runs) {
        if (!r.completed) continue;
        ++agg.n_completed;
        agg.mean_nmi_final += r.nmi_final;
        agg.mean_nmi_tail += r.nmi_tail_avg;
        agg.mean_gospa += r.gospa_map.total;
        agg.mean_gospa_missed += r.gospa_map.missed;
        agg.mean_gospa_false += r.gospa_map.false_alarm;
        agg.mean_gospa_localization += r.gospa_map.localization;
        truths.push_back(r.truth.trajectory);
        ests.push_back(r.est_trajectory);
    }
    if (agg.n_completed > 0) {
        const double n = agg.n_completed;
        agg.mean_nmi_final /= n;
        agg.mean_nmi_tail /= n;
        agg.mean_gospa /= n;
        agg.mean_gospa_missed /= n;
        agg.mean_gospa_false /= n;
        agg.mean_gospa_localization /= n;
        agg.rmse_pos = rmse(truths, ests, StateComponent::kPosition);
        agg.rmse_heading = rmse(truths, ests, StateComponent::kHeading);
        agg.rmse_bias = rmse(truths, ests, StateComponent::kClockBias);
    }
    return agg;
}

struct MonteCarloReport {
    std::vector<RunReport> runs;
    AggregateReport aggregate;
};

/// Independent seeded runs on a small worker pool. Results are keyed by run
/// index, so parallel and serial schedules produce identical reports.
inline MonteCarloReport run_monte_carlo(const RunConfig& cfg, int n_runs) {
    if (n_runs < 1) throw std::invalid_argument("run_monte_carlo: n_runs must be >= 1");
    MonteCarloReport mc;
    mc.runs.resize(static_cast<std::size_t>(n_runs));
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    const int n_threads =
        std::max(1, std::min(cfg.threads == 0 ? hw : cfg.threads, n_runs));

    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n_runs) break;
            mc.runs[static_cast<std::size_t>(i)] =
                run_once(cfg, run_seed(cfg, i), i, cfg.debug_dump && i == 0);
        }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    mc.aggregate = aggregate_reports(mc.runs);
    return mc;
}

namespace detail {

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

/// runs.csv: one row per run per metric, with a unit column.
inline std::string runs_csv(const MonteCarloReport& mc) {
    std::string out = "run_index,seed,metric,value,unit\n";
    auto row = [&out](int run, std::uint64_t seed, const char* metric, double v,
                      const char* unit) {
        out += std::to_string(run) + "," + std::to_string(seed) + "," + metric + "," +
               detail::fmt(v) + "," + unit + "\n";
    };
    for (const auto& r : mc.runs) {
        row(r.run_index, r.seed, "completed", r.completed ? 1.0 : 0.0, "flag");
        if (!r.completed) continue;
        row(r.run_index, r.seed, "nmi_final", r.nmi_final, "unitless");
        row(r.run_index, r.seed, "nmi_tail_avg", r.nmi_tail_avg, "unitless");
        row(r.run_index, r.seed, "rmse_pos", r.rmse_pos, "m");
        row(r.run_index, r.seed, "rmse_heading", r.rmse_heading, "rad");
        row(r.run_index, r.seed, "rmse_bias", r.rmse_bias, "m");
        row(r.run_index, r.seed, "gospa_total", r.gospa_map.total, "m");
        row(r.run_index, r.seed, "gospa_localization", r.gospa_map.localization, "m");
        row(r.run_index, r.seed, "gospa_missed", r.gospa_map.missed, "m");
        row(r.run_index, r.seed, "gospa_false", r.gospa_map.false_alarm, "m");
        row(r.run_index, r.seed, "map_components", static_cast<double>(r.map_components),
            "count");
        row(r.run_index, r.seed, "undetected_expected", r.undetected_expected, "count");
        row(r.run_index, r.seed, "failed_iterations",
            static_cast<double>(r.iteration_errors.size()), "count");
    }
    return out;
}

/// trajectory.csv: per-step estimate mean +- std over runs plus per-step RMSE.
inline std::string trajectory_csv(const MonteCarloReport& mc) {
    std::string out =
        "step,mean_x_m,mean_y_m,mean_z_m,mean_heading_rad,mean_bias_m,"
        "std_x_m,std_y_m,std_z_m,std_heading_rad,std_bias_m,"
        "rmse_pos_m,rmse_heading_rad,rmse_bias_m\n";
    std::vector<const RunReport*> done;
    for (const auto& r : mc.runs)
        if (r.completed) done.push_back(&r);
    if (done.empty()) return out;
    const int steps = static_cast<int>(done.front()->est_trajectory.size());
    for (int k = 0; k < steps; ++k) {
        Vector5d mean = Vector5d::Zero();
        for (const auto* r : done)
            mean += r->est_trajectory[static_cast<std::size_t>(k)].flatten();
        mean /= static_cast<double>(done.size());
        Vector5d var = Vector5d::Zero();
        for (const auto* r : done) {
            // mixture variance: reported block variance plus spread of means
            const Vector5d dev =
                r->est_trajectory[static_cast<std::size_t>(k)].flatten() - mean;
            var += dev.cwiseProduct(dev);
            var += r->merged.traj.cov.diagonal()
                       .segment<kSensorDim>(kSensorDim * k);
        }
        var /= static_cast<double>(done.size());
        out += std::to_string(k);
        for (int i = 0; i < kSensorDim; ++i) out += "," + detail::fmt(mean(i));
        for (int i = 0; i < kSensorDim; ++i) out += "," + detail::fmt(std::sqrt(var(i)));
        const auto step_of = [&](const std::vector<double>& v) {
            return k < static_cast<int>(v.size()) ? v[static_cast<std::size_t>(k)] : 0.0;
        };
        double p2 = 0.0, h2 = 0.0, b2 = 0.0;
        for (const auto* r : done) {
            p2 += step_of(r->pos_err_per_step) * step_of(r->pos_err_per_step);
            h2 += step_of(r->heading_err_per_step) * step_of(r->heading_err_per_step);
            b2 += step_of(r->bias_err_per_step) * step_of(r->bias_err_per_step);
        }
        const double n = static_cast<double>(done.size());
        out += "," + detail::fmt(std::sqrt(p2 / n)) + "," + detail::fmt(std::sqrt(h2 / n)) +
               "," + detail::fmt(std::sqrt(b2 / n)) + "\n";
    }
    return out;
}

/// merged_map.json for the first completed run: {r, u, C} per Bernoulli plus
/// the undetected expected count.
inline std::string merged_map_json(const MonteCarloReport& mc) {
    nlohmann::json j;
    for (const auto& r : mc.runs) {
        if (!r.completed) continue;
        j["run_index"] = r.run_index;
        j["undetected_expected_count"] = r.undetected_expected;
        nlohmann::json lms = nlohmann::json::array();
        for (const auto& c : r.merged.map.components) {
            nlohmann::json l;
            l["r"] = c.r;
            l["u"] = detail::vec_json(c.density.mean);
            l["C"] = detail::mat_json(c.density.cov);
            lms.push_back(l);
        }
        j["landmarks"] = lms;
        break;
    }
    return j.dump(2);
}

inline void write_outputs(const MonteCarloReport& mc, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream(fs::path(dir) / "runs.csv") << runs_csv(mc);
    std::ofstream(fs::path(dir) / "trajectory.csv") << trajectory_csv(mc);
    std::ofstream(fs::path(dir) / "merged_map.json") << merged_map_json(mc);
    for (const auto& r : mc.runs) {
        if (!r.debug_information) continue;
        std::ofstream omega(fs::path(dir) / "omega_pattern.csv");
        omega << "row,col\n";
        const auto& m = *r.debug_information;
        for (int k = 0; k < m.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
                if (it.value() != 0.0)
                    omega << it.row() << "," << it.col() << "\n";
        std::ofstream trace(fs::path(dir) / "cost_trace.csv");
        trace << "outer_iter,final_cost\n";
        for (std::size_t i = 0; i < r.outer_cost_trace.size(); ++i)
            trace << i + 1 << "," << detail::fmt(r.outer_cost_trace[i]) << "\n";
        break;
    }
}

// ---------------------------------------------------------------------------
// Enumeration oracle fixtures: small simulated instances whose exact DA
// posterior is computable by enumerate_partitions + partition_log_weight.
// ---------------------------------------------------------------------------

struct OracleFixture {
    std::string name;
    ScenarioConfig scenario;
    Thresholds thresholds;
    MeasurementBatch batch;
    std::vector<SensorState> trajectory; // conditioning trajectory (truth)
};

namespace detail {

inline ScenarioConfig small_scenario(int steps, double clutter_rate, double pd,
                                     std::vector<Landmark> landmarks,
                                     double range_sigma = 2.0, double angle_sigma = 0.08,
                                     double lambda = 1e-2) {
    ScenarioConfig cfg;
    cfg.bs_position = {0.0, 0.0, 40.0};
    cfg.true_landmarks = std::move(landmarks);
    cfg.steps = steps;
    cfg.detection_probability = pd;
    cfg.fov_radius = 50.0;
    cfg.clutter_rate = clutter_rate;
    Vector5d r;
    const double a2 = angle_sigma * angle_sigma;
    r << range_sigma * range_sigma, a2, a2, a2, a2;
    cfg.measurement_cov = r.asDiagonal();
    cfg.process_cov = process_cov_low();
    cfg.speed = 2.0;
    cfg.turn_rate = 0.1;
    cfg.env_box = {{-80.0, -80.0, -5.0}, {80.0, 80.0, 45.0}};
    cfg.lambda_rate = lambda;
    Vector5d m0;
    m0 << 20.0, 0.0, 0.0, std::numbers::pi / 2.0, 0.0;
    Vector5d p0;
    p0 << 0.04, 0.04, 1e-6, 2.5e-5, 0.04;
    cfg.s0_prior = {m0, Eigen::MatrixXd(p0.asDiagonal())};
    return cfg;
}

/// Deterministically search seeds until the generated batch has a size in
/// [lo, hi]; keeps fixtures honest (real geometry) yet enumerable.
inline OracleFixture make_fixture(std::string name, ScenarioConfig cfg, std::size_t lo,
                                  std::size_t hi, std::uint64_t seed0) {
    for (std::uint64_t s = seed0;; ++s) {
        std::mt19937_64 rng = make_stream(s, 17);
        auto [truth, batch] = generate_scenario(cfg, rng);
        if (batch.total() < lo || batch.total() > hi) continue;
        OracleFixture f;
        f.name = std::move(name);
        f.scenario = std::move(cfg);
        f.thresholds.gate_distance = 1e9; // ungated: sampler must match enumeration
        f.batch = std::move(batch);
        f.trajectory = truth.trajectory;
        return f;
    }
}

} // namespace detail

/// Three fixed fixtures mixing same-step and cross-step indices, tuned so the
/// exact posterior has genuine spread (noise comparable to landmark spacing).
inline std::vector<OracleFixture> oracle_fixtures() {
    std::vector<OracleFixture> out;
    out.push_back(detail::make_fixture(
        "two-close-landmarks",
        detail::small_scenario(3, 0.4, 0.9, {{{24.0, 6.0, 2.0}}, {{22.0, 8.5, 3.0}}}),
        5, 6, 1));
    out.push_back(detail::make_fixture(
        "clutter-heavy", detail::small_scenario(4, 1.2, 0.9, {{{18.0, -7.0, 4.0}}}), 5, 6, 1));
    out.push_back(detail::make_fixture(
        "misdetections",
        detail::small_scenario(3, 0.0, 0.7,
                               {{{25.0, 5.0, 2.0}}, {{22.0, 9.0, 4.0}}, {{20.0, -9.0, 3.0}}}),
        5, 6, 1));
    return out;
}

struct EnumerationCheckResult {
    std::string name;
    double tv = 1.0;
    std::size_t n_partitions = 0;
    std::size_t n_samples = 0;
    double seconds = 0.0;
};

/// Run the combined sampler as one long chain and compare the kept-sample
/// distribution against the enumerated posterior (total variation).
inline EnumerationCheckResult enumeration_check(const OracleFixture& fixture, std::size_t kept,
                                                std::size_t burn_in, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    EnumerationCheckResult res;
    res.name = fixture.name;
    res.n_samples = kept;

    CellLikelihoodEvaluator eval(fixture.batch, fixture.trajectory, fixture.scenario,
                                 fixture.thresholds);
    const auto partitions = enumerate_partitions(fixture.batch.index_set());
    res.n_partitions = partitions.size();
    std::vector<double> logw(partitions.size());
    for (std::size_t i = 0; i < partitions.size(); ++i)
        logw[i] = partition_log_weight(partitions[i], eval);
    const double norm = log_sum_exp(logw);

    std::map<std::vector<std::uint64_t>, std::size_t> slot;
    for (std::size_t i = 0; i < partitions.size(); ++i) slot[partitions[i].key()] = i;

    std::mt19937_64 rng = make_stream(seed, 23);
    SamplerOptions opts;
    Partition p = all_singletons(fixture.batch.index_set());
    std::vector<std::size_t> counts(partitions.size(), 0);
    for (std::size_t r = 0; r < burn_in + kept; ++r) {
        p = da_sample(std::move(p), eval, 1, opts, rng);
        if (r < burn_in) continue;
        const auto it = slot.find(p.key());
        if (it == slot.end())
            throw std::logic_error("enumeration_check: sampled partition not in enumeration");
        ++counts[it->second];
    }
    double tv = 0.0;
    for (std::size_t i = 0; i < partitions.size(); ++i) {
        const double emp = static_cast<double>(counts[i]) / static_cast<double>(kept);
        tv += std::abs(emp - std::exp(logw[i] - norm));
    }
    res.tv = 0.5 * tv;
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

} // namespace batchslam
