#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "batchslam/da_sampler.hpp"
#include "batchslam/models.hpp"

namespace batchslam {

/// Full run configuration: scenario, outer-loop lengths, sampler knobs,
/// thresholds, seeding, and output location.
struct RunConfig {
    ScenarioConfig scenario;
    std::string preset; // non-empty when the scenario came from a preset
    int outer_iters = 150;
    int gamma = 100; // kept tail length
    int sweeps_per_da = 2;
    std::uint64_t base_seed = 1;
    int runs = 1;
    Thresholds thresholds;
    std::string output_dir = "out";
    SamplerMode sampler_mode = SamplerMode::kCombined;
    bool da_restart = false;
    int mh_max_proposals = 0;
    int threads = 1;

    // CLI flag: dump the information-matrix pattern and cost trace for run 0
    bool debug_dump = false;
    // raw file bytes when loaded from disk, echoed verbatim into reports
    std::string raw_config_text;
    // test-only fault injection, never parsed or echoed
    std::function<void(int)> test_fault_hook;
};

/// The 20-SP / 8-cluster layout: cluster centers on two rings around the BS
/// ground projection, two or three points each. Config values, not a claimed
/// reproduction of the paper figure.
inline std::vector<Landmark> default_landmarks() {
    std::vector<Landmark> out;
    const double deg = std::numbers::pi / 180.0;
    const int sizes[8] = {3, 2, 3, 2, 3, 2, 3, 2};
    const double radii[8] = {45.0, 58.0, 45.0, 58.0, 45.0, 58.0, 45.0, 58.0};
    const double zs[8] = {2.0, 8.0, 4.0, 10.0, 2.0, 8.0, 4.0, 10.0};
    const Eigen::Vector3d offsets[3] = {{0.0, 0.0, 0.0}, {3.0, -2.0, 1.0}, {-2.5, 3.0, -1.0}};
    for (int c = 0; c < 8; ++c) {
        const double ang = 45.0 * c * deg;
        const Eigen::Vector3d center(radii[c] * std::cos(ang), radii[c] * std::sin(ang), zs[c]);
        for (int i = 0; i < sizes[c]; ++i) out.push_back({center + offsets[i]});
    }
    return out;
}

inline Matrix5d process_cov_low() {
    Vector5d d;
    d << 0.2 * 0.2, 0.2 * 0.2, 0.0, 0.001 * 0.001, 0.2 * 0.2;
    return d.asDiagonal();
}

/// Scenario presets I-IV: {low, high} clutter x {low, high} process noise.
inline ScenarioConfig scenario_preset(const std::string& name) {
    ScenarioConfig cfg;
    cfg.bs_position = {0.0, 0.0, 40.0};
    cfg.true_landmarks = default_landmarks();
    cfg.steps = 40;
    cfg.detection_probability = 0.9;
    cfg.fov_radius = 50.0;
    Vector5d r;
    r << 0.1 * 0.1, 0.01 * 0.01, 0.01 * 0.01, 0.01 * 0.01, 0.01 * 0.01;
    cfg.measurement_cov = r.asDiagonal();
    cfg.turn_rate = 2.0 * std::numbers::pi / 40.0;
    cfg.speed = 30.0 * cfg.turn_rate; // ~30 m orbit radius
    cfg.env_box = {{-100.0, -100.0, -5.0}, {100.0, 100.0, 45.0}};
    cfg.lambda_rate = 1.5e-5;
    Vector5d m0;
    m0 << 30.0, 0.0, 0.0, std::numbers::pi / 2.0, 0.0;
    Vector5d p0;
    p0 << 0.2 * 0.2, 0.2 * 0.2, 1e-6, 0.005 * 0.005, 0.2 * 0.2;
    cfg.s0_prior = {m0, Eigen::MatrixXd(p0.asDiagonal())};

    if (name == "I") {
        cfg.clutter_rate = 1.0;
        cfg.process_cov = process_cov_low();
    } else if (name == "II") {
        cfg.clutter_rate = 5.0;
        cfg.process_cov = process_cov_low();
    } else if (name == "III") {
        cfg.clutter_rate = 1.0;
        cfg.process_cov = 8.0 * process_cov_low();
    } else if (name == "IV") {
        cfg.clutter_rate = 5.0;
        cfg.process_cov = 8.0 * process_cov_low();
    } else {
        throw std::invalid_argument("unknown scenario preset: " + name);
    }
    return cfg;
}

namespace detail {

using json = nlohmann::json;

inline void require_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& [k, _] : j.items())
        if (!allowed.contains(k))
            throw std::invalid_argument("config: unknown key '" + k + "' in " + where);
}

inline Eigen::VectorXd vector_from(const json& j) {
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i];
    return v;
}

inline Eigen::MatrixXd matrix_from(const json& j) {
    const auto rows = j.size();
    const auto cols = rows ? j[0].size() : 0;
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (j[r].size() != cols) throw std::invalid_argument("config: ragged matrix");
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c];
    }
    return m;
}

inline json vec_json(const Eigen::VectorXd& v) {
    json j = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

inline json mat_json(const Eigen::MatrixXd& m) {
    json j = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        j.push_back(row);
    }
    return j;
}

inline ScenarioConfig scenario_from_json(const json& j) {
    require_keys(j,
                 {"bs_position", "landmarks", "steps", "detection_probability", "fov_radius",
                  "clutter_rate", "measurement_cov", "process_cov", "speed", "turn_rate",
                  "env_box", "lambda_rate", "s0_prior"},
                 "scenario");
    ScenarioConfig cfg;
    if (j.contains("bs_position")) cfg.bs_position = vector_from(j["bs_position"]);
    if (j.contains("landmarks"))
        for (const auto& l : j["landmarks"]) cfg.true_landmarks.push_back({vector_from(l)});
    if (j.contains("steps")) cfg.steps = j["steps"];
    if (j.contains("detection_probability"))
        cfg.detection_probability = j["detection_probability"];
    if (j.contains("fov_radius")) cfg.fov_radius = j["fov_radius"];
    if (j.contains("clutter_rate")) cfg.clutter_rate = j["clutter_rate"];
    if (j.contains("measurement_cov")) cfg.measurement_cov = matrix_from(j["measurement_cov"]);
    if (j.contains("process_cov")) cfg.process_cov = matrix_from(j["process_cov"]);
    if (j.contains("speed")) cfg.speed = j["speed"];
    if (j.contains("turn_rate")) cfg.turn_rate = j["turn_rate"];
    if (j.contains("env_box")) {
        require_keys(j["env_box"], {"lo", "hi"}, "scenario.env_box");
        cfg.env_box.lo = vector_from(j["env_box"]["lo"]);
        cfg.env_box.hi = vector_from(j["env_box"]["hi"]);
    }
    if (j.contains("lambda_rate")) cfg.lambda_rate = j["lambda_rate"];
    if (j.contains("s0_prior")) {
        require_keys(j["s0_prior"], {"mean", "cov"}, "scenario.s0_prior");
        cfg.s0_prior.mean = vector_from(j["s0_prior"]["mean"]);
        cfg.s0_prior.cov = matrix_from(j["s0_prior"]["cov"]);
    }
    return cfg;
}

inline json scenario_to_json(const ScenarioConfig& cfg) {
    json j;
    j["bs_position"] = vec_json(cfg.bs_position);
    json lms = json::array();
    for (const auto& l : cfg.true_landmarks) lms.push_back(vec_json(l.position));
    j["landmarks"] = lms;
    j["steps"] = cfg.steps;
    j["detection_probability"] = cfg.detection_probability;
    j["fov_radius"] = cfg.fov_radius;
    j["clutter_rate"] = cfg.clutter_rate;
    j["measurement_cov"] = mat_json(cfg.measurement_cov);
    j["process_cov"] = mat_json(cfg.process_cov);
    j["speed"] = cfg.speed;
    j["turn_rate"] = cfg.turn_rate;
    j["env_box"] = {{"lo", vec_json(cfg.env_box.lo)}, {"hi", vec_json(cfg.env_box.hi)}};
    j["lambda_rate"] = cfg.lambda_rate;
    j["s0_prior"] = {{"mean", vec_json(cfg.s0_prior.mean)},
                     {"cov", mat_json(cfg.s0_prior.cov)}};
    return j;
}

} // namespace detail

inline SamplerMode sampler_mode_from(const std::string& s) {
    if (s == "combined") return SamplerMode::kCombined;
    if (s == "gibbs") return SamplerMode::kGibbsOnly;
    if (s == "mh") return SamplerMode::kMhOnly;
    throw std::invalid_argument("config: unknown sampler_mode '" + s + "'");
}

inline std::string to_string(SamplerMode m) {
    switch (m) {
        case SamplerMode::kCombined: return "combined";
        case SamplerMode::kGibbsOnly: return "gibbs";
        case SamplerMode::kMhOnly: return "mh";
    }
    return "combined";
}

/// Parse a run config from JSON text. Unknown keys are rejected at every
/// nesting level. Either "preset" (I-IV) or a full "scenario" is required.
inline RunConfig parse_config(const std::string& text) {
    const auto j = detail::json::parse(text);
    detail::require_keys(j,
                         {"preset", "scenario", "outer_iters", "gamma", "sweeps_per_da", "seed",
                          "runs", "thresholds", "output_dir", "sampler_mode", "da_restart",
                          "mh_max_proposals", "threads"},
                         "top level");
    RunConfig cfg;
    if (j.contains("preset")) {
        cfg.preset = j["preset"];
        cfg.scenario = scenario_preset(cfg.preset);
    }
    if (j.contains("scenario")) cfg.scenario = detail::scenario_from_json(j["scenario"]);
    if (!j.contains("preset") && !j.contains("scenario"))
        throw std::invalid_argument("config: need 'preset' or 'scenario'");
    if (j.contains("outer_iters")) cfg.outer_iters = j["outer_iters"];
    if (j.contains("gamma")) cfg.gamma = j["gamma"];
    if (j.contains("sweeps_per_da")) cfg.sweeps_per_da = j["sweeps_per_da"];
    if (j.contains("seed")) cfg.base_seed = j["seed"];
    if (j.contains("runs")) cfg.runs = j["runs"];
    if (j.contains("thresholds")) {
        const auto& t = j["thresholds"];
        detail::require_keys(
            t, {"r_min", "dist_max", "r_report", "psi_floor", "gate_distance", "birth_sigma"},
            "thresholds");
        if (t.contains("r_min")) cfg.thresholds.r_min = t["r_min"];
        if (t.contains("dist_max")) cfg.thresholds.dist_max = t["dist_max"];
        if (t.contains("r_report")) cfg.thresholds.r_report = t["r_report"];
        if (t.contains("psi_floor")) cfg.thresholds.psi_floor = t["psi_floor"];
        if (t.contains("gate_distance")) cfg.thresholds.gate_distance = t["gate_distance"];
        if (t.contains("birth_sigma")) cfg.thresholds.birth_sigma = t["birth_sigma"];
    }
    if (j.contains("output_dir")) cfg.output_dir = j["output_dir"];
    if (j.contains("sampler_mode")) cfg.sampler_mode = sampler_mode_from(j["sampler_mode"]);
    if (j.contains("da_restart")) cfg.da_restart = j["da_restart"];
    if (j.contains("mh_max_proposals")) cfg.mh_max_proposals = j["mh_max_proposals"];
    if (j.contains("threads")) cfg.threads = j["threads"];

    if (cfg.gamma > cfg.outer_iters)
        throw std::invalid_argument("config: gamma must not exceed outer_iters");
    if (cfg.runs < 1 || cfg.outer_iters < 1 || cfg.gamma < 1 || cfg.sweeps_per_da < 0)
        throw std::invalid_argument("config: loop counts out of range");
    return cfg;
}

/// Canonical serialization (used as the config echo when no file was given).
inline std::string dump_config(const RunConfig& cfg) {
    detail::json j;
    if (!cfg.preset.empty()) j["preset"] = cfg.preset;
    j["scenario"] = detail::scenario_to_json(cfg.scenario);
    j["outer_iters"] = cfg.outer_iters;
    j["gamma"] = cfg.gamma;
    j["sweeps_per_da"] = cfg.sweeps_per_da;
    j["seed"] = cfg.base_seed;
    j["runs"] = cfg.runs;
    j["thresholds"] = {{"r_min", cfg.thresholds.r_min},
                       {"dist_max", cfg.thresholds.dist_max},
                       {"r_report", cfg.thresholds.r_report},
                       {"psi_floor", cfg.thresholds.psi_floor},
                       {"gate_distance", cfg.thresholds.gate_distance},
                       {"birth_sigma", cfg.thresholds.birth_sigma}};
    j["output_dir"] = cfg.output_dir;
    j["sampler_mode"] = to_string(cfg.sampler_mode);
    j["da_restart"] = cfg.da_restart;
    j["mh_max_proposals"] = cfg.mh_max_proposals;
    j["threads"] = cfg.threads;
    return j.dump(2);
}

} // namespace batchslam
