#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "batchslam/harness.hpp"

namespace {

namespace fs = std::filesystem;

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

batchslam::RunConfig load_config(const std::string& config_path, const std::string& preset) {
    if (!config_path.empty()) {
        const std::string text = read_file(config_path);
        batchslam::RunConfig cfg = batchslam::parse_config(text);
        cfg.raw_config_text = text;
        if (!preset.empty()) {
            cfg.preset = preset;
            cfg.scenario = batchslam::scenario_preset(preset);
        }
        return cfg;
    }
    if (preset.empty())
        throw std::runtime_error("need --config or --preset");
    batchslam::RunConfig cfg;
    cfg.preset = preset;
    cfg.scenario = batchslam::scenario_preset(preset);
    return cfg;
}

// Minimal line-plot SVG: one polyline per series over a shared x axis.
void write_svg(const std::string& path, const std::string& title,
               const std::vector<double>& xs,
               const std::vector<std::pair<std::string, std::vector<double>>>& series) {
    const double w = 720, h = 420, ml = 70, mr = 20, mt = 40, mb = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 0.0, ymax = -1e300;
    for (double x : xs) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
    }
    for (const auto& [_, ys] : series)
        for (double y : ys) ymax = std::max(ymax, y);
    if (!(xmax > xmin)) xmax = xmin + 1.0;
    if (!(ymax > ymin)) ymax = ymin + 1.0;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

    std::ofstream out(path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << w / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
        << "</text>\n";
    out << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
        << "' stroke='black'/>\n";
    out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
        << "' stroke='black'/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double yv = ymin + (ymax - ymin) * t / 4.0;
        out << "<text x='" << ml - 8 << "' y='" << py(yv) + 4
            << "' text-anchor='end' font-size='11'>" << yv << "</text>\n";
        const double xv = xmin + (xmax - xmin) * t / 4.0;
        out << "<text x='" << px(xv) << "' y='" << h - mb + 18
            << "' text-anchor='middle' font-size='11'>" << xv << "</text>\n";
    }
    int ci = 0;
    for (const auto& [name, ys] : series) {
        out << "<polyline fill='none' stroke='" << colors[ci % 4] << "' stroke-width='1.5' points='";
        for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i)
            out << px(xs[i]) << "," << py(ys[i]) << " ";
        out << "'/>\n";
        out << "<text x='" << w - mr - 140 << "' y='" << mt + 16 * (ci + 1) << "' fill='"
            << colors[ci % 4] << "' font-size='12'>" << name << "</text>\n";
        ++ci;
    }
    out << "</svg>\n";
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cols.push_back(c);
        rows.push_back(std::move(cols));
    }
    return rows;
}

int cmd_run(const std::string& config_path, const std::string& preset, int runs_override,
            std::int64_t seed_override, const std::string& out_override, bool debug_dump) {
    batchslam::RunConfig cfg = load_config(config_path, preset);
    if (runs_override > 0) cfg.runs = runs_override;
    if (seed_override >= 0) cfg.base_seed = static_cast<std::uint64_t>(seed_override);
    if (!out_override.empty()) cfg.output_dir = out_override;
    cfg.debug_dump = debug_dump;

    const auto mc = batchslam::run_monte_carlo(cfg, cfg.runs);
    if (!cfg.output_dir.empty()) batchslam::write_outputs(mc, cfg.output_dir);

    const auto& a = mc.aggregate;
    std::cout << "runs completed: " << a.n_completed << "/" << a.n_runs << "\n";
    if (a.n_completed > 0) {
        std::cout << "mean NMI (final / tail-avg): " << a.mean_nmi_final << " / "
                  << a.mean_nmi_tail << "\n"
                  << "RMSE position [m]: " << a.rmse_pos.aggregate
                  << "  heading [rad]: " << a.rmse_heading.aggregate
                  << "  bias [m]: " << a.rmse_bias.aggregate << "\n"
                  << "mean GOSPA [m]: " << a.mean_gospa << " (loc " << a.mean_gospa_localization
                  << ", missed " << a.mean_gospa_missed << ", false " << a.mean_gospa_false
                  << ")\n";
    }
    double wall = 0.0;
    for (const auto& r : mc.runs) wall += r.wall_clock_s;
    std::cout << "total wall clock [s]: " << wall << "\n";
    if (!cfg.output_dir.empty())
        std::cout << "outputs in " << cfg.output_dir << " (runs.csv, trajectory.csv, merged_map.json)\n";
    return a.n_completed > 0 ? 0 : 1;
}

int cmd_enumerate_check(const std::string& config_path, std::size_t samples) {
    if (!config_path.empty()) (void)load_config(config_path, ""); // validate only
    bool all_ok = true;
    for (const auto& fixture : batchslam::oracle_fixtures()) {
        const auto res = batchslam::enumeration_check(fixture, samples, samples / 10, 7);
        const bool ok = res.tv <= 0.05;
        all_ok = all_ok && ok;
        std::cout << (ok ? "[PASS] " : "[FAIL] ") << res.name << ": TV " << res.tv << " over "
                  << res.n_partitions << " partitions, " << res.n_samples << " samples, "
                  << res.seconds << " s\n";
    }
    return all_ok ? 0 : 1;
}

int cmd_plot(const std::string& in_dir) {
    const auto traj = read_csv((fs::path(in_dir) / "trajectory.csv").string());
    if (traj.size() > 1) {
        std::vector<double> xs;
        std::vector<double> rp, rh, rb;
        for (std::size_t i = 1; i < traj.size(); ++i) {
            xs.push_back(std::stod(traj[i][0]));
            rp.push_back(std::stod(traj[i][11]));
            rh.push_back(std::stod(traj[i][12]));
            rb.push_back(std::stod(traj[i][13]));
        }
        write_svg((fs::path(in_dir) / "rmse_curve.svg").string(), "per-step RMSE", xs,
                  {{"position [m]", rp}, {"heading [rad]", rh}, {"bias [m]", rb}});
        std::ofstream out(fs::path(in_dir) / "rmse_curve.csv");
        out << "step,rmse_pos_m,rmse_heading_rad,rmse_bias_m\n";
        for (std::size_t i = 0; i < xs.size(); ++i)
            out << xs[i] << "," << rp[i] << "," << rh[i] << "," << rb[i] << "\n";
    }
    const auto runs = read_csv((fs::path(in_dir) / "runs.csv").string());
    std::vector<double> xs, gospa;
    for (std::size_t i = 1; i < runs.size(); ++i) {
        if (runs[i].size() < 4 || runs[i][2] != "gospa_total") continue;
        xs.push_back(std::stod(runs[i][0]));
        gospa.push_back(std::stod(runs[i][3]));
    }
    if (!xs.empty()) {
        write_svg((fs::path(in_dir) / "gospa_curve.svg").string(), "GOSPA per run", xs,
                  {{"gospa total [m]", gospa}});
        std::ofstream out(fs::path(in_dir) / "gospa_curve.csv");
        out << "run,gospa_total_m\n";
        for (std::size_t i = 0; i < xs.size(); ++i) out << xs[i] << "," << gospa[i] << "\n";
    }
    std::cout << "plots written to " << in_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"batch SLAM with sampled data association"};
    app.require_subcommand(1);

    std::string config_path, preset, out_dir, in_dir;
    int runs = 0;
    std::int64_t seed = -1;
    bool debug_dump = false;
    std::size_t samples = 100000;

    auto* run = app.add_subcommand("run", "simulate, associate, optimize, merge, report");
    run->add_option("--config", config_path, "JSON config file");
    run->add_option("--preset", preset, "scenario preset I|II|III|IV");
    run->add_option("--runs", runs, "Monte Carlo run count override");
    run->add_option("--seed", seed, "base seed override");
    run->add_option("--out", out_dir, "output directory override");
    run->add_flag("--debug-dump", debug_dump, "dump information-matrix pattern and cost trace");

    auto* enumcheck =
        app.add_subcommand("enumerate-check", "sampler vs enumerated posterior oracle suite");
    enumcheck->add_option("--config", config_path, "JSON config file (validated)");
    enumcheck->add_option("--samples", samples, "kept samples per fixture");

    auto* plot = app.add_subcommand("plot", "emit RMSE/GOSPA curves as SVG and CSV");
    plot->add_option("--in", in_dir, "directory with runs.csv and trajectory.csv")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, preset, runs, seed, out_dir, debug_dump);
        if (enumcheck->parsed()) return cmd_enumerate_check(config_path, samples);
        if (plot->parsed()) return cmd_plot(in_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
