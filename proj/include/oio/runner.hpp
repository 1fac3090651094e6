// Experiment runner: per-seed episodes, thread-parallel ensembles and the
// on-disk outputs (report, calibration reports, run logs, plot data).
#pragma once

#include "oio/calibration.hpp"
#include "oio/ekf_fusion.hpp"
#include "oio/navigation.hpp"
#include "oio/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace oio {

// =============================================================================
// CSV helpers
// =============================================================================

/// Shortest round-trip-ish text for a double: 9 significant digits, empty for NaN.
inline std::string fmt_num(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_num(*v) : ""; }

inline std::string fmt_flag(int v) { return v < 0 ? "" : std::to_string(v); }

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw std::runtime_error("cannot open " + path.string());
        row(header);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

// =============================================================================
// Episodes
// =============================================================================

struct Episode {
    std::string name; // calibration | cold | calibrated
    bool ok = false;
    std::string error;
    std::vector<StepRecord> log;
    std::optional<NavigationResult> navigation;
    std::optional<CalibrationReport> calibration;
    double sim_time = 0.0;
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::vector<Episode> episodes;
    double wall_ms = 0.0;

    const Episode* find(const std::string& name) const {
        for (const auto& e : episodes) {
            if (e.name == name) return &e;
        }
        return nullptr;
    }

    bool ok() const {
        return std::all_of(episodes.begin(), episodes.end(), [](const Episode& e) { return e.ok; });
    }
};

namespace detail {

template <class F>
Episode guarded(const std::string& name, Rig& rig, F&& body) {
    Episode ep;
    ep.name = name;
    try {
        body(ep);
        ep.ok = true;
    } catch (const std::exception& e) {
        ep.error = e.what();
    }
    ep.sim_time = rig.time();
    ep.log = rig.log();
    return ep;
}

inline Episode run_navigation(const ScenarioConfig& config, std::uint64_t seed, const std::string& name,
                              const std::function<EkfState()>& init) {
    Rig rig = make_rig(config, seed);
    return guarded(name, rig, [&](Episode& ep) {
        ep.navigation = navigate(rig, init(), config.navigation, window_for_dof(config.navigation_mode),
                                 config.protocol.baseline_mode, "navigate_" + name);
    });
}

} // namespace detail

inline Episode run_calibration_episode(const ScenarioConfig& config, std::uint64_t seed) {
    Rig rig = make_rig(config, seed);
    return detail::guarded("calibration", rig,
                           [&](Episode& ep) { ep.calibration = run_protocol(rig, config.protocol); });
}

inline Episode run_cold_episode(const ScenarioConfig& config, std::uint64_t seed) {
    const SensorSpec spec = config.sensor_spec();
    return detail::run_navigation(config, seed, "cold", [&] {
        return init_cold_start(spec, config.arm.reach(), prior_for_seed(config, seed), config.cold_reach_fraction);
    });
}

inline Episode run_calibrated_episode(const ScenarioConfig& config, std::uint64_t seed,
                                      const UncertaintyBudget& budget) {
    const SensorSpec spec = config.sensor_spec();
    return detail::run_navigation(config, seed, "calibrated", [&] {
        return init_from_budget(budget, config.navigation_mode, prior_for_seed(config, seed), spec.drift_walk_std,
                                config.tuning);
    });
}

inline SeedResult run_seed(const ScenarioConfig& config, std::uint64_t seed, ExperimentMode mode) {
    const auto start = std::chrono::steady_clock::now();
    SeedResult out;
    out.seed = seed;
    if (mode != ExperimentMode::NavigateCold) {
        out.episodes.push_back(run_calibration_episode(config, seed));
    }
    if (mode == ExperimentMode::NavigateCold || mode == ExperimentMode::Compare) {
        out.episodes.push_back(run_cold_episode(config, seed));
    }
    if (mode == ExperimentMode::NavigateCalibrated || mode == ExperimentMode::Compare) {
        const Episode& cal = out.episodes.front();
        if (cal.ok) {
            out.episodes.push_back(run_calibrated_episode(config, seed, cal.calibration->budget));
        } else {
            Episode skipped;
            skipped.name = "calibrated";
            skipped.error = "calibration failed: " + cal.error;
            out.episodes.push_back(std::move(skipped));
        }
    }
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return out;
}

// =============================================================================
// Ensembles
// =============================================================================

struct Summary {
    std::size_t count = 0;
    double median = kNaN;
    double q25 = kNaN;
    double q75 = kNaN;
    double p90 = kNaN;
};

/// Linear-interpolated quantile of an unsorted sample.
inline double quantile(std::vector<double> xs, double q) {
    if (xs.empty()) return kNaN;
    std::sort(xs.begin(), xs.end());
    const double pos = q * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

inline Summary summarize(const std::vector<double>& xs) {
    Summary s;
    s.count = xs.size();
    s.median = quantile(xs, 0.5);
    s.q25 = quantile(xs, 0.25);
    s.q75 = quantile(xs, 0.75);
    s.p90 = quantile(xs, 0.9);
    return s;
}

struct RunReport {
    ScenarioConfig config;
    ExperimentMode mode = ExperimentMode::Compare;
    std::vector<SeedResult> seeds; // in config.seeds order
    double wall_ms = 0.0;

    std::vector<double> final_errors(const std::string& episode) const {
        std::vector<double> out;
        for (const auto& s : seeds) {
            const Episode* e = s.find(episode);
            if (e && e->ok && e->navigation) out.push_back(e->navigation->final_error);
        }
        return out;
    }

    std::size_t failures() const {
        return static_cast<std::size_t>(std::count_if(seeds.begin(), seeds.end(), [](const auto& s) { return !s.ok(); }));
    }
};

/// Runs every seed, `jobs` at a time. Results do not depend on `jobs`.
inline RunReport run(const ScenarioConfig& config, ExperimentMode mode, int jobs = 1,
                     const std::function<void(const SeedResult&)>& on_seed = {}) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    RunReport report;
    report.config = config;
    report.mode = mode;
    report.seeds.resize(config.seeds.size());

    std::atomic<std::size_t> next{0};
    std::mutex callback_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
            report.seeds[i] = run_seed(config, config.seeds[i], mode);
            if (on_seed) {
                std::lock_guard lock(callback_mutex);
                on_seed(report.seeds[i]);
            }
        }
    };
    const auto n = static_cast<std::size_t>(std::clamp<int>(jobs, 1, static_cast<int>(std::max<std::size_t>(1, config.seeds.size()))));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return report;
}

// =============================================================================
// Outputs
// =============================================================================

namespace detail {

using nlohmann::json;

inline json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json summary_json(const Summary& s) {
    return {{"count", s.count},
            {"median", num_or_null(s.median)},
            {"q25", num_or_null(s.q25)},
            {"q75", num_or_null(s.q75)},
            {"iqr", num_or_null(s.q75 - s.q25)},
            {"p90", num_or_null(s.p90)}};
}

inline json budget_json(const UncertaintyBudget& b) {
    json a = json::object();
    for (const auto& [mode, ta] : b.type_a) {
        a[std::string(to_string(mode))] = {{"s", ta.s}, {"k", ta.k}, {"u_a", ta.u_a}};
    }
    json out = {{"type_a", a}};
    out["type_b"] = b.type_b ? json{{"v", b.type_b->v}, {"m", b.type_b->m}, {"u_b", b.type_b->u_b}} : json(nullptr);
    return out;
}

inline json calibration_json(const CalibrationReport& r, std::uint64_t seed) {
    json stages = json::array();
    for (const auto& s : r.stages) {
        stages.push_back({{"mode", std::string(to_string(s.mode))},
                          {"moves", s.moves},
                          {"arrived", s.arrived},
                          {"t_start", s.t_start},
                          {"t_end", s.t_end},
                          {"best_smoothed", s.best_smoothed},
                          {"window", s.window}});
    }
    return {{"seed", seed},
            {"sensor", std::string(to_string(r.sensor))},
            {"baseline", r.baseline},
            {"budget", budget_json(r.budget)},
            {"stages", stages},
            {"vertex", r.vertex ? vec_json(*r.vertex) : json(nullptr)},
            {"truth", vec_json(r.truth)},
            {"belief_measurements", r.belief_measurements},
            {"belief_rounds", r.belief_rounds},
            {"belief_residual", num_or_null(r.belief_residual)},
            {"t_belief_start", r.t_belief_start},
            {"total_time", r.total_time}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << text;
}

inline const std::vector<std::string>& run_header() {
    static const std::vector<std::string> h = {
        "t",         "stage",     "tip_x",     "tip_y",       "tip_z",       "odom_x",         "odom_y",
        "odom_z",    "source_x",  "source_y",  "source_z",    "true_ppm",    "reading",        "smoothed",
        "delta",     "is_bout",   "sphere_cx", "sphere_cy",   "sphere_cz",   "sphere_r",       "sphere_w",
        "belief_residual", "est_x", "est_y",   "est_z",       "est_bias",    "trace_p",        "min_eig_p",
        "innovation", "gated"};
    return h;
}

inline void write_run_csv(const std::filesystem::path& path, const std::vector<StepRecord>& log) {
    CsvWriter w(path, run_header());
    for (const auto& r : log) {
        w.row({fmt_num(r.t), r.stage, fmt_num(r.tip.x()), fmt_num(r.tip.y()), fmt_num(r.tip.z()),
               fmt_num(r.odom_tip.x()), fmt_num(r.odom_tip.y()), fmt_num(r.odom_tip.z()), fmt_num(r.source.x()),
               fmt_num(r.source.y()), fmt_num(r.source.z()), fmt_num(r.true_ppm), fmt_opt(r.pair.reading),
               fmt_num(r.smoothed), fmt_num(r.delta), fmt_flag(r.is_bout), fmt_num(r.sphere_center.x()),
               fmt_num(r.sphere_center.y()), fmt_num(r.sphere_center.z()), fmt_num(r.sphere_radius),
               fmt_num(r.sphere_weight), fmt_num(r.belief_residual), fmt_num(r.estimate[0]), fmt_num(r.estimate[1]),
               fmt_num(r.estimate[2]), fmt_num(r.estimate[3]), fmt_num(r.trace_p), fmt_num(r.min_eig_p),
               fmt_num(r.innovation), fmt_flag(r.gated)});
    }
}

/// Two rows per step, one per physical sensor; `raw` is empty when the sensor
/// produced nothing that step.
inline void write_sensor_csv(const std::filesystem::path& path, const std::vector<StepRecord>& log) {
    CsvWriter w(path, {"t", "stage", "sensor", "enabled", "raw", "reading"});
    for (const auto& r : log) {
        w.row({fmt_num(r.t), r.stage, "primary", r.pair.primary_enabled ? "1" : "0", fmt_opt(r.pair.primary_raw),
               fmt_opt(r.pair.reading)});
        w.row({fmt_num(r.t), r.stage, "secondary", r.pair.primary_enabled ? "0" : "1",
               fmt_opt(r.pair.secondary_raw), fmt_opt(r.pair.reading)});
    }
}

inline const std::vector<std::string>& trajectory_header() {
    static const std::vector<std::string> h = {"t",     "source_x", "source_y", "source_z", "est_x", "est_y",
                                               "est_z", "tip_x",    "tip_y",    "tip_z",    "error"};
    return h;
}

} // namespace detail

/// Plot data: one trajectory file per navigation episode, with one row per
/// navigation step. An ensemble without navigation episodes still gets a
/// header-only trajectory.csv.
inline std::vector<std::filesystem::path> emit_plot_data(const RunReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    for (const auto& s : report.seeds) {
        for (const auto& e : s.episodes) {
            if (e.name == "calibration" || e.log.empty()) continue;
            const auto path = dir / ("trajectory_seed" + std::to_string(s.seed) + "_" + e.name + ".csv");
            CsvWriter w(path, detail::trajectory_header());
            for (const auto& r : e.log) {
                if (!std::isfinite(r.estimate[0])) continue;
                const double err = (r.estimate.head<3>() - r.source).norm();
                w.row({fmt_num(r.t), fmt_num(r.source.x()), fmt_num(r.source.y()), fmt_num(r.source.z()),
                       fmt_num(r.estimate[0]), fmt_num(r.estimate[1]), fmt_num(r.estimate[2]), fmt_num(r.tip.x()),
                       fmt_num(r.tip.y()), fmt_num(r.tip.z()), fmt_num(err)});
            }
            written.push_back(path);
        }
    }
    if (written.empty()) {
        const auto path = dir / "trajectory.csv";
        CsvWriter w(path, detail::trajectory_header());
        written.push_back(path);
    }
    return written;
}

inline nlohmann::json report_json(const RunReport& report) {
    using nlohmann::json;
    json seeds = json::array();
    for (const auto& s : report.seeds) {
        json eps = json::object();
        for (const auto& e : s.episodes) {
            json je = {{"ok", e.ok}, {"sim_time", e.sim_time}, {"steps", e.log.size()}};
            if (!e.ok) je["error"] = e.error;
            if (e.navigation) {
                je["final_error"] = detail::num_or_null(e.navigation->final_error);
                je["updates"] = e.navigation->updates;
                je["gated"] = e.navigation->gated;
                je["psd_ok"] = e.navigation->psd_ok;
                je["tau_identified"] = {detail::num_or_null(e.navigation->tau[0]),
                                        detail::num_or_null(e.navigation->tau[1])};
            }
            if (e.calibration) je["budget"] = detail::budget_json(e.calibration->budget);
            eps[e.name] = je;
        }
        seeds.push_back({{"seed", s.seed}, {"ok", s.ok()}, {"wall_ms", s.wall_ms}, {"episodes", eps}});
    }
    json aggregate = json::object();
    for (const char* name : {"cold", "calibrated"}) {
        const auto errs = report.final_errors(name);
        if (!errs.empty()) aggregate[std::string("final_error_") + name] = detail::summary_json(summarize(errs));
    }
    std::vector<double> cal_times;
    for (const auto& s : report.seeds) {
        const Episode* e = s.find("calibration");
        if (e && e->ok) cal_times.push_back(e->calibration->total_time);
    }
    if (!cal_times.empty()) {
        aggregate["calibration_time"] = detail::summary_json(summarize(cal_times));
        aggregate["reference_calibration_time"] = reference_calibration_time(report.config.sensor_kind);
    }
    aggregate["failures"] = report.failures();
    return {{"mode", std::string(to_string(report.mode))},
            {"config", to_json(report.config)},
            {"seeds", seeds},
            {"aggregate", aggregate},
            {"wall_ms", report.wall_ms}};
}

/// Writes report.json, per_seed.csv, calibration_seed<N>.json, run and sensor
/// logs per episode, and the plot data. All files except report.json are
/// byte-identical across runs of the same config.
inline void write_outputs(const RunReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    detail::write_text(dir / "report.json", report_json(report).dump(2) + "\n");
    detail::write_text(dir / "config.resolved.json", to_json(report.config).dump(2) + "\n");

    CsvWriter per_seed(dir / "per_seed.csv", {"seed", "episode", "ok", "final_error", "sim_time", "steps", "u_b",
                                              "error"});
    for (const auto& s : report.seeds) {
        for (const auto& e : s.episodes) {
            std::string u_b;
            if (e.calibration && e.calibration->budget.type_b) u_b = fmt_num(e.calibration->budget.type_b->u_b);
            std::string err = e.error;
            std::replace(err.begin(), err.end(), ',', ';');
            std::replace(err.begin(), err.end(), '\n', ' ');
            per_seed.row({std::to_string(s.seed), e.name, e.ok ? "1" : "0",
                          e.navigation ? fmt_num(e.navigation->final_error) : "", fmt_num(e.sim_time),
                          std::to_string(e.log.size()), u_b, err});
            const std::string tag = "seed" + std::to_string(s.seed) + "_" + e.name;
            if (!e.log.empty()) {
                detail::write_run_csv(dir / ("run_" + tag + ".csv"), e.log);
                detail::write_sensor_csv(dir / ("sensors_" + tag + ".csv"), e.log);
            }
            if (e.calibration) {
                detail::write_text(dir / ("calibration_seed" + std::to_string(s.seed) + ".json"),
                                   detail::calibration_json(*e.calibration, s.seed).dump(2) + "\n");
            }
        }
    }
    emit_plot_data(report, dir);
}

} // namespace oio
