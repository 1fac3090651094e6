// Scenario configuration: the JSON schema, defaults, validation and the
// per-seed construction of rigs and priors.
#pragma once

#include "oio/calibration.hpp"
#include "oio/ekf_fusion.hpp"
#include "oio/navigation.hpp"
#include "oio/rig.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace oio {

enum class ExperimentMode { Calibrate, NavigateCold, NavigateCalibrated, Compare };

inline std::string_view to_string(ExperimentMode mode) {
    switch (mode) {
    case ExperimentMode::Calibrate: return "calibrate";
    case ExperimentMode::NavigateCold: return "navigate_cold";
    case ExperimentMode::NavigateCalibrated: return "navigate_calibrated";
    case ExperimentMode::Compare: return "compare";
    }
    return "?";
}

inline ExperimentMode parse_experiment_mode(std::string_view text) {
    for (auto m : {ExperimentMode::Calibrate, ExperimentMode::NavigateCold, ExperimentMode::NavigateCalibrated,
                   ExperimentMode::Compare}) {
        if (to_string(m) == text) return m;
    }
    throw ConfigError("mode: unknown experiment mode '" + std::string(text) + "'");
}

struct SensorOverrides {
    std::optional<double> tau_lower, tau_upper, noise_std, warmup_time, drift_walk_std, hysteresis_coeff;
};

struct ScenarioConfig {
    PlumeField plume{};
    double source_jitter = 40.0; // mm, per-axis std of the per-seed source offset

    SensorKind sensor_kind = SensorKind::EC;
    SensorOverrides overrides{};
    double duty_period = 0.0;   // 0: tau_upper of the kind
    double sample_period = 0.5; // s; raised to tau_lower when smaller

    ArmConfig arm{};
    JointVector home = JointVector::Zero();

    ProtocolConfig protocol{};
    NavigationConfig navigation{};
    DofMode navigation_mode = DofMode::DOF5;
    double prior_position_std = 60.0; // mm
    double prior_bias_std = 10.0;     // ppm
    double cold_reach_fraction = 0.05;
    EkfTuning tuning{};

    std::vector<std::uint64_t> seeds{0};
    ExperimentMode mode = ExperimentMode::Compare;
    std::string output_dir = "out";

    SensorSpec sensor_spec() const {
        SensorSpec s = catalog(sensor_kind);
        if (overrides.tau_lower) s.tau_lower = *overrides.tau_lower;
        if (overrides.tau_upper) s.tau_upper = *overrides.tau_upper;
        if (overrides.noise_std) s.noise_std = *overrides.noise_std;
        if (overrides.warmup_time) s.warmup_time = *overrides.warmup_time;
        if (overrides.drift_walk_std) s.drift_walk_std = *overrides.drift_walk_std;
        if (overrides.hysteresis_coeff) s.hysteresis_coeff = *overrides.hysteresis_coeff;
        return s;
    }

    double effective_sample_period() const { return std::max(sample_period, sensor_spec().tau_lower); }

    void validate() const {
        plume.validate();
        arm.validate();
        sensor_spec().validate();
        protocol.localize.range_model.path_loss.validate();
        if (seeds.empty()) throw ConfigError("seeds: must not be empty");
        if (!(sample_period > 0.0)) throw ConfigError("sensor.sample_period: must be > 0");
        if (!(source_jitter >= 0.0)) throw ConfigError("plume.source_jitter: must be >= 0");
        if (protocol.schedule.empty()) throw ConfigError("protocol.dof_schedule: must not be empty");
        for (std::size_t i = 1; i < protocol.schedule.size(); ++i) {
            if (active_joint_count(protocol.schedule[i]) <= active_joint_count(protocol.schedule[i - 1])) {
                throw ConfigError("protocol.dof_schedule: must unlock joints in increasing order");
            }
        }
        if (protocol.stage_move_budget <= 0) throw ConfigError("protocol.stage_move_budget: must be > 0");
        if (protocol.localize.move_budget <= 0) throw ConfigError("belief.move_budget: must be > 0");
        if (protocol.patience <= 0) throw ConfigError("protocol.patience: must be > 0");
        if (protocol.localize.dwell_samples < 2) throw ConfigError("belief.dwell_samples: must be >= 2");
        if (!(protocol.settle_time >= 0.0)) throw ConfigError("protocol.settle_time: must be >= 0");
        if (!(protocol.identify_time >= 0.0)) throw ConfigError("protocol.identify_time: must be >= 0");
        if (!(protocol.localize.settle_time >= 0.0)) throw ConfigError("belief.settle_time: must be >= 0");
        if (!(protocol.localize.min_improvement >= 0.0 && protocol.localize.min_improvement < 1.0)) {
            throw ConfigError("belief.min_improvement: must lie in [0, 1)");
        }
        if (navigation.steps < 1) throw ConfigError("navigation.steps: must be >= 1");
        if (!(navigation.orbit_radius > 0.0)) throw ConfigError("navigation.orbit_radius: must be > 0");
        if (!(prior_position_std > 0.0)) throw ConfigError("ekf.prior_position_std: must be > 0");
        if (!(prior_bias_std > 0.0)) throw ConfigError("ekf.prior_bias_std: must be > 0");
    }
};

// =============================================================================
// JSON
// =============================================================================

namespace detail {

using nlohmann::json;

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("", "expected an object");
    }

    ~Reader() = default;
    Reader(const Reader&) = delete;
    Reader& operator=(const Reader&) = delete;

    /// Throws on any key that was never read.
    void finish() const {
        for (const auto& [key, _] : j_.items()) {
            if (!seen_.contains(key)) fail(key, "unknown key");
        }
    }

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    Reader object(const std::string& key) {
        seen_.insert(key);
        static const json empty = json::object();
        return Reader(has(key) ? j_.at(key) : empty, join(key));
    }

    void number(const std::string& key, double& out) {
        seen_.insert(key);
        if (!has(key)) return;
        if (!j_.at(key).is_number()) fail(key, "expected a number");
        out = j_.at(key).get<double>();
    }

    void optional_number(const std::string& key, std::optional<double>& out) {
        seen_.insert(key);
        if (!has(key)) return;
        if (!j_.at(key).is_number()) fail(key, "expected a number");
        out = j_.at(key).get<double>();
    }

    void integer(const std::string& key, int& out) {
        seen_.insert(key);
        if (!has(key)) return;
        if (!j_.at(key).is_number_integer()) fail(key, "expected an integer");
        out = j_.at(key).get<int>();
    }

    void size(const std::string& key, std::size_t& out) {
        int v = static_cast<int>(out);
        integer(key, v);
        if (v < 0) fail(key, "must be >= 0");
        out = static_cast<std::size_t>(v);
    }

    void string(const std::string& key, std::string& out) {
        seen_.insert(key);
        if (!has(key)) return;
        if (!j_.at(key).is_string()) fail(key, "expected a string");
        out = j_.at(key).get<std::string>();
    }

    template <int N>
    void vector(const std::string& key, Eigen::Matrix<double, N, 1>& out) {
        seen_.insert(key);
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_array() || v.size() != N) fail(key, "expected an array of " + std::to_string(N) + " numbers");
        for (int i = 0; i < N; ++i) {
            if (!v[static_cast<std::size_t>(i)].is_number()) fail(key, "expected numbers");
            out[i] = v[static_cast<std::size_t>(i)].get<double>();
        }
    }

    template <std::size_t N>
    void array(const std::string& key, std::array<double, N>& out) {
        Eigen::Matrix<double, static_cast<int>(N), 1> tmp;
        for (std::size_t i = 0; i < N; ++i) tmp[static_cast<int>(i)] = out[i];
        vector<static_cast<int>(N)>(key, tmp);
        for (std::size_t i = 0; i < N; ++i) out[i] = tmp[static_cast<int>(i)];
    }

    const json* raw(const std::string& key) {
        seen_.insert(key);
        return has(key) ? &j_.at(key) : nullptr;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        throw ConfigError(join(key) + ": " + what);
    }

private:
    std::string join(const std::string& key) const {
        if (key.empty()) return path_.empty() ? "<root>" : path_;
        return path_.empty() ? key : path_ + "." + key;
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

} // namespace detail

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
    using detail::Reader;
    ScenarioConfig c;
    Reader root(j, "");
    {
        Reader r = root.object("plume");
        r.vector<3>("source_position", c.plume.source_position);
        r.number("amplitude", c.plume.amplitude);
        r.number("sigma0", c.plume.sigma0);
        r.number("spread_rate", c.plume.spread_rate);
        r.number("decay_lambda", c.plume.decay_lambda);
        r.vector<3>("wind", c.plume.wind);
        r.number("source_jitter", c.source_jitter);
        r.finish();
    }
    {
        Reader r = root.object("sensor");
        std::string kind(to_string(c.sensor_kind));
        r.string("kind", kind);
        try {
            c.sensor_kind = parse_sensor_kind(kind);
        } catch (const ConfigError& e) {
            r.fail("kind", e.what());
        }
        r.number("duty_period", c.duty_period);
        r.number("sample_period", c.sample_period);
        Reader o = r.object("overrides");
        o.optional_number("tau_lower", c.overrides.tau_lower);
        o.optional_number("tau_upper", c.overrides.tau_upper);
        o.optional_number("noise_std", c.overrides.noise_std);
        o.optional_number("warmup_time", c.overrides.warmup_time);
        o.optional_number("drift_walk_std", c.overrides.drift_walk_std);
        o.optional_number("hysteresis_coeff", c.overrides.hysteresis_coeff);
        o.finish();
        r.finish();
    }
    {
        Reader r = root.object("arm");
        r.array<3>("link_lengths", c.arm.link_lengths);
        r.number("tool_extension", c.arm.tool_extension);
        r.number("encoder_drift_rate", c.arm.encoder_drift_rate);
        r.number("step_size", c.arm.step_size);
        r.vector<kJointCount>("home", c.home);
        if (const auto* lim = r.raw("joint_limits")) {
            if (!lim->is_array() || lim->size() != kJointCount) {
                r.fail("joint_limits", "expected 5 [min_deg, max_deg] pairs");
            }
            for (std::size_t i = 0; i < kJointCount; ++i) {
                const auto& p = (*lim)[i];
                if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
                    r.fail("joint_limits", "expected 5 [min_deg, max_deg] pairs");
                }
                c.arm.joint_limits[i] = {p[0].get<double>(), p[1].get<double>()};
            }
        }
        r.finish();
    }
    {
        Reader r = root.object("protocol");
        if (const auto* sched = r.raw("dof_schedule")) {
            if (!sched->is_array()) r.fail("dof_schedule", "expected an array of DoF names");
            c.protocol.schedule.clear();
            for (const auto& m : *sched) {
                if (!m.is_string()) r.fail("dof_schedule", "expected an array of DoF names");
                try {
                    c.protocol.schedule.push_back(parse_dof_mode(m.get<std::string>()));
                } catch (const ConfigError& e) {
                    r.fail("dof_schedule", e.what());
                }
            }
        }
        r.integer("stage_move_budget", c.protocol.stage_move_budget);
        r.integer("patience", c.protocol.patience);
        r.number("proximity_fraction", c.protocol.proximity_fraction);
        r.number("settle_time", c.protocol.settle_time);
        r.number("identify_time", c.protocol.identify_time);
        std::string baseline = c.protocol.baseline_mode == BaselineThreshold::Max ? "max" : "mean";
        r.string("baseline_threshold", baseline);
        if (baseline == "max") {
            c.protocol.baseline_mode = BaselineThreshold::Max;
        } else if (baseline == "mean") {
            c.protocol.baseline_mode = BaselineThreshold::Mean;
        } else {
            r.fail("baseline_threshold", "expected 'max' or 'mean'");
        }
        r.finish();
    }
    {
        auto& lo = c.protocol.localize;
        Reader r = root.object("belief");
        std::string model = lo.range_model.kind == RangeModelKind::GaussianInverse ? "gaussian" : "log_distance";
        r.string("range_model", model);
        if (model == "gaussian") {
            lo.range_model.kind = RangeModelKind::GaussianInverse;
        } else if (model == "log_distance") {
            lo.range_model.kind = RangeModelKind::LogDistance;
        } else {
            r.fail("range_model", "expected 'gaussian' or 'log_distance'");
        }
        Reader pl = r.object("path_loss");
        pl.number("reference_rssi", lo.range_model.path_loss.reference_rssi);
        pl.number("reference_distance", lo.range_model.path_loss.reference_distance);
        pl.number("path_loss_exponent", lo.range_model.path_loss.path_loss_exponent);
        pl.number("concentration_floor", lo.range_model.path_loss.concentration_floor);
        pl.number("reference_ppm_scale", lo.range_model.path_loss.reference_ppm_scale);
        pl.finish();
        r.number("probe_edge", lo.probe_edge);
        r.number("standoff", lo.standoff);
        r.number("settle_time", lo.settle_time);
        r.size("dwell_samples", lo.dwell_samples);
        r.number("target_sigma", lo.target_sigma);
        r.number("min_improvement", lo.min_improvement);
        r.number("residual_threshold", lo.belief.convergence_threshold);
        r.integer("move_budget", lo.move_budget);
        r.finish();
    }
    {
        Reader r = root.object("navigation");
        r.integer("steps", c.navigation.steps);
        r.number("orbit_radius", c.navigation.orbit_radius);
        r.number("elevation_amplitude_deg", c.navigation.elevation_amplitude_deg);
        r.number("orbit_turns", c.navigation.orbit_turns);
        r.number("elevation_cycles", c.navigation.elevation_cycles);
        r.number("settle_time", c.navigation.settle_time);
        r.integer("update_stride", c.navigation.update_stride);
        std::string channel(to_string(c.navigation.channel));
        r.string("channel", channel);
        try {
            c.navigation.channel = parse_navigation_channel(channel);
        } catch (const ConfigError& e) {
            r.fail("channel", e.what());
        }
        std::string mode(to_string(c.navigation_mode));
        r.string("dof_mode", mode);
        try {
            c.navigation_mode = parse_dof_mode(mode);
        } catch (const ConfigError& e) {
            r.fail("dof_mode", e.what());
        }
        r.finish();
    }
    {
        Reader r = root.object("ekf");
        r.number("prior_position_std", c.prior_position_std);
        r.number("prior_bias_std", c.prior_bias_std);
        r.number("cold_reach_fraction", c.cold_reach_fraction);
        r.number("q_scale", c.tuning.q_scale);
        r.number("r_scale", c.tuning.r_scale);
        r.finish();
    }
    if (const auto* seeds = root.raw("seeds")) {
        if (!seeds->is_array()) root.fail("seeds", "expected an array of non-negative integers");
        c.seeds.clear();
        for (const auto& s : *seeds) {
            if (!s.is_number_unsigned()) root.fail("seeds", "expected an array of non-negative integers");
            c.seeds.push_back(s.get<std::uint64_t>());
        }
    }
    std::string mode(to_string(c.mode));
    root.string("mode", mode);
    c.mode = parse_experiment_mode(mode);
    root.string("output_dir", c.output_dir);
    root.finish();
    c.validate();
    return c;
}

/// Fully resolved configuration (defaults included); object keys serialize sorted.
inline nlohmann::json to_json(const ScenarioConfig& c) {
    using nlohmann::json;
    using detail::vec_json;
    const SensorSpec spec = c.sensor_spec();
    // Protocol and belief settles left at 0 are derived from the response times identified
    // at run time, so they are echoed as 0 (automatic).
    json limits = json::array();
    for (const auto& l : c.arm.joint_limits) limits.push_back({l.min_deg, l.max_deg});
    json schedule = json::array();
    for (DofMode m : c.protocol.schedule) schedule.push_back(std::string(to_string(m)));
    const auto& lo = c.protocol.localize;
    json j;
    j["plume"] = {{"source_position", vec_json(c.plume.source_position)},
                  {"amplitude", c.plume.amplitude},
                  {"sigma0", c.plume.sigma0},
                  {"spread_rate", c.plume.spread_rate},
                  {"decay_lambda", c.plume.decay_lambda},
                  {"wind", vec_json(c.plume.wind)},
                  {"source_jitter", c.source_jitter}};
    j["sensor"] = {{"kind", std::string(to_string(c.sensor_kind))},
                   {"duty_period", c.duty_period > 0.0 ? c.duty_period : spec.tau_upper},
                   {"sample_period", c.effective_sample_period()},
                   {"overrides",
                    {{"tau_lower", spec.tau_lower},
                     {"tau_upper", spec.tau_upper},
                     {"noise_std", spec.noise_std},
                     {"warmup_time", spec.warmup_time},
                     {"drift_walk_std", spec.drift_walk_std},
                     {"hysteresis_coeff", spec.hysteresis_coeff}}}};
    j["arm"] = {{"link_lengths", c.arm.link_lengths},
                {"tool_extension", c.arm.tool_extension},
                {"encoder_drift_rate", c.arm.encoder_drift_rate},
                {"step_size", c.arm.step_size},
                {"joint_limits", limits},
                {"home", std::vector<double>(c.home.data(), c.home.data() + kJointCount)}};
    j["protocol"] = {{"dof_schedule", schedule},
                     {"stage_move_budget", c.protocol.stage_move_budget},
                     {"patience", c.protocol.patience},
                     {"proximity_fraction", c.protocol.proximity_fraction},
                     {"settle_time", std::max(0.0, c.protocol.settle_time)},
                     {"identify_time", c.protocol.identify_time > 0.0 ? c.protocol.identify_time : 3.0 * spec.tau_upper},
                     {"baseline_threshold", c.protocol.baseline_mode == BaselineThreshold::Max ? "max" : "mean"}};
    j["belief"] = {{"range_model", lo.range_model.kind == RangeModelKind::GaussianInverse ? "gaussian" : "log_distance"},
                   {"path_loss",
                    {{"reference_rssi", lo.range_model.path_loss.reference_rssi},
                     {"reference_distance", lo.range_model.path_loss.reference_distance},
                     {"path_loss_exponent", lo.range_model.path_loss.path_loss_exponent},
                     {"concentration_floor", lo.range_model.path_loss.concentration_floor},
                     {"reference_ppm_scale", lo.range_model.path_loss.reference_ppm_scale}}},
                   {"probe_edge", lo.probe_edge},
                   {"standoff", lo.standoff},
                   {"settle_time", std::max(0.0, lo.settle_time)},
                   {"dwell_samples", lo.dwell_samples},
                   {"target_sigma", lo.target_sigma},
                   {"min_improvement", lo.min_improvement},
                   {"residual_threshold", lo.belief.convergence_threshold},
                   {"move_budget", lo.move_budget}};
    j["navigation"] = {{"channel", std::string(to_string(c.navigation.channel))},
                       {"steps", c.navigation.steps},
                       {"orbit_radius", c.navigation.orbit_radius},
                       {"elevation_amplitude_deg", c.navigation.elevation_amplitude_deg},
                       {"orbit_turns", c.navigation.orbit_turns},
                       {"elevation_cycles", c.navigation.elevation_cycles},
                       {"settle_time", c.navigation.settle_time > 0.0 ? c.navigation.settle_time : settling_time(spec)},
                       {"update_stride", c.navigation.update_stride > 0
                                             ? c.navigation.update_stride
                                             : static_cast<int>(window_for_dof(c.navigation_mode))},
                       {"dof_mode", std::string(to_string(c.navigation_mode))}};
    j["ekf"] = {{"prior_position_std", c.prior_position_std},
                {"prior_bias_std", c.prior_bias_std},
                {"cold_reach_fraction", c.cold_reach_fraction},
                {"q_scale", c.tuning.q_scale},
                {"r_scale", c.tuning.r_scale}};
    j["seeds"] = c.seeds;
    j["mode"] = std::string(to_string(c.mode));
    j["output_dir"] = c.output_dir;
    return j;
}

// =============================================================================
// Per-seed construction
// =============================================================================

/// Plume realization for a seed: the configured source plus a seeded jitter.
inline PlumeField plume_for_seed(const ScenarioConfig& c, std::uint64_t seed) {
    PlumeField p = c.plume;
    Rng rng(derive_seed(seed, stream::kSourceJitter));
    for (int i = 0; i < 3; ++i) p.source_position[i] += c.source_jitter * standard_normal(rng);
    p.t = 0.0;
    return p;
}

/// Warmed-up rig at the home pose. Identical (config, seed) pairs give identical rigs.
inline Rig make_rig(const ScenarioConfig& c, std::uint64_t seed) {
    ArmState arm;
    arm.joint_angles = clamp_to_limits(c.home, c.arm);
    Rig rig(plume_for_seed(c, seed), c.arm, arm, make_sensor_pair(c.sensor_spec(), seed, c.duty_period),
            c.effective_sample_period(), derive_seed(seed, stream::kArmDrift));
    rig.warm_up();
    return rig;
}

/// Operator's rough guess of the source: truth plus a seeded offset.
inline SourcePrior prior_for_seed(const ScenarioConfig& c, std::uint64_t seed) {
    SourcePrior prior;
    const PlumeField p = plume_for_seed(c, seed);
    Rng rng(derive_seed(seed, stream::kPrior));
    prior.position = p.source_position;
    for (int i = 0; i < 3; ++i) prior.position[i] += c.prior_position_std * standard_normal(rng);
    prior.position_std = c.prior_position_std;
    prior.bias_std = c.prior_bias_std;
    return prior;
}

} // namespace oio
