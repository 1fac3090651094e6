// Two-stage calibration: per-DoF Type A uncertainty from casting with a growing
// set of unlocked joints, then whole-arm Type B uncertainty from belief-map
// localization.
#pragma once

#include "oio/arm_model.hpp"
#include "oio/belief_map.hpp"
#include "oio/bout_filter.hpp"
#include "oio/rig.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace oio {

struct TypeA {
    double s = 0.0;   // sample standard deviation over the window (ppm)
    std::size_t k = 0;
    double u_a = 0.0; // s / sqrt(k)
};

struct TypeB {
    double v = 0.0;   // |vertex - truth| (mm)
    int m = 0;        // moves used
    double u_b = 0.0; // 2 v / sqrt(m)
};

struct UncertaintyBudget {
    std::map<DofMode, TypeA> type_a;
    std::optional<TypeB> type_b;

    bool complete_for(DofMode mode) const { return type_a.contains(mode) && type_b.has_value(); }
};

/// Sample standard deviation (n - 1) of the final k readings; u_a = s / sqrt(k).
inline TypeA calibrate_type_a(std::span<const double> readings, std::size_t k) {
    if (k < 2 || readings.size() < k) {
        throw InsufficientSamples("Type A needs at least k = " + std::to_string(k) + " readings, got " +
                                  std::to_string(readings.size()));
    }
    const auto window = readings.last(k);
    double mean = 0.0;
    for (double y : window) mean += y;
    mean /= static_cast<double>(k);
    double ss = 0.0;
    for (double y : window) ss += (y - mean) * (y - mean);
    TypeA out;
    out.k = k;
    out.s = std::sqrt(ss / static_cast<double>(k - 1));
    out.u_a = out.s / std::sqrt(static_cast<double>(k));
    return out;
}

inline TypeA calibrate_type_a(std::span<const double> readings, DofMode mode) {
    return calibrate_type_a(readings, window_for_dof(mode));
}

inline TypeB calibrate_type_b(const Vec3& vertex, int moves, const Vec3& truth) {
    if (moves <= 0) {
        throw std::invalid_argument("Type B needs a positive move count");
    }
    TypeB out;
    out.v = (vertex - truth).norm();
    out.m = moves;
    out.u_b = 2.0 * out.v / std::sqrt(static_cast<double>(moves));
    return out;
}

inline TypeB calibrate_type_b(const BeliefResult& localization, const Vec3& truth) {
    if (!localization.vertex) {
        throw LocalizationDidNotConverge("belief-map localization produced no vertex");
    }
    return calibrate_type_b(*localization.vertex, localization.moves, truth);
}

// =============================================================================
// Casting policy
// =============================================================================

struct CastingConfig {
    double dead_band = 0.0; // |delta| below this counts as flat (ppm)
    double proximity = 0.0; // smoothed reading above this counts as arrived (ppm)
};

/// Greedy casting on the 3-armed (per joint) bandit: keep going while the bout
/// detector fires, reverse when it does not, stay once flat and close.
inline Action bandit_policy(const BoutDecision& decision, const Action& last, DofMode mode,
                            const CastingConfig& config) {
    if (!last.is_stay() && !is_active(mode, last.joint)) {
        throw ActionNotInDofMode("last action uses a joint locked in " + std::string(to_string(mode)));
    }
    if (std::abs(decision.delta) < config.dead_band && decision.smoothed > config.proximity) {
        return Action::stay();
    }
    if (last.is_stay()) {
        return Action::move_left();
    }
    return decision.is_bout ? last : last.reversed();
}

// =============================================================================
// Protocol
// =============================================================================

struct ProtocolConfig {
    std::vector<DofMode> schedule{kDofSchedule.begin(), kDofSchedule.end()};
    int stage_move_budget = 200;
    int patience = 8;              // moves without a new best before a joint's sweep ends
    double proximity_fraction = 0.5; // of plume amplitude
    double settle_time = 0.0;      // s at the best pose before the Type A window; <= 0: one falling time constant
    double identify_time = 0.0;    // s held at the start pose to fit response times; <= 0: 3 tau_upper
    BaselineThreshold baseline_mode = BaselineThreshold::Max;
    LocalizeOptions localize{};
};

struct StageLog {
    DofMode mode = DofMode::DOF1;
    TypeA type_a{};
    int moves = 0;
    bool arrived = false;
    double t_start = 0.0;
    double t_end = 0.0;
    JointVector best_joints = JointVector::Zero();
    double best_smoothed = 0.0;
    std::vector<double> window; // readings behind s
};

struct CalibrationReport {
    SensorKind sensor = SensorKind::EC;
    UncertaintyBudget budget;
    std::array<double, kBaselineSize> baseline{};
    std::array<double, 2> response_tau{kNaN, kNaN}; // identified at the first exposure
    std::vector<StageLog> stages;
    std::optional<Vec3> vertex;
    Vec3 truth = Vec3::Zero();
    int belief_measurements = 0;
    int belief_rounds = 0;
    double belief_residual = kNaN;
    double t_belief_start = 0.0;
    double total_time = 0.0; // simulated seconds from plume release (warm-up excluded)
};

namespace detail {

inline std::string stage_name(DofMode mode) { return "cast_" + std::string(to_string(mode)); }

/// One casting stage: sweeps every unlocked joint in chain order from the current pose.
inline StageLog run_casting_stage(Rig& rig, DofMode mode, const std::array<double, kBaselineSize>& baseline,
                                  const ProtocolConfig& config, const CastingConfig& casting, double settle) {
    StageLog log;
    log.mode = mode;
    log.t_start = rig.time();
    const std::size_t k = window_for_dof(mode);
    BoutFilter bout = BoutFilter::capture_baseline(baseline, k, config.baseline_mode);
    const std::string name = stage_name(mode);

    log.best_joints = rig.arm().joint_angles;
    log.best_smoothed = -std::numeric_limits<double>::infinity();

    for (int j = 0; j < active_joint_count(mode) && !log.arrived; ++j) {
        Action action{static_cast<Joint>(j), +1};
        int since_best = 0;
        while (true) {
            if (log.moves >= config.stage_move_budget) {
                throw BudgetExhausted(name + " exhausted its budget of " + std::to_string(config.stage_move_budget) +
                                      " moves");
            }
            StepRecord& rec = rig.act(action, mode, name);
            ++log.moves;
            if (!rec.pair.reading) {
                continue;
            }
            const BoutDecision d = bout.update(*rec.pair.reading);
            rec.smoothed = d.smoothed;
            rec.delta = d.delta;
            rec.is_bout = d.is_bout ? 1 : 0;
            if (d.smoothed > log.best_smoothed) {
                log.best_smoothed = d.smoothed;
                log.best_joints = rig.arm().joint_angles;
                since_best = 0;
            } else {
                ++since_best;
            }
            const Action next = bandit_policy(d, action, mode, casting);
            if (next.is_stay()) {
                log.arrived = true;
                log.best_joints = rig.arm().joint_angles;
                break;
            }
            if (since_best >= config.patience) {
                break;
            }
            action = next;
        }
    }

    rig.move_to_joints(log.best_joints, name);
    const DwellResult dwell = rig.dwell(settle, k, name);
    log.window = dwell.readings;
    log.type_a = calibrate_type_a(log.window, k);
    log.t_end = rig.time();
    return log;
}

} // namespace detail

/// Runs baseline capture, the staged casting sweeps and belief-map localization on a
/// warmed-up rig. The rig is left at the last probe pose.
inline CalibrationReport run_protocol(Rig& rig, const ProtocolConfig& config) {
    if (config.schedule.empty()) {
        throw ConfigError("protocol.schedule must not be empty");
    }
    for (std::size_t i = 1; i < config.schedule.size(); ++i) {
        if (active_joint_count(config.schedule[i]) <= active_joint_count(config.schedule[i - 1])) {
            throw ConfigError("protocol.schedule must unlock joints in increasing order");
        }
    }
    CalibrationReport report;
    report.sensor = rig.pair().primary().spec().kind;

    // The sensors leave warm-up in clean air, so the first hold is a step response.
    // The tip is still; the exposure's shape follows the plume's decay and spread,
    // evaluated at a nominal offset of one spread.
    const SensorSpec& spec = rig.pair().primary().spec();
    const double identify = config.identify_time > 0.0 ? config.identify_time : 3.0 * spec.tau_upper;
    std::vector<double> input, raw_a, raw_b;
    std::size_t filled = 0;
    const double t0 = rig.time();
    while (filled < kBaselineSize || rig.time() - t0 + 1e-9 < identify) {
        const StepRecord& rec = rig.hold("baseline");
        if (rec.pair.reading && filled < kBaselineSize) {
            report.baseline[filled++] = *rec.pair.reading;
        }
        PlumeField field = rig.plume();
        input.push_back(concentration_at_offset(field, Vec3(field.sigma0, 0.0, 0.0)));
        raw_a.push_back(rec.pair.primary_raw.value_or(kNaN));
        raw_b.push_back(rec.pair.secondary_raw.value_or(kNaN));
    }
    const double dt = rig.sample_period();
    report.response_tau = {fit_step_response(input, raw_a, spec, dt).tau, fit_step_response(input, raw_b, spec, dt).tau};
    const double settle = config.settle_time > 0.0
                              ? config.settle_time
                              : response_settling_time(report.response_tau, spec.hysteresis_coeff, 1.0);

    for (DofMode mode : config.schedule) {
        CastingConfig casting;
        casting.dead_band = spec.noise_std / std::sqrt(static_cast<double>(window_for_dof(mode)));
        casting.proximity = config.proximity_fraction * rig.plume().amplitude;
        StageLog stage = detail::run_casting_stage(rig, mode, report.baseline, config, casting, settle);
        report.budget.type_a[mode] = stage.type_a;
        report.stages.push_back(std::move(stage));
    }

    report.t_belief_start = rig.time();
    LocalizeOptions localize_options = config.localize;
    localize_options.response_tau = report.response_tau;
    BeliefResult belief = localize(rig, localize_options);
    report.truth = belief.truth_at_end;
    report.vertex = belief.vertex;
    report.belief_measurements = belief.measurements;
    report.belief_rounds = belief.rounds;
    report.belief_residual = belief.map.residual;
    report.budget.type_b = calibrate_type_b(belief, belief.truth_at_end);
    report.total_time = rig.time();
    return report;
}

} // namespace oio
