// Source-seeking run: the tip orbits the current source estimate while the bout
// filter smooths the paired reading and the EKF fuses it with encoder odometry.
#pragma once

#include "oio/belief_map.hpp"
#include "oio/bout_filter.hpp"
#include "oio/ekf_fusion.hpp"
#include "oio/rig.hpp"
#include "oio/sensor_response.hpp"

#include <deque>
#include <optional>
#include <vector>

namespace oio {

/// How the smoothed reading enters the filter.
///  Response: the sensors' own readings, block-averaged, against their replayed
///            lagged response to the estimate.
///  Concentration: compared with the plume model at the tips' centroid.
///  Range: inverted to a range from the tips' centroid.
enum class NavigationChannel { Response, Concentration, Range };

inline std::string_view to_string(NavigationChannel c) {
    switch (c) {
    case NavigationChannel::Response: return "response";
    case NavigationChannel::Concentration: return "concentration";
    case NavigationChannel::Range: return "range";
    }
    return "?";
}

inline NavigationChannel parse_navigation_channel(std::string_view text) {
    for (auto c : {NavigationChannel::Response, NavigationChannel::Concentration, NavigationChannel::Range}) {
        if (to_string(c) == text) return c;
    }
    throw ConfigError("unknown navigation channel '" + std::string(text) + "'");
}

struct NavigationConfig {
    NavigationChannel channel = NavigationChannel::Response;
    int steps = 240;
    double orbit_radius = 250.0;          // mm
    double elevation_amplitude_deg = 45.0;
    double orbit_turns = 1.0;
    double elevation_cycles = 2.0;        // one cycle leaves the orbit close to a plane
    double settle_time = 0.0; // s at the first orbit point before filtering; <= 0: sensor settling time
    int update_stride = 0;    // readings between filter updates; <= 0: the smoothing window

    void validate() const {
        if (steps < 1) throw ConfigError("navigation.steps must be >= 1");
        if (!(orbit_radius > 0.0)) throw ConfigError("navigation.orbit_radius must be > 0");
        if (!(settle_time >= 0.0)) throw ConfigError("navigation.settle_time must be >= 0");
    }
};

struct NavigationResult {
    EkfState final_state;
    double final_error = kNaN; // mm, estimate vs plume centre at the end
    int updates = 0;
    int gated = 0;
    int singular = 0;
    double worst_psd_margin = 0.0; // min over steps of min_eig / trace
    bool psd_ok = true;
    std::array<double, 2> tau{kNaN, kNaN}; // identified response times (response channel)
    std::vector<double> innovations;
};

inline constexpr double kMinRangeVariance = 1e-6; // mm^2

/// Orbit target for step i around `center`.
inline Vec3 orbit_point(const Vec3& center, int i, const NavigationConfig& config) {
    const double frac = static_cast<double>(i) / static_cast<double>(std::max(1, config.steps));
    const double az = 2.0 * kPi * config.orbit_turns * frac;
    const double el = deg_to_rad(config.elevation_amplitude_deg) * std::sin(2.0 * kPi * config.elevation_cycles * frac);
    return center + config.orbit_radius * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
}

namespace detail {

inline ReplayStep replay_step(const StepRecord& rec, const PlumeField& field) {
    return {rec.odom_tip, field, {rec.pair.primary_raw.has_value(), rec.pair.secondary_raw.has_value()}};
}

} // namespace detail

/// Runs on a rig fresh from warm-up: sensors start from clean air, which the response
/// channel relies on to identify response times from the first exposure.
/// `window` is the bout smoothing length whose output feeds the filter.
inline NavigationResult navigate(Rig& rig, EkfState ekf, const NavigationConfig& config, std::size_t window,
                                 BaselineThreshold baseline_mode = BaselineThreshold::Max,
                                 const std::string& stage = "navigate") {
    config.validate();
    const SensorSpec& spec = rig.pair().primary().spec();
    const double settle = config.settle_time > 0.0 ? config.settle_time : settling_time(spec);
    const std::size_t stride = config.update_stride > 0 ? static_cast<std::size_t>(config.update_stride) : window;

    std::vector<ReplayStep> history;
    std::vector<double> raw_a, raw_b;
    auto keep = [&](const StepRecord& rec) {
        history.push_back(detail::replay_step(rec, rig.plume()));
        raw_a.push_back(rec.pair.primary_raw.value_or(kNaN));
        raw_b.push_back(rec.pair.secondary_raw.value_or(kNaN));
    };

    keep(rig.move_to_point(orbit_point(ekf.source(), 0, config), stage));
    for (double waited = 0.0; waited + 1e-9 < settle; waited += rig.sample_period()) {
        keep(rig.hold(stage));
    }
    std::array<double, kBaselineSize> baseline{};
    for (std::size_t i = 0; i < kBaselineSize;) {
        const StepRecord& rec = rig.hold(stage);
        keep(rec);
        if (rec.pair.reading) {
            baseline[i++] = *rec.pair.reading;
        }
    }
    BoutFilter bout = BoutFilter::capture_baseline(baseline, window, baseline_mode);

    NavigationResult out;
    std::optional<ResponseReplay> replay;
    if (config.channel == NavigationChannel::Response) {
        // Shape of the exposure at the prior estimate; the fit absorbs the unknown scale.
        std::vector<double> input;
        input.reserve(history.size());
        for (const ReplayStep& h : history) {
            input.push_back(concentration_at_offset(h.field, h.tip - ekf.source()));
        }
        const double dt = rig.sample_period();
        out.tau = {fit_step_response(input, raw_a, spec, dt).tau, fit_step_response(input, raw_b, spec, dt).tau};
        replay.emplace(out.tau, spec.hysteresis_coeff, dt);
        for (const ReplayStep& h : history) replay->push(h);
    }

    // A smoothed value averages the last `window` readings, so the instantaneous
    // channels attribute it to the centroid of the tips those readings came from.
    std::deque<Vec3> tips;
    std::size_t since_update = 0;
    // Response channel: block mean of the sensors' own fresh readings since the last update.
    double block_sum = 0.0;
    std::size_t block_count = 0, block_steps = 0;

    auto record = [&](StepRecord& rec, const UpdateOutcome& u) {
        ekf = u.state;
        rec.innovation = u.innovation;
        rec.gated = u.gated ? 1 : 0;
        ++out.updates;
        out.gated += u.gated ? 1 : 0;
        out.singular += u.singular ? 1 : 0;
        if (!u.gated && !u.singular) {
            out.innovations.push_back(u.innovation);
        }
    };

    ekf.t = rig.time();
    double last_t = rig.time();
    for (int i = 0; i < config.steps; ++i) {
        StepRecord& rec = rig.move_to_point(orbit_point(ekf.source(), i, config), stage);
        ekf = predict(ekf, rig.time() - last_t);
        last_t = rig.time();
        if (rec.pair.reading) {
            const BoutDecision d = bout.update(*rec.pair.reading);
            tips.push_back(rec.odom_tip);
            if (tips.size() > window) tips.pop_front();
            rec.smoothed = d.smoothed;
            rec.delta = d.delta;
            rec.is_bout = d.is_bout ? 1 : 0;
            // Overlapping windows share noise; R describes one window, so update once per window.
            if (config.channel != NavigationChannel::Response && ++since_update >= stride) {
                since_update = 0;
                Vec3 centroid = Vec3::Zero();
                for (const Vec3& p : tips) centroid += p;
                centroid /= static_cast<double>(tips.size());
                if (config.channel == NavigationChannel::Concentration) {
                    record(rec, update_concentration(ekf, d.smoothed, centroid, rig.plume()));
                } else {
                    // The ppm variance R maps to range through the inverse's slope.
                    const RangeEstimate re = RangeModel{}.estimate(d.smoothed - ekf.bias(), rig.plume());
                    const double var = ekf.R * re.d_range_d_ppm * re.d_range_d_ppm;
                    record(rec, update_range(ekf, re.range, centroid, std::max(var, kMinRangeVariance)));
                }
            }
        }
        if (replay) {
            replay->push(detail::replay_step(rec, rig.plume()));
            ++block_steps;
            for (const auto& raw : {rec.pair.primary_raw, rec.pair.secondary_raw}) {
                if (raw) {
                    block_sum += *raw;
                    ++block_count;
                }
            }
            if (block_count >= stride) {
                const std::size_t back = block_steps;
                auto model = [&](const Vec4& x) {
                    const ReplayPrediction pr = replay->predict_fresh_mean(x.head<3>(), back);
                    Eigen::RowVector4d H;
                    H << pr.gradient.transpose(), 1.0;
                    return std::make_pair(pr.value + x[3], H);
                };
                record(rec, update_model(ekf, block_sum / static_cast<double>(block_count), model, ekf.R));
                block_sum = 0.0;
                block_count = block_steps = 0;
            }
        }
        rec.estimate = ekf.x;
        rec.trace_p = ekf.P.trace();
        rec.min_eig_p = min_eigenvalue(ekf.P);
        const double margin = rec.min_eig_p / std::abs(rec.trace_p);
        out.worst_psd_margin = i == 0 ? margin : std::min(out.worst_psd_margin, margin);
        out.psd_ok = out.psd_ok && is_psd(ekf.P);
    }
    out.final_state = ekf;
    out.final_error = (ekf.source() - rig.plume().center()).norm();
    return out;
}

} // namespace oio
