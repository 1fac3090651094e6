// Sensor response identification and replay.
//
// A moving sensor with a first-order lag reports a blend of the concentrations it
// passed through. The replay reproduces that blend for a hypothesised source by
// running the same lag recursion over the recorded tip path, so the filter can
// compare like with like. Response times are identified from the step response
// seen when the plume first reaches the sensor.
#pragma once

#include "oio/plume_env.hpp"
#include "oio/sensor_models.hpp"

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace oio {

/// Per-sensor values scaled to a unit input: recursion with the input's own time profile.
/// `input[n]` is the relative input at step n; the response starts at `r0`.
inline std::vector<double> simulate_response(std::span<const double> input, double tau, double hysteresis,
                                             double dt, double r0 = 0.0) {
    std::vector<double> out;
    out.reserve(input.size());
    double r = r0;
    for (double u : input) {
        const double t = u < r ? tau / (1.0 - hysteresis) : tau;
        r += std::min(1.0, dt / t) * (u - r);
        out.push_back(r);
    }
    return out;
}

struct StepFit {
    double tau = 0.0;
    double scale = 0.0; // input level the response is heading to (ppm at unit relative input)
    double rss = 0.0;
};

/// Fits tau in [tau_lower, tau_upper] and an input scale to raw readings of one sensor
/// exposed to `scale * input[n]` from a zero start. `raw[n]` may be NaN (no reading).
inline StepFit fit_step_response(std::span<const double> input, std::span<const double> raw, const SensorSpec& spec,
                                 double dt, int grid = 200) {
    if (input.size() != raw.size()) {
        throw std::invalid_argument("fit_step_response: input and raw differ in length");
    }
    StepFit best;
    best.rss = std::numeric_limits<double>::infinity();
    const int n = spec.tau_lower == spec.tau_upper ? 1 : grid;
    for (int i = 0; i < n; ++i) {
        // log-spaced grid
        const double f = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
        const double tau = spec.tau_lower * std::pow(spec.tau_upper / spec.tau_lower, f);
        const auto shape = simulate_response(input, tau, spec.hysteresis_coeff, dt);
        double sy = 0.0, ss = 0.0;
        for (std::size_t k = 0; k < raw.size(); ++k) {
            if (std::isnan(raw[k])) continue;
            sy += shape[k] * raw[k];
            ss += shape[k] * shape[k];
        }
        if (!(ss > 0.0)) continue;
        const double scale = sy / ss;
        double rss = 0.0;
        for (std::size_t k = 0; k < raw.size(); ++k) {
            if (std::isnan(raw[k])) continue;
            const double e = raw[k] - scale * shape[k];
            rss += e * e;
        }
        if (rss < best.rss) {
            best = {tau, scale, rss};
        }
    }
    if (!std::isfinite(best.rss)) {
        throw InsufficientSamples("fit_step_response: no readings to fit");
    }
    return best;
}

/// Time for `time_constants` falling time constants of the slower identified sensor.
inline double response_settling_time(std::array<double, 2> tau, double hysteresis, double time_constants = 5.0) {
    return time_constants * std::max(tau[0], tau[1]) / (1.0 - hysteresis);
}

/// One logged step as the replay sees it.
struct ReplayStep {
    Vec3 tip = Vec3::Zero();  // where the filter believes the sensor was (odometry)
    PlumeField field{};       // plume parameters at the sampling time
    std::array<bool, 2> fresh{false, false}; // sensor produced a reading this step
};

struct ReplayPrediction {
    double value = 0.0;             // predicted mean reading, without bias
    Vec3 gradient = Vec3::Zero();   // d value / d source
};

/// Replays the pair's response to a hypothesised source along the logged path.
class ResponseReplay {
public:
    ResponseReplay(std::array<double, 2> tau, double hysteresis, double dt) : tau_(tau), hysteresis_(hysteresis), dt_(dt) {
        if (!(tau[0] > 0.0) || !(tau[1] > 0.0) || !(dt > 0.0)) {
            throw std::invalid_argument("ResponseReplay: tau and dt must be > 0");
        }
    }

    void push(const ReplayStep& step) { steps_.push_back(step); }
    std::size_t size() const { return steps_.size(); }
    const std::array<double, 2>& tau() const { return tau_; }

    /// Predicted mean of the fresh readings taken in the last `steps_back` steps, without
    /// bias. The sensors start from clean air at the first logged step.
    ReplayPrediction predict_fresh_mean(const Vec3& source, std::size_t steps_back) const {
        std::array<double, 2> r{0.0, 0.0};
        std::array<Vec3, 2> g{Vec3::Zero(), Vec3::Zero()};
        ReplayPrediction out;
        int count = 0;
        const std::size_t from = steps_.size() - std::min(steps_back, steps_.size());
        for (std::size_t n = 0; n < steps_.size(); ++n) {
            const ReplayStep& st = steps_[n];
            const Vec3 offset = st.tip - source;
            const double s = st.field.sigma();
            const double c = concentration_at_offset(st.field, offset);
            const Vec3 dc = (c / (s * s)) * offset;
            for (int i = 0; i < 2; ++i) {
                const double tau = c < r[i] ? tau_[i] / (1.0 - hysteresis_) : tau_[i];
                const double alpha = std::min(1.0, dt_ / tau);
                r[i] += alpha * (c - r[i]);
                g[i] = (1.0 - alpha) * g[i] + alpha * dc;
                if (n >= from && st.fresh[i]) {
                    out.value += r[i];
                    out.gradient += g[i];
                    ++count;
                }
            }
        }
        if (count == 0) {
            throw InsufficientSamples("ResponseReplay: no fresh readings to predict");
        }
        out.value /= count;
        out.gradient /= count;
        return out;
    }

private:
    std::array<double, 2> tau_;
    double hysteresis_;
    double dt_;
    std::vector<ReplayStep> steps_;
};

/// Follows the pair's modelled state through a sequence of stationary dwells. Each
/// dwell is explained by one input level at its pose; the sensors enter the dwell in
/// the state the previous one left them in, so short settles are corrected rather
/// than waited out.
class DwellTracker {
public:
    DwellTracker(std::array<double, 2> tau, double hysteresis, double dt) : tau_(tau), hysteresis_(hysteresis), dt_(dt) {
        if (!(tau[0] > 0.0) || !(tau[1] > 0.0) || !(dt > 0.0)) {
            throw std::invalid_argument("DwellTracker: tau and dt must be > 0");
        }
    }

    struct Solution {
        double level = 0.0; // concentration at the pose at the last step (ppm)
        double slope = 1.0; // d predicted mean / d level
    };

    /// `steps` cover arrival at the pose to the end of the dwell; `observed` is the mean
    /// of the last `window` fresh sensor readings among them. Before the first dwell the pair is taken
    /// to have settled at this pose.
    Solution solve(std::span<const ReplayStep> steps, std::size_t window, double observed) {
        if (steps.empty()) {
            throw InsufficientSamples("DwellTracker: no steps");
        }
        // The exposure follows the plume's decay and spread at a nominal offset of one spread.
        std::vector<double> shape;
        const Vec3 nominal(steps.back().field.sigma0, 0.0, 0.0);
        const double last = concentration_at_offset(steps.back().field, nominal);
        for (const ReplayStep& st : steps) {
            shape.push_back(last > 0.0 ? concentration_at_offset(st.field, nominal) / last : 1.0);
        }
        auto mean_at = [&](double level, State* end) { return run(shape, steps, window, level, end); };

        Solution out;
        double lo = 0.0, hi = std::max(1.0, 2.0 * observed);
        while (mean_at(hi, nullptr) < observed && hi < 1e12) hi *= 2.0;
        if (mean_at(lo, nullptr) >= observed) {
            hi = lo;
        }
        for (int i = 0; i < 100 && hi - lo > 1e-9 * std::max(1.0, hi); ++i) {
            const double mid = 0.5 * (lo + hi);
            (mean_at(mid, nullptr) < observed ? lo : hi) = mid;
        }
        out.level = 0.5 * (lo + hi);
        const double h = 1e-3 * std::max(1.0, out.level);
        out.slope = (mean_at(out.level + h, nullptr) - mean_at(std::max(0.0, out.level - h), nullptr)) /
                    (out.level + h - std::max(0.0, out.level - h));
        State end;
        mean_at(out.level, &end);
        state_ = end;
        return out;
    }

private:
    struct State {
        std::array<double, 2> r{0.0, 0.0};
    };

    double run(const std::vector<double>& shape, std::span<const ReplayStep> steps, std::size_t window, double level,
               State* end) const {
        State st = state_.value_or(State{{level * shape[0], level * shape[0]}});
        std::vector<double> fresh;
        for (std::size_t n = 0; n < steps.size(); ++n) {
            const double in = level * shape[n];
            for (int i = 0; i < 2; ++i) {
                const double tau = in < st.r[i] ? tau_[i] / (1.0 - hysteresis_) : tau_[i];
                st.r[i] += std::min(1.0, dt_ / tau) * (in - st.r[i]);
                if (steps[n].fresh[i]) fresh.push_back(st.r[i]);
            }
        }
        if (end) *end = st;
        const std::size_t k = std::min(window, fresh.size());
        if (k == 0) {
            throw InsufficientSamples("DwellTracker: no readings in the dwell");
        }
        double sum = 0.0;
        for (std::size_t i = fresh.size() - k; i < fresh.size(); ++i) sum += fresh[i];
        return sum / static_cast<double>(k);
    }

    std::array<double, 2> tau_;
    double hysteresis_;
    double dt_;
    std::optional<State> state_;
};

} // namespace oio
