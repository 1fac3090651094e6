// Gas-sensor families: first-order response lag, additive noise, random-walk
// drift, rise/fall hysteresis and a warm-up gate. A SensorPair alternates two
// sensors of one kind and reports the mean of their latest readings.
#pragma once

#include "oio/common.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace oio {

enum class SensorKind { NDIR, PA, EC, MOX_MQ, MOX_MICS };

inline constexpr std::array<SensorKind, 5> kAllSensorKinds{SensorKind::NDIR, SensorKind::PA, SensorKind::EC,
                                                           SensorKind::MOX_MQ, SensorKind::MOX_MICS};

inline std::string_view to_string(SensorKind kind) {
    switch (kind) {
    case SensorKind::NDIR: return "NDIR";
    case SensorKind::PA: return "PA";
    case SensorKind::EC: return "EC";
    case SensorKind::MOX_MQ: return "MOX_MQ";
    case SensorKind::MOX_MICS: return "MOX_MICS";
    }
    return "?";
}

inline SensorKind parse_sensor_kind(std::string_view text) {
    for (SensorKind k : kAllSensorKinds) {
        if (to_string(k) == text) {
            return k;
        }
    }
    throw ConfigError("unknown sensor kind '" + std::string(text) + "'");
}

struct SensorSpec {
    SensorKind kind = SensorKind::EC;
    double tau_lower = 0.5;       // s
    double tau_upper = 6.0;       // s
    double noise_std = 20.0;      // ppm, 1-sigma
    double warmup_time = 30.0;    // s
    double drift_walk_std = 0.2;  // ppm / sqrt(s)
    double hysteresis_coeff = 0.3;

    // A zero noise_std is accepted so that noiseless scenarios can be configured.
    void validate() const {
        if (!(tau_lower > 0.0) || !(tau_lower <= tau_upper)) {
            throw ConfigError("sensor: require 0 < tau_lower <= tau_upper");
        }
        if (!(noise_std >= 0.0)) throw ConfigError("sensor.noise_std must be >= 0");
        if (!(warmup_time >= 0.0)) throw ConfigError("sensor.warmup_time must be >= 0");
        if (!(drift_walk_std >= 0.0)) throw ConfigError("sensor.drift_walk_std must be >= 0");
        if (!(hysteresis_coeff >= 0.0 && hysteresis_coeff < 1.0)) {
            throw ConfigError("sensor.hysteresis_coeff must lie in [0, 1)");
        }
    }
};

/// Built-in catalog. tau bounds and the 1-sigma error come from the published
/// calibration table; warm-up, drift and hysteresis are model defaults.
inline SensorSpec catalog(SensorKind kind) {
    switch (kind) {
    case SensorKind::NDIR: return {kind, 0.1, 1.0, 30.0, 10.0, 0.05, 0.0};
    case SensorKind::PA: return {kind, 0.2, 1.0, 50.0, 10.0, 0.05, 0.0};
    case SensorKind::EC: return {kind, 0.5, 6.0, 20.0, 30.0, 0.2, 0.3};
    case SensorKind::MOX_MQ: return {kind, 0.5, 3.0, 100.0, 60.0, 0.5, 0.3};
    case SensorKind::MOX_MICS: return {kind, 0.1, 3.0, 100.0, 60.0, 0.5, 0.3};
    }
    throw ConfigError("unknown sensor kind");
}

/// Time for `time_constants` e-foldings of the slowest (falling, hysteresis-stretched) response.
inline double settling_time(const SensorSpec& spec, double time_constants = 5.0) {
    return time_constants * spec.tau_upper / (1.0 - spec.hysteresis_coeff);
}

/// Published total calibration time per kind (s); a reference point, not a model input.
inline double reference_calibration_time(SensorKind kind) {
    switch (kind) {
    case SensorKind::NDIR: return 51.0;
    case SensorKind::PA: return 55.0;
    case SensorKind::EC: return 87.0;
    case SensorKind::MOX_MQ: return 89.0;
    case SensorKind::MOX_MICS: return 71.0;
    }
    return 0.0;
}

// =============================================================================
// Single sensor
// =============================================================================

class SensorState {
public:
    SensorState() = default;

    /// tau_eff is drawn uniformly from [tau_lower, tau_upper] using the seeded stream.
    SensorState(SensorSpec spec, std::uint64_t seed) : spec_(spec), rng_(seed) {
        spec_.validate();
        std::uniform_real_distribution<double> tau_draw(spec_.tau_lower, spec_.tau_upper);
        tau_eff_ = spec_.tau_lower == spec_.tau_upper ? spec_.tau_lower : tau_draw(rng_);
    }

    SensorState(SensorSpec spec, double tau_eff, std::uint64_t seed) : spec_(spec), rng_(seed), tau_eff_(tau_eff) {
        spec_.validate();
        if (!(tau_eff > 0.0)) {
            throw ConfigError("sensor: tau_eff must be > 0");
        }
    }

    /// Advances the sensor by dt while exposed to `true_ppm`. Returns nullopt when
    /// the sensor is warming up, disabled, or sampled faster than tau_lower.
    std::optional<double> sample(double true_ppm, double dt) {
        if (!(dt > 0.0)) {
            throw std::invalid_argument("sensor sample: dt must be > 0");
        }
        double tau = tau_eff_;
        if (true_ppm < response_) {
            tau /= (1.0 - spec_.hysteresis_coeff);
        }
        const double alpha = std::min(1.0, dt / tau);
        response_ += alpha * (true_ppm - response_);
        response_ = std::max(0.0, response_);

        // Both draws are always taken so the stream stays aligned across config changes.
        const double walk = standard_normal(rng_);
        const double noise = standard_normal(rng_);
        bias_ += spec_.drift_walk_std * std::sqrt(dt) * walk;
        age_ += dt;

        if (!enabled_ || age_ < spec_.warmup_time || dt < spec_.tau_lower) {
            return std::nullopt;
        }
        return std::max(0.0, response_ + bias_ + spec_.noise_std * noise);
    }

    bool ready() const { return age_ >= spec_.warmup_time; }

    const SensorSpec& spec() const { return spec_; }
    double tau_eff() const { return tau_eff_; }
    double response() const { return response_; }
    double bias() const { return bias_; }
    double age() const { return age_; }
    bool enabled() const { return enabled_; }

    void set_enabled(bool on) { enabled_ = on; }
    void set_bias(double bias) { bias_ = bias; }

private:
    SensorSpec spec_{};
    Rng rng_{};
    double tau_eff_ = 1.0;
    double response_ = 0.0;
    double bias_ = 0.0;
    double age_ = 0.0;
    bool enabled_ = true;
};

// =============================================================================
// Alternating pair
// =============================================================================

struct PairSample {
    std::optional<double> reading;          // mean of held values
    std::optional<double> primary_raw;      // fresh reading this step, if any
    std::optional<double> secondary_raw;
    bool primary_enabled = true;            // flags in effect during this step
};

class SensorPair {
public:
    SensorPair() = default;

    /// duty_period <= 0 selects the default: tau_upper of the pair's kind.
    SensorPair(SensorState primary, SensorState secondary, double duty_period = 0.0)
        : primary_(std::move(primary)), secondary_(std::move(secondary)) {
        duty_period_ = duty_period > 0.0 ? duty_period : primary_.spec().tau_upper;
        primary_.set_enabled(true);
        secondary_.set_enabled(false);
    }

    PairSample sample(double true_ppm, double dt) {
        PairSample out;
        out.primary_enabled = primary_.enabled();
        out.primary_raw = primary_.sample(true_ppm, dt);
        out.secondary_raw = secondary_.sample(true_ppm, dt);
        if (out.primary_raw) held_primary_ = out.primary_raw;
        if (out.secondary_raw) held_secondary_ = out.secondary_raw;

        phase_time_ += dt;
        if (phase_time_ >= duty_period_ - 1e-12) {
            phase_time_ = 0.0;
            const bool primary_on = primary_.enabled();
            primary_.set_enabled(!primary_on);
            secondary_.set_enabled(primary_on);
        }
        if (held_primary_ && held_secondary_) {
            out.reading = 0.5 * (*held_primary_ + *held_secondary_);
        }
        return out;
    }

    const SensorState& primary() const { return primary_; }
    const SensorState& secondary() const { return secondary_; }
    SensorState& primary() { return primary_; }
    SensorState& secondary() { return secondary_; }
    double duty_period() const { return duty_period_; }
    bool ready() const { return primary_.ready() && secondary_.ready(); }

private:
    SensorState primary_{};
    SensorState secondary_{};
    double duty_period_ = 1.0;
    double phase_time_ = 0.0;
    std::optional<double> held_primary_;
    std::optional<double> held_secondary_;
};

inline SensorPair make_sensor_pair(const SensorSpec& spec, std::uint64_t run_seed, double duty_period = 0.0) {
    return SensorPair(SensorState(spec, derive_seed(run_seed, stream::kPrimarySensor)),
                      SensorState(spec, derive_seed(run_seed, stream::kSecondarySensor)), duty_period);
}

} // namespace oio
