// Ground-truth odour field: an isotropic Gaussian puff that spreads, decays
// exponentially and advects with a uniform wind.
#pragma once

#include "oio/common.hpp"

namespace oio {

struct PlumeField {
    Vec3 source_position{400.0, 100.0, 150.0}; // mm
    double amplitude = 1000.0;                 // ppm at the centre, t = 0
    double sigma0 = 300.0;                     // mm
    double spread_rate = 0.0;                  // mm/s
    double decay_lambda = 0.005;               // 1/s
    Vec3 wind = Vec3::Zero();                  // mm/s
    double t = 0.0;                            // s since release

    void validate() const {
        if (!(amplitude > 0.0)) throw ConfigError("plume.amplitude must be > 0");
        if (!(sigma0 > 0.0)) throw ConfigError("plume.sigma0 must be > 0");
        if (!(spread_rate >= 0.0)) throw ConfigError("plume.spread_rate must be >= 0");
        if (!(decay_lambda >= 0.0)) throw ConfigError("plume.decay_lambda must be >= 0");
        if (!is_finite(source_position) || !is_finite(wind)) {
            throw ConfigError("plume.source_position and plume.wind must be finite");
        }
    }

    Vec3 center() const { return source_position + wind * t; }
    double sigma() const { return sigma0 + spread_rate * t; }
    double peak() const { return amplitude * std::exp(-decay_lambda * t); }
};

/// Concentration (ppm) at `offset` from the plume centre.
inline double concentration_at_offset(const PlumeField& field, const Vec3& offset) {
    const double s = field.sigma();
    return field.peak() * std::exp(-offset.squaredNorm() / (2.0 * s * s));
}

inline double concentration_at(const PlumeField& field, const Vec3& point) {
    return concentration_at_offset(field, point - field.center());
}

inline PlumeField step(PlumeField field, double dt) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("plume step: dt must be > 0");
    }
    field.t += dt;
    return field;
}

} // namespace oio
