// Extended Kalman filter over [source x, y, z (mm), sensor bias (ppm)].
//
// The arm pose is not part of the state: encoder odometry places the tip, and
// the olfactory channel observes the source relative to that tip, either as a
// range or as a raw concentration through the plume model. The source is
// modelled as static; wind and model error are absorbed by Q.
#pragma once

#include "oio/calibration.hpp"
#include "oio/plume_env.hpp"
#include "oio/sensor_models.hpp"

#include <tuple>

namespace oio {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

struct EkfState {
    Vec4 x = Vec4::Zero();
    Mat4 P = Mat4::Identity();
    Mat4 Q = Mat4::Zero(); // per second
    double R = 1.0;        // concentration-channel variance (ppm^2)
    double t = 0.0;

    Vec3 source() const { return x.head<3>(); }
    double bias() const { return x[3]; }
};

struct SourcePrior {
    Vec3 position = Vec3::Zero();
    double position_std = 100.0; // mm
    double bias = 0.0;
    double bias_std = 10.0; // ppm
};

/// Multipliers applied after Q/R are derived.
struct EkfTuning {
    double q_scale = 1.0;
    double r_scale = 1.0;
};

namespace detail {

inline EkfState from_prior(const SourcePrior& prior) {
    EkfState s;
    s.x << prior.position, prior.bias;
    s.P.setZero();
    s.P.diagonal() << Vec3::Constant(prior.position_std * prior.position_std), prior.bias_std * prior.bias_std;
    return s;
}

} // namespace detail

/// R = u_a^2 for the mode; Q position block = u_b^2 per second; Q bias = drift walk^2 per second.
inline EkfState init_from_budget(const UncertaintyBudget& budget, DofMode mode, const SourcePrior& prior,
                                 double drift_walk_std, const EkfTuning& tuning = {}) {
    if (!budget.complete_for(mode)) {
        throw IncompleteBudget("budget lacks Type A for " + std::string(to_string(mode)) + " or Type B");
    }
    EkfState s = detail::from_prior(prior);
    const double u_a = budget.type_a.at(mode).u_a;
    const double u_b = budget.type_b->u_b;
    s.R = tuning.r_scale * u_a * u_a;
    s.Q.setZero();
    s.Q.diagonal() << Vec3::Constant(tuning.q_scale * u_b * u_b), drift_walk_std * drift_walk_std;
    return s;
}

/// Uncalibrated filter: R from the catalog 1-sigma error, Q position std a fixed
/// fraction of the arm's reach per sqrt(second).
inline EkfState init_cold_start(const SensorSpec& spec, double workspace_reach, const SourcePrior& prior,
                                double reach_fraction = 0.05) {
    EkfState s = detail::from_prior(prior);
    const double q = reach_fraction * workspace_reach;
    s.R = spec.noise_std * spec.noise_std;
    s.Q.setZero();
    s.Q.diagonal() << Vec3::Constant(q * q), spec.drift_walk_std * spec.drift_walk_std;
    return s;
}

inline EkfState predict(EkfState state, double dt) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("predict: dt must be > 0");
    }
    state.P += state.Q * dt;
    state.t += dt;
    return state;
}

struct UpdateOutcome {
    EkfState state;
    double innovation = 0.0;
    double innovation_variance = 0.0;
    bool gated = false;    // rejected by the chi-square gate
    bool singular = false; // skipped, Jacobian undefined
};

inline constexpr double kChiSquare99OneDof = 6.634896601021214;
inline constexpr double kMinSourceDistance = 1.0; // mm

/// Scalar-measurement EKF update with a 99% chi-square gate and Joseph-form covariance.
inline UpdateOutcome scalar_update(const EkfState& state, double innovation, const Eigen::RowVector4d& H,
                                   double r) {
    UpdateOutcome out{state, innovation, 0.0, false, false};
    const Vec4 ph = state.P * H.transpose();
    const double s = H.dot(ph) + r;
    out.innovation_variance = s;
    if (!(s > 0.0) || innovation * innovation > kChiSquare99OneDof * s) {
        out.gated = true;
        return out;
    }
    const Vec4 K = ph / s;
    out.state.x += K * innovation;
    const Mat4 ikh = Mat4::Identity() - K * H;
    const Mat4 joseph = ikh * state.P * ikh.transpose() + K * r * K.transpose();
    out.state.P = 0.5 * (joseph + joseph.transpose());
    return out;
}

/// Range channel: h(x) = |source - tip|. `range_variance` is in mm^2.
inline UpdateOutcome update_range(const EkfState& state, double measured_range, const Vec3& tip,
                                  double range_variance) {
    if (!(measured_range > 0.0)) {
        throw std::invalid_argument("update_range: measured range must be > 0");
    }
    const Vec3 d = state.source() - tip;
    const double dist = d.norm();
    if (dist < kMinSourceDistance) {
        return {state, 0.0, 0.0, false, true};
    }
    Eigen::RowVector4d H;
    H << (d / dist).transpose(), 0.0;
    return scalar_update(state, measured_range - dist, H, range_variance);
}

/// Plume model evaluated relative to an estimated source. `field` supplies amplitude,
/// spread and decay at the measurement time; its own position and wind are ignored.
inline double predicted_concentration(const Vec4& x, const Vec3& tip, const PlumeField& field) {
    return concentration_at_offset(field, tip - x.head<3>()) + x[3];
}

inline Eigen::RowVector4d concentration_jacobian(const Vec4& x, const Vec3& tip, const PlumeField& field) {
    const Vec3 offset = tip - x.head<3>();
    const double s = field.sigma();
    const double c = concentration_at_offset(field, offset);
    Eigen::RowVector4d H;
    H << (c / (s * s)) * offset.transpose(), 1.0;
    return H;
}

/// Concentration channel: h(x) = field(tip - source) + bias, variance R.
inline UpdateOutcome update_concentration(const EkfState& state, double reading, const Vec3& tip,
                                          const PlumeField& field) {
    if ((state.source() - tip).norm() < kMinSourceDistance) {
        return {state, 0.0, 0.0, false, true};
    }
    const double innovation = reading - predicted_concentration(state.x, tip, field);
    return scalar_update(state, innovation, concentration_jacobian(state.x, tip, field), state.R);
}

/// Update through an arbitrary scalar model; `model(x)` returns the prediction and its
/// Jacobian. iterations > 1 relinearizes at each new estimate (iterated EKF). The gate
/// is applied at the prior.
template <class Model>
UpdateOutcome update_model(const EkfState& state, double reading, Model&& model, double r, int iterations = 1) {
    auto [h0, H0] = model(state.x);
    const double s0 = H0.dot(state.P * H0.transpose()) + r;
    UpdateOutcome out{state, reading - h0, s0, false, false};
    if (!(s0 > 0.0) || out.innovation * out.innovation > kChiSquare99OneDof * s0) {
        out.gated = true;
        return out;
    }
    Vec4 x = state.x;
    Eigen::RowVector4d H = H0;
    double h = h0;
    Vec4 K = Vec4::Zero();
    for (int i = 0; i < std::max(1, iterations); ++i) {
        if (i > 0) std::tie(h, H) = model(x);
        const Vec4 ph = state.P * H.transpose();
        K = ph / (H.dot(ph) + r);
        const Vec4 next = state.x + K * (reading - h - H.dot(state.x - x));
        const bool done = (next - x).norm() < 1e-6;
        x = next;
        if (done) break;
    }
    out.state.x = x;
    const Mat4 ikh = Mat4::Identity() - K * H;
    const Mat4 joseph = ikh * state.P * ikh.transpose() + K * r * K.transpose();
    out.state.P = 0.5 * (joseph + joseph.transpose());
    return out;
}

inline double min_eigenvalue(const Mat4& P) {
    Eigen::SelfAdjointEigenSolver<Mat4> es(P);
    return es.eigenvalues().minCoeff();
}

/// min eigenvalue >= -1e-9 * trace
inline bool is_psd(const Mat4& P) { return min_eigenvalue(P) >= -1e-9 * std::abs(P.trace()); }

} // namespace oio
