// Kinematic model of the 5-joint arm carrying the sensor toolhead.
//
// Frame convention: Z-up base frame centred on the shoulder. Azimuth rotates
// about base Z. Elevation, elbow tilt and wrist tilt pitch about the local Y
// axis with positive angles lifting the forward (local X) axis. Wrist roll
// rotates about the local X axis. At all-zero joints the arm points along +X.
#pragma once

#include "oio/common.hpp"

#include <algorithm>
#include <limits>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace oio {

enum class Joint : int {
    ShoulderAzimuth = 0,
    ShoulderElevation = 1,
    ElbowTilt = 2,
    WristTilt = 3,
    WristRoll = 4,
};

inline constexpr int kJointCount = 5;

using JointVector = Eigen::Matrix<double, kJointCount, 1>;

enum class DofMode { DOF1, DOF2, DOF3, DOF5 };

inline constexpr std::array<DofMode, 4> kDofSchedule{DofMode::DOF1, DofMode::DOF2, DofMode::DOF3,
                                                     DofMode::DOF5};

/// Number of leading joints unlocked by a mode; modes unlock joints in chain order.
constexpr int active_joint_count(DofMode mode) {
    switch (mode) {
    case DofMode::DOF1: return 1;
    case DofMode::DOF2: return 2;
    case DofMode::DOF3: return 3;
    case DofMode::DOF5: return 5;
    }
    return 0;
}

constexpr bool is_active(DofMode mode, Joint joint) {
    return static_cast<int>(joint) < active_joint_count(mode);
}

inline std::string_view to_string(DofMode mode) {
    switch (mode) {
    case DofMode::DOF1: return "DOF1";
    case DofMode::DOF2: return "DOF2";
    case DofMode::DOF3: return "DOF3";
    case DofMode::DOF5: return "DOF5";
    }
    return "?";
}

inline DofMode parse_dof_mode(std::string_view text) {
    for (DofMode m : kDofSchedule) {
        if (to_string(m) == text) {
            return m;
        }
    }
    throw ConfigError("unknown DoF mode '" + std::string(text) + "'");
}

struct JointLimit {
    double min_deg;
    double max_deg;
};

struct ArmConfig {
    /// shoulder->elbow, elbow->wrist, wrist->tool flange (mm)
    std::array<double, 3> link_lengths{300.0, 250.0, 100.0};
    double tool_extension = 100.0; // sensor extender board (mm)
    std::array<JointLimit, kJointCount> joint_limits{{
        {-180.0, 180.0}, // shoulder azimuth
        {-90.0, 90.0},   // shoulder elevation
        {-150.0, 150.0}, // elbow tilt
        {-120.0, 120.0}, // wrist tilt
        {-180.0, 180.0}, // wrist roll
    }};
    double encoder_drift_rate = 1e-3; // deg/s^2, manufacturer bound
    double step_size = 2.0;           // deg per discrete move

    static constexpr double kMaxEncoderDriftRate = 1e-3;

    /// Maximum distance of the tool tip from the shoulder.
    double reach() const {
        return link_lengths[0] + link_lengths[1] + link_lengths[2] + tool_extension;
    }

    void validate() const {
        for (double len : link_lengths) {
            if (!(len > 0.0)) {
                throw ConfigError("arm.link_lengths must all be > 0");
            }
        }
        if (!(tool_extension >= 0.0)) {
            throw ConfigError("arm.tool_extension must be >= 0");
        }
        if (!(encoder_drift_rate >= 0.0) || encoder_drift_rate > kMaxEncoderDriftRate) {
            throw ConfigError("arm.encoder_drift_rate must lie in [0, 1e-3] deg/s^2");
        }
        for (const auto& lim : joint_limits) {
            if (!(lim.min_deg < lim.max_deg)) {
                throw ConfigError("arm.joint_limits: min must be < max for every joint");
            }
        }
        if (!(step_size > 0.0)) {
            throw ConfigError("arm.step_size must be > 0");
        }
    }
};

struct ArmState {
    JointVector joint_angles = JointVector::Zero();     // true angles (deg)
    JointVector joint_velocities = JointVector::Zero(); // deg/s
    JointVector accumulated_drift = JointVector::Zero(); // encoder error (deg)
    double time = 0.0;

    /// What the encoders report: the true angle corrupted by drift.
    JointVector reported_angles() const { return joint_angles + accumulated_drift; }
};

/// A discrete move: a signed unit increment of one joint, or Stay (direction 0).
struct Action {
    Joint joint = Joint::ShoulderAzimuth;
    int direction = 0;

    static constexpr Action stay() { return {Joint::ShoulderAzimuth, 0}; }
    static constexpr Action move_left() { return {Joint::ShoulderAzimuth, +1}; }
    static constexpr Action move_right() { return {Joint::ShoulderAzimuth, -1}; }

    constexpr bool is_stay() const { return direction == 0; }
    constexpr Action reversed() const { return {joint, -direction}; }

    friend constexpr bool operator==(const Action& a, const Action& b) {
        if (a.is_stay() || b.is_stay()) {
            return a.is_stay() && b.is_stay();
        }
        return a.joint == b.joint && a.direction == b.direction;
    }
};

inline std::vector<Action> allowed_actions(DofMode mode) {
    std::vector<Action> out;
    const int n = active_joint_count(mode);
    out.reserve(static_cast<std::size_t>(2 * n + 1));
    for (int j = 0; j < n; ++j) {
        out.push_back({static_cast<Joint>(j), +1});
        out.push_back({static_cast<Joint>(j), -1});
    }
    out.push_back(Action::stay());
    return out;
}

// =============================================================================
// Kinematics
// =============================================================================

struct TipPose {
    Vec3 position = Vec3::Zero();
    Mat3 orientation = Mat3::Identity(); // columns: tool x (pointing), y, z in base frame
};

namespace detail {

inline Mat3 rot_z(double rad) { return Eigen::AngleAxisd(rad, Vec3::UnitZ()).toRotationMatrix(); }
// Positive pitch lifts local +X toward +Z.
inline Mat3 pitch(double rad) { return Eigen::AngleAxisd(-rad, Vec3::UnitY()).toRotationMatrix(); }
inline Mat3 rot_x(double rad) { return Eigen::AngleAxisd(rad, Vec3::UnitX()).toRotationMatrix(); }

} // namespace detail

inline TipPose forward_kinematics(const JointVector& angles_deg, const ArmConfig& config) {
    using namespace detail;
    const auto& L = config.link_lengths;
    Mat3 rot = rot_z(deg_to_rad(angles_deg[0])) * pitch(deg_to_rad(angles_deg[1]));
    Vec3 pos = rot * Vec3(L[0], 0.0, 0.0);
    rot = rot * pitch(deg_to_rad(angles_deg[2]));
    pos += rot * Vec3(L[1], 0.0, 0.0);
    rot = rot * pitch(deg_to_rad(angles_deg[3])) * rot_x(deg_to_rad(angles_deg[4]));
    pos += rot * Vec3(L[2] + config.tool_extension, 0.0, 0.0);
    return {pos, rot};
}

/// Tip position from the true joint angles (where the sensor physically is).
inline Vec3 tip_position(const ArmState& state, const ArmConfig& config) {
    return forward_kinematics(state.joint_angles, config).position;
}

/// Tip position the robot believes it is at, from drifted encoder readings.
inline Vec3 odometry_tip_position(const ArmState& state, const ArmConfig& config) {
    return forward_kinematics(state.reported_angles(), config).position;
}

inline JointVector clamp_to_limits(JointVector angles, const ArmConfig& config) {
    for (int j = 0; j < kJointCount; ++j) {
        const auto& lim = config.joint_limits[static_cast<std::size_t>(j)];
        angles[j] = std::clamp(angles[j], lim.min_deg, lim.max_deg);
    }
    return angles;
}

/// Position-only inverse kinematics with the wrist held straight (tilt and roll 0),
/// elbow-up branch. Unreachable targets resolve to the nearest reachable pose along
/// the same ray; the result is clamped to joint limits.
inline JointVector inverse_kinematics(const Vec3& target, const ArmConfig& config) {
    const double a = config.link_lengths[0];
    const double b = config.link_lengths[1] + config.link_lengths[2] + config.tool_extension;
    const double horizontal = std::hypot(target.x(), target.y());
    const double azimuth = horizontal > 1e-9 ? std::atan2(target.y(), target.x()) : 0.0;
    const double dist2 = horizontal * horizontal + target.z() * target.z();
    double cos_elbow = (dist2 - a * a - b * b) / (2.0 * a * b);
    cos_elbow = std::clamp(cos_elbow, -1.0, 1.0);

    // Elbow-up first; the other branch is used when limits clamp the first one off target.
    JointVector best = JointVector::Zero();
    double best_miss = std::numeric_limits<double>::infinity();
    for (double sign : {-1.0, 1.0}) {
        const double elbow = sign * std::acos(cos_elbow);
        const double elevation =
            std::atan2(target.z(), horizontal) - std::atan2(b * std::sin(elbow), a + b * std::cos(elbow));
        JointVector q;
        q << rad_to_deg(azimuth), rad_to_deg(elevation), rad_to_deg(elbow), 0.0, 0.0;
        q = clamp_to_limits(q, config);
        const double miss = (forward_kinematics(q, config).position - target).norm();
        if (miss < best_miss - 1e-9) {
            best = q;
            best_miss = miss;
        }
    }
    return best;
}

// =============================================================================
// Motion
// =============================================================================

namespace detail {

/// Adds one bounded uniform encoder-drift draw per joint for an interval dt.
inline void accumulate_drift(ArmState& state, double dt, const ArmConfig& config, std::uint64_t seed) {
    const double bound = config.encoder_drift_rate * dt * dt / 2.0;
    if (bound <= 0.0) {
        return;
    }
    Rng rng(seed);
    std::uniform_real_distribution<double> draw(-bound, bound);
    for (int j = 0; j < kJointCount; ++j) {
        state.accumulated_drift[j] += draw(rng);
    }
}

} // namespace detail

/// Executes one discrete move. `seed` drives the encoder-drift draw for this step.
inline ArmState apply_action(const ArmState& state, const Action& action, DofMode mode, double dt,
                             const ArmConfig& config, std::uint64_t seed) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("apply_action: dt must be > 0");
    }
    if (!action.is_stay() && !is_active(mode, action.joint)) {
        throw ActionNotInDofMode("action moves joint " + std::to_string(static_cast<int>(action.joint)) +
                                 " which is locked in " + std::string(to_string(mode)));
    }
    ArmState next = state;
    JointVector target = state.joint_angles;
    if (!action.is_stay()) {
        target[static_cast<int>(action.joint)] += action.direction * config.step_size;
    }
    next.joint_angles = clamp_to_limits(target, config);
    next.joint_velocities = (next.joint_angles - state.joint_angles) / dt;
    detail::accumulate_drift(next, dt, config, seed);
    next.time = state.time + dt;
    return next;
}

/// Repositions the arm to the given joint angles over one interval dt.
inline ArmState move_to(const ArmState& state, const JointVector& target, double dt, const ArmConfig& config,
                        std::uint64_t seed) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("move_to: dt must be > 0");
    }
    ArmState next = state;
    next.joint_angles = clamp_to_limits(target, config);
    next.joint_velocities = (next.joint_angles - state.joint_angles) / dt;
    detail::accumulate_drift(next, dt, config, seed);
    next.time = state.time + dt;
    return next;
}

} // namespace oio
