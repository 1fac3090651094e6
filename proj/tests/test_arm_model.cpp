#include <gtest/gtest.h>

#include "oio/arm_model.hpp"

using namespace oio;

namespace {

JointVector angles(double a, double b, double c, double d = 0.0, double e = 0.0) {
    JointVector q;
    q << a, b, c, d, e;
    return q;
}

// Homogeneous-transform chain built joint by joint with explicit trig.
Eigen::Matrix4d rz(double deg) {
    const double t = deg * kPi / 180.0, c = std::cos(t), s = std::sin(t);
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m(0, 0) = c; m(0, 1) = -s;
    m(1, 0) = s; m(1, 1) = c;
    return m;
}
Eigen::Matrix4d lift(double deg) { // positive angle raises local +x toward +z
    const double t = deg * kPi / 180.0, c = std::cos(t), s = std::sin(t);
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m(0, 0) = c; m(0, 2) = -s;
    m(2, 0) = s; m(2, 2) = c;
    return m;
}
Eigen::Matrix4d rx(double deg) {
    const double t = deg * kPi / 180.0, c = std::cos(t), s = std::sin(t);
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m(1, 1) = c; m(1, 2) = -s;
    m(2, 1) = s; m(2, 2) = c;
    return m;
}
Eigen::Matrix4d tx(double len) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m(0, 3) = len;
    return m;
}

Vec3 chain_oracle(const JointVector& q, const ArmConfig& c) {
    const Eigen::Matrix4d T = rz(q[0]) * lift(q[1]) * tx(c.link_lengths[0]) * lift(q[2]) * tx(c.link_lengths[1]) *
                              lift(q[3]) * rx(q[4]) * tx(c.link_lengths[2] + c.tool_extension);
    return T.block<3, 1>(0, 3);
}

} // namespace

TEST(ForwardKinematics, HomePoseIsFullyExtended) {
    ArmConfig c;
    const Vec3 p = forward_kinematics(JointVector::Zero(), c).position;
    EXPECT_NEAR(p.x(), 750.0, 1e-12);
    EXPECT_NEAR(p.y(), 0.0, 1e-12);
    EXPECT_NEAR(p.z(), 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(c.reach(), 750.0);
}

TEST(ForwardKinematics, AzimuthNinetyRotatesHome) {
    ArmConfig c;
    const Vec3 p = forward_kinematics(angles(90, 0, 0), c).position;
    EXPECT_NEAR(p.x(), 0.0, 1e-9);
    EXPECT_NEAR(p.y(), 750.0, 1e-9);
    EXPECT_NEAR(p.norm(), 750.0, 1e-9);
}

TEST(ForwardKinematics, MatchesTransformChain) {
    ArmConfig c;
    // frozen from the planar decomposition: (646.798 cos 30, 646.798 sin 30, 328.601)
    const Vec3 p = forward_kinematics(angles(30, 45, -30), c).position;
    EXPECT_NEAR(p.x(), 560.144067390752, 1e-9);
    EXPECT_NEAR(p.y(), 323.39932809302246, 1e-9);
    EXPECT_NEAR(p.z(), 328.6006046520986, 1e-9);
    EXPECT_LT((p - chain_oracle(angles(30, 45, -30), c)).norm(), 1e-9);

    Rng rng(7);
    std::uniform_real_distribution<double> u(-90.0, 90.0);
    for (int i = 0; i < 200; ++i) {
        const JointVector q = angles(u(rng), u(rng), u(rng), u(rng), u(rng));
        EXPECT_LT((forward_kinematics(q, c).position - chain_oracle(q, c)).norm(), 1e-9);
    }
}

TEST(ForwardKinematics, AzimuthEquivariance) {
    ArmConfig c;
    Rng rng(11);
    std::uniform_real_distribution<double> u(-60.0, 60.0);
    for (int i = 0; i < 100; ++i) {
        const JointVector q = angles(u(rng), u(rng), u(rng), u(rng), u(rng));
        const double theta = u(rng);
        JointVector r = q;
        r[0] += theta;
        const Vec3 rotated = Eigen::AngleAxisd(deg_to_rad(theta), Vec3::UnitZ()) * forward_kinematics(q, c).position;
        EXPECT_LT((forward_kinematics(r, c).position - rotated).norm(), 1e-9);
    }
}

TEST(ForwardKinematics, NeverBeyondReach) {
    ArmConfig c;
    Rng rng(3);
    std::uniform_real_distribution<double> u(-180.0, 180.0);
    for (int i = 0; i < 500; ++i) {
        const JointVector q = clamp_to_limits(angles(u(rng), u(rng), u(rng), u(rng), u(rng)), c);
        EXPECT_LE(forward_kinematics(q, c).position.norm(), c.reach() + 1e-9);
    }
}

TEST(InverseKinematics, ReachesPointsInsideTheWorkspace) {
    ArmConfig c;
    for (const Vec3& target : {Vec3(400, 100, 150), Vec3(300, -200, -100), Vec3(150, 300, 350), Vec3(600, 0, 50)}) {
        const Vec3 got = forward_kinematics(inverse_kinematics(target, c), c).position;
        EXPECT_LT((got - target).norm(), 1e-6) << target.transpose();
    }
}

TEST(Actions, CardinalityPerMode) {
    EXPECT_EQ(allowed_actions(DofMode::DOF1).size(), 3u);
    EXPECT_EQ(allowed_actions(DofMode::DOF2).size(), 5u);
    EXPECT_EQ(allowed_actions(DofMode::DOF3).size(), 7u);
    EXPECT_EQ(allowed_actions(DofMode::DOF5).size(), 11u);
    const auto dof1 = allowed_actions(DofMode::DOF1);
    EXPECT_NE(std::find(dof1.begin(), dof1.end(), Action::move_left()), dof1.end());
    EXPECT_NE(std::find(dof1.begin(), dof1.end(), Action::move_right()), dof1.end());
    EXPECT_NE(std::find(dof1.begin(), dof1.end(), Action::stay()), dof1.end());
}

TEST(Actions, SetsAreNested) {
    for (std::size_t i = 0; i + 1 < kDofSchedule.size(); ++i) {
        const auto small = allowed_actions(kDofSchedule[i]);
        const auto big = allowed_actions(kDofSchedule[i + 1]);
        for (const Action& a : small) {
            EXPECT_NE(std::find(big.begin(), big.end(), a), big.end());
        }
        for (int j = 0; j < kJointCount; ++j) {
            if (is_active(kDofSchedule[i], static_cast<Joint>(j))) {
                EXPECT_TRUE(is_active(kDofSchedule[i + 1], static_cast<Joint>(j)));
            }
        }
    }
}

TEST(ApplyAction, StayWithoutDriftOnlyAdvancesTime) {
    ArmConfig c;
    c.encoder_drift_rate = 0.0;
    ArmState s;
    s.joint_angles = angles(10, 20, -30, 5, 1);
    const ArmState n = apply_action(s, Action::stay(), DofMode::DOF1, 0.5, c, 42);
    EXPECT_EQ(n.joint_angles, s.joint_angles);
    EXPECT_EQ(n.accumulated_drift, s.accumulated_drift);
    EXPECT_DOUBLE_EQ(n.time, 0.5);
}

TEST(ApplyAction, ClampsAtLimit) {
    ArmConfig c;
    ArmState s;
    s.joint_angles[0] = c.joint_limits[0].max_deg;
    const ArmState n = apply_action(s, Action::move_left(), DofMode::DOF1, 0.5, c, 1);
    EXPECT_DOUBLE_EQ(n.joint_angles[0], c.joint_limits[0].max_deg);
}

TEST(ApplyAction, InverseActionRestoresAngles) {
    ArmConfig c;
    c.encoder_drift_rate = 0.0;
    ArmState s;
    s.joint_angles = angles(10, 20, -30, 5, 1);
    for (const Action& a : allowed_actions(DofMode::DOF5)) {
        const ArmState there = apply_action(s, a, DofMode::DOF5, 0.5, c, 1);
        const ArmState back = apply_action(there, a.reversed(), DofMode::DOF5, 0.5, c, 2);
        EXPECT_EQ(back.joint_angles, s.joint_angles);
    }
}

TEST(ApplyAction, RejectsLockedJoint) {
    ArmConfig c;
    EXPECT_THROW(apply_action(ArmState{}, Action{Joint::ElbowTilt, +1}, DofMode::DOF2, 0.5, c, 1), ActionNotInDofMode);
    EXPECT_THROW(apply_action(ArmState{}, Action::stay(), DofMode::DOF1, 0.0, c, 1), std::invalid_argument);
}

TEST(ApplyAction, DriftStaysWithinIntegratedBound) {
    ArmConfig c; // 1e-3 deg/s^2
    const double dt = 0.1;
    ArmState s;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        s = apply_action(s, Action::stay(), DofMode::DOF1, dt, c, derive_seed(9, i));
        worst = std::max(worst, s.accumulated_drift.cwiseAbs().maxCoeff());
    }
    EXPECT_LE(worst, 1e-3 * 100.0 * 100.0 / 2.0);
    EXPECT_LE(worst, 1000 * 1e-3 * dt * dt / 2.0); // per-step draws bounded by r dt^2 / 2
    EXPECT_GT(worst, 0.0);
}

TEST(ApplyAction, DeterministicForSeed) {
    ArmConfig c;
    ArmState a, b;
    for (int i = 0; i < 50; ++i) {
        a = apply_action(a, Action::move_left(), DofMode::DOF1, 0.5, c, derive_seed(5, i));
        b = apply_action(b, Action::move_left(), DofMode::DOF1, 0.5, c, derive_seed(5, i));
    }
    EXPECT_EQ(a.accumulated_drift, b.accumulated_drift);
}

TEST(ArmConfig, Validation) {
    ArmConfig c;
    EXPECT_NO_THROW(c.validate());
    c.encoder_drift_rate = 2e-3;
    EXPECT_THROW(c.validate(), ConfigError);
    c = ArmConfig{};
    c.link_lengths[1] = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = ArmConfig{};
    c.joint_limits[2] = {10.0, -10.0};
    EXPECT_THROW(c.validate(), ConfigError);
}
