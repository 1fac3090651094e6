#include <gtest/gtest.h>

#include "oio/calibration.hpp"
#include "oio/scenario.hpp"

using namespace oio;

TEST(TypeA, ConstantReadingsHaveZeroSpread) {
    const std::vector<double> ys(11, 42.0);
    const TypeA a = calibrate_type_a(ys, DofMode::DOF5);
    EXPECT_EQ(a.k, 11u);
    EXPECT_EQ(a.s, 0.0);
    EXPECT_EQ(a.u_a, 0.0);
}

TEST(TypeA, FrozenValues) {
    const std::vector<double> ys{10, 12, 11, 9, 13};
    const TypeA a = calibrate_type_a(ys, 5);
    EXPECT_NEAR(a.s, 1.5811388300841898, 1e-12);
    EXPECT_NEAR(a.u_a, 0.7071067811865476, 1e-12);
    // only the final k readings count
    const std::vector<double> longer{500, -3, 10, 12, 11, 9, 13};
    EXPECT_EQ(calibrate_type_a(longer, 5).s, a.s);
    // s = 0.5 with k = 5
    const std::vector<double> half{0.5, -0.5, 0.5, -0.5, 0.0};
    const TypeA h = calibrate_type_a(half, 5);
    EXPECT_NEAR(h.s, 0.5, 1e-15);
    EXPECT_NEAR(h.u_a, 0.2236, 1e-4);
}

TEST(TypeA, TooFewReadings) {
    const std::vector<double> ys{1, 2, 3, 4};
    EXPECT_THROW(calibrate_type_a(ys, DofMode::DOF2), InsufficientSamples);
    EXPECT_THROW(calibrate_type_a(ys, 1), InsufficientSamples);
}

TEST(TypeB, FrozenValues) {
    const TypeB b = calibrate_type_b(Vec3(10, 0, 0), 16, Vec3::Zero());
    EXPECT_DOUBLE_EQ(b.v, 10.0);
    EXPECT_DOUBLE_EQ(b.u_b, 5.0);
    const TypeB c = calibrate_type_b(Vec3(1, 2, 3) + Vec3(4.5, 6.0, 0.0), 9, Vec3(1, 2, 3));
    EXPECT_DOUBLE_EQ(c.v, 7.5);
    EXPECT_DOUBLE_EQ(c.u_b, 5.0);
    EXPECT_THROW(calibrate_type_b(Vec3::Zero(), 0, Vec3::Zero()), std::invalid_argument);
    EXPECT_THROW(calibrate_type_b(BeliefResult{}, Vec3::Zero()), LocalizationDidNotConverge);
}

TEST(Budget, Completeness) {
    UncertaintyBudget b;
    EXPECT_FALSE(b.complete_for(DofMode::DOF1));
    b.type_a[DofMode::DOF1] = {};
    EXPECT_FALSE(b.complete_for(DofMode::DOF1));
    b.type_b = TypeB{};
    EXPECT_TRUE(b.complete_for(DofMode::DOF1));
    EXPECT_FALSE(b.complete_for(DofMode::DOF5));
}

TEST(Bandit, Policy) {
    CastingConfig cfg{1.0, 100.0};
    const Action left = Action::move_left();
    // bout: keep going
    EXPECT_EQ(bandit_policy({50.0, 5.0, true}, left, DofMode::DOF1, cfg), left);
    // no bout: reverse
    EXPECT_EQ(bandit_policy({50.0, -5.0, false}, left, DofMode::DOF1, cfg), left.reversed());
    // flat and close: stay
    EXPECT_TRUE(bandit_policy({150.0, 0.5, false}, left, DofMode::DOF1, cfg).is_stay());
    // flat but far: still searching
    EXPECT_FALSE(bandit_policy({50.0, 0.5, false}, left, DofMode::DOF1, cfg).is_stay());
    // from rest: start moving
    EXPECT_EQ(bandit_policy({50.0, -5.0, false}, Action::stay(), DofMode::DOF1, cfg), left);
    EXPECT_THROW(bandit_policy({}, Action{Joint::WristRoll, 1}, DofMode::DOF3, cfg), ActionNotInDofMode);
}

TEST(Protocol, SeededRunFillsTheBudget) {
    ScenarioConfig c;
    Rig rig = make_rig(c, 3);
    const CalibrationReport r = run_protocol(rig, c.protocol);

    ASSERT_EQ(r.stages.size(), kDofSchedule.size());
    double t = 0.0;
    for (std::size_t i = 0; i < r.stages.size(); ++i) {
        const StageLog& s = r.stages[i];
        EXPECT_EQ(s.mode, kDofSchedule[i]);
        EXPECT_GE(s.t_start, t);
        EXPECT_GT(s.t_end, s.t_start);
        t = s.t_end;
        ASSERT_EQ(s.window.size(), window_for_dof(s.mode));
        const TypeA again = calibrate_type_a(s.window, s.mode);
        EXPECT_EQ(r.budget.type_a.at(s.mode).u_a, again.u_a);
        EXPECT_GT(again.s, 0.0);
        EXPECT_TRUE(r.budget.complete_for(s.mode));
    }
    ASSERT_TRUE(r.vertex);
    const TypeB& b = *r.budget.type_b;
    EXPECT_DOUBLE_EQ(b.v, (*r.vertex - r.truth).norm());
    EXPECT_DOUBLE_EQ(b.u_b, 2.0 * b.v / std::sqrt(static_cast<double>(b.m)));
    EXPECT_GE(b.m, 4);
    EXPECT_GE(r.t_belief_start, r.stages.back().t_end);
    EXPECT_DOUBLE_EQ(r.total_time, rig.time());
    for (double tau : r.response_tau) {
        EXPECT_GE(tau, c.sensor_spec().tau_lower);
        EXPECT_LE(tau, c.sensor_spec().tau_upper);
    }
}

TEST(Protocol, TauIdentification) {
    ScenarioConfig c;
    c.overrides.noise_std = 0.0;
    // sub-second sensors are barely resolved at a 0.5 s sample period
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rig rig = make_rig(c, seed);
        const std::array<double, 2> truth{rig.pair().primary().tau_eff(), rig.pair().secondary().tau_eff()};
        const CalibrationReport r = run_protocol(rig, c.protocol);
        for (int i = 0; i < 2; ++i) EXPECT_NEAR(r.response_tau[i], truth[i], std::max(0.05 * truth[i], 0.35)) << seed;
    }
    // with catalog noise the fit is rougher but unbiased enough to be useful
    ScenarioConfig noisy;
    std::vector<double> err;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rig rig = make_rig(noisy, seed);
        const std::array<double, 2> truth{rig.pair().primary().tau_eff(), rig.pair().secondary().tau_eff()};
        const CalibrationReport r = run_protocol(rig, noisy.protocol);
        for (int i = 0; i < 2; ++i) err.push_back(std::abs(r.response_tau[i] - truth[i]));
    }
    std::nth_element(err.begin(), err.begin() + err.size() / 2, err.end());
    EXPECT_LT(err[err.size() / 2], 0.5);
}

TEST(Protocol, DeterministicForSeed) {
    ScenarioConfig c;
    Rig a = make_rig(c, 5), b = make_rig(c, 5);
    const CalibrationReport ra = run_protocol(a, c.protocol), rb = run_protocol(b, c.protocol);
    EXPECT_EQ(ra.budget.type_b->u_b, rb.budget.type_b->u_b);
    EXPECT_EQ(ra.budget.type_a.at(DofMode::DOF5).u_a, rb.budget.type_a.at(DofMode::DOF5).u_a);
    EXPECT_EQ(a.log().size(), b.log().size());
}

TEST(Protocol, RejectsBadSchedules) {
    ScenarioConfig c;
    Rig rig = make_rig(c, 1);
    ProtocolConfig p;
    p.schedule.clear();
    EXPECT_THROW(run_protocol(rig, p), ConfigError);
    p.schedule = {DofMode::DOF3, DofMode::DOF2};
    EXPECT_THROW(run_protocol(rig, p), ConfigError);
}

TEST(Protocol, StageBudgetExhaustion) {
    ScenarioConfig c;
    c.protocol.stage_move_budget = 2;
    Rig rig = make_rig(c, 1);
    EXPECT_THROW(run_protocol(rig, c.protocol), BudgetExhausted);
}
