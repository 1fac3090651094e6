#include <gtest/gtest.h>

#include "oio/plume_env.hpp"

using namespace oio;

namespace {

PlumeField still() {
    PlumeField f;
    f.source_position = Vec3(100, -50, 30);
    f.decay_lambda = 0.0;
    f.spread_rate = 0.0;
    return f;
}

} // namespace

TEST(Plume, PeakAtCentre) {
    PlumeField f = still();
    EXPECT_DOUBLE_EQ(concentration_at(f, f.center()), f.amplitude);
}

TEST(Plume, DecayOverOneTimeConstant) {
    PlumeField f = still();
    f.decay_lambda = 0.01;
    f.t = 100.0;
    EXPECT_NEAR(concentration_at(f, f.center()), 1000.0 * std::exp(-1.0), 1e-9);
}

TEST(Plume, OffsetValue) {
    PlumeField f = still();
    f.sigma0 = 200.0;
    // 1000 exp(-100^2 / (2 200^2)), evaluated independently
    EXPECT_NEAR(concentration_at_offset(f, Vec3(100, 0, 0)), 882.4969025845954, 1e-9);
}

TEST(Plume, StepIsAdditiveInTime) {
    PlumeField f;
    f.wind = Vec3(3, -1, 0.5);
    f.spread_rate = 2.0;
    const PlumeField twice = step(step(f, 1.0), 1.0);
    const PlumeField once = step(f, 2.0);
    EXPECT_EQ(twice.t, once.t);
    const Vec3 p(200, 50, 10);
    EXPECT_EQ(concentration_at(twice, p), concentration_at(once, p));
    EXPECT_THROW(step(f, 0.0), std::invalid_argument);
}

TEST(Plume, StaticFieldInvariantUnderStepping) {
    PlumeField f = still();
    const Vec3 p(321, 12, -40);
    const double c0 = concentration_at(f, p);
    for (int i = 0; i < 10; ++i) f = step(f, 0.7);
    EXPECT_EQ(concentration_at(f, p), c0);
}

TEST(Plume, PeakAfterHundredSeconds) {
    PlumeField f = still();
    f.decay_lambda = 0.01;
    for (int i = 0; i < 200; ++i) f = step(f, 0.5);
    EXPECT_NEAR(f.peak(), 1000.0 * std::exp(-1.0), 1e-9);
}

TEST(Plume, MonotoneDecayInTime) {
    PlumeField f = still();
    f.decay_lambda = 0.005;
    const Vec3 p(400, 0, 0);
    double prev = concentration_at(f, p);
    for (int i = 0; i < 100; ++i) {
        f = step(f, 1.0);
        const double c = concentration_at(f, p);
        EXPECT_LE(c, prev);
        prev = c;
    }
}

TEST(Plume, RadialMonotonicityAndSymmetry) {
    PlumeField f;
    f.t = 12.0;
    f.wind = Vec3(1, 2, 0);
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
        const Vec3 dir = Vec3(standard_normal(rng), standard_normal(rng), standard_normal(rng)).normalized();
        double prev = concentration_at_offset(f, Vec3::Zero());
        for (double r = 10.0; r < 1500.0; r += 10.0) {
            const double c = concentration_at(f, f.center() + r * dir);
            EXPECT_LT(c, prev);
            prev = c;
        }
        const Mat3 rot = Eigen::AngleAxisd(standard_normal(rng), dir.unitOrthogonal()).toRotationMatrix();
        const Vec3 off = 250.0 * dir;
        EXPECT_NEAR(concentration_at_offset(f, off), concentration_at_offset(f, rot * off), 1e-9);
    }
}

TEST(Plume, NonNegativeAndValidated) {
    PlumeField f;
    EXPECT_GE(concentration_at(f, Vec3(1e5, 1e5, 1e5)), 0.0);
    f.amplitude = 0.0;
    EXPECT_THROW(f.validate(), ConfigError);
    f = PlumeField{};
    f.decay_lambda = -1.0;
    EXPECT_THROW(f.validate(), ConfigError);
}
