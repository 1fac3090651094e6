#include <gtest/gtest.h>

#include "oio/bout_filter.hpp"

#include <deque>

using namespace oio;

namespace {

struct Step {
    double smoothed, delta;
    bool bout;
};

// Straight transcription of the recurrence: partial-window mean, delta against the
// previous mean (the baseline mean before the first update), strict comparisons.
std::vector<Step> reference(const std::vector<double>& ys, std::array<double, 5> base, std::size_t k) {
    std::vector<Step> out;
    std::deque<double> buf;
    double prev = (base[0] + base[1] + base[2] + base[3] + base[4]) / 5.0;
    double prev_delta = 0.0;
    const double thr = *std::max_element(base.begin(), base.end());
    for (double y : ys) {
        buf.push_back(y);
        if (buf.size() > k) buf.pop_front();
        double sum = 0.0;
        for (double b : buf) sum += b;
        const double sm = sum / static_cast<double>(buf.size());
        const double d = sm - prev;
        out.push_back({sm, d, d > prev_delta && sm > thr});
        prev = sm;
        prev_delta = d;
    }
    return out;
}

} // namespace

TEST(Window, PerDof) {
    EXPECT_EQ(window_for_dof(DofMode::DOF1), 3u);
    EXPECT_EQ(window_for_dof(DofMode::DOF2), 5u);
    EXPECT_EQ(window_for_dof(DofMode::DOF3), 7u);
    EXPECT_EQ(window_for_dof(DofMode::DOF5), 11u);
}

TEST(Baseline, Thresholds) {
    const std::array<double, 5> ones{1, 1, 1, 1, 1};
    EXPECT_EQ(BoutFilter::capture_baseline(ones).threshold(), 1.0);
    const std::array<double, 5> zeros{};
    EXPECT_EQ(BoutFilter::capture_baseline(zeros).threshold(), 0.0);
    const std::array<double, 5> mixed{10, 12, 11, 9, 13};
    EXPECT_EQ(BoutFilter::capture_baseline(mixed).threshold(), 13.0);
    EXPECT_EQ(BoutFilter::capture_baseline(mixed, 5, BaselineThreshold::Mean).threshold(), 11.0);
}

TEST(Baseline, Errors) {
    const std::array<double, 4> four{1, 2, 3, 4};
    EXPECT_THROW(BoutFilter::capture_baseline(four), BaselineSizeError);
    BoutFilter f;
    EXPECT_THROW(f.update(1.0), NotInitialized);
}

TEST(Bout, ConstantAtBaselineNeverFires) {
    const std::array<double, 5> base{7, 7, 7, 7, 7};
    BoutFilter f = BoutFilter::capture_baseline(base);
    for (int i = 0; i < 50; ++i) {
        const BoutDecision d = f.update(7.0);
        EXPECT_EQ(d.delta, 0.0);
        EXPECT_FALSE(d.is_bout);
    }
}

TEST(Bout, LinearRamp) {
    const std::array<double, 5> base{};
    BoutFilter f = BoutFilter::capture_baseline(base, 5);
    const std::vector<double> sm{10, 15, 20, 25, 30}, dl{10, 5, 5, 5, 5};
    const std::vector<bool> bout{true, false, false, false, false};
    const std::vector<double> ys{10, 20, 30, 40, 50};
    for (std::size_t i = 0; i < ys.size(); ++i) {
        const BoutDecision d = f.update(ys[i]);
        EXPECT_DOUBLE_EQ(d.smoothed, sm[i]);
        EXPECT_DOUBLE_EQ(d.delta, dl[i]);
        EXPECT_EQ(d.is_bout, bout[i]) << i;
        EXPECT_EQ(d.toward_source(), d.is_bout);
    }
}

TEST(Bout, AcceleratingRamp) {
    // Partial windows while filling: means 1, 1.5, 7/3, 14/3, 28/3; deltas 1, 0.5, 5/6, 7/3, 14/3.
    // The second delta drops, so the second step is not a bout.
    const std::array<double, 5> base{};
    BoutFilter f = BoutFilter::capture_baseline(base, 3);
    const std::vector<double> ys{1, 2, 4, 8, 16};
    const std::vector<bool> expected{true, false, true, true, true};
    const auto ref = reference(ys, base, 3);
    for (std::size_t i = 0; i < ys.size(); ++i) {
        const BoutDecision d = f.update(ys[i]);
        EXPECT_EQ(d.is_bout, expected[i]) << i;
        EXPECT_EQ(d.is_bout, ref[i].bout);
        EXPECT_NEAR(d.delta, ref[i].delta, 1e-15);
    }
}

TEST(Bout, MatchesReferenceOnRandomInput) {
    Rng rng(5);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (std::size_t k : {3u, 5u, 7u, 11u}) {
        std::array<double, 5> base;
        for (double& b : base) b = u(rng);
        std::vector<double> ys(200);
        for (double& y : ys) y = u(rng);
        BoutFilter f = BoutFilter::capture_baseline(base, k);
        const auto ref = reference(ys, base, k);
        double prev = f.prev_smoothed();
        for (std::size_t i = 0; i < ys.size(); ++i) {
            const BoutDecision d = f.update(ys[i]);
            EXPECT_NEAR(d.smoothed, ref[i].smoothed, 1e-12);
            EXPECT_EQ(d.delta, d.smoothed - prev);
            EXPECT_EQ(d.is_bout, ref[i].bout);
            prev = d.smoothed;
        }
    }
}

TEST(Bout, ScaleAndShiftInvariance) {
    Rng rng(8);
    std::uniform_real_distribution<double> u(0.0, 50.0);
    std::array<double, 5> base;
    for (double& b : base) b = u(rng);
    std::vector<double> ys(100);
    for (double& y : ys) y = u(rng) + 0.3 * static_cast<double>(&y - ys.data());

    auto run = [&](double scale, double shift) {
        std::array<double, 5> b = base;
        for (double& v : b) v = scale * v + shift;
        BoutFilter f = BoutFilter::capture_baseline(b, 5);
        std::vector<BoutDecision> out;
        for (double y : ys) out.push_back(f.update(scale * y + shift));
        return out;
    };
    const auto plain = run(1.0, 0.0);
    const auto scaled = run(4.0, 0.0);
    const auto shifted = run(1.0, 17.0);
    for (std::size_t i = 0; i < ys.size(); ++i) {
        EXPECT_NEAR(scaled[i].smoothed, 4.0 * plain[i].smoothed, 1e-9);
        EXPECT_NEAR(scaled[i].delta, 4.0 * plain[i].delta, 1e-9);
        EXPECT_EQ(scaled[i].is_bout, plain[i].is_bout);
        EXPECT_NEAR(shifted[i].delta, plain[i].delta, 1e-9);
        EXPECT_EQ(shifted[i].is_bout, plain[i].is_bout);
    }
}

TEST(Bout, WindowForgetsOldReadings) {
    const std::array<double, 5> base{};
    std::vector<double> ys{5, 9, 2, 8, 7, 3, 6, 1};
    const std::size_t k = 3;
    BoutFilter a = BoutFilter::capture_baseline(base, k), b = BoutFilter::capture_baseline(base, k);
    std::vector<double> other = ys;
    other[ys.size() - 1 - k] += 100.0; // reading t - k
    BoutDecision da{}, db{};
    for (std::size_t i = 0; i < ys.size(); ++i) {
        da = a.update(ys[i]);
        db = b.update(other[i]);
    }
    EXPECT_EQ(da.smoothed, db.smoothed);
}
