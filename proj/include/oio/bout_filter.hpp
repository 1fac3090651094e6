// Bout detection: moving-average smoothing, first difference of the smoothed
// signal, and the approach criterion (rising difference above baseline).
#pragma once

#include "oio/arm_model.hpp"
#include "oio/common.hpp"

#include <array>
#include <deque>
#include <numeric>
#include <span>

namespace oio {

inline constexpr std::size_t kBaselineSize = 5;
inline constexpr std::size_t kDefaultWindow = 5;

/// Smoothing window used while calibrating with a given number of unlocked joints.
constexpr std::size_t window_for_dof(DofMode mode) {
    switch (mode) {
    case DofMode::DOF1: return 3;
    case DofMode::DOF2: return 5;
    case DofMode::DOF3: return 7;
    case DofMode::DOF5: return 11;
    }
    return kDefaultWindow;
}

enum class BaselineThreshold { Max, Mean };

struct BoutDecision {
    double smoothed = 0.0; // y'_t
    double delta = 0.0;    // y'_t - y'_{t-1}
    bool is_bout = false;

    bool toward_source() const { return is_bout; }
};

class BoutFilter {
public:
    /// An uninitialized filter; update() throws NotInitialized until a baseline exists.
    BoutFilter() = default;

    static BoutFilter capture_baseline(std::span<const double> readings, std::size_t k = kDefaultWindow,
                                       BaselineThreshold mode = BaselineThreshold::Max) {
        if (readings.size() != kBaselineSize) {
            throw BaselineSizeError("baseline needs exactly 5 readings, got " + std::to_string(readings.size()));
        }
        if (k < 2) {
            throw ConfigError("bout window k must be >= 2");
        }
        BoutFilter f;
        std::copy(readings.begin(), readings.end(), f.baseline_.begin());
        f.k_ = k;
        f.mode_ = mode;
        f.initialized_ = true;
        f.prev_smoothed_ = std::accumulate(readings.begin(), readings.end(), 0.0) / kBaselineSize;
        f.prev_delta_ = 0.0;
        return f;
    }

    double threshold() const {
        if (mode_ == BaselineThreshold::Mean) {
            return std::accumulate(baseline_.begin(), baseline_.end(), 0.0) / kBaselineSize;
        }
        return *std::max_element(baseline_.begin(), baseline_.end());
    }

    BoutDecision update(double y) {
        if (!initialized_) {
            throw NotInitialized("bout filter used before capture_baseline");
        }
        buffer_.push_back(y);
        if (buffer_.size() > k_) {
            buffer_.pop_front();
        }
        BoutDecision d;
        d.smoothed = std::accumulate(buffer_.begin(), buffer_.end(), 0.0) / static_cast<double>(buffer_.size());
        d.delta = d.smoothed - prev_smoothed_;
        d.is_bout = d.delta > prev_delta_ && d.smoothed > threshold();
        prev_smoothed_ = d.smoothed;
        prev_delta_ = d.delta;
        return d;
    }

    /// Restarts the moving average (e.g. after a large repositioning) but keeps the baseline.
    void reset_window(double anchor) {
        buffer_.clear();
        prev_smoothed_ = anchor;
        prev_delta_ = 0.0;
    }

    bool initialized() const { return initialized_; }
    std::size_t window() const { return k_; }
    const std::array<double, kBaselineSize>& baseline() const { return baseline_; }
    double prev_smoothed() const { return prev_smoothed_; }
    double prev_delta() const { return prev_delta_; }
    std::size_t buffered() const { return buffer_.size(); }

private:
    std::array<double, kBaselineSize> baseline_{};
    std::deque<double> buffer_;
    std::size_t k_ = kDefaultWindow;
    BaselineThreshold mode_ = BaselineThreshold::Max;
    double prev_smoothed_ = 0.0;
    double prev_delta_ = 0.0;
    bool initialized_ = false;
};

} // namespace oio
