// Simulation rig: one arm carrying one sensor pair through one plume. Every
// call advances the shared clock by one sample period and appends a StepRecord.
#pragma once

#include "oio/arm_model.hpp"
#include "oio/bout_filter.hpp"
#include "oio/plume_env.hpp"
#include "oio/sensor_models.hpp"

#include <limits>
#include <string>
#include <vector>

namespace oio {

/// One row of the per-step run log. Fields that a stage does not produce stay NaN.
struct StepRecord {
    double t = 0.0;
    std::string stage;
    Vec3 tip = Vec3::Zero();      // true sensor position
    Vec3 odom_tip = Vec3::Zero(); // from drifted encoders
    Vec3 source = Vec3::Zero();   // true plume centre
    double true_ppm = 0.0;
    PairSample pair;

    // bout filter
    double smoothed = kNaN;
    double delta = kNaN;
    int is_bout = -1;

    // belief map
    Vec3 sphere_center = Vec3::Constant(kNaN);
    double sphere_radius = kNaN;
    double sphere_weight = kNaN;
    double belief_residual = kNaN;

    // filter
    Eigen::Vector4d estimate = Eigen::Vector4d::Constant(kNaN);
    double trace_p = kNaN;
    double min_eig_p = kNaN;
    double innovation = kNaN;
    int gated = -1;
};

struct DwellResult {
    std::vector<double> readings;
    double mean = 0.0;
    double variance = 0.0; // sample variance (n - 1), 0 for n < 2
};

class Rig {
public:
    Rig(PlumeField plume, ArmConfig arm_config, ArmState arm, SensorPair pair, double sample_period,
        std::uint64_t drift_seed)
        : plume_(std::move(plume)), arm_config_(arm_config), arm_(std::move(arm)), pair_(std::move(pair)),
          dt_(sample_period), drift_seed_(drift_seed) {
        if (!(dt_ > 0.0)) {
            throw ConfigError("sample_period must be > 0");
        }
        plume_.validate();
        arm_config_.validate();
    }

    /// Powers the sensors in clean air until the pair produces a reading. The plume
    /// clock does not run and nothing is logged.
    void warm_up(double max_time = 3600.0) {
        double elapsed = 0.0;
        while (elapsed < max_time) {
            elapsed += dt_;
            if (pair_.sample(0.0, dt_).reading) {
                return;
            }
        }
        throw ConfigError("sensor pair never became ready during warm-up");
    }

    /// Samples without moving (encoders still drift).
    StepRecord& hold(const std::string& stage) { return act(Action::stay(), DofMode::DOF5, stage); }

    StepRecord& act(const Action& action, DofMode mode, const std::string& stage) {
        arm_ = apply_action(arm_, action, mode, dt_, arm_config_, next_drift_seed());
        return record(stage);
    }

    StepRecord& move_to_joints(const JointVector& target, const std::string& stage) {
        arm_ = move_to(arm_, target, dt_, arm_config_, next_drift_seed());
        return record(stage);
    }

    StepRecord& move_to_point(const Vec3& target, const std::string& stage) {
        return move_to_joints(inverse_kinematics(target, arm_config_), stage);
    }

    /// Holds position for `settle_time`, then collects `count` fresh single-sensor
    /// readings. A pair reading repeats whichever value is held, so its spread
    /// understates the noise of an average; the raw samples do not.
    DwellResult dwell(double settle_time, std::size_t count, const std::string& stage) {
        for (double waited = 0.0; waited + 1e-9 < settle_time; waited += dt_) {
            hold(stage);
        }
        DwellResult out;
        std::size_t guard = 0;
        while (out.readings.size() < count) {
            const PairSample& p = hold(stage).pair;
            for (const auto& r : {p.primary_raw, p.secondary_raw}) {
                if (r && out.readings.size() < count) out.readings.push_back(*r);
            }
            if (++guard > 100 * count + 1000) {
                throw OioError("sensor pair stopped producing readings");
            }
        }
        double sum = 0.0;
        for (double r : out.readings) sum += r;
        out.mean = sum / static_cast<double>(count);
        if (count > 1) {
            double ss = 0.0;
            for (double r : out.readings) ss += (r - out.mean) * (r - out.mean);
            out.variance = ss / static_cast<double>(count - 1);
        }
        return out;
    }

    double time() const { return plume_.t; }
    double sample_period() const { return dt_; }
    Vec3 tip() const { return tip_position(arm_, arm_config_); }
    Vec3 odom_tip() const { return odometry_tip_position(arm_, arm_config_); }
    const PlumeField& plume() const { return plume_; }
    const ArmConfig& arm_config() const { return arm_config_; }
    const ArmState& arm() const { return arm_; }
    const SensorPair& pair() const { return pair_; }
    const std::vector<StepRecord>& log() const { return log_; }
    StepRecord& last() { return log_.back(); }

private:
    std::uint64_t next_drift_seed() { return derive_seed(drift_seed_, ++step_index_); }

    StepRecord& record(const std::string& stage) {
        plume_ = step(plume_, dt_);
        StepRecord rec;
        rec.t = plume_.t;
        rec.stage = stage;
        rec.tip = tip();
        rec.odom_tip = odom_tip();
        rec.source = plume_.center();
        rec.true_ppm = concentration_at(plume_, rec.tip);
        rec.pair = pair_.sample(rec.true_ppm, dt_);
        log_.push_back(std::move(rec));
        return log_.back();
    }

    PlumeField plume_;
    ArmConfig arm_config_;
    ArmState arm_;
    SensorPair pair_;
    double dt_;
    std::uint64_t drift_seed_;
    std::uint64_t step_index_ = 0;
    std::vector<StepRecord> log_;
};

} // namespace oio
