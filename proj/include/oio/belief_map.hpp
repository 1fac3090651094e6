// RSSI-style belief maps. Each sensor response is converted to a signal
// strength, then to a range; the range becomes a sphere around the tip
// position. Intersecting spheres narrows the candidate set (sphere surface,
// circle, point pair) until a single common point remains, the vertex, found
// by weighted nonlinear least squares.
#pragma once

#include "oio/common.hpp"
#include "oio/plume_env.hpp"
#include "oio/rig.hpp"
#include "oio/sensor_response.hpp"

#include <optional>
#include <string>
#include <vector>

namespace oio {

// =============================================================================
// Signal strength and range conversion
// =============================================================================

struct PathLossModel {
    double reference_rssi = 0.0;         // dB at reference_distance
    double reference_distance = 300.0;   // mm
    double path_loss_exponent = 2.0;
    double concentration_floor = 1e-3;   // ppm
    double reference_ppm_scale = 1000.0; // ppm mapped to 0 dB

    void validate() const {
        if (!(path_loss_exponent > 0.0)) throw ConfigError("path_loss_exponent must be > 0");
        if (!(reference_distance > 0.0)) throw ConfigError("reference_distance must be > 0");
        if (!(concentration_floor > 0.0)) throw ConfigError("concentration_floor must be > 0");
        if (!(reference_ppm_scale > 0.0)) throw ConfigError("reference_ppm_scale must be > 0");
    }
};

inline double response_to_rssi(double reading_ppm, const PathLossModel& model) {
    return 10.0 * std::log10(std::max(reading_ppm, model.concentration_floor) / model.reference_ppm_scale);
}

inline double rssi_to_range(double rssi, const PathLossModel& model) {
    return model.reference_distance *
           std::pow(10.0, (model.reference_rssi - rssi) / (10.0 * model.path_loss_exponent));
}

inline double range_to_rssi(double range, const PathLossModel& model) {
    return model.reference_rssi - 10.0 * model.path_loss_exponent * std::log10(range / model.reference_distance);
}

/// Least-squares fit of the log-distance model to a Gaussian field (at its current
/// time) over radii [r_min, r_max].
inline PathLossModel fit_log_distance(const PlumeField& field, double r_min, double r_max,
                                      PathLossModel base = {}, int samples = 64) {
    if (!(r_min > 0.0 && r_max > r_min) || samples < 2) {
        throw ConfigError("fit_log_distance: need 0 < r_min < r_max and >= 2 samples");
    }
    // rssi = a - 10 n log10(r / d0)  =>  linear in x = log10(r / d0)
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < samples; ++i) {
        const double r = r_min * std::pow(r_max / r_min, static_cast<double>(i) / (samples - 1));
        const double x = std::log10(r / base.reference_distance);
        const double y = response_to_rssi(concentration_at_offset(field, Vec3(r, 0.0, 0.0)), base);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double n = samples;
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    base.reference_rssi = (sy - slope * sx) / n;
    base.path_loss_exponent = -slope / 10.0;
    base.validate();
    return base;
}

enum class RangeModelKind {
    LogDistance,     // fitted power-law path loss
    GaussianInverse, // exact inverse of the Gaussian field at the sampling time
};

struct RangeEstimate {
    double range = 0.0;          // mm
    double d_range_d_ppm = 0.0;  // sensitivity used to propagate reading variance
};

struct RangeModel {
    RangeModelKind kind = RangeModelKind::GaussianInverse;
    PathLossModel path_loss{};
    double min_range = 1.0; // mm

    /// `field` supplies the plume spread and peak at the sampling time (GaussianInverse only).
    RangeEstimate estimate(double reading_ppm, const PlumeField& field) const {
        const double ppm = std::max(reading_ppm, path_loss.concentration_floor);
        const double rssi = response_to_rssi(ppm, path_loss);
        RangeEstimate out;
        if (kind == RangeModelKind::LogDistance) {
            out.range = std::max(min_range, rssi_to_range(rssi, path_loss));
            out.d_range_d_ppm = -out.range / (path_loss.path_loss_exponent * ppm);
            return out;
        }
        const double sigma = field.sigma();
        const double drop_db = response_to_rssi(field.peak(), path_loss) - rssi;
        const double r = drop_db > 0.0 ? sigma * std::sqrt(2.0 * std::log(10.0) * drop_db / 10.0) : 0.0;
        out.range = std::max(min_range, r);
        out.d_range_d_ppm = -sigma * sigma / (ppm * out.range);
        return out;
    }
};

// =============================================================================
// Spheres and vertex extraction
// =============================================================================

struct RangeSphere {
    Vec3 center = Vec3::Zero();
    double radius = 1.0;
    double weight = 1.0; // 1 / variance of radius (1/mm^2)
};

struct VertexFit {
    Vec3 position = Vec3::Zero();
    double residual = 0.0;           // weighted RMS surface miss (mm)
    Mat3 covariance = Mat3::Zero();  // (J^T W J)^-1, mm^2
    int iterations = 0;

    double position_sigma() const {
        Eigen::SelfAdjointEigenSolver<Mat3> es(covariance);
        return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
    }
};

struct SolverOptions {
    int max_iterations = 100;
    double step_tolerance = 1e-6;    // mm
    double degeneracy_epsilon = 1e-3; // mm, RMS distance of centres from best-fit plane
};

/// RMS distance of the centres from their best-fit plane (0 for coplanar sets).
inline double out_of_plane_spread(const std::vector<RangeSphere>& spheres) {
    if (spheres.size() < 4) {
        return 0.0;
    }
    Vec3 mean = Vec3::Zero();
    for (const auto& s : spheres) mean += s.center;
    mean /= static_cast<double>(spheres.size());
    Mat3 scatter = Mat3::Zero();
    for (const auto& s : spheres) {
        const Vec3 d = s.center - mean;
        scatter += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(scatter);
    return std::sqrt(std::max(0.0, es.eigenvalues().minCoeff()) / static_cast<double>(spheres.size()));
}

namespace detail {

/// Weighted linearized trilateration (sphere equations minus their weighted mean).
inline std::optional<Vec3> linear_trilateration(const std::vector<RangeSphere>& spheres) {
    double wsum = 0.0;
    Vec3 cbar = Vec3::Zero();
    double qbar = 0.0;
    for (const auto& s : spheres) {
        wsum += s.weight;
        cbar += s.weight * s.center;
        qbar += s.weight * (s.radius * s.radius - s.center.squaredNorm());
    }
    cbar /= wsum;
    qbar /= wsum;
    Mat3 ata = Mat3::Zero();
    Vec3 atb = Vec3::Zero();
    for (const auto& s : spheres) {
        const Vec3 a = -2.0 * (s.center - cbar);
        const double b = (s.radius * s.radius - s.center.squaredNorm()) - qbar;
        ata += s.weight * a * a.transpose();
        atb += s.weight * a * b;
    }
    Eigen::LDLT<Mat3> ldlt(ata);
    if (ldlt.info() != Eigen::Success) {
        return std::nullopt;
    }
    Vec3 p = ldlt.solve(atb);
    if (!p.allFinite()) {
        return std::nullopt;
    }
    return p;
}

inline double weighted_cost(const std::vector<RangeSphere>& spheres, const std::vector<double>& w, const Vec3& p) {
    double cost = 0.0;
    for (std::size_t i = 0; i < spheres.size(); ++i) {
        const double e = (p - spheres[i].center).norm() - spheres[i].radius;
        cost += w[i] * e * e;
    }
    return cost;
}

} // namespace detail

/// Weighted RMS sphere-surface miss distance at p.
inline double sphere_residual(const std::vector<RangeSphere>& spheres, const Vec3& p) {
    double num = 0.0, den = 0.0;
    for (const auto& s : spheres) {
        const double e = (p - s.center).norm() - s.radius;
        num += s.weight * e * e;
        den += s.weight;
    }
    return std::sqrt(num / den);
}

/// Gauss-Newton with Levenberg damping on min_p sum w_i (|p - c_i| - r_i)^2.
/// Returns nullopt when the iteration limit is reached without convergence.
inline std::optional<VertexFit> extract_vertex(const std::vector<RangeSphere>& spheres,
                                               const SolverOptions& options = {}) {
    if (spheres.size() < 4) {
        throw std::invalid_argument("extract_vertex needs at least 4 spheres");
    }
    if (out_of_plane_spread(spheres) < options.degeneracy_epsilon) {
        throw DegenerateGeometry("sphere centres are (nearly) coplanar; the vertex is not unique");
    }
    double wmax = 0.0;
    for (const auto& s : spheres) wmax = std::max(wmax, s.weight);
    std::vector<double> w(spheres.size());
    for (std::size_t i = 0; i < spheres.size(); ++i) w[i] = spheres[i].weight / wmax;

    Vec3 p = Vec3::Zero();
    for (const auto& s : spheres) p += s.center;
    p /= static_cast<double>(spheres.size());
    if (auto lin = detail::linear_trilateration(spheres)) {
        p = *lin;
    }

    double cost = detail::weighted_cost(spheres, w, p);
    double mu = -1.0;
    bool converged = false;
    int it = 0;
    for (; it < options.max_iterations && !converged; ++it) {
        Mat3 jtj = Mat3::Zero();
        Mat3 curvature = Mat3::Zero();
        Vec3 jte = Vec3::Zero();
        for (std::size_t i = 0; i < spheres.size(); ++i) {
            Vec3 d = p - spheres[i].center;
            const double dist = d.norm();
            const Vec3 u = dist > 1e-12 ? Vec3(d / dist) : Vec3::UnitX();
            const double e = dist - spheres[i].radius;
            jtj += w[i] * u * u.transpose();
            jte += w[i] * u * e;
            if (dist > 1e-12) curvature += w[i] * (e / dist) * (Mat3::Identity() - u * u.transpose());
        }
        // With a nonzero residual, Gauss-Newton alone crawls along flat valleys; take the
        // exact Hessian whenever it is positive definite.
        if (const Mat3 full = jtj + curvature; full.llt().info() == Eigen::Success) {
            jtj = full;
        }
        if (mu < 0.0) {
            mu = 1e-3 * jtj.diagonal().maxCoeff();
        }
        while (true) {
            Mat3 damped = jtj;
            damped.diagonal() += mu * jtj.diagonal().cwiseMax(1e-12);
            const Vec3 delta = damped.ldlt().solve(-jte);
            const Vec3 trial = p + delta;
            const double trial_cost = detail::weighted_cost(spheres, w, trial);
            if (trial_cost <= cost) {
                p = trial;
                cost = trial_cost;
                mu = std::max(mu / 3.0, 1e-15);
                if (delta.norm() < options.step_tolerance) {
                    converged = true;
                }
                break;
            }
            mu *= 4.0;
            if (delta.norm() < options.step_tolerance || mu > 1e15) {
                converged = true; // no descent direction left: stationary point
                break;
            }
        }
    }
    if (!converged) {
        return std::nullopt;
    }
    VertexFit fit;
    fit.position = p;
    fit.residual = sphere_residual(spheres, p);
    fit.iterations = it;
    Mat3 info = Mat3::Zero();
    for (const auto& s : spheres) {
        Vec3 d = p - s.center;
        const double dist = d.norm();
        const Vec3 u = dist > 1e-12 ? Vec3(d / dist) : Vec3::UnitX();
        info += s.weight * u * u.transpose();
    }
    // pseudo-inverse: a direction the centres do not constrain gets zero, not infinity
    Eigen::SelfAdjointEigenSolver<Mat3> es(info);
    const double cutoff = 1e-12 * es.eigenvalues().cwiseAbs().maxCoeff();
    const Vec3 inv = es.eigenvalues().unaryExpr([cutoff](double l) { return l > cutoff ? 1.0 / l : 0.0; });
    fit.covariance = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    return fit;
}

// =============================================================================
// Sigma points: discrete samples of the current constraint set
// =============================================================================

namespace detail {

inline std::vector<Vec3> fibonacci_sphere(const Vec3& c, double r, int n) {
    std::vector<Vec3> out;
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / n;
        const double rho = std::sqrt(1.0 - z * z);
        const double phi = golden * i;
        out.emplace_back(c + r * Vec3(rho * std::cos(phi), rho * std::sin(phi), z));
    }
    return out;
}

inline Mat3 orthonormal_frame(const Vec3& axis) {
    const Vec3 a = axis.normalized();
    const Vec3 helper = std::abs(a.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 b = a.cross(helper).normalized();
    const Vec3 c = a.cross(b);
    Mat3 m;
    m << a, b, c;
    return m;
}

} // namespace detail

/// Intersection circle of two spheres sampled at `n` points; one point when they miss.
inline std::vector<Vec3> circle_points(const RangeSphere& s1, const RangeSphere& s2, int n) {
    const Vec3 axis = s2.center - s1.center;
    const double d = axis.norm();
    if (d < 1e-9) {
        return {};
    }
    const double x = (d * d + s1.radius * s1.radius - s2.radius * s2.radius) / (2.0 * d);
    const double h2 = s1.radius * s1.radius - x * x;
    const Mat3 frame = detail::orthonormal_frame(axis);
    const Vec3 foot = s1.center + frame.col(0) * x;
    if (h2 <= 0.0) {
        return {foot};
    }
    const double h = std::sqrt(h2);
    std::vector<Vec3> out;
    for (int i = 0; i < n; ++i) {
        const double a = 2.0 * kPi * i / n;
        out.emplace_back(foot + h * (std::cos(a) * frame.col(1) + std::sin(a) * frame.col(2)));
    }
    return out;
}

/// The (up to) two points common to three spheres; one point when they miss or touch.
inline std::vector<Vec3> three_sphere_points(const RangeSphere& s1, const RangeSphere& s2, const RangeSphere& s3) {
    const Vec3 ex = (s2.center - s1.center).normalized();
    const Vec3 v13 = s3.center - s1.center;
    const double i = ex.dot(v13);
    Vec3 ey = v13 - i * ex;
    const double ey_norm = ey.norm();
    if (ey_norm < 1e-9) {
        return {};
    }
    ey /= ey_norm;
    const Vec3 ez = ex.cross(ey);
    const double d = (s2.center - s1.center).norm();
    const double j = ey.dot(v13);
    const double x = (s1.radius * s1.radius - s2.radius * s2.radius + d * d) / (2.0 * d);
    const double y = (s1.radius * s1.radius - s3.radius * s3.radius + i * i + j * j) / (2.0 * j) - (i / j) * x;
    const double z2 = s1.radius * s1.radius - x * x - y * y;
    const Vec3 base = s1.center + x * ex + y * ey;
    if (z2 <= 1e-12) {
        return {base};
    }
    const double z = std::sqrt(z2);
    return {base + z * ez, base - z * ez};
}

/// Picks the one candidate inside the reachable ball; nullopt if both or neither are.
inline std::optional<Vec3> resolve_point_pair(const std::vector<Vec3>& candidates, double reach) {
    std::optional<Vec3> pick;
    int inside = 0;
    for (const auto& c : candidates) {
        if (c.norm() <= reach) {
            ++inside;
            pick = c;
        }
    }
    return inside == 1 ? pick : std::nullopt;
}

// =============================================================================
// Belief map
// =============================================================================

struct BeliefOptions {
    double convergence_threshold = 40.0; // mm, max weighted RMS residual for a vertex
    double variance_floor = 1e-9;        // mm^2, keeps weights finite for noiseless data
    int surface_points = 32;
    int circle_points = 16;
    SolverOptions solver{};
};

struct BeliefMap {
    std::vector<RangeSphere> spheres;
    std::vector<Vec3> sigma_points;
    std::optional<Vec3> vertex;
    std::optional<VertexFit> fit;        // last solver result, even above threshold
    double residual = kNaN;
};

inline void refresh_sigma_points(BeliefMap& map, const BeliefOptions& options) {
    const auto& s = map.spheres;
    switch (s.size()) {
    case 0: map.sigma_points.clear(); break;
    case 1: map.sigma_points = detail::fibonacci_sphere(s[0].center, s[0].radius, options.surface_points); break;
    case 2: map.sigma_points = circle_points(s[0], s[1], options.circle_points); break;
    case 3: map.sigma_points = three_sphere_points(s[0], s[1], s[2]); break;
    default:
        if (map.vertex) {
            map.sigma_points = {*map.vertex};
        } else if (map.fit) {
            map.sigma_points = {map.fit->position};
        } else if (map.sigma_points.size() > 2) {
            map.sigma_points.resize(2);
        }
        break;
    }
}

/// Adds one sphere from a reading taken at `center`. `reading_variance` (ppm^2) is
/// propagated to the radius through the conversion sensitivity.
inline BeliefMap add_observation(BeliefMap map, const Vec3& center, double reading, double reading_variance,
                                 const RangeModel& model, const PlumeField& field_now,
                                 const BeliefOptions& options = {}) {
    if (!is_finite(center)) {
        throw std::invalid_argument("add_observation: centre must be finite");
    }
    const RangeEstimate est = model.estimate(reading, field_now);
    RangeSphere sphere;
    sphere.center = center;
    sphere.radius = est.range;
    const double var = reading_variance * est.d_range_d_ppm * est.d_range_d_ppm;
    sphere.weight = 1.0 / std::max(var, options.variance_floor);
    map.spheres.push_back(sphere);

    if (map.spheres.size() >= 4) {
        map.fit = extract_vertex(map.spheres, options.solver);
        map.vertex.reset();
        map.residual = kNaN;
        if (map.fit) {
            map.residual = map.fit->residual;
            if (map.fit->residual <= options.convergence_threshold) {
                map.vertex = map.fit->position;
            }
        }
    }
    refresh_sigma_points(map, options);
    return map;
}

// =============================================================================
// Active localization
// =============================================================================

/// Regular-tetrahedron probe targets with circumradius `radius` about `center`,
/// rotated per round so successive rounds sample new directions.
inline std::vector<Vec3> tetrahedral_probes(const Vec3& center, double radius, int round) {
    static const std::array<Vec3, 4> dirs{Vec3(1, 1, 1).normalized(), Vec3(1, -1, -1).normalized(),
                                          Vec3(-1, 1, -1).normalized(), Vec3(-1, -1, 1).normalized()};
    const Mat3 rot = (Eigen::AngleAxisd(deg_to_rad(37.0 * round), Vec3::UnitZ()) *
                      Eigen::AngleAxisd(deg_to_rad(23.0 * round), Vec3::UnitX()))
                         .toRotationMatrix();
    std::vector<Vec3> out;
    for (const auto& d : dirs) out.push_back(center + radius * (rot * d));
    return out;
}

struct LocalizeOptions {
    RangeModel range_model{};
    BeliefOptions belief{};
    double probe_edge = 120.0;    // mm, first tetrahedron around the start pose
    double standoff = 250.0;      // mm, circumradius of later tetrahedra around the vertex
    double settle_time = 0.0;     // s before averaging at each probe; <= 0: automatic
    std::size_t dwell_samples = 12; // fresh sensor readings averaged per probe
    double target_sigma = 3.0;    // mm, stop once the vertex is this certain
    double min_improvement = 0.03; // or once a round shrinks its uncertainty by less than this fraction
    int move_budget = 500;
    // Identified response times of the pair. When set, dwell means are corrected for
    // the lag behind the decaying plume and the automatic settle uses them.
    std::optional<std::array<double, 2>> response_tau;
};

struct BeliefResult {
    BeliefMap map;
    std::optional<Vec3> vertex;
    int moves = 0;        // m
    int measurements = 0;
    int rounds = 0;
    std::vector<Vec3> trajectory; // odometry tip at each measurement
    Vec3 truth_at_end = Vec3::Zero();
};

namespace detail {

/// Raw single-sensor noise pooled over all dwells, from differences of consecutive
/// fresh readings of the same sensor (insensitive to the slow response trend).
struct RawNoise {
    double ss = 0.0;
    double dof = 0.0;
    void add(const std::vector<StepRecord>& log, std::size_t from) {
        for (std::size_t i = from + 1; i < log.size(); ++i) {
            const PairSample& a = log[i - 1].pair;
            const PairSample& b = log[i].pair;
            if (a.primary_raw && b.primary_raw) {
                ss += 0.5 * std::pow(*b.primary_raw - *a.primary_raw, 2);
                dof += 1.0;
            }
            if (a.secondary_raw && b.secondary_raw) {
                ss += 0.5 * std::pow(*b.secondary_raw - *a.secondary_raw, 2);
                dof += 1.0;
            }
        }
    }
    double variance() const { return dof > 0.0 ? ss / dof : 0.0; }
};

} // namespace detail

/// Samples at the current pose, then visits tetrahedral probe rounds until the vertex
/// is both consistent (residual) and certain (target_sigma). Each repositioning is a move.
inline BeliefResult localize(Rig& rig, const LocalizeOptions& options, const std::string& stage = "belief") {
    BeliefResult result;
    detail::RawNoise noise;

    const SensorSpec& spec = rig.pair().primary().spec();
    double settle = options.settle_time;
    if (!(settle > 0.0)) {
        // The tracker explains the residual lag, so only a short pause is needed.
        settle = options.response_tau ? response_settling_time(*options.response_tau, spec.hysteresis_coeff, 0.25)
                                      : settling_time(spec);
    }
    std::optional<DwellTracker> tracker;
    if (options.response_tau) {
        tracker.emplace(*options.response_tau, spec.hysteresis_coeff, rig.sample_period());
    }
    // Log index where the current pose starts; the move step already samples there.
    std::size_t first = rig.log().size();
    auto measure = [&](double settle_for) {
        DwellResult d = rig.dwell(settle_for, options.dwell_samples, stage);
        double slope = 1.0;
        if (tracker) {
            std::vector<ReplayStep> steps;
            for (std::size_t i = first; i < rig.log().size(); ++i) {
                const StepRecord& rec = rig.log()[i];
                PlumeField field = rig.plume();
                field.t = rec.t;
                steps.push_back({rec.odom_tip, field,
                                 {rec.pair.primary_raw.has_value(), rec.pair.secondary_raw.has_value()}});
            }
            const auto sol = tracker->solve(steps, d.readings.size(), d.mean);
            d.mean = sol.level;
            slope = sol.slope;
        }
        noise.add(rig.log(), first);
        const double var_of_mean =
            noise.variance() / static_cast<double>(d.readings.size()) / (slope * slope);
        const Vec3 center = rig.odom_tip();
        result.map = add_observation(std::move(result.map), center, d.mean, var_of_mean, options.range_model,
                                     rig.plume(), options.belief);
        const auto& sph = result.map.spheres.back();
        StepRecord& rec = rig.last();
        rec.sphere_center = sph.center;
        rec.sphere_radius = sph.radius;
        rec.sphere_weight = sph.weight;
        rec.belief_residual = result.map.residual;
        result.trajectory.push_back(center);
        ++result.measurements;
    };

    const Vec3 start = rig.odom_tip();
    std::optional<double> previous_sigma;
    // The tracker starts from a settled pair, and the pose may have just been reached.
    measure(tracker ? std::max(settle, response_settling_time(*options.response_tau, spec.hysteresis_coeff))
                    : settle);
    for (int round = 0;; ++round) {
        Vec3 center = start;
        double radius = options.probe_edge * std::sqrt(3.0 / 8.0);
        if (round > 0 && result.map.fit) {
            center = result.map.fit->position;
            radius = options.standoff;
        }
        for (const Vec3& target : tetrahedral_probes(center, radius, round)) {
            if (result.moves >= options.move_budget) {
                throw BudgetExhausted("belief-map localization exhausted its budget of " +
                                      std::to_string(options.move_budget) + " moves");
            }
            first = rig.log().size();
            rig.move_to_point(target, stage);
            ++result.moves;
            measure(settle);
        }
        result.rounds = round + 1;
        const auto& m = result.map;
        if (m.vertex && m.fit) {
            // The plume decays, so later rounds carry less information; stop once one adds little.
            const double sigma = m.fit->position_sigma();
            const bool certain = sigma <= options.target_sigma;
            const bool stalled = previous_sigma && sigma > (1.0 - options.min_improvement) * *previous_sigma;
            if (certain || stalled) {
                result.vertex = m.vertex;
                result.truth_at_end = rig.plume().center();
                return result;
            }
        }
        previous_sigma = m.fit ? std::optional<double>(m.fit->position_sigma()) : std::nullopt;
    }
}

} // namespace oio
