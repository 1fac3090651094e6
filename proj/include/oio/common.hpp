// Shared vocabulary types, error classes and seeded-stream helpers.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace oio {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

// =============================================================================
// Errors
// =============================================================================

struct OioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : OioError {
    using OioError::OioError;
};
struct ActionNotInDofMode : OioError {
    using OioError::OioError;
};
struct BaselineSizeError : OioError {
    using OioError::OioError;
};
struct NotInitialized : OioError {
    using OioError::OioError;
};
struct InsufficientSamples : OioError {
    using OioError::OioError;
};
struct DegenerateGeometry : OioError {
    using OioError::OioError;
};
struct BudgetExhausted : OioError {
    using OioError::OioError;
};
struct LocalizationDidNotConverge : OioError {
    using OioError::OioError;
};
struct IncompleteBudget : OioError {
    using OioError::OioError;
};

// =============================================================================
// Seeded streams
// =============================================================================

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30U)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27U)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31U);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix_seed(mix_seed(seed) ^ mix_seed(stream * 0xD1B54A32D192ED03ULL + 1U));
}

/// Well-known stream ids so every consumer of a run seed draws from its own sequence.
namespace stream {
inline constexpr std::uint64_t kPrimarySensor = 1;
inline constexpr std::uint64_t kSecondarySensor = 2;
inline constexpr std::uint64_t kArmDrift = 3;
inline constexpr std::uint64_t kSourceJitter = 4;
inline constexpr std::uint64_t kPrior = 5;
} // namespace stream

inline double standard_normal(Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

inline bool is_finite(const Vec3& v) { return v.allFinite(); }

} // namespace oio
