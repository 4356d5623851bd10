#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rfslam {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat5 = Eigen::Matrix<double, 5, 5>;
using Mat53 = Eigen::Matrix<double, 5, 3>;
using Mat54 = Eigen::Matrix<double, 5, 4>;

/// Speed of light in vacuum [m/s].
inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// ---- Errors ----

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Scenario parameters that cannot describe a physical setup.
class InvalidScenario : public Error {
public:
    using Error::Error;
};

/// A path that does not exist for the given UE/landmark placement.
class InvalidGeometry : public Error {
public:
    using Error::Error;
};

/// Bad user configuration. `path` names the offending field.
class ConfigError : public Error {
public:
    ConfigError(std::string path, const std::string& what)
        : Error(path + ": " + what), path_(std::move(path)) {}
    [[nodiscard]] const std::string& path() const { return path_; }

private:
    std::string path_;
};

// ---- Angles ----

/// Wraps an angle into (-pi, pi].
[[nodiscard]] inline double wrap_angle(double a) {
    double w = std::remainder(a, kTwoPi);
    if (w <= -kPi) w += kTwoPi;
    return w;
}

// ---- Domain types ----

enum class LandmarkKind { BS, VA, SP };

[[nodiscard]] inline std::string_view to_string(LandmarkKind k) {
    switch (k) {
        case LandmarkKind::BS: return "BS";
        case LandmarkKind::VA: return "VA";
        case LandmarkKind::SP: return "SP";
    }
    return "?";
}

[[nodiscard]] inline LandmarkKind parse_kind(std::string_view s) {
    if (s == "BS") return LandmarkKind::BS;
    if (s == "VA") return LandmarkKind::VA;
    if (s == "SP") return LandmarkKind::SP;
    throw Error("unknown landmark kind '" + std::string(s) + "'");
}

/// UE state: planar position, heading and receiver clock bias.
struct UEState {
    double x = 0.0;          ///< [m]
    double y = 0.0;          ///< [m]
    double heading = 0.0;    ///< [rad], kept in (-pi, pi]
    double clock_bias = 0.0; ///< [s]

    [[nodiscard]] Vec4 as_vector() const { return {x, y, heading, clock_bias}; }

    [[nodiscard]] static UEState from_vector(const Vec4& v) {
        return {v(0), v(1), wrap_angle(v(2)), v(3)};
    }

    [[nodiscard]] Vec3 position(double height) const { return {x, y, height}; }

    [[nodiscard]] bool finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(heading) &&
               std::isfinite(clock_bias);
    }

    friend bool operator==(const UEState&, const UEState&) = default;
};

class Landmark {
public:
    Landmark() = default;
    Landmark(Vec3 position, LandmarkKind kind) : position_(position), kind_(kind) {
        if (!position_.allFinite()) throw InvalidScenario("landmark position must be finite");
    }

    [[nodiscard]] const Vec3& position() const { return position_; }
    [[nodiscard]] LandmarkKind kind() const { return kind_; }

private:
    Vec3 position_ = Vec3::Zero();
    LandmarkKind kind_ = LandmarkKind::SP;
};

/// Channel parameters of one propagation path.
struct MeasVector {
    double toa = 0.0;    ///< [s]
    double aoa_az = 0.0; ///< [rad], UE frame
    double aoa_el = 0.0; ///< [rad]
    double aod_az = 0.0; ///< [rad], global frame
    double aod_el = 0.0; ///< [rad]

    [[nodiscard]] Vec5 as_vector() const { return (Vec5() << toa, aoa_az, aoa_el, aod_az, aod_el).finished(); }
    [[nodiscard]] static MeasVector from_vector(const Vec5& v) { return {v(0), v(1), v(2), v(3), v(4)}; }
};

using MeasurementSet = std::vector<MeasVector>;

/// Index of the azimuth entries in a measurement vector.
inline constexpr int kAzimuthRows[2] = {1, 3};

/// Measurement residual with azimuths wrapped into (-pi, pi].
[[nodiscard]] inline Vec5 measurement_residual(const Vec5& z, const Vec5& predicted) {
    Vec5 r = z - predicted;
    for (int i : kAzimuthRows) r(i) = wrap_angle(r(i));
    return r;
}

class MeasNoise {
public:
    /// 0.1 m delay-equivalent and 0.01 rad on every angle.
    MeasNoise() : cov_(Vec5(std::pow(0.1 / kSpeedOfLight, 2), 1e-4, 1e-4, 1e-4, 1e-4).asDiagonal()) {}
    explicit MeasNoise(const Mat5& covariance) : cov_(covariance) {
        const double scale = covariance.cwiseAbs().maxCoeff();
        if (!covariance.allFinite() || (covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw InvalidScenario("measurement covariance must be symmetric");
        // Equilibrate before the eigen test: delay and angle variances differ by ~15 decades.
        const Vec5 d = covariance.diagonal().cwiseAbs().cwiseSqrt().cwiseMax(1e-300).cwiseInverse();
        const Mat5 scaled = d.asDiagonal() * covariance * d.asDiagonal();
        Eigen::SelfAdjointEigenSolver<Mat5> es(scaled);
        if (es.eigenvalues().minCoeff() <= 0.0)
            throw InvalidScenario("measurement covariance must be positive definite");
    }

    /// Independent noise from per-entry standard deviations.
    [[nodiscard]] static MeasNoise from_std(const Vec5& std) {
        return MeasNoise(Mat5(std.cwiseProduct(std).asDiagonal()));
    }

    [[nodiscard]] const Mat5& covariance() const { return cov_; }

private:
    Mat5 cov_;
};

/// Static environment together with the sensing parameters.
struct Scenario {
    Landmark bs{Vec3(0.0, 0.0, 40.0), LandmarkKind::BS};
    std::vector<Landmark> landmarks;
    double ue_height = 0.0;
    double fov_radius_sp = 50.0;
    double p_detect = 0.9;
    double clutter_mean = 1.0;
    double max_range = 200.0; ///< maximum sensing range [m]; fixes the clutter delay window
    MeasNoise meas_noise;

    /// Delay extent x azimuth extents x elevation extents [s rad^4].
    [[nodiscard]] double meas_volume() const {
        return (max_range / kSpeedOfLight) * (kTwoPi * kTwoPi) * (kPi * kPi);
    }

    /// Clutter intensity in measurement space with delay in seconds.
    [[nodiscard]] double clutter_intensity() const { return clutter_mean / meas_volume(); }

    void validate() const {
        if (bs.kind() != LandmarkKind::BS) throw InvalidScenario("bs must have kind BS");
        for (const auto& lm : landmarks) {
            if (lm.kind() == LandmarkKind::BS) throw InvalidScenario("exactly one BS is allowed");
            if (lm.kind() == LandmarkKind::VA && (lm.position() - bs.position()).norm() < 1e-9)
                throw InvalidScenario("virtual anchor coincides with the BS");
        }
        if (!(fov_radius_sp > 0.0)) throw InvalidScenario("fov_radius_sp must be positive");
        if (!(p_detect >= 0.0 && p_detect <= 1.0)) throw InvalidScenario("p_detect must be in [0, 1]");
        if (!(clutter_mean >= 0.0)) throw InvalidScenario("clutter_mean must be non-negative");
        if (!(max_range > 0.0)) throw InvalidScenario("max_range must be positive");
    }
};

}  // namespace rfslam
