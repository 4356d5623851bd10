#pragma once

#include "rfslam/core/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>

/// Geometric channel-parameter model: landmark + UE state -> (TOA, AOA, AOD).
///
/// Two unit conventions are exposed. The public API (`predict_measurement`,
/// `measurement_jacobian`) uses seconds for the delay. The filters work in
/// "range space" where the first entry is c * toa in meters, which keeps
/// innovation covariances well conditioned; `to_range_space` and friends convert.
namespace rfslam::model {

enum class PathStatus { ok, zero_range, vertical_path, degenerate_va, behind_wall };

/// Predicted measurement in range space plus Jacobians w.r.t. landmark position and UE state.
struct PathPrediction {
    Vec5 z = Vec5::Zero();
    Mat53 d_landmark = Mat53::Zero();
    Mat54 d_state = Mat54::Zero();
};

namespace detail {

struct DirectionAngles {
    double az = 0.0;
    double el = 0.0;
    Eigen::RowVector3d d_az = Eigen::RowVector3d::Zero();
    Eigen::RowVector3d d_el = Eigen::RowVector3d::Zero();
};

/// Azimuth/elevation of direction `w` and their gradients w.r.t. w. False when w is vertical.
inline bool direction_angles(const Vec3& w, DirectionAngles& out) {
    const double rho2 = w.x() * w.x() + w.y() * w.y();
    if (!(rho2 > 0.0)) return false;
    const double rho = std::sqrt(rho2);
    const double n2 = rho2 + w.z() * w.z();
    out.az = std::atan2(w.y(), w.x());
    out.el = std::atan2(w.z(), rho);
    out.d_az << -w.y() / rho2, w.x() / rho2, 0.0;
    out.d_el << -w.x() * w.z() / (rho * n2), -w.y() * w.z() / (rho * n2), rho / n2;
    return true;
}

}  // namespace detail

/// Core evaluation. `landmark` is the VA/SP/BS position; `bs` the BS position.
inline PathStatus evaluate_path(const Vec3& landmark, LandmarkKind kind, const UEState& s,
                                const Vec3& bs, double ue_height, PathPrediction& out) {
    using detail::DirectionAngles;
    using detail::direction_angles;

    const Vec3 p = s.position(ue_height);
    DirectionAngles aoa, aod;
    double length = 0.0;
    Eigen::RowVector3d dlen_dlm, dlen_dp;
    Mat3 daod_dlm, daod_dp;  // d(aod direction)/d(.)
    Vec3 w_aoa, w_aod;

    switch (kind) {
        case LandmarkKind::BS:
        case LandmarkKind::VA: {
            const Vec3 e = p - landmark;  // landmark -> UE
            length = e.norm();
            if (!(length > 0.0)) return PathStatus::zero_range;
            dlen_dp = (e / length).transpose();
            dlen_dlm = -dlen_dp;
            w_aoa = -e;  // UE -> (virtual) source
            if (kind == LandmarkKind::BS) {
                w_aod = e;
                daod_dp = Mat3::Identity();
                daod_dlm = -Mat3::Identity();
            } else {
                const Vec3 axis = landmark - bs;
                const double wall = axis.norm();
                if (!(wall > 1e-9)) return PathStatus::degenerate_va;
                const Vec3 n = axis / wall;
                // UE must be on the BS side of the bisector plane so the VA->UE segment crosses it.
                if (n.dot(landmark - p) < 0.5 * wall) return PathStatus::behind_wall;
                const Mat3 householder = Mat3::Identity() - 2.0 * n * n.transpose();
                w_aod = householder * e;  // specular image of the VA->UE ray, BS -> incidence point
                const Mat3 proj = Mat3::Identity() - n * n.transpose();
                const double s_n = n.dot(e);
                daod_dp = householder;
                daod_dlm = -Mat3::Identity() + 2.0 * n * n.transpose() -
                           (2.0 / wall) * (s_n * proj + n * (e.transpose() * proj));
            }
            break;
        }
        case LandmarkKind::SP: {
            const Vec3 out_leg = landmark - bs;
            const Vec3 in_leg = p - landmark;
            const double l1 = out_leg.norm();
            const double l2 = in_leg.norm();
            if (!(l1 > 0.0) || !(l2 > 0.0)) return PathStatus::zero_range;
            length = l1 + l2;
            dlen_dlm = (out_leg / l1 - in_leg / l2).transpose();
            dlen_dp = (in_leg / l2).transpose();
            w_aoa = -in_leg;
            w_aod = out_leg;
            daod_dlm = Mat3::Identity();
            daod_dp = Mat3::Zero();
            break;
        }
    }

    if (!direction_angles(w_aoa, aoa) || !direction_angles(w_aod, aod)) return PathStatus::vertical_path;

    out.z << length + kSpeedOfLight * s.clock_bias, wrap_angle(aoa.az - s.heading), aoa.el, aod.az, aod.el;

    // d(w_aoa)/d(landmark) = +I and d(w_aoa)/dp = -I for all kinds.
    out.d_landmark.row(0) = dlen_dlm;
    out.d_landmark.row(1) = aoa.d_az;
    out.d_landmark.row(2) = aoa.d_el;
    out.d_landmark.row(3) = aod.d_az * daod_dlm;
    out.d_landmark.row(4) = aod.d_el * daod_dlm;

    const Eigen::RowVector3d daoa_az_dp = -aoa.d_az;
    const Eigen::RowVector3d daoa_el_dp = -aoa.d_el;
    const Eigen::RowVector3d daod_az_dp = aod.d_az * daod_dp;
    const Eigen::RowVector3d daod_el_dp = aod.d_el * daod_dp;
    out.d_state.setZero();
    out.d_state.block<1, 2>(0, 0) = dlen_dp.head<2>();
    out.d_state.block<1, 2>(1, 0) = daoa_az_dp.head<2>();
    out.d_state.block<1, 2>(2, 0) = daoa_el_dp.head<2>();
    out.d_state.block<1, 2>(3, 0) = daod_az_dp.head<2>();
    out.d_state.block<1, 2>(4, 0) = daod_el_dp.head<2>();
    out.d_state(1, 2) = -1.0;
    out.d_state(0, 3) = kSpeedOfLight;
    return PathStatus::ok;
}

/// Existence checks of `evaluate_path` without computing the prediction.
inline PathStatus path_status(const Vec3& landmark, LandmarkKind kind, const UEState& s, const Vec3& bs,
                              double ue_height) {
    const Vec3 p = s.position(ue_height);
    auto horizontal = [](const Vec3& w) { return w.x() * w.x() + w.y() * w.y() > 0.0; };
    if (kind == LandmarkKind::SP) {
        const Vec3 out_leg = landmark - bs;
        const Vec3 in_leg = p - landmark;
        if (!(out_leg.norm() > 0.0) || !(in_leg.norm() > 0.0)) return PathStatus::zero_range;
        return horizontal(in_leg) && horizontal(out_leg) ? PathStatus::ok : PathStatus::vertical_path;
    }
    const Vec3 e = p - landmark;
    if (!(e.norm() > 0.0)) return PathStatus::zero_range;
    Vec3 w_aod = e;
    if (kind == LandmarkKind::VA) {
        const Vec3 axis = landmark - bs;
        const double wall = axis.norm();
        if (!(wall > 1e-9)) return PathStatus::degenerate_va;
        const Vec3 n = axis / wall;
        if (n.dot(landmark - p) < 0.5 * wall) return PathStatus::behind_wall;
        w_aod = e - 2.0 * n * n.dot(e);
    }
    return horizontal(e) && horizontal(w_aod) ? PathStatus::ok : PathStatus::vertical_path;
}

[[noreturn]] inline void throw_path_error(PathStatus st) {
    switch (st) {
        case PathStatus::degenerate_va: throw InvalidScenario("virtual anchor coincides with the BS");
        case PathStatus::behind_wall: throw InvalidGeometry("UE is behind the reflecting surface of this VA");
        case PathStatus::zero_range: throw InvalidGeometry("zero-length propagation leg");
        case PathStatus::vertical_path: throw InvalidGeometry("vertical propagation direction, azimuth undefined");
        case PathStatus::ok: break;
    }
    throw InvalidGeometry("unknown path status");
}

/// Range-space prediction; empty when the path does not exist.
[[nodiscard]] inline std::optional<PathPrediction> try_predict(const Vec3& landmark, LandmarkKind kind,
                                                               const UEState& s, const Scenario& sc) {
    PathPrediction out;
    if (evaluate_path(landmark, kind, s, sc.bs.position(), sc.ue_height, out) != PathStatus::ok)
        return std::nullopt;
    return out;
}

// ---- Unit conversions between the public (seconds) and filter (meters) delay ----

[[nodiscard]] inline Vec5 to_range_space(const MeasVector& z) {
    Vec5 v = z.as_vector();
    v(0) *= kSpeedOfLight;
    return v;
}

[[nodiscard]] inline MeasVector from_range_space(const Vec5& v) {
    MeasVector z = MeasVector::from_vector(v);
    z.toa = v(0) / kSpeedOfLight;
    return z;
}

[[nodiscard]] inline Mat5 range_space_noise(const Scenario& sc) {
    Vec5 scale = Vec5::Ones();
    scale(0) = kSpeedOfLight;
    return scale.asDiagonal() * sc.meas_noise.covariance() * scale.asDiagonal();
}

/// Clutter intensity with the delay axis expressed in meters.
[[nodiscard]] inline double range_space_clutter_intensity(const Scenario& sc) {
    return sc.clutter_intensity() / kSpeedOfLight;
}

// ---- Public operations ----

/// Noiseless channel parameters of the path through `lm` seen from state `s`.
/// Throws InvalidScenario for a VA on top of the BS and InvalidGeometry when the path does not exist.
[[nodiscard]] inline MeasVector predict_measurement(const Landmark& lm, const UEState& s, const Scenario& sc) {
    PathPrediction out;
    const PathStatus st = evaluate_path(lm.position(), lm.kind(), s, sc.bs.position(), sc.ue_height, out);
    if (st != PathStatus::ok) throw_path_error(st);
    return from_range_space(out.z);
}

struct MeasurementJacobian {
    Mat53 landmark; ///< d h / d landmark position
    Mat54 state;    ///< d h / d (x, y, heading, clock_bias)
};

/// Jacobians of `predict_measurement` with the delay row in seconds.
[[nodiscard]] inline MeasurementJacobian measurement_jacobian(const Landmark& lm, const UEState& s,
                                                              const Scenario& sc) {
    PathPrediction out;
    const PathStatus st = evaluate_path(lm.position(), lm.kind(), s, sc.bs.position(), sc.ue_height, out);
    if (st != PathStatus::ok) throw_path_error(st);
    MeasurementJacobian j{out.d_landmark, out.d_state};
    j.landmark.row(0) /= kSpeedOfLight;
    j.state.row(0) /= kSpeedOfLight;
    if (!j.landmark.allFinite() || !j.state.allFinite()) throw InvalidGeometry("non-finite Jacobian");
    return j;
}

/// p_D of a landmark of `kind` at `position`: BS and VAs are always visible,
/// SPs only within the horizontal FoV radius of the UE.
[[nodiscard]] inline double detection_probability(LandmarkKind kind, const Vec3& position, const UEState& s,
                                                  const Scenario& sc) {
    if (kind != LandmarkKind::SP) return sc.p_detect;
    const double dx = position.x() - s.x;
    const double dy = position.y() - s.y;
    return std::hypot(dx, dy) <= sc.fov_radius_sp ? sc.p_detect : 0.0;
}

[[nodiscard]] inline double detection_probability(const Landmark& lm, const UEState& s, const Scenario& sc) {
    return detection_probability(lm.kind(), lm.position(), s, sc);
}

/// p_D that also accounts for the path existing at all; zero when it does not.
[[nodiscard]] inline double path_detection_probability(LandmarkKind kind, const Vec3& position, const UEState& s,
                                                       const Scenario& sc) {
    if (path_status(position, kind, s, sc.bs.position(), sc.ue_height) != PathStatus::ok) return 0.0;
    return detection_probability(kind, position, s, sc);
}

}  // namespace rfslam::model
