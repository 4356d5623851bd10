#pragma once

#include "rfslam/core/gaussian.hpp"
#include "rfslam/core/types.hpp"
#include "rfslam/model/measurement.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace rfslam::filters {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// One weighted Gaussian over a landmark position.
struct GaussianComponent {
    double weight = 0.0;
    Vec3 mean = Vec3::Zero();
    Mat3 cov = Mat3::Identity();
    LandmarkKind kind = LandmarkKind::VA;
};

/// Point estimate reported by a map filter.
struct EstimatedLandmark {
    Landmark landmark;
    double weight = 0.0;
};

/// Sensor quantities shared by all map filters, with the delay axis in meters.
struct SensorModel {
    Scenario scenario;
    Mat5 noise;            ///< R in range space
    double clutter = 0.0;  ///< clutter intensity in range space

    SensorModel() : SensorModel(Scenario{}) {}
    explicit SensorModel(const Scenario& sc)
        : scenario(sc), noise(model::range_space_noise(sc)), clutter(model::range_space_clutter_intensity(sc)) {}
};

[[nodiscard]] inline std::vector<Vec5> to_range_space(const MeasurementSet& z) {
    std::vector<Vec5> out;
    out.reserve(z.size());
    for (const auto& m : z) out.push_back(model::to_range_space(m));
    return out;
}

/// Log-sum-exp of a set of log values; -inf for an empty or all -inf set.
[[nodiscard]] inline double log_sum_exp(const std::vector<double>& v) {
    double mx = kNegInf;
    for (double x : v) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - mx);
    return mx + std::log(acc);
}

[[nodiscard]] inline Mat3 symmetrize(const Mat3& m) { return 0.5 * (m + m.transpose()); }

/// Linearized measurement update of one landmark Gaussian at a fixed UE state.
/// Everything that does not depend on the measurement value is computed once.
struct EkfTerms {
    Vec5 predicted = Vec5::Zero();
    Mat53 jacobian = Mat53::Zero();
    Eigen::Matrix<double, 3, 5> gain = Eigen::Matrix<double, 3, 5>::Zero();
    Mat3 posterior_cov = Mat3::Zero();
    double p_detect = 0.0;
    std::optional<GaussianDensity<5>> innovation;

    /// True when the landmark can produce a measurement here.
    [[nodiscard]] bool usable() const { return p_detect > 0.0 && innovation.has_value(); }

    [[nodiscard]] Vec5 residual(const Vec5& z) const { return measurement_residual(z, predicted); }

    [[nodiscard]] double log_likelihood(const Vec5& z) const {
        return innovation ? innovation->log_pdf(residual(z)) : kNegInf;
    }

    [[nodiscard]] Vec3 posterior_mean(const Vec3& prior_mean, const Vec5& z) const {
        return prior_mean + gain * residual(z);
    }
};

/// EKF terms of a landmark at (mean, cov) seen from `s`. A path that does not exist has p_detect = 0.
[[nodiscard]] inline EkfTerms ekf_terms(const Vec3& mean, const Mat3& cov, LandmarkKind kind, const UEState& s,
                                        const SensorModel& sm) {
    EkfTerms t;
    model::PathPrediction path;
    const Scenario& sc = sm.scenario;
    if (model::evaluate_path(mean, kind, s, sc.bs.position(), sc.ue_height, path) != model::PathStatus::ok)
        return t;
    t.p_detect = model::detection_probability(kind, mean, s, sc);
    t.predicted = path.z;
    t.jacobian = path.d_landmark;
    const Eigen::Matrix<double, 5, 3> hp = t.jacobian * cov;
    const Mat5 innovation_cov = hp * t.jacobian.transpose() + sm.noise;
    t.innovation = GaussianDensity<5>::make(0.5 * (innovation_cov + innovation_cov.transpose()));
    if (!t.innovation) return t;
    t.gain = t.innovation->solve(hp).transpose();
    const Mat3 a = Mat3::Identity() - t.gain * t.jacobian;
    t.posterior_cov = symmetrize(a * cov * a.transpose() + t.gain * sm.noise * t.gain.transpose());
    return t;
}

[[nodiscard]] inline EkfTerms ekf_terms(const GaussianComponent& c, const UEState& s, const SensorModel& sm) {
    return ekf_terms(c.mean, c.cov, c.kind, s, sm);
}

/// Moment-matched single Gaussian of a weighted mixture. Weights need not be normalized.
struct MomentAccumulator {
    double total = 0.0;
    Vec3 first = Vec3::Zero();
    Mat3 second = Mat3::Zero();

    void add(double w, const Vec3& mean, const Mat3& cov) {
        if (!(w > 0.0)) return;
        total += w;
        first += w * mean;
        second += w * (cov + mean * mean.transpose());
    }

    [[nodiscard]] Vec3 mean() const { return first / total; }
    [[nodiscard]] Mat3 cov() const {
        const Vec3 m = mean();
        return symmetrize(second / total - m * m.transpose());
    }
};

// ---- Measurement-driven birth ----

struct BirthConfig {
    double intensity = 1.5e-5;  ///< weight of each birth component
    double cov_scale = 10.0;    ///< inflation of the single-measurement information bound
};

/// Unit direction from azimuth/elevation.
[[nodiscard]] inline Vec3 unit_direction(double az, double el) {
    return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

/// Landmark position of `kind` consistent with the delay and arrival angle of `z` (range space) seen from `s`.
[[nodiscard]] inline std::optional<Vec3> invert_measurement(const Vec5& z, LandmarkKind kind, const UEState& s,
                                                            const Scenario& sc) {
    const Vec3 p = s.position(sc.ue_height);
    const double length = z(0) - kSpeedOfLight * s.clock_bias;
    if (!(length > 0.0)) return std::nullopt;
    const Vec3 u = unit_direction(z(1) + s.heading, z(2));
    switch (kind) {
        case LandmarkKind::VA: return Vec3(p + length * u);
        case LandmarkKind::SP: {
            const Vec3 w = p - sc.bs.position();
            const double denom = 2.0 * (length + w.dot(u));
            if (!(denom > 0.0)) return std::nullopt;
            const double r = (length * length - w.squaredNorm()) / denom;
            if (!(r > 0.0)) return std::nullopt;
            return Vec3(p + r * u);
        }
        case LandmarkKind::BS: return std::nullopt;
    }
    return std::nullopt;
}

/// One VA and one SP birth component per measurement, placed by inversion with covariance
/// cov_scale * (H^T R^-1 H)^-1. Candidates that cannot be observed from `s` are skipped.
/// The weight is the initial intensity thinned by (1 - p_D) at every earlier pose in `history`.
[[nodiscard]] inline std::vector<GaussianComponent> measurement_births(const std::vector<Vec5>& z, const UEState& s,
                                                                       const SensorModel& sm, const BirthConfig& cfg,
                                                                       const std::vector<UEState>& history = {}) {
    std::vector<GaussianComponent> out;
    if (!(cfg.intensity > 0.0)) return out;
    const Scenario& sc = sm.scenario;
    const Mat5 info = sm.noise.inverse();
    for (const Vec5& zi : z) {
        for (LandmarkKind kind : {LandmarkKind::VA, LandmarkKind::SP}) {
            const auto pos = invert_measurement(zi, kind, s, sc);
            if (!pos) continue;
            if (model::detection_probability(kind, *pos, s, sc) <= 0.0) continue;
            double weight = cfg.intensity;
            for (const UEState& past : history) weight *= 1.0 - model::path_detection_probability(kind, *pos, past, sc);
            if (!(weight > 0.0)) continue;
            model::PathPrediction path;
            if (model::evaluate_path(*pos, kind, s, sc.bs.position(), sc.ue_height, path) != model::PathStatus::ok)
                continue;
            const Mat3 fisher = path.d_landmark.transpose() * info * path.d_landmark;
            Eigen::LDLT<Mat3> ldlt(fisher);
            if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) continue;
            const Mat3 cov = symmetrize(cfg.cov_scale * ldlt.solve(Mat3::Identity()));
            if (!cov.allFinite()) continue;
            out.push_back({weight, *pos, cov, kind});
        }
    }
    return out;
}

/// Predicted range-space measurement and density of a perfectly known landmark (the BS).
struct KnownLandmarkTerms {
    double p_detect = 0.0;
    Vec5 predicted = Vec5::Zero();
    std::optional<GaussianDensity<5>> density;

    [[nodiscard]] double log_likelihood(const Vec5& z) const {
        return density ? density->log_pdf(measurement_residual(z, predicted)) : kNegInf;
    }
};

[[nodiscard]] inline KnownLandmarkTerms known_landmark_terms(const Landmark& lm, const UEState& s,
                                                             const SensorModel& sm) {
    KnownLandmarkTerms t;
    const auto path = model::try_predict(lm.position(), lm.kind(), s, sm.scenario);
    if (!path) return t;
    t.p_detect = model::detection_probability(lm, s, sm.scenario);
    t.predicted = path->z;
    t.density = GaussianDensity<5>::make(sm.noise);
    return t;
}

}  // namespace rfslam::filters
