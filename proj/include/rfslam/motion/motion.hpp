#pragma once

#include "rfslam/core/gaussian.hpp"
#include "rfslam/core/types.hpp"

#include <cmath>

namespace rfslam::motion {

/// Known control: forward speed and turn rate.
struct ControlInput {
    double speed = 22.22;           ///< [m/s]
    double turn_rate = kPi / 10.0;  ///< [rad/s]

    void validate() const {
        if (!std::isfinite(speed) || speed < 0.0) throw ConfigError("control.speed", "must be finite and >= 0");
        if (!std::isfinite(turn_rate)) throw ConfigError("control.turn_rate", "must be finite");
    }
};

/// Below this turn rate the straight-line limit of the coordinated turn is used.
inline constexpr double kStraightLineTurnRate = 1e-9;

/// Additive Gaussian process noise on (x, y, heading, clock_bias) and the sampling interval.
class MotionNoise {
public:
    MotionNoise() : MotionNoise(default_covariance(), 0.5) {}

    MotionNoise(const Mat4& covariance, double dt) : cov_(covariance), dt_(dt), sampler_(covariance, "motion.q") {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("motion.dt", "must be positive");
    }

    [[nodiscard]] static Mat4 default_covariance() {
        const Vec4 std_dev(0.2, 0.2, 0.0035, 0.2 / kSpeedOfLight);
        return Mat4(std_dev.cwiseProduct(std_dev).asDiagonal());
    }

    [[nodiscard]] const Mat4& covariance() const { return cov_; }
    [[nodiscard]] double dt() const { return dt_; }
    [[nodiscard]] const GaussianSampler<4>& sampler() const { return sampler_; }

private:
    Mat4 cov_;
    double dt_;
    GaussianSampler<4> sampler_;
};

/// Coordinated-turn mean propagation; the clock bias is carried unchanged.
[[nodiscard]] inline UEState propagate_mean(const UEState& s, const ControlInput& u, double dt) {
    UEState next = s;
    const double turn = u.turn_rate * dt;
    if (std::abs(u.turn_rate) < kStraightLineTurnRate) {
        next.x = s.x + u.speed * dt * std::cos(s.heading);
        next.y = s.y + u.speed * dt * std::sin(s.heading);
    } else {
        const double chord = 2.0 * u.speed / u.turn_rate * std::sin(0.5 * turn);
        next.x = s.x + chord * std::cos(s.heading + 0.5 * turn);
        next.y = s.y + chord * std::sin(s.heading + 0.5 * turn);
    }
    next.heading = wrap_angle(s.heading + turn);
    return next;
}

/// One draw from the transition density.
template <typename Rng>
[[nodiscard]] UEState sample_transition(const UEState& s, const ControlInput& u, const MotionNoise& noise, Rng& rng) {
    const UEState mean = propagate_mean(s, u, noise.dt());
    return UEState::from_vector(mean.as_vector() + noise.sampler()(rng));
}

/// Residual next - prev_mean with the heading wrapped.
[[nodiscard]] inline Vec4 state_residual(const UEState& a, const UEState& b) {
    Vec4 r = a.as_vector() - b.as_vector();
    r(2) = wrap_angle(r(2));
    return r;
}

/// log N(next; propagate_mean(prev, u), Q). Throws ConfigError for a singular Q.
[[nodiscard]] inline double transition_logpdf(const UEState& next, const UEState& prev, const ControlInput& u,
                                              const MotionNoise& noise) {
    const auto g = GaussianDensity<4>::make(noise.covariance());
    if (!g) throw ConfigError("motion.q", "singular process noise cannot be evaluated as a density");
    return g->log_pdf(state_residual(next, propagate_mean(prev, u, noise.dt())));
}

}  // namespace rfslam::motion
