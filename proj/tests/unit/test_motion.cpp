#include "rfslam/core/random.hpp"
#include "rfslam/motion/motion.hpp"

#include <gtest/gtest.h>

using namespace rfslam;
using motion::ControlInput;
using motion::MotionNoise;

namespace {

const UEState kStart{70.74, 0.0, kPi / 2.0, 300.0 / kSpeedOfLight};

}  // namespace

TEST(Motion, CoordinatedTurnStep) {
    const ControlInput u;
    const UEState next = motion::propagate_mean(kStart, u, 0.5);
    const double turn = u.turn_rate * 0.5;
    const double r = u.speed / u.turn_rate;
    // Circle of radius v/omega centered at (70.74 - r, 0).
    EXPECT_NEAR(next.x, 70.74 - r + r * std::cos(turn), 1e-9);
    EXPECT_NEAR(next.y, r * std::sin(turn), 1e-9);
    EXPECT_NEAR(next.heading, kPi / 2.0 + turn, 1e-15);
    EXPECT_EQ(next.clock_bias, kStart.clock_bias);
}

TEST(Motion, ZeroSpeedStaysPut) {
    const UEState next = motion::propagate_mean(kStart, ControlInput{0.0, kPi / 10.0}, 0.5);
    EXPECT_EQ(next.x, kStart.x);
    EXPECT_EQ(next.y, kStart.y);
}

TEST(Motion, TinyTurnRateIsStraightLine) {
    const UEState a = motion::propagate_mean(kStart, ControlInput{22.22, 1e-12}, 0.5);
    const UEState b = motion::propagate_mean(kStart, ControlInput{22.22, 0.0}, 0.5);
    EXPECT_NEAR(a.x, b.x, 1e-9);
    EXPECT_NEAR(a.y, b.y, 1e-9);
    EXPECT_NEAR(b.y, 11.11, 1e-12);
}

TEST(Motion, FullCircleReturnsToStart) {
    UEState s = kStart;
    const ControlInput u;
    for (int k = 0; k < 40; ++k) s = motion::propagate_mean(s, u, 0.5);
    EXPECT_NEAR(s.x, kStart.x, 1e-6);
    EXPECT_NEAR(s.y, kStart.y, 1e-6);
    EXPECT_NEAR(wrap_angle(s.heading - kStart.heading), 0.0, 1e-9);
}

TEST(Motion, SamplingMoments) {
    const MotionNoise noise;
    const ControlInput u;
    Rng rng = make_rng(3, {});
    const int n = 100000;
    const UEState mean = motion::propagate_mean(kStart, u, noise.dt());
    Vec4 sum = Vec4::Zero();
    Mat4 outer = Mat4::Zero();
    for (int i = 0; i < n; ++i) {
        const Vec4 r = motion::state_residual(motion::sample_transition(kStart, u, noise, rng), mean);
        sum += r;
        outer += r * r.transpose();
    }
    const Vec4 m = sum / n;
    const Mat4 cov = outer / n - m * m.transpose();
    const Mat4& q = noise.covariance();
    for (int i = 0; i < 4; ++i) EXPECT_LE(std::abs(m(i)), 4.0 * std::sqrt(q(i, i) / n));
    const Vec4 d = q.diagonal().cwiseSqrt().cwiseInverse();
    const Mat4 rel = d.asDiagonal() * (cov - q) * d.asDiagonal();
    EXPECT_LE(rel.norm(), 0.05 * 2.0);  // normalized Frobenius of a unit-diagonal 4x4 is 2
}

TEST(Motion, TransitionLogPdf) {
    const MotionNoise noise;
    const ControlInput u;
    const UEState mean = motion::propagate_mean(kStart, u, noise.dt());
    const double expected = -0.5 * std::log(std::pow(kTwoPi, 4) * noise.covariance().determinant());
    EXPECT_NEAR(motion::transition_logpdf(mean, kStart, u, noise), expected, 1e-9 * std::abs(expected));
    UEState wrapped = mean;
    wrapped.heading += kTwoPi;
    EXPECT_NEAR(motion::transition_logpdf(wrapped, kStart, u, noise), expected, 1e-9 * std::abs(expected));
}

TEST(Motion, InvalidInputs) {
    EXPECT_THROW(MotionNoise(Mat4::Identity(), 0.0), ConfigError);
    EXPECT_THROW((ControlInput{-1.0, 0.0}.validate()), ConfigError);
    const MotionNoise singular(Mat4::Zero(), 0.5);
    EXPECT_THROW((void)motion::transition_logpdf(kStart, kStart, ControlInput{}, singular), ConfigError);
}
