#include "common/bp_oracle.hpp"
#include "rfslam/bp/bp_slam.hpp"
#include "rfslam/filters/pmbm.hpp"

#include <gtest/gtest.h>

using namespace rfslam;
using namespace rfslam::bp;

namespace {

const UEState kPose{10.0, 5.0, 0.3, 1e-7};

DaMessages two_by_two(double a, double b) {
    DaMessages da;
    da.detect.resize(2, 2);
    da.detect << a, b, b, a;
    da.missed = Eigen::VectorXd::Constant(2, 1.0);
    da.new_mass = Eigen::VectorXd::Zero(2);
    da.clutter = 1.0;
    return da;
}

PredictionMessages single(const AugmentedLandmark& lm, std::size_t n_z) {
    PredictionMessages m;
    m.particles = {kPose};
    m.landmarks = {lm};
    m.births.assign(n_z, {});
    return m;
}

}  // namespace

TEST(Bp, StaticLandmarksPassThrough) {
    BpBelief prior;
    prior.particles = {kPose, kPose};
    prior.landmarks = {AugmentedLandmark{Vec3(1, 2, 3), 2.0 * Mat3::Identity(), LandmarkKind::VA, 0.4}};
    const auto none = [](const std::vector<UEState>&) { return std::vector<std::vector<filters::GaussianComponent>>{}; };
    const auto m = predict_messages(prior, motion::ControlInput{}, motion::MotionNoise{}, 1, 1, true, none);
    EXPECT_EQ(m.landmarks[0].mean, prior.landmarks[0].mean);
    EXPECT_EQ(m.landmarks[0].existence, 0.4);
    // Zero process noise moves every particle by the same deterministic step.
    const auto still = predict_messages(prior, motion::ControlInput{}, motion::MotionNoise(Mat4::Zero(), 0.5), 1, 1,
                                        true, none);
    const UEState expected = motion::propagate_mean(kPose, motion::ControlInput{}, 0.5);
    for (const auto& p : still.particles) EXPECT_EQ(p, expected);
}

TEST(Bp, DetectionMessagesEdgeCases) {
    Scenario sc;
    const Landmark va(Vec3(200.0, 0.0, 40.0), LandmarkKind::VA);
    const Vec5 z = model::to_range_space(model::predict_measurement(va, kPose, sc));
    {
        Scenario blind = sc;
        blind.p_detect = 0.0;
        const auto da = da_messages(single({va.position(), Mat3::Identity(), LandmarkKind::VA, 0.8}, 1), {z},
                                    filters::SensorModel(blind));
        EXPECT_EQ(da.detect(0, 0), 0.0);
        EXPECT_NEAR(da.missed(0), 1.0, 1e-15);
    }
    {
        const auto da = da_messages(single({va.position(), Mat3::Identity(), LandmarkKind::VA, 0.0}, 1), {z},
                                    filters::SensorModel(sc));
        EXPECT_EQ(da.detect(0, 0), 0.0);
        EXPECT_EQ(da.missed(0), 1.0);
    }
    {
        const filters::SensorModel sm(sc);
        const AugmentedLandmark lm{va.position(), Mat3::Identity(), LandmarkKind::VA, 0.8};
        const auto da = da_messages(single(lm, 1), {z}, sm);
        const auto t = filters::ekf_terms(lm.mean, lm.cov, lm.kind, kPose, sm);
        EXPECT_NEAR(da.detect(0, 0), 0.8 * 0.9 * std::exp(t.log_likelihood(z)), 1e-12 * da.detect(0, 0));
        EXPECT_NEAR(da.missed(0), 0.8 * 0.1 + 0.2, 1e-15);
    }
    PredictionMessages empty;
    EXPECT_THROW((void)da_messages(empty, {}, filters::SensorModel{}), Error);
}

TEST(Bp, SinglePairMatchesEnumeration) {
    DaMessages da;
    da.detect = Eigen::MatrixXd::Constant(1, 1, 3.0);
    da.missed = Eigen::VectorXd::Constant(1, 0.5);
    da.new_mass = Eigen::VectorXd::Constant(1, 0.25);
    da.clutter = 0.75;
    const auto ab = loopy_da(da);
    // Hypotheses: detected (3) or missed with the measurement from clutter/new (0.5 * 1.0).
    EXPECT_NEAR(ab.landmark(0, 1), 3.0 / 3.5, 1e-12);
    EXPECT_NEAR(ab.landmark(0, 0), 0.5 / 3.5, 1e-12);
    EXPECT_NEAR(ab.measurement(0, 1), 3.0 / 3.5, 1e-12);
}

TEST(Bp, SeparatedPairsAreDiagonal) {
    const auto ab = loopy_da(two_by_two(1e3, 1e-9));
    for (int i = 0; i < 2; ++i) {
        EXPECT_GT(ab.landmark(i, i + 1), 0.99);
        EXPECT_LT(ab.landmark(i, 2 - i), 1e-6);
        EXPECT_NEAR(ab.landmark.row(i).sum(), 1.0, 1e-12);
        EXPECT_NEAR(ab.measurement.row(i).sum(), 1.0, 1e-12);
    }
}

TEST(Bp, SymmetricAmbiguityIsUniform) {
    const auto ab = loopy_da(two_by_two(5.0, 5.0));
    EXPECT_NEAR(ab.landmark(0, 1), ab.landmark(0, 2), 1e-12);
    EXPECT_NEAR(ab.landmark(1, 1), ab.landmark(1, 2), 1e-12);
    EXPECT_THROW((void)loopy_da(two_by_two(1, 1), 0), Error);
}

TEST(Bp, PureMisdetectionLowersExistence) {
    const filters::SensorModel sm{Scenario{}};
    const AugmentedLandmark lm{Vec3(200.0, 0.0, 40.0), Mat3::Identity(), LandmarkKind::VA, 0.8};
    const auto m = single(lm, 0);
    const auto da = da_messages(m, {}, sm);
    const auto upd = measurement_update(m, da, loopy_da(da), {}, sm);
    EXPECT_EQ(upd.landmarks[0].mean, lm.mean);
    EXPECT_NEAR(upd.landmarks[0].existence, 0.8 * 0.1 / (1.0 - 0.8 * 0.9), 1e-12);
}

TEST(Bp, ExistenceMatchesBernoulliAlgebra) {
    const Scenario sc;
    const filters::SensorModel sm(sc);
    const Landmark va(Vec3(200.0, 0.0, 40.0), LandmarkKind::VA);
    filters::Bernoulli b;
    b.r = 0.6;
    b.mean = va.position() + Vec3(0.4, -0.2, 0.1);
    b.cov = Mat3::Identity();
    b.kind = LandmarkKind::VA;
    const Vec5 z = model::to_range_space(model::predict_measurement(va, kPose, sc));
    const std::vector<filters::GaussianComponent> birth{{1e-3, va.position(), 4.0 * Mat3::Identity(), LandmarkKind::VA}};

    PredictionMessages m = single({b.mean, b.cov, b.kind, b.r}, 1);
    m.births = {birth};
    const auto da = da_messages(m, {z}, sm);
    const auto upd = measurement_update(m, da, loopy_da(da), {z}, sm);

    filters::PoissonPart ppp;
    ppp.components = birth;
    const auto detected = filters::redetect_bernoulli(b, z, kPose, sm);
    const auto missed = filters::misdetect_bernoulli(b, kPose, sm);
    const auto fresh = filters::new_bernoulli(z, ppp, kPose, sm);
    const double w1 = std::exp(detected.local_log_weight);
    const double w0 = std::exp(missed.local_log_weight + fresh.local_log_weight);
    const double expected = (w1 * 1.0 + w0 * missed.r) / (w1 + w0);
    EXPECT_NEAR(upd.landmarks[0].existence, expected, 1e-9);
    EXPECT_NEAR(upd.landmarks[1].existence, w0 / (w1 + w0) * fresh.r, 1e-9);
}

TEST(Bp, PermutationInvariantInMeasurements) {
    const Scenario sc;
    const filters::SensorModel sm(sc);
    const Landmark a(Vec3(200.0, 0.0, 40.0), LandmarkKind::VA), b(Vec3(0.0, 200.0, 40.0), LandmarkKind::VA);
    const Vec5 za = model::to_range_space(model::predict_measurement(a, kPose, sc));
    const Vec5 zb = model::to_range_space(model::predict_measurement(b, kPose, sc));
    PredictionMessages m;
    m.particles = {kPose, UEState{10.2, 5.1, 0.301, 1e-7}};
    m.landmarks = {{a.position(), Mat3::Identity(), LandmarkKind::VA, 0.7}, {b.position(), Mat3::Identity(), LandmarkKind::VA, 0.5}};
    m.births.assign(2, {});
    const auto da1 = da_messages(m, {za, zb}, sm);
    const auto u1 = measurement_update(m, da1, loopy_da(da1), {za, zb}, sm);
    const auto da2 = da_messages(m, {zb, za}, sm);
    const auto u2 = measurement_update(m, da2, loopy_da(da2), {zb, za}, sm);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_NEAR(u1.landmarks[i].existence, u2.landmarks[i].existence, 1e-12);
        EXPECT_LE((u1.landmarks[i].mean - u2.landmarks[i].mean).norm(), 1e-9);
        EXPECT_NEAR(u1.particle_log_weights[i], u2.particle_log_weights[i], 1e-9);
    }
}

TEST(Bp, ZeroClutterStaysFinite) {
    Scenario sc;
    sc.clutter_mean = 0.0;
    const filters::SensorModel sm(sc);
    const Landmark va(Vec3(200.0, 0.0, 40.0), LandmarkKind::VA);
    const Vec5 z = model::to_range_space(model::predict_measurement(va, kPose, sc));
    PredictionMessages m = single({va.position(), Mat3::Identity(), LandmarkKind::VA, 0.5}, 1);
    m.particles = {kPose, UEState{10.5, 5.0, 0.3, 1e-7}};
    const auto da = da_messages(m, {z}, sm);
    const auto upd = measurement_update(m, da, loopy_da(da), {z}, sm);
    EXPECT_FALSE(upd.diverged);
    EXPECT_GT(upd.particle_log_weights[0], upd.particle_log_weights[1]);
    EXPECT_NEAR(upd.landmarks[0].existence, 1.0, 1e-12);
}

TEST(Bp, TreeExactnessSmall) {
    for (const auto& c : oracle::bp_tree_exactness(2000, 5)) EXPECT_TRUE(c.passed()) << c.name << " exact " << c.exact << " mean " << c.mean << " sd " << c.sd;
}

TEST(Bp, GaussHermiteMoments) {
    const auto [x, w] = oracle::gauss_hermite(10);
    EXPECT_NEAR(w.sum(), 1.0, 1e-14);
    EXPECT_NEAR(w.dot(x), 0.0, 1e-13);
    EXPECT_NEAR(w.dot(x.cwiseProduct(x)), 1.0, 1e-12);
    EXPECT_NEAR(w.dot(x.array().pow(4).matrix()), 3.0, 1e-11);
}

TEST(Bp, DiscProbability) {
    EXPECT_NEAR(oracle::disc_probability(Vec2(0, 0), 1.0, 1.0, Vec2(0, 0), 1.0), 1.0 - std::exp(-0.5), 1e-7);
    // On the rim the curvature shifts the mass inward by sigma^2 / (2 R).
    const double rim = 0.5 - 0.3 / (2.0 * 50.0) / std::sqrt(kTwoPi);
    EXPECT_NEAR(oracle::disc_probability(Vec2(0, 0), 0.3, 0.3, Vec2(50, 0), 50.0), rim, 2e-5);
    EXPECT_NEAR(oracle::disc_probability(Vec2(0, 0), 0.3, 0.3, Vec2(60, 0), 50.0), 0.0, 1e-15);
}
