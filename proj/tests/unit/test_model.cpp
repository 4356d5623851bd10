#include "common/oracles.hpp"
#include "rfslam/model/measurement.hpp"

#include <gtest/gtest.h>

using namespace rfslam;

namespace {

Scenario origin_bs() {
    Scenario sc;
    sc.bs = Landmark(Vec3::Zero(), LandmarkKind::BS);
    sc.ue_height = 0.0;
    return sc;
}

}  // namespace

TEST(Model, LineOfSightFromOrigin) {
    const Scenario sc = origin_bs();
    const UEState s{100.0, 0.0, 0.0, 0.0};
    const MeasVector z = model::predict_measurement(sc.bs, s, sc);
    EXPECT_NEAR(z.toa, 100.0 / kSpeedOfLight, 1e-18);
    EXPECT_NEAR(z.aod_az, 0.0, 1e-12);
    EXPECT_NEAR(z.aod_el, 0.0, 1e-12);
    EXPECT_NEAR(std::abs(z.aoa_az), kPi, 1e-12);
    EXPECT_NEAR(z.aoa_el, 0.0, 1e-12);
}

TEST(Model, VirtualAnchorPathLength) {
    const Scenario sc = origin_bs();
    const Landmark va(Vec3(0.0, -100.0, 0.0), LandmarkKind::VA);
    const UEState s{50.0, 0.0, 0.0, 0.0};
    const MeasVector z = model::predict_measurement(va, s, sc);
    EXPECT_NEAR(z.toa * kSpeedOfLight, std::sqrt(12500.0), 1e-9);

    // The reflection point lies on the wall y = -50, on the segment VA -> UE.
    const Vec3 q(25.0, -50.0, 0.0);
    const double bounce = q.norm() + (Vec3(50.0, 0.0, 0.0) - q).norm();
    EXPECT_NEAR(bounce, std::sqrt(12500.0), 1e-9);
    // The departure direction points from the BS to q.
    EXPECT_NEAR(z.aod_az, std::atan2(-50.0, 25.0), 1e-12);
}

TEST(Model, ScatterPointWithClockBias) {
    const Scenario sc = origin_bs();
    const Landmark sp(Vec3(10.0, 0.0, 0.0), LandmarkKind::SP);
    const UEState s{20.0, 0.0, 0.0, 2e-9};
    const MeasVector z = model::predict_measurement(sp, s, sc);
    EXPECT_NEAR(z.toa, 20.0 / kSpeedOfLight + 2e-9, 1e-18);
}

TEST(Model, ScatterPointFieldOfView) {
    Scenario sc = origin_bs();
    const UEState s{0.0, 0.0, 0.0, 0.0};
    EXPECT_DOUBLE_EQ(model::detection_probability(Landmark(Vec3(49.9, 0.0, 0.0), LandmarkKind::SP), s, sc), 0.9);
    EXPECT_DOUBLE_EQ(model::detection_probability(Landmark(Vec3(50.1, 0.0, 0.0), LandmarkKind::SP), s, sc), 0.0);
    EXPECT_DOUBLE_EQ(model::detection_probability(Landmark(Vec3(500.0, 0.0, 0.0), LandmarkKind::VA), s, sc), 0.9);
}

TEST(Model, InvalidPathsThrow) {
    const Scenario sc = origin_bs();
    const UEState s{0.0, 0.0, 0.0, 0.0};
    EXPECT_THROW((void)model::predict_measurement(sc.bs, s, sc), InvalidGeometry);
    EXPECT_THROW((void)model::predict_measurement(Landmark(Vec3(0.0, 0.0, 0.0), LandmarkKind::SP), s, sc),
                 InvalidGeometry);
    EXPECT_EQ(model::path_detection_probability(LandmarkKind::SP, Vec3::Zero(), s, sc), 0.0);
}

TEST(Model, UeBehindWallHasNoPath) {
    const Scenario sc = origin_bs();
    // Wall at y = -50; a UE at y = -60 is on the far side.
    const Landmark va(Vec3(0.0, -100.0, 0.0), LandmarkKind::VA);
    EXPECT_THROW((void)model::predict_measurement(va, UEState{10.0, -60.0, 0.0, 0.0}, sc), InvalidGeometry);
}

TEST(Model, RangeSpaceRoundTrip) {
    const MeasVector z{1e-6, 0.3, -0.2, 1.0, 0.1};
    const MeasVector back = model::from_range_space(model::to_range_space(z));
    EXPECT_DOUBLE_EQ(back.toa, z.toa);
    EXPECT_DOUBLE_EQ(back.aoa_az, z.aoa_az);
    EXPECT_NEAR(model::to_range_space(z)(0), 1e-6 * kSpeedOfLight, 1e-9);
}

TEST(Model, InvariantsOnRandomGeometry) {
    Rng rng = make_rng(11, {});
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        for (LandmarkKind kind : {LandmarkKind::VA, LandmarkKind::SP}) {
            const auto g = oracle::random_geometry(kind, rng);
            const MeasVector z0 = model::predict_measurement(g.landmark, g.state, g.scenario);

            UEState shifted = g.state;
            shifted.clock_bias += 3e-8;
            const MeasVector zb = model::predict_measurement(g.landmark, shifted, g.scenario);
            EXPECT_NEAR(zb.toa - z0.toa, 3e-8, 1e-15);
            EXPECT_EQ(zb.aoa_az, z0.aoa_az);

            const double delta = kPi * u(rng);
            UEState turned = g.state;
            turned.heading = wrap_angle(turned.heading + delta);
            const MeasVector zr = model::predict_measurement(g.landmark, turned, g.scenario);
            EXPECT_NEAR(wrap_angle(zr.aoa_az - (z0.aoa_az - delta)), 0.0, 1e-9);
            EXPECT_NEAR(zr.toa, z0.toa, 1e-18);
            EXPECT_NEAR(zr.aod_az, z0.aod_az, 1e-12);
        }
    }
}

TEST(Model, JacobianMatchesFiniteDifferences) {
    Rng rng = make_rng(12, {});
    for (int i = 0; i < 200; ++i) {
        const auto g = oracle::random_geometry(i % 2 ? LandmarkKind::VA : LandmarkKind::SP, rng);
        EXPECT_LE(oracle::jacobian_fd_error(g), 1e-5);
    }
}
