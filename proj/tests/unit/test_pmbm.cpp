#include "common/oracles.hpp"
#include "rfslam/filters/pmbm.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace rfslam;
using namespace rfslam::filters;

namespace {

Bernoulli bernoulli(double r, const Vec3& mean, LandmarkKind kind = LandmarkKind::VA) {
    Bernoulli b;
    b.r = r;
    b.mean = mean;
    b.kind = kind;
    return b;
}

double total_hypothesis_weight(const PmbmMap& map) {
    double w = 0.0;
    for (const auto& h : map.hypotheses) w += h.weight();
    return w;
}

}  // namespace

TEST(Pmbm, MisdetectionAlgebra) {
    const auto b = misdetect_bernoulli(bernoulli(0.5, Vec3::Zero()), 0.9);
    EXPECT_NEAR(b.r, 1.0 / 11.0, 1e-15);
    EXPECT_NEAR(b.local_log_weight, std::log(0.55), 1e-15);

    const auto unseen = misdetect_bernoulli(bernoulli(0.5, Vec3::Zero()), 0.0);
    EXPECT_EQ(unseen.r, 0.5);
    EXPECT_EQ(unseen.local_log_weight, 0.0);

    const auto certain = misdetect_bernoulli(bernoulli(1.0, Vec3::Zero()), 0.9);
    EXPECT_EQ(certain.r, 1.0);
    EXPECT_NEAR(certain.local_log_weight, std::log(0.1), 1e-15);
}

TEST(Pmbm, NewBernoulliExistence) {
    const UEState s{10.0, 5.0, 0.3, 1e-7};
    Scenario sc;
    const Landmark va(Vec3(200.0, 0.0, 40.0), LandmarkKind::VA);
    const Vec5 z = model::to_range_space(model::predict_measurement(va, s, sc));
    PoissonPart ppp;
    ppp.components.push_back({1e-3, va.position(), Mat3::Identity(), LandmarkKind::VA});

    sc.clutter_mean = 0.0;
    const auto no_clutter = new_bernoulli(z, ppp, s, SensorModel(sc));
    EXPECT_EQ(no_clutter.r, 1.0);

    sc.clutter_mean = 1.0;
    const SensorModel sm(sc);
    const auto empty = new_bernoulli(z, PoissonPart{}, s, sm);
    EXPECT_EQ(empty.r, 0.0);
    EXPECT_NEAR(empty.local_log_weight, std::log(sm.clutter), 1e-12);

    const auto mixed = new_bernoulli(z, ppp, s, sm);
    EXPECT_GT(mixed.r, 0.0);
    EXPECT_LT(mixed.r, 1.0);
    EXPECT_EQ(mixed.kind, LandmarkKind::VA);
}

TEST(Pmbm, NewBernoulliBranchesOverKinds) {
    const UEState s{10.0, 5.0, 0.3, 1e-7};
    const Scenario sc;
    const SensorModel sm(sc);
    const Landmark sp(Vec3(30.0, 10.0, 5.0), LandmarkKind::SP);
    const Vec5 z = model::to_range_space(model::predict_measurement(sp, s, sc));
    BirthConfig birth;
    birth.intensity = 1e-3;
    PoissonPart ppp;
    ppp.components = measurement_births({z}, s, sm, birth);

    const auto variants = new_bernoulli_variants(z, ppp, s, sm);
    ASSERT_EQ(variants.size(), 2u);
    EXPECT_NE(variants[0].kind, variants[1].kind);
    EXPECT_EQ(variants[0].r, variants[1].r);
    const auto collapsed = new_bernoulli(z, ppp, s, sm);
    const double total = std::log(std::exp(variants[0].local_log_weight) + std::exp(variants[1].local_log_weight));
    EXPECT_NEAR(collapsed.local_log_weight, total, 1e-12);

    PmbmMap map;
    map.poisson = ppp;
    const auto res = update(map, {z}, s, sm, 10);
    std::set<LandmarkKind> born;
    for (const auto& b : res.map.bernoulli_pool) born.insert(b.kind);
    EXPECT_EQ(born.size(), 2u);
    EXPECT_NEAR(total_hypothesis_weight(res.map), 1.0, 1e-12);

    // Unlikely births keep a single, dominant kind.
    ppp.components.resize(1);
    ppp.components[0].weight = 1e-30;
    EXPECT_EQ(new_bernoulli_variants(z, ppp, s, sm).size(), 1u);
}

TEST(Pmbm, RedetectionSetsExistence) {
    const UEState s{10.0, 5.0, 0.3, 1e-7};
    const Scenario sc;
    const SensorModel sm(sc);
    const Landmark va(Vec3(200.0, 0.0, 40.0), LandmarkKind::VA);
    const Vec5 z = model::to_range_space(model::predict_measurement(va, s, sc));
    const auto b = redetect_bernoulli(bernoulli(0.4, va.position() + Vec3(0.3, 0.0, 0.0)), z, s, sm);
    EXPECT_EQ(b.r, 1.0);
    EXPECT_TRUE(std::isfinite(b.local_log_weight));
    EXPECT_EQ(redetect_bernoulli(bernoulli(0.0, va.position()), z, s, sm).local_log_weight, kNegInf);
}

TEST(Pmbm, CostMatrixShape) {
    Eigen::MatrixXd red(2, 3);
    red << -1, -2, kNegInf, -4, -5, -6;
    const Eigen::VectorXd mis = Eigen::VectorXd::Constant(2, -0.5);
    const Eigen::VectorXd fresh = Eigen::VectorXd::Constant(3, -7.0);
    const auto c = build_cost_matrix(red, mis, fresh);
    ASSERT_EQ(c.rows(), 3);
    ASSERT_EQ(c.cols(), 5);
    EXPECT_EQ(c(0, 0), 0.5);
    EXPECT_EQ(c(2, 0), assignment::kForbidden);
    EXPECT_EQ(c(1, 3), 7.0);
    EXPECT_EQ(c(1, 2), assignment::kForbidden);
    EXPECT_EQ(c(1, 4), assignment::kForbidden);
}

TEST(Pmbm, ReducePrunesHypotheses) {
    PmbmMap map;
    map.bernoulli_pool = {bernoulli(0.9, Vec3(1, 0, 0)), bernoulli(0.9, Vec3(2, 0, 0)), bernoulli(0.9, Vec3(3, 0, 0))};
    map.hypotheses = {{std::log(0.9), {0}}, {std::log(0.05), {1}}, {std::log(0.05), {2}}};
    const auto out = reduce(map, 0.1, 20, 1e-3, true);
    ASSERT_EQ(out.hypotheses.size(), 1u);
    EXPECT_NEAR(out.hypotheses[0].weight(), 1.0, 1e-15);
    EXPECT_EQ(out.bernoulli_pool.size(), 1u);
}

TEST(Pmbm, ReduceRecyclesLowExistence) {
    PmbmMap map;
    map.bernoulli_pool = {bernoulli(0.01, Vec3(1, 0, 0)), bernoulli(0.9, Vec3(2, 0, 0))};
    map.hypotheses = {{0.0, {0, 1}}};
    const auto out = reduce(map, 1e-4, 20, 0.05, true);
    EXPECT_NEAR(out.poisson.total_weight(), 0.01, 1e-15);
    ASSERT_EQ(out.bernoulli_pool.size(), 1u);
    EXPECT_EQ(out.bernoulli_pool[0].r, 0.9);
    const auto dropped = reduce(map, 1e-4, 20, 0.05, false);
    EXPECT_EQ(dropped.poisson.total_weight(), 0.0);
}

TEST(Pmbm, ReduceIsIdempotent) {
    Rng rng = make_rng(51, {});
    auto c = oracle::random_pmbm_case(3, 3, rng);
    const auto res = update(c.map, c.z, c.state, c.sensor, 10);
    const auto once = reduce(res.map, 1e-4, 20, 1e-3, true);
    const auto twice = reduce(once, 1e-4, 20, 1e-3, true);
    ASSERT_EQ(once.hypotheses.size(), twice.hypotheses.size());
    for (std::size_t i = 0; i < once.hypotheses.size(); ++i) {
        EXPECT_NEAR(once.hypotheses[i].log_weight, twice.hypotheses[i].log_weight, 1e-12);
        EXPECT_EQ(once.hypotheses[i].bernoulli_indices, twice.hypotheses[i].bernoulli_indices);
    }
    EXPECT_EQ(once.bernoulli_pool.size(), twice.bernoulli_pool.size());
    EXPECT_NEAR(once.poisson.total_weight(), twice.poisson.total_weight(), 1e-15);
}

TEST(Pmbm, HypothesisWeightsSumToOne) {
    Rng rng = make_rng(52, {});
    for (int t = 0; t < 20; ++t) {
        auto c = oracle::random_pmbm_case(3, 3, rng);
        const auto res = update(c.map, c.z, c.state, c.sensor, 10);
        EXPECT_NEAR(total_hypothesis_weight(res.map), 1.0, 1e-9);
        EXPECT_NEAR(total_hypothesis_weight(reduce(res.map, 1e-4, 5, 1e-3, true)), 1.0, 1e-9);
    }
}

TEST(Pmbm, AssociationCount) {
    EXPECT_EQ(oracle::count_associations(3, 3), 73);
    EXPECT_EQ(oracle::count_associations(0, 1), 2);
}

TEST(Pmbm, UpdateMatchesExhaustiveEnumeration) {
    Rng rng = make_rng(53, {});
    for (int t = 0; t < 40; ++t) {
        auto c = oracle::random_pmbm_case(t % 4, (t / 4) % 4, rng);
        std::size_t n = 0;
        EXPECT_LE(oracle::pmbm_oracle_error(c, &n), 1e-9) << "case " << t;
        EXPECT_GE(n, 1u);
    }
}

TEST(Pmbm, EmptyMeasurementsMisdetectEveryone) {
    Rng rng = make_rng(54, {});
    auto c = oracle::random_pmbm_case(3, 0, rng);
    const auto res = update(c.map, c.z, c.state, c.sensor, 10);
    ASSERT_EQ(res.map.hypotheses.size(), 1u);
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_LE(res.map.bernoulli_pool[i].r, c.map.bernoulli_pool[i].r);
}

TEST(Pmbm, ExtractUsesBestHypothesis) {
    PmbmMap map;
    map.bernoulli_pool = {bernoulli(0.9, Vec3(1, 0, 0)), bernoulli(0.95, Vec3(2, 0, 0)), bernoulli(0.3, Vec3(3, 0, 0))};
    map.hypotheses = {{std::log(0.3), {0}}, {std::log(0.7), {1, 2}}};
    const auto est = extract_map(map);
    ASSERT_EQ(est.size(), 1u);
    EXPECT_EQ(est[0].landmark.position().x(), 2.0);
}
