#pragma once

#include "rfslam/core/gaussian.hpp"
#include "rfslam/core/random.hpp"
#include "rfslam/core/types.hpp"
#include "rfslam/model/measurement.hpp"
#include "rfslam/motion/motion.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <random>
#include <vector>

namespace rfslam::sim {

/// Origin label of a clutter measurement. Landmark paths use 0 for the BS and i+1 for scenario.landmarks[i].
inline constexpr int kClutter = -1;

struct SimConfig {
    Scenario scenario;
    motion::ControlInput control;
    motion::MotionNoise motion_noise;
    int n_steps = 40;
    std::uint64_t seed = 1;
    UEState initial_state{22.22 / (kPi / 10.0), 0.0, kPi / 2.0, 300.0 / kSpeedOfLight};
    bool noisy_trajectory = true;
};

/// One measurement batch. `origins` is diagnostics-only and must never reach a filter.
struct StepMeasurements {
    MeasurementSet z;
    std::vector<int> origins;
};

struct GroundTruth {
    std::vector<UEState> states;
    std::vector<MeasurementSet> measurement_sets;
    std::vector<std::vector<int>> origin_labels;
};

/// states[0] is the initial state; every later state is one transition further.
[[nodiscard]] inline std::vector<UEState> generate_trajectory(const SimConfig& cfg) {
    if (cfg.n_steps < 1) throw ConfigError("sim.n_steps", "must be >= 1");
    Rng rng = make_rng(cfg.seed, {stream::trajectory});
    std::vector<UEState> states;
    states.reserve(static_cast<std::size_t>(cfg.n_steps));
    states.push_back(cfg.initial_state);
    for (int k = 1; k < cfg.n_steps; ++k) {
        const UEState& prev = states.back();
        states.push_back(cfg.noisy_trajectory ? motion::sample_transition(prev, cfg.control, cfg.motion_noise, rng)
                                              : motion::propagate_mean(prev, cfg.control, cfg.motion_noise.dt()));
    }
    return states;
}

/// Landmark paths (BS first), each kept with p_D and corrupted by measurement noise,
/// plus Poisson clutter uniform over the delay window [B, B + max_range/c] and all angles.
template <typename RngT>
[[nodiscard]] StepMeasurements generate_measurements(const UEState& s, const Scenario& sc, RngT& rng) {
    StepMeasurements out;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const GaussianSampler<5> noise(sc.meas_noise.covariance(), "scenario.meas_noise");

    auto emit = [&](const Landmark& lm, int label) {
        model::PathPrediction path;
        if (model::evaluate_path(lm.position(), lm.kind(), s, sc.bs.position(), sc.ue_height, path) !=
            model::PathStatus::ok)
            return;
        if (unit(rng) >= model::detection_probability(lm, s, sc)) return;
        Vec5 z = model::from_range_space(path.z).as_vector() + noise(rng);
        for (int i : kAzimuthRows) z(i) = wrap_angle(z(i));
        z(2) = std::clamp(z(2), -kPi / 2.0, kPi / 2.0);
        z(4) = std::clamp(z(4), -kPi / 2.0, kPi / 2.0);
        z(0) = std::max(z(0), 0.0);
        out.z.push_back(MeasVector::from_vector(z));
        out.origins.push_back(label);
    };

    emit(sc.bs, 0);
    for (std::size_t i = 0; i < sc.landmarks.size(); ++i) emit(sc.landmarks[i], static_cast<int>(i) + 1);

    std::poisson_distribution<int> n_clutter(sc.clutter_mean);
    const int nc = sc.clutter_mean > 0.0 ? n_clutter(rng) : 0;
    const double window = sc.max_range / kSpeedOfLight;
    for (int c = 0; c < nc; ++c) {
        MeasVector z;
        z.toa = s.clock_bias + window * unit(rng);
        z.aoa_az = wrap_angle(kPi - kTwoPi * unit(rng));
        z.aoa_el = kPi * (unit(rng) - 0.5);
        z.aod_az = wrap_angle(kPi - kTwoPi * unit(rng));
        z.aod_el = kPi * (unit(rng) - 0.5);
        out.z.push_back(z);
        out.origins.push_back(kClutter);
    }

    std::vector<std::size_t> order(out.z.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    StepMeasurements shuffled;
    for (std::size_t i : order) {
        shuffled.z.push_back(out.z[i]);
        shuffled.origins.push_back(out.origins[i]);
    }
    return shuffled;
}

[[nodiscard]] inline GroundTruth generate_ground_truth(const SimConfig& cfg) {
    cfg.scenario.validate();
    GroundTruth gt;
    gt.states = generate_trajectory(cfg);
    Rng rng = make_rng(cfg.seed, {stream::measurements});
    for (const UEState& s : gt.states) {
        StepMeasurements m = generate_measurements(s, cfg.scenario, rng);
        gt.measurement_sets.push_back(std::move(m.z));
        gt.origin_labels.push_back(std::move(m.origins));
    }
    return gt;
}

}  // namespace rfslam::sim
