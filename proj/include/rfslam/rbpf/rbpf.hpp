#pragma once

#include "rfslam/core/gaussian.hpp"
#include "rfslam/core/parallel.hpp"
#include "rfslam/core/random.hpp"
#include "rfslam/core/types.hpp"
#include "rfslam/filters/common.hpp"
#include "rfslam/motion/motion.hpp"

#include <cmath>
#include <concepts>
#include <cstdint>
#include <iostream>
#include <random>
#include <vector>

namespace rfslam::rbpf {

/// A map filter conditioned on one sensor trajectory.
template <typename F>
concept MapFilter = requires(const F f, typename F::Map m, const std::vector<Vec5>& z, const UEState& s,
                             const filters::SensorModel& sm) {
    { f.make_map() } -> std::same_as<typename F::Map>;
    { f.step(m, z, s, sm) } -> std::same_as<double>;
    { f.extract(m) } -> std::same_as<std::vector<filters::EstimatedLandmark>>;
};

template <typename Map>
struct Particle {
    UEState state;
    Map map;
    double log_weight = 0.0;
};

template <typename Map>
struct ParticleSet {
    std::vector<Particle<Map>> particles;
    bool normalized = false;
};

[[nodiscard]] inline Mat4 default_prior_cov() {
    const Vec4 std_dev(0.3, 0.3, 0.0052, 0.3 / kSpeedOfLight);
    return Mat4(std_dev.cwiseProduct(std_dev).asDiagonal());
}

/// N i.i.d. draws from N(prior_mean, prior_cov) with uniform weights and copies of `empty_map`.
template <typename Map, typename RngT>
[[nodiscard]] ParticleSet<Map> init(const UEState& prior_mean, const Mat4& prior_cov, std::size_t n,
                                    const Map& empty_map, RngT& rng) {
    if (n < 1) throw ConfigError("rbpf.n_particles", "must be >= 1");
    const GaussianSampler<4> sampler(prior_cov, "rbpf.prior_cov");
    ParticleSet<Map> ps;
    ps.particles.reserve(n);
    const double lw = -std::log(static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        ps.particles.push_back({UEState::from_vector(prior_mean.as_vector() + sampler(rng)), empty_map, lw});
    ps.normalized = true;
    return ps;
}

/// Normalizes log weights in place. Returns false (and resets to uniform) when every weight is zero.
template <typename Map>
bool normalize(ParticleSet<Map>& ps) {
    std::vector<double> lw;
    lw.reserve(ps.particles.size());
    for (const auto& p : ps.particles) lw.push_back(p.log_weight);
    const double total = filters::log_sum_exp(lw);
    const bool ok = std::isfinite(total);
    const double uniform = -std::log(static_cast<double>(ps.particles.size()));
    for (auto& p : ps.particles) p.log_weight = ok ? p.log_weight - total : uniform;
    ps.normalized = true;
    return ok;
}

/// 1 / sum w^2 of normalized weights.
template <typename Map>
[[nodiscard]] double ess(const ParticleSet<Map>& ps) {
    double s2 = 0.0;
    for (const auto& p : ps.particles) s2 += std::exp(2.0 * p.log_weight);
    return 1.0 / s2;
}

struct StateEstimate {
    UEState mean;
    Mat4 cov = Mat4::Zero();
};

/// Weighted mean with a circular mean for the heading.
template <typename Map>
[[nodiscard]] StateEstimate estimate_state(const ParticleSet<Map>& ps) {
    double x = 0.0, y = 0.0, b = 0.0, sn = 0.0, cs = 0.0;
    for (const auto& p : ps.particles) {
        const double w = std::exp(p.log_weight);
        x += w * p.state.x;
        y += w * p.state.y;
        b += w * p.state.clock_bias;
        sn += w * std::sin(p.state.heading);
        cs += w * std::cos(p.state.heading);
    }
    StateEstimate e;
    e.mean = {x, y, wrap_angle(std::atan2(sn, cs)), b};
    for (const auto& p : ps.particles) {
        const Vec4 d = motion::state_residual(p.state, e.mean);
        e.cov += std::exp(p.log_weight) * d * d.transpose();
    }
    return e;
}

/// Systematic resampling indices for normalized log weights.
template <typename RngT>
[[nodiscard]] std::vector<std::size_t> systematic_indices(const std::vector<double>& log_weights, RngT& rng) {
    const std::size_t n = log_weights.size();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double step = 1.0 / static_cast<double>(n);
    double u = unit(rng) * step;
    std::vector<std::size_t> idx(n);
    double cum = std::exp(log_weights[0]);
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (u > cum && j + 1 < n) cum += std::exp(log_weights[++j]);
        idx[i] = j;
        u += step;
    }
    return idx;
}

template <typename Map, typename RngT>
void resample(ParticleSet<Map>& ps, RngT& rng) {
    std::vector<double> lw;
    for (const auto& p : ps.particles) lw.push_back(p.log_weight);
    const auto idx = systematic_indices(lw, rng);
    std::vector<Particle<Map>> next;
    next.reserve(idx.size());
    const double uniform = -std::log(static_cast<double>(idx.size()));
    for (std::size_t i : idx) {
        next.push_back(ps.particles[i]);
        next.back().log_weight = uniform;
    }
    ps.particles = std::move(next);
}

struct RbpfConfig {
    std::size_t n_particles = 2000;
    Mat4 prior_cov = default_prior_cov();
    motion::ControlInput control;
    motion::MotionNoise motion_noise;
    bool ess_triggered = false;    ///< resample only when ESS/N falls below ess_threshold
    double ess_threshold = 0.5;
    unsigned threads = 1;
    std::uint64_t seed = 1;
};

struct StepReport {
    StateEstimate state;
    double ess = 0.0;  ///< before resampling
    std::vector<filters::EstimatedLandmark> map;
    bool diverged = false;
};

/// Rao-Blackwellized SIR filter: particles carry the sensor state, each owns a map conditioned on its trajectory.
template <MapFilter Filter>
class Rbpf {
public:
    using Map = typename Filter::Map;

    Rbpf(Filter filter, filters::SensorModel sensor, RbpfConfig cfg, const UEState& prior_mean)
        : filter_(std::move(filter)), sensor_(std::move(sensor)), cfg_(std::move(cfg)) {
        Rng rng = make_rng(cfg_.seed, {stream::particle_init});
        particles_ = init(prior_mean, cfg_.prior_cov, cfg_.n_particles, filter_.make_map(), rng);
    }

    /// Known-pose mapping: one particle pinned to the supplied state, no resampling.
    static Rbpf known_pose(Filter filter, filters::SensorModel sensor, RbpfConfig cfg, const UEState& initial) {
        cfg.n_particles = 1;
        cfg.prior_cov = Mat4::Zero();
        return Rbpf(std::move(filter), std::move(sensor), std::move(cfg), initial);
    }

    /// Processes the batch of step k. Step 0 uses the prior particles without propagation.
    /// With `true_state` the single particle is placed there instead of being propagated.
    StepReport step(const MeasurementSet& measurements, std::uint64_t k, const UEState* true_state = nullptr) {
        const auto z = filters::to_range_space(measurements);
        auto& parts = particles_.particles;
        parallel_for(parts.size(), cfg_.threads, [&](std::size_t n) {
            auto& p = parts[n];
            if (true_state) {
                p.state = *true_state;
            } else if (k > 0) {
                Rng rng = make_rng(cfg_.seed, {stream::particle_motion, k, n});
                p.state = motion::sample_transition(p.state, cfg_.control, cfg_.motion_noise, rng);
            }
            p.log_weight += filter_.step(p.map, z, p.state, sensor_);
        });

        StepReport report;
        report.diverged = !normalize(particles_);
        if (report.diverged) std::clog << "warning: all particle weights vanished at step " << k << ", reset to uniform\n";
        report.ess = ess(particles_);
        report.state = estimate_state(particles_);
        std::size_t best = 0;
        for (std::size_t i = 1; i < parts.size(); ++i)
            if (parts[i].log_weight > parts[best].log_weight) best = i;
        report.map = filter_.extract(parts[best].map);

        const bool resample_now =
            !true_state && parts.size() > 1 &&
            (!cfg_.ess_triggered || report.ess < cfg_.ess_threshold * static_cast<double>(parts.size()));
        if (resample_now) {
            Rng rng = make_rng(cfg_.seed, {stream::resampling, k});
            resample(particles_, rng);
        }
        return report;
    }

    [[nodiscard]] const ParticleSet<Map>& particles() const { return particles_; }
    [[nodiscard]] ParticleSet<Map>& particles() { return particles_; }
    [[nodiscard]] const Filter& filter() const { return filter_; }
    [[nodiscard]] const filters::SensorModel& sensor() const { return sensor_; }

private:
    Filter filter_;
    filters::SensorModel sensor_;
    RbpfConfig cfg_;
    ParticleSet<Map> particles_;
};

}  // namespace rfslam::rbpf
