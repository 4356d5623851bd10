#pragma once

#include "rfslam/core/parallel.hpp"
#include "rfslam/core/random.hpp"
#include "rfslam/filters/common.hpp"
#include "rfslam/motion/motion.hpp"
#include "rfslam/rbpf/rbpf.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <map>
#include <vector>

/// Belief-propagation SLAM with a particle sensor belief and Gaussian landmark beliefs.
namespace rfslam::bp {

/// Landmark position belief with its existence probability.
struct AugmentedLandmark {
    Vec3 mean = Vec3::Zero();
    Mat3 cov = Mat3::Identity();
    LandmarkKind kind = LandmarkKind::VA;
    double existence = 0.0;
};

/// Equally weighted sensor particles and the landmark beliefs.
struct BpBelief {
    std::vector<UEState> particles;
    std::vector<AugmentedLandmark> landmarks;
};

/// Messages after the prediction: propagated sensor particles, static landmarks, and the
/// new-landmark intensity of every measurement.
struct PredictionMessages {
    std::vector<UEState> particles;
    std::vector<AugmentedLandmark> landmarks;
    std::vector<std::vector<filters::GaussianComponent>> births;  ///< per measurement
};

/// Association messages from the measurement factors.
struct DaMessages {
    Eigen::MatrixXd detect;    ///< m(c_i = j), landmarks x measurements
    Eigen::VectorXd missed;    ///< m(c_i = 0)
    Eigen::VectorXd new_mass;  ///< expected new-landmark intensity behind each measurement
    double clutter = 0.0;
    std::vector<std::vector<filters::EkfTerms>> terms;  ///< landmark x particle
};

struct AssociationBeliefs {
    Eigen::MatrixXd mu;           ///< landmark -> measurement messages
    Eigen::MatrixXd nu;           ///< measurement -> landmark messages (measurements x landmarks)
    Eigen::MatrixXd landmark;     ///< p(c_i = j), column 0 is the missed detection
    Eigen::MatrixXd measurement;  ///< p(d_j = i), column 0 is clutter or a new landmark
    int iterations = 0;
};

/// Sensor particles through the motion model, landmarks unchanged, births from the measurements.
template <typename BirthFn>
[[nodiscard]] PredictionMessages predict_messages(const BpBelief& prior, const motion::ControlInput& u,
                                                  const motion::MotionNoise& noise, std::uint64_t seed,
                                                  std::uint64_t k, bool propagate, BirthFn&& births,
                                                  unsigned threads = 1) {
    PredictionMessages m;
    m.particles = prior.particles;
    m.landmarks = prior.landmarks;
    if (propagate) {
        parallel_for(m.particles.size(), threads, [&](std::size_t n) {
            Rng rng = make_rng(seed, {stream::particle_motion, k, n});
            m.particles[n] = motion::sample_transition(prior.particles[n], u, noise, rng);
        });
    }
    m.births = births(m.particles);
    return m;
}

/// Monte Carlo evaluation of m(c_i = j) and m(c_i = 0) over the sensor particles, plus the new-landmark
/// intensity E[int p_D f(z|x,s) lambda(x) dx] of every measurement.
[[nodiscard]] inline DaMessages da_messages(const PredictionMessages& m, const std::vector<Vec5>& z,
                                            const filters::SensorModel& sm, unsigned threads = 1) {
    const std::size_t n_p = m.particles.size();
    if (n_p == 0) throw Error("bp_slam: empty sensor particle support");
    const std::size_t n_l = m.landmarks.size();
    const std::size_t n_z = z.size();
    DaMessages out;
    out.clutter = sm.clutter;
    out.detect = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_l), static_cast<Eigen::Index>(n_z));
    out.missed = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_l));
    out.new_mass = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_z));
    out.terms.assign(n_l, std::vector<filters::EkfTerms>(n_p));
    const double inv_n = 1.0 / static_cast<double>(n_p);

    parallel_for(n_l, threads, [&](std::size_t i) {
        const auto& lm = m.landmarks[i];
        const auto li = static_cast<Eigen::Index>(i);
        double missed = 0.0;
        Eigen::VectorXd det = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_z));
        for (std::size_t n = 0; n < n_p; ++n) {
            auto& t = out.terms[i][n];
            t = filters::ekf_terms(lm.mean, lm.cov, lm.kind, m.particles[n], sm);
            const double pd = t.innovation ? t.p_detect : 0.0;
            missed += 1.0 - pd;
            if (!t.usable()) continue;
            for (std::size_t j = 0; j < n_z; ++j)
                det(static_cast<Eigen::Index>(j)) += pd * std::exp(t.log_likelihood(z[j]));
        }
        out.missed(li) = lm.existence * missed * inv_n + (1.0 - lm.existence);
        out.detect.row(li) = lm.existence * inv_n * det.transpose();
    });

    parallel_for(n_z, threads, [&](std::size_t j) {
        double mass = 0.0;
        for (const auto& b : m.births[j]) {
            for (std::size_t n = 0; n < n_p; ++n) {
                const auto t = filters::ekf_terms(b, m.particles[n], sm);
                if (t.usable()) mass += b.weight * t.p_detect * std::exp(t.log_likelihood(z[j]));
            }
        }
        out.new_mass(static_cast<Eigen::Index>(j)) = mass * inv_n;
    });
    return out;
}

/// Iterative c <-> d message exchange on the association subgraph.
[[nodiscard]] inline AssociationBeliefs loopy_da(const DaMessages& da, int max_iterations = 20, double tol = 1e-6) {
    if (max_iterations < 1) throw Error("loopy_da: iterations must be >= 1");
    constexpr double tiny = std::numeric_limits<double>::min();
    const Eigen::Index n_l = da.detect.rows();
    const Eigen::Index n_z = da.detect.cols();
    Eigen::MatrixXd w(n_l, n_z);
    for (Eigen::Index i = 0; i < n_l; ++i)
        for (Eigen::Index j = 0; j < n_z; ++j)
            w(i, j) = da.missed(i) > 0.0 ? da.detect(i, j) / da.missed(i) : (da.detect(i, j) > 0.0 ? 1.0 / tiny : 0.0);
    Eigen::VectorXd beta(n_z);
    for (Eigen::Index j = 0; j < n_z; ++j) beta(j) = std::max(da.clutter + da.new_mass(j), tiny);

    AssociationBeliefs b;
    b.nu = Eigen::MatrixXd::Zero(n_z, n_l);
    for (Eigen::Index j = 0; j < n_z; ++j) b.nu.row(j).setConstant(1.0 / beta(j));
    b.mu = Eigen::MatrixXd::Zero(n_l, n_z);
    for (int it = 0; it < max_iterations; ++it) {
        Eigen::MatrixXd mu(n_l, n_z);
        for (Eigen::Index i = 0; i < n_l; ++i) {
            for (Eigen::Index j = 0; j < n_z; ++j) {
                double others = 1.0;
                for (Eigen::Index jj = 0; jj < n_z; ++jj)
                    if (jj != j) others += w(i, jj) * b.nu(jj, i);
                mu(i, j) = w(i, j) / others;
            }
        }
        for (Eigen::Index j = 0; j < n_z; ++j) {
            for (Eigen::Index i = 0; i < n_l; ++i) {
                double others = beta(j);
                for (Eigen::Index ii = 0; ii < n_l; ++ii)
                    if (ii != i) others += mu(ii, j);
                b.nu(j, i) = 1.0 / std::max(others, tiny);
            }
        }
        const double change = n_l * n_z > 0 ? (mu - b.mu).cwiseAbs().maxCoeff() : 0.0;
        b.mu = mu;
        b.iterations = it + 1;
        if (change < tol) break;
    }

    b.landmark = Eigen::MatrixXd::Zero(n_l, n_z + 1);
    for (Eigen::Index i = 0; i < n_l; ++i) {
        double total = 1.0;
        for (Eigen::Index j = 0; j < n_z; ++j) total += w(i, j) * b.nu(j, i);
        b.landmark(i, 0) = 1.0 / total;
        for (Eigen::Index j = 0; j < n_z; ++j) b.landmark(i, j + 1) = w(i, j) * b.nu(j, i) / total;
    }
    b.measurement = Eigen::MatrixXd::Zero(n_z, n_l + 1);
    for (Eigen::Index j = 0; j < n_z; ++j) {
        const double total = beta(j) + b.mu.col(j).sum();
        b.measurement(j, 0) = beta(j) / total;
        for (Eigen::Index i = 0; i < n_l; ++i) b.measurement(j, i + 1) = b.mu(i, j) / total;
    }
    return b;
}

struct BpUpdate {
    std::vector<double> particle_log_weights;  ///< normalized
    std::vector<AugmentedLandmark> landmarks;  ///< legacy landmarks first, then one per measurement
    bool diverged = false;
};

/// Beliefs of sensor, legacy landmarks and new landmarks from the association messages.
[[nodiscard]] inline BpUpdate measurement_update(const PredictionMessages& m, const DaMessages& da,
                                                 const AssociationBeliefs& ab, const std::vector<Vec5>& z,
                                                 const filters::SensorModel& sm, unsigned threads = 1) {
    const std::size_t n_p = m.particles.size();
    const std::size_t n_l = m.landmarks.size();
    const std::size_t n_z = z.size();
    const double inv_n = 1.0 / static_cast<double>(n_p);
    BpUpdate out;

    // Sensor: product over landmarks of (missed + sum_j nu * detection) evaluated per particle.
    // Each factor is divided by a per-landmark constant so that huge nu (no clutter) stays finite.
    Eigen::VectorXd nu_scale = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n_l));
    for (std::size_t i = 0; i < n_l; ++i)
        for (std::size_t j = 0; j < n_z; ++j)
            nu_scale(static_cast<Eigen::Index>(i)) =
                std::max(nu_scale(static_cast<Eigen::Index>(i)), ab.nu(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)));
    out.particle_log_weights.assign(n_p, 0.0);
    parallel_for(n_p, threads, [&](std::size_t n) {
        double lw = 0.0;
        for (std::size_t i = 0; i < n_l; ++i) {
            const auto& t = da.terms[i][n];
            const double r = m.landmarks[i].existence;
            const double pd = t.innovation ? t.p_detect : 0.0;
            const double scale = nu_scale(static_cast<Eigen::Index>(i));
            double f = ((1.0 - r) + r * (1.0 - pd)) / scale;
            if (t.usable())
                for (std::size_t j = 0; j < n_z; ++j)
                    f += ab.nu(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) / scale * r * pd *
                         std::exp(t.log_likelihood(z[j]));
            lw += std::log(f);
        }
        out.particle_log_weights[n] = lw;
    });
    {
        const double total = filters::log_sum_exp(out.particle_log_weights);
        out.diverged = !std::isfinite(total);
        for (double& lw : out.particle_log_weights)
            lw = out.diverged ? -std::log(static_cast<double>(n_p)) : lw - total;
    }

    // Legacy landmarks.
    out.landmarks.resize(n_l);
    parallel_for(n_l, threads, [&](std::size_t i) {
        const auto& lm = m.landmarks[i];
        const auto li = static_cast<Eigen::Index>(i);
        std::vector<double> mass(n_z + 1, 0.0);
        mass[0] = std::max(da.missed(li) - (1.0 - lm.existence), 0.0);  // r E[1 - p_D]
        for (std::size_t j = 0; j < n_z; ++j)
            mass[j + 1] = ab.nu(static_cast<Eigen::Index>(j), li) * da.detect(li, static_cast<Eigen::Index>(j));
        bool overflow = false;
        for (double v : mass) overflow = overflow || std::isinf(v);
        if (overflow)
            for (double& v : mass) v = std::isinf(v) ? 1.0 : 0.0;
        double present = 0.0;
        for (double v : mass) present += v;
        const double absent = overflow ? 0.0 : 1.0 - lm.existence;
        AugmentedLandmark post = lm;
        post.existence = present + absent > 0.0 ? present / (present + absent) : 0.0;

        filters::MomentAccumulator acc;
        acc.add(mass[0], lm.mean, lm.cov);
        for (std::size_t j = 0; j < n_z; ++j) {
            if (!(mass[j + 1] > 0.0)) continue;
            filters::MomentAccumulator inner;
            for (std::size_t n = 0; n < n_p; ++n) {
                const auto& t = da.terms[i][n];
                if (!t.usable()) continue;
                const double wn = t.p_detect * std::exp(t.log_likelihood(z[j]));
                inner.add(wn, t.posterior_mean(lm.mean, z[j]), t.posterior_cov);
            }
            if (inner.total > 0.0) acc.add(mass[j + 1], inner.mean(), inner.cov());
        }
        if (acc.total > 0.0) {
            post.mean = acc.mean();
            post.cov = acc.cov();
        }
        out.landmarks[i] = post;
    });

    // New landmarks, one per measurement.
    std::vector<AugmentedLandmark> fresh(n_z);
    parallel_for(n_z, threads, [&](std::size_t j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const double nu_total = da.clutter + da.new_mass(jj) + ab.mu.col(jj).sum();
        AugmentedLandmark b;
        b.existence = nu_total > 0.0 ? da.new_mass(jj) / nu_total : 0.0;
        std::map<LandmarkKind, filters::MomentAccumulator> by_kind;
        for (const auto& c : m.births[j]) {
            for (std::size_t n = 0; n < n_p; ++n) {
                const auto t = filters::ekf_terms(c, m.particles[n], sm);
                if (!t.usable()) continue;
                const double wn = c.weight * t.p_detect * std::exp(t.log_likelihood(z[j])) * inv_n;
                by_kind[c.kind].add(wn, t.posterior_mean(c.mean, z[j]), t.posterior_cov);
            }
        }
        const filters::MomentAccumulator* best = nullptr;
        for (const auto& [kind, acc] : by_kind) {
            if (acc.total > 0.0 && (!best || acc.total > best->total)) {
                best = &acc;
                b.kind = kind;
            }
        }
        if (best) {
            b.mean = best->mean();
            b.cov = best->cov();
        } else {
            b.existence = 0.0;
        }
        fresh[j] = b;
    });
    out.landmarks.insert(out.landmarks.end(), fresh.begin(), fresh.end());
    return out;
}

struct BpConfig {
    filters::BirthConfig birth;
    std::size_t n_particles = 2000;
    Mat4 prior_cov = rbpf::default_prior_cov();
    motion::ControlInput control;
    motion::MotionNoise motion_noise;
    int max_iterations = 20;
    double tolerance = 1e-6;
    double r_prune = 1e-3;
    double extract_threshold = 0.5;
    unsigned threads = 1;
    std::uint64_t seed = 1;
};

/// Sequential BP-SLAM filter with per-step resampling of the sensor particles.
class BpSlam {
public:
    BpSlam(filters::SensorModel sensor, BpConfig cfg, const UEState& prior_mean)
        : sensor_(std::move(sensor)), cfg_(std::move(cfg)) {
        if (cfg_.n_particles < 1) throw ConfigError("bp.n_particles", "must be >= 1");
        Rng rng = make_rng(cfg_.seed, {stream::particle_init});
        const GaussianSampler<4> sampler(cfg_.prior_cov, "bp.prior_cov");
        for (std::size_t n = 0; n < cfg_.n_particles; ++n)
            belief_.particles.push_back(UEState::from_vector(prior_mean.as_vector() + sampler(rng)));
    }

    static BpSlam known_pose(filters::SensorModel sensor, BpConfig cfg, const UEState& initial) {
        cfg.n_particles = 1;
        cfg.prior_cov = Mat4::Zero();
        return BpSlam(std::move(sensor), std::move(cfg), initial);
    }

    rbpf::StepReport step(const MeasurementSet& measurements, std::uint64_t k, const UEState* true_state = nullptr) {
        const auto z = filters::to_range_space(measurements);
        if (true_state) belief_.particles.assign(belief_.particles.size(), *true_state);
        auto births = [&](const std::vector<UEState>& particles) {
            const UEState anchor = mean_state(particles, nullptr);
            std::vector<std::vector<filters::GaussianComponent>> out;
            for (const Vec5& zj : z) out.push_back(filters::measurement_births({zj}, anchor, sensor_, cfg_.birth, trajectory_));
            trajectory_.push_back(anchor);
            return out;
        };
        // The BS enters as a certain landmark without position uncertainty and is never updated.
        BpBelief prior = belief_;
        prior.landmarks.insert(prior.landmarks.begin(),
                               AugmentedLandmark{sensor_.scenario.bs.position(), Mat3::Zero(), LandmarkKind::BS, 1.0});
        const auto pred = predict_messages(prior, cfg_.control, cfg_.motion_noise, cfg_.seed, k,
                                           !true_state && k > 0, births, cfg_.threads);
        const auto da = da_messages(pred, z, sensor_, cfg_.threads);
        const auto ab = loopy_da(da, cfg_.max_iterations, cfg_.tolerance);
        auto upd = measurement_update(pred, da, ab, z, sensor_, cfg_.threads);

        rbpf::StepReport report;
        report.diverged = upd.diverged;
        if (upd.diverged) std::clog << "warning: all sensor weights vanished at step " << k << ", reset to uniform\n";
        double s2 = 0.0;
        for (double lw : upd.particle_log_weights) s2 += std::exp(2.0 * lw);
        report.ess = 1.0 / s2;
        rbpf::ParticleSet<int> view;
        for (std::size_t n = 0; n < pred.particles.size(); ++n)
            view.particles.push_back({pred.particles[n], 0, upd.particle_log_weights[n]});
        report.state = rbpf::estimate_state(view);

        belief_.landmarks.clear();
        for (std::size_t i = 1; i < upd.landmarks.size(); ++i)
            if (upd.landmarks[i].existence >= cfg_.r_prune) belief_.landmarks.push_back(upd.landmarks[i]);
        for (const auto& lm : belief_.landmarks)
            if (lm.existence >= cfg_.extract_threshold)
                report.map.push_back({Landmark(lm.mean, lm.kind), lm.existence});

        if (pred.particles.size() > 1) {
            Rng rng = make_rng(cfg_.seed, {stream::resampling, k});
            const auto idx = rbpf::systematic_indices(upd.particle_log_weights, rng);
            belief_.particles.clear();
            for (std::size_t i : idx) belief_.particles.push_back(pred.particles[i]);
        } else {
            belief_.particles = pred.particles;
        }
        return report;
    }

    [[nodiscard]] const BpBelief& belief() const { return belief_; }
    [[nodiscard]] BpBelief& belief() { return belief_; }

private:
    static UEState mean_state(const std::vector<UEState>& particles, const std::vector<double>* log_weights) {
        rbpf::ParticleSet<int> view;
        const double uniform = -std::log(static_cast<double>(particles.size()));
        for (std::size_t n = 0; n < particles.size(); ++n)
            view.particles.push_back({particles[n], 0, log_weights ? (*log_weights)[n] : uniform});
        return rbpf::estimate_state(view).mean;
    }

    filters::SensorModel sensor_;
    BpConfig cfg_;
    BpBelief belief_;
    std::vector<UEState> trajectory_;  ///< mean poses at which births were generated
};

}  // namespace rfslam::bp
