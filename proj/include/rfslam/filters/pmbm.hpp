#pragma once

#include "rfslam/assignment/assignment.hpp"
#include "rfslam/filters/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

namespace rfslam::filters {

/// Intensity of undetected landmarks.
struct PoissonPart {
    std::vector<GaussianComponent> components;

    [[nodiscard]] double total_weight() const {
        double w = 0.0;
        for (const auto& c : components) w += c.weight;
        return w;
    }
};

struct Bernoulli {
    double r = 0.0;
    Vec3 mean = Vec3::Zero();
    Mat3 cov = Mat3::Identity();
    LandmarkKind kind = LandmarkKind::VA;
    double local_log_weight = 0.0;
};

struct GlobalHypothesis {
    double log_weight = 0.0;          ///< normalized: log-sum-exp over hypotheses is 0
    std::vector<int> bernoulli_indices; ///< into PmbmMap::bernoulli_pool, ascending

    [[nodiscard]] double weight() const { return std::exp(log_weight); }
};

/// PPP for undetected landmarks plus a multi-Bernoulli mixture sharing one pool.
/// The BS is known and handled as an always-present landmark outside the pool.
struct PmbmMap {
    PoissonPart poisson;
    std::vector<Bernoulli> bernoulli_pool;
    std::vector<GlobalHypothesis> hypotheses{GlobalHypothesis{}};
    std::vector<UEState> trajectory;  ///< poses already processed, used to thin new births
};

struct PmbmConfig {
    BirthConfig birth;
    std::size_t gamma = 10;           ///< k-best assignments per hypothesis
    double hyp_threshold = 1e-4;
    std::size_t max_hyps = 20;
    double r_prune = 1e-3;
    bool recycle = true;
    double ppp_prune_threshold = 1e-7;
    double extract_threshold = 0.5;
};

// ---- Single-object cases ----

/// Undetected landmarks that stay undetected.
[[nodiscard]] inline PoissonPart thin_undetected(const PoissonPart& p, const UEState& s, const SensorModel& sm) {
    PoissonPart out = p;
    for (auto& c : out.components) {
        const auto path = model::try_predict(c.mean, c.kind, s, sm.scenario);
        const double pd = path ? model::detection_probability(c.kind, c.mean, s, sm.scenario) : 0.0;
        c.weight *= 1.0 - pd;
    }
    return out;
}

inline constexpr double kKindBranchMinExistence = 1e-3;
inline constexpr double kKindBranchMinShare = 1e-6;

/// First detection of a landmark by `z`, one Bernoulli per landmark kind. Every PPP component is
/// updated and the components of each kind are moment-matched; `local_log_weight` carries the share
/// of the kind in the updated mass. Unlikely births and negligible kinds collapse to the dominant kind.
[[nodiscard]] inline std::vector<Bernoulli> new_bernoulli_variants(const Vec5& z, const PoissonPart& p,
                                                                   const std::vector<EkfTerms>& terms,
                                                                   const SensorModel& sm) {
    std::map<LandmarkKind, MomentAccumulator> by_kind;
    double mass = 0.0;
    for (std::size_t i = 0; i < p.components.size(); ++i) {
        const auto& t = terms[i];
        if (!t.usable()) continue;
        const auto& c = p.components[i];
        const double w = c.weight * t.p_detect * std::exp(t.log_likelihood(z));
        if (!(w > 0.0)) continue;
        mass += w;
        by_kind[c.kind].add(w, t.posterior_mean(c.mean, z), t.posterior_cov);
    }
    Bernoulli b;
    const double denom = sm.clutter + mass;
    b.local_log_weight = std::log(denom);
    if (!(mass > 0.0)) {
        b.r = 0.0;
        return {b};
    }
    b.r = mass / denom;
    std::vector<Bernoulli> out;
    if (b.r >= kKindBranchMinExistence) {
        for (const auto& [kind, acc] : by_kind) {
            if (acc.total / mass < kKindBranchMinShare) continue;
            Bernoulli v = b;
            v.kind = kind;
            v.mean = acc.mean();
            v.cov = acc.cov();
            v.local_log_weight += std::log(acc.total / mass);
            out.push_back(v);
        }
    }
    if (out.size() > 1) {
        double kept = 0.0;
        for (const auto& v : out) kept += std::exp(v.local_log_weight - b.local_log_weight);
        for (auto& v : out) v.local_log_weight -= std::log(kept);
        return out;
    }
    const MomentAccumulator* best = nullptr;
    for (const auto& [kind, acc] : by_kind) {
        if (!best || acc.total > best->total) {
            best = &acc;
            b.kind = kind;
        }
    }
    b.mean = best->mean();
    b.cov = best->cov();
    return {b};
}

/// First detection collapsed to the dominant kind, weighted by the whole birth mass.
[[nodiscard]] inline Bernoulli new_bernoulli(const Vec5& z, const PoissonPart& p,
                                             const std::vector<EkfTerms>& terms, const SensorModel& sm) {
    const auto variants = new_bernoulli_variants(z, p, terms, sm);
    const Bernoulli* best = &variants.front();
    for (const auto& v : variants)
        if (v.local_log_weight > best->local_log_weight) best = &v;
    std::vector<double> lw;
    for (const auto& v : variants) lw.push_back(v.local_log_weight);
    Bernoulli b = *best;
    b.local_log_weight = log_sum_exp(lw);
    return b;
}

[[nodiscard]] inline std::vector<Bernoulli> new_bernoulli_variants(const Vec5& z, const PoissonPart& p,
                                                                   const UEState& s, const SensorModel& sm) {
    std::vector<EkfTerms> terms;
    for (const auto& c : p.components) terms.push_back(ekf_terms(c, s, sm));
    return new_bernoulli_variants(z, p, terms, sm);
}

[[nodiscard]] inline Bernoulli new_bernoulli(const Vec5& z, const PoissonPart& p, const UEState& s,
                                             const SensorModel& sm) {
    std::vector<EkfTerms> terms;
    for (const auto& c : p.components) terms.push_back(ekf_terms(c, s, sm));
    return new_bernoulli(z, p, terms, sm);
}

/// Previously detected landmark, missed now. `p_detect` is evaluated at the Bernoulli mean.
[[nodiscard]] inline Bernoulli misdetect_bernoulli(const Bernoulli& b, double p_detect) {
    Bernoulli out = b;
    const double keep = 1.0 - b.r + b.r * (1.0 - p_detect);
    out.local_log_weight = std::log(keep);
    out.r = keep > 0.0 ? b.r * (1.0 - p_detect) / keep : 0.0;
    return out;
}

[[nodiscard]] inline Bernoulli misdetect_bernoulli(const Bernoulli& b, const UEState& s, const SensorModel& sm) {
    const auto path = model::try_predict(b.mean, b.kind, s, sm.scenario);
    return misdetect_bernoulli(b, path ? model::detection_probability(b.kind, b.mean, s, sm.scenario) : 0.0);
}

/// Previously detected landmark, detected again by `z`. local_log_weight is -inf when forbidden.
[[nodiscard]] inline Bernoulli redetect_bernoulli(const Bernoulli& b, const EkfTerms& t, const Vec5& z) {
    Bernoulli out = b;
    out.r = 1.0;
    if (!(b.r > 0.0) || !t.usable()) {
        out.local_log_weight = kNegInf;
        return out;
    }
    out.local_log_weight = std::log(b.r * t.p_detect) + t.log_likelihood(z);
    out.mean = t.posterior_mean(b.mean, z);
    out.cov = t.posterior_cov;
    return out;
}

[[nodiscard]] inline Bernoulli redetect_bernoulli(const Bernoulli& b, const Vec5& z, const UEState& s,
                                                  const SensorModel& sm) {
    return redetect_bernoulli(b, ekf_terms(b.mean, b.cov, b.kind, s, sm), z);
}

/// Rows are measurements. Columns: one per previously detected landmark, then one per measurement (new).
/// `redetect(i, j)` and `misdetect(i)` are local log weights, `new_log(j)` the new-landmark ones.
[[nodiscard]] inline assignment::CostMatrix build_cost_matrix(const Eigen::MatrixXd& redetect,
                                                              const Eigen::VectorXd& misdetect,
                                                              const Eigen::VectorXd& new_log) {
    const Eigen::Index n_z = new_log.size();
    const Eigen::Index n_b = misdetect.size();
    assignment::CostMatrix c = assignment::CostMatrix::Constant(n_z, n_b + n_z, assignment::kForbidden);
    for (Eigen::Index j = 0; j < n_z; ++j) {
        for (Eigen::Index i = 0; i < n_b; ++i) {
            const double l = redetect(i, j) - misdetect(i);
            c(j, i) = std::isnan(l) || l == kNegInf ? assignment::kForbidden : -l;
        }
        c(j, n_b + j) = new_log(j) == kNegInf ? assignment::kForbidden : -new_log(j);
    }
    return c;
}

// ---- Map update ----

struct PmbmUpdateResult {
    PmbmMap map;
    double log_likelihood = 0.0;
};

namespace detail {

/// Per-update quantities shared by all hypotheses. The BS is the last legacy column of every cost matrix.
struct PmbmWork {
    std::vector<EkfTerms> pool_terms;
    std::vector<Bernoulli> misdetected;
    Eigen::MatrixXd redetect;  // pool x measurements
    std::vector<std::vector<Bernoulli>> new_variants;  // per measurement
    Eigen::VectorXd new_log;
    double bs_misdetect = 0.0;
    Eigen::VectorXd bs_redetect;
};

/// Stand-in for log(0) so a certain detection still yields finite assignment costs.
inline constexpr double kLogFloor = -708.0;

inline void normalize_log_weights(std::vector<GlobalHypothesis>& hyps) {
    std::vector<double> lw;
    for (const auto& h : hyps) lw.push_back(h.log_weight);
    const double total = log_sum_exp(lw);
    for (auto& h : hyps) h.log_weight -= total;
}

}  // namespace detail

/// Full update of a PMBM map whose PPP already contains the births of this step.
/// `murty_gap` stops the per-hypothesis enumeration once assignments are that many nats worse than the best.
[[nodiscard]] inline PmbmUpdateResult update(const PmbmMap& map, const std::vector<Vec5>& z, const UEState& s,
                                             const SensorModel& sm, std::size_t gamma,
                                             double murty_gap = std::numeric_limits<double>::infinity()) {
    if (gamma < 1) throw Error("pmbm update: gamma must be >= 1");
    const std::size_t n_z = z.size();
    const std::size_t n_pool = map.bernoulli_pool.size();
    detail::PmbmWork w;

    // Legacy Bernoullis.
    w.pool_terms.reserve(n_pool);
    w.redetect.resize(static_cast<Eigen::Index>(n_pool), static_cast<Eigen::Index>(n_z));
    for (std::size_t i = 0; i < n_pool; ++i) {
        const Bernoulli& b = map.bernoulli_pool[i];
        w.pool_terms.push_back(ekf_terms(b.mean, b.cov, b.kind, s, sm));
        const auto& t = w.pool_terms.back();
        w.misdetected.push_back(misdetect_bernoulli(b, t.innovation ? t.p_detect : 0.0));
        for (std::size_t j = 0; j < n_z; ++j) {
            const bool ok = b.r > 0.0 && t.usable();
            w.redetect(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                ok ? std::log(b.r * t.p_detect) + t.log_likelihood(z[j]) : kNegInf;
        }
    }

    // Known BS: an always-present landmark with zero position uncertainty.
    const KnownLandmarkTerms bs = known_landmark_terms(sm.scenario.bs, s, sm);
    w.bs_misdetect = std::log(1.0 - bs.p_detect);
    w.bs_redetect.resize(static_cast<Eigen::Index>(n_z));
    for (std::size_t j = 0; j < n_z; ++j)
        w.bs_redetect(static_cast<Eigen::Index>(j)) =
            bs.p_detect > 0.0 ? std::log(bs.p_detect) + bs.log_likelihood(z[j]) : kNegInf;

    // First detections.
    std::vector<EkfTerms> ppp_terms;
    ppp_terms.reserve(map.poisson.components.size());
    for (const auto& c : map.poisson.components) ppp_terms.push_back(ekf_terms(c, s, sm));
    w.new_log.resize(static_cast<Eigen::Index>(n_z));
    for (std::size_t j = 0; j < n_z; ++j) {
        w.new_variants.push_back(new_bernoulli_variants(z[j], map.poisson, ppp_terms, sm));
        std::vector<double> lw;
        for (const auto& v : w.new_variants.back()) lw.push_back(v.local_log_weight);
        w.new_log(static_cast<Eigen::Index>(j)) = log_sum_exp(lw);
    }

    // Children of every hypothesis.
    PmbmMap out;
    out.trajectory = map.trajectory;
    std::map<std::pair<int, int>, int> pool_index;  // (source, measurement) -> new pool slot; source -1-v for kind variant v of a new landmark
    auto slot = [&](int source, int meas) -> int {
        const auto key = std::make_pair(source, meas);
        if (auto it = pool_index.find(key); it != pool_index.end()) return it->second;
        Bernoulli b;
        if (source < 0) {
            b = w.new_variants[static_cast<std::size_t>(meas)][static_cast<std::size_t>(-1 - source)];
        } else if (meas < 0) {
            b = w.misdetected[static_cast<std::size_t>(source)];
        } else {
            b = redetect_bernoulli(map.bernoulli_pool[static_cast<std::size_t>(source)],
                                   w.pool_terms[static_cast<std::size_t>(source)], z[static_cast<std::size_t>(meas)]);
        }
        const int idx = static_cast<int>(out.bernoulli_pool.size());
        out.bernoulli_pool.push_back(b);
        pool_index.emplace(key, idx);
        return idx;
    };

    std::vector<GlobalHypothesis> children;
    for (const auto& hyp : map.hypotheses) {
        const auto& idx = hyp.bernoulli_indices;
        const Eigen::Index n_b = static_cast<Eigen::Index>(idx.size());
        Eigen::MatrixXd red(n_b + 1, static_cast<Eigen::Index>(n_z));
        Eigen::VectorXd mis(n_b + 1);
        double base = hyp.log_weight;
        for (Eigen::Index i = 0; i < n_b; ++i) {
            const auto pi = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]);
            red.row(i) = w.redetect.row(pi);
            mis(i) = std::max(w.misdetected[static_cast<std::size_t>(pi)].local_log_weight, detail::kLogFloor);
            base += mis(i);
        }
        red.row(n_b) = w.bs_redetect.transpose();
        mis(n_b) = std::max(w.bs_misdetect, detail::kLogFloor);
        base += mis(n_b);

        if (n_z == 0) {
            GlobalHypothesis child{base, {}};
            for (int pi : idx) child.bernoulli_indices.push_back(slot(pi, -1));
            children.push_back(std::move(child));
            continue;
        }

        const auto cost = build_cost_matrix(red, mis, w.new_log);
        bool feasible = true;
        for (Eigen::Index r = 0; r < cost.rows() && feasible; ++r) feasible = (cost.row(r).array() < assignment::kForbidden).any();
        if (!feasible) continue;
        std::vector<assignment::Assignment> best;
        try {
            best = assignment::murty_kbest(cost, gamma, murty_gap);
        } catch (const Error&) {
            continue;  // no admissible association for this hypothesis
        }
        for (const auto& a : best) {
            GlobalHypothesis parent{base - a.total_cost, {}};
            std::vector<int> meas_of(static_cast<std::size_t>(n_b), -1);
            std::vector<int> born;
            for (std::size_t j = 0; j < n_z; ++j) {
                const int col = a.row_to_col[j];
                if (col < n_b) {
                    meas_of[static_cast<std::size_t>(col)] = static_cast<int>(j);
                } else if (col > n_b) {
                    born.push_back(col - static_cast<int>(n_b) - 1);
                }
                // col == n_b is the BS.
            }
            for (Eigen::Index i = 0; i < n_b; ++i)
                parent.bernoulli_indices.push_back(slot(idx[static_cast<std::size_t>(i)], meas_of[static_cast<std::size_t>(i)]));

            // One child per combination of kinds of the new landmarks.
            std::vector<std::size_t> pick(born.size(), 0);
            while (true) {
                GlobalHypothesis child = parent;
                for (std::size_t k = 0; k < born.size(); ++k) {
                    const int j = born[k];
                    const auto& v = w.new_variants[static_cast<std::size_t>(j)];
                    child.log_weight += v[pick[k]].local_log_weight - w.new_log(j);
                    child.bernoulli_indices.push_back(slot(-1 - static_cast<int>(pick[k]), j));
                }
                std::sort(child.bernoulli_indices.begin(), child.bernoulli_indices.end());
                children.push_back(std::move(child));
                std::size_t k = 0;
                for (; k < born.size(); ++k) {
                    if (++pick[k] < w.new_variants[static_cast<std::size_t>(born[k])].size()) break;
                    pick[k] = 0;
                }
                if (k == born.size()) break;
            }
        }
    }

    std::vector<double> lw;
    for (const auto& h : children) lw.push_back(h.log_weight);
    const double mixture = log_sum_exp(lw);
    PmbmUpdateResult result;
    result.log_likelihood = mixture - map.poisson.total_weight() - sm.scenario.clutter_mean;
    out.hypotheses = std::move(children);
    if (out.hypotheses.empty()) {
        out.hypotheses.push_back(GlobalHypothesis{});
        out.bernoulli_pool.clear();
        result.log_likelihood = kNegInf;
    } else {
        detail::normalize_log_weights(out.hypotheses);
    }
    out.poisson = thin_undetected(map.poisson, s, sm);
    result.map = std::move(out);
    return result;
}

[[nodiscard]] inline PmbmUpdateResult update(const PmbmMap& map, const MeasurementSet& z, const UEState& s,
                                             const Scenario& sc, std::size_t gamma) {
    return update(map, to_range_space(z), s, SensorModel(sc), gamma);
}

/// Hypothesis pruning/capping, Bernoulli pruning with optional recycling, duplicate merging, pool cleanup.
[[nodiscard]] inline PmbmMap reduce(const PmbmMap& map, double hyp_threshold, std::size_t max_hyps, double r_prune,
                                    bool recycle) {
    if (max_hyps < 1) throw Error("pmbm reduce: max_hyps must be >= 1");
    PmbmMap out;
    out.poisson = map.poisson;
    out.trajectory = map.trajectory;

    std::vector<GlobalHypothesis> hyps = map.hypotheses;
    detail::normalize_log_weights(hyps);
    auto by_weight = [](const GlobalHypothesis& a, const GlobalHypothesis& b) {
        if (a.log_weight != b.log_weight) return a.log_weight > b.log_weight;
        return a.bernoulli_indices < b.bernoulli_indices;
    };
    std::sort(hyps.begin(), hyps.end(), by_weight);
    std::vector<GlobalHypothesis> kept;
    for (const auto& h : hyps)
        if (h.weight() >= hyp_threshold) kept.push_back(h);
    if (kept.empty() && !hyps.empty()) kept.push_back(hyps.front());
    if (kept.size() > max_hyps) kept.resize(max_hyps);
    detail::normalize_log_weights(kept);

    // Low-existence Bernoullis leave every hypothesis.
    std::vector<double> recycled_mass(map.bernoulli_pool.size(), 0.0);
    for (auto& h : kept) {
        std::vector<int> keep_idx;
        for (int i : h.bernoulli_indices) {
            const auto& b = map.bernoulli_pool[static_cast<std::size_t>(i)];
            if (b.r >= r_prune) {
                keep_idx.push_back(i);
            } else {
                recycled_mass[static_cast<std::size_t>(i)] += h.weight() * b.r;
            }
        }
        h.bernoulli_indices = std::move(keep_idx);
    }
    if (recycle) {
        for (std::size_t i = 0; i < recycled_mass.size(); ++i) {
            if (!(recycled_mass[i] > 0.0)) continue;
            const auto& b = map.bernoulli_pool[i];
            out.poisson.components.push_back({recycled_mass[i], b.mean, b.cov, b.kind});
        }
    }

    // Merge hypotheses that became identical.
    std::map<std::vector<int>, std::vector<double>> groups;
    std::vector<std::vector<int>> first_seen;
    for (const auto& h : kept) {
        auto [it, inserted] = groups.try_emplace(h.bernoulli_indices);
        if (inserted) first_seen.push_back(h.bernoulli_indices);
        it->second.push_back(h.log_weight);
    }
    std::vector<GlobalHypothesis> merged;
    for (const auto& key : first_seen) merged.push_back({log_sum_exp(groups[key]), key});
    detail::normalize_log_weights(merged);
    std::sort(merged.begin(), merged.end(), by_weight);

    // Compact the pool.
    std::vector<int> remap(map.bernoulli_pool.size(), -1);
    for (auto& h : merged) {
        for (int& i : h.bernoulli_indices) {
            auto& r = remap[static_cast<std::size_t>(i)];
            if (r < 0) {
                r = static_cast<int>(out.bernoulli_pool.size());
                out.bernoulli_pool.push_back(map.bernoulli_pool[static_cast<std::size_t>(i)]);
            }
            i = r;
        }
        std::sort(h.bernoulli_indices.begin(), h.bernoulli_indices.end());
    }
    out.hypotheses = std::move(merged);
    if (out.hypotheses.empty()) out.hypotheses.push_back(GlobalHypothesis{});
    return out;
}

/// Bernoullis of the most likely hypothesis with r >= threshold.
[[nodiscard]] inline std::vector<EstimatedLandmark> extract_map(const PmbmMap& map, double threshold = 0.5) {
    std::vector<EstimatedLandmark> out;
    if (map.hypotheses.empty()) return out;
    const auto best = std::max_element(map.hypotheses.begin(), map.hypotheses.end(),
                                       [](const auto& a, const auto& b) { return a.log_weight < b.log_weight; });
    for (int i : best->bernoulli_indices) {
        const auto& b = map.bernoulli_pool[static_cast<std::size_t>(i)];
        if (b.r >= threshold) out.push_back({Landmark(b.mean, b.kind), b.r});
    }
    return out;
}

/// PMBM map filter as used inside the particle filter.
struct PmbmFilter {
    using Map = PmbmMap;
    PmbmConfig config;

    [[nodiscard]] Map make_map() const { return Map{}; }

    [[nodiscard]] double murty_gap() const {
        return config.hyp_threshold > 0.0 ? -std::log(config.hyp_threshold)
                                          : std::numeric_limits<double>::infinity();
    }

    double step(Map& map, const std::vector<Vec5>& z, const UEState& s, const SensorModel& sm) const {
        Map predicted = map;
        for (auto& b : measurement_births(z, s, sm, config.birth, map.trajectory)) predicted.poisson.components.push_back(b);
        auto result = update(predicted, z, s, sm, config.gamma, murty_gap());
        map = reduce(result.map, config.hyp_threshold, config.max_hyps, config.r_prune, config.recycle);
        auto& ppp = map.poisson.components;
        ppp.erase(std::remove_if(ppp.begin(), ppp.end(),
                                 [&](const GaussianComponent& c) { return c.weight < config.ppp_prune_threshold; }),
                  ppp.end());
        map.trajectory.push_back(s);
        return result.log_likelihood;
    }

    [[nodiscard]] std::vector<EstimatedLandmark> extract(const Map& map) const {
        return extract_map(map, config.extract_threshold);
    }
};

}  // namespace rfslam::filters
