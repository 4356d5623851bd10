#pragma once

#include "rfslam/filters/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

namespace rfslam::filters {

/// Gaussian-mixture intensity over landmark positions. The BS is known and not stored.
struct PhdMap {
    std::vector<GaussianComponent> components;
    double birth_intensity_scale = 1.5e-5;
    std::vector<UEState> trajectory;  ///< poses already processed, used to thin new births

    [[nodiscard]] double total_weight() const {
        double w = 0.0;
        for (const auto& c : components) w += c.weight;
        return w;
    }
};

struct PhdConfig {
    BirthConfig birth;
    double prune_threshold = 1e-4;
    double merge_threshold = 50.0;
    std::size_t cap = 100;
    double extract_threshold = 0.08;  ///< below 1 - p_D so one misdetection does not drop a landmark
};

[[nodiscard]] inline PhdMap predict(const PhdMap& map, const std::vector<GaussianComponent>& birth) {
    PhdMap out = map;
    out.components.insert(out.components.end(), birth.begin(), birth.end());
    return out;
}

/// Range-space update. Output order: all misdetection copies, then for each measurement one
/// detection copy per prior component. Returns the measurement log-likelihood.
[[nodiscard]] inline std::pair<PhdMap, double> update(const PhdMap& map, const std::vector<Vec5>& z,
                                                      const UEState& s, const SensorModel& sm) {
    const std::size_t m = map.components.size();
    std::vector<EkfTerms> terms;
    terms.reserve(m);
    for (const auto& c : map.components) terms.push_back(ekf_terms(c, s, sm));
    const KnownLandmarkTerms bs = known_landmark_terms(sm.scenario.bs, s, sm);

    PhdMap out;
    out.birth_intensity_scale = map.birth_intensity_scale;
    out.trajectory = map.trajectory;
    out.components.reserve(m * (z.size() + 1));
    for (std::size_t i = 0; i < m; ++i) {
        GaussianComponent c = map.components[i];
        c.weight *= 1.0 - terms[i].p_detect;
        out.components.push_back(c);
    }

    double log_likelihood = 0.0;
    std::vector<double> lambda(m);
    for (const Vec5& zj : z) {
        double denom = sm.clutter;
        if (bs.p_detect > 0.0) denom += bs.p_detect * std::exp(bs.log_likelihood(zj));
        for (std::size_t i = 0; i < m; ++i) {
            const auto& t = terms[i];
            lambda[i] = t.usable() ? map.components[i].weight * t.p_detect * std::exp(t.log_likelihood(zj)) : 0.0;
            denom += lambda[i];
        }
        log_likelihood += std::log(denom);
        for (std::size_t i = 0; i < m; ++i) {
            const auto& prior = map.components[i];
            GaussianComponent c = prior;
            c.weight = denom > 0.0 ? lambda[i] / denom : 0.0;
            if (terms[i].usable()) {
                c.mean = terms[i].posterior_mean(prior.mean, zj);
                c.cov = terms[i].posterior_cov;
            }
            out.components.push_back(c);
        }
    }
    return {std::move(out), log_likelihood};
}

/// Public-unit overload.
[[nodiscard]] inline std::pair<PhdMap, double> update(const PhdMap& map, const MeasurementSet& z, const UEState& s,
                                                      const Scenario& sc) {
    return update(map, to_range_space(z), s, SensorModel(sc));
}

/// Prune, merge same-kind components around the heaviest one, cap by weight.
[[nodiscard]] inline PhdMap reduce(const PhdMap& map, double prune_threshold, double merge_threshold,
                                   std::size_t cap) {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < map.components.size(); ++i)
        if (map.components[i].weight >= prune_threshold && map.components[i].weight > 0.0) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return map.components[a].weight > map.components[b].weight;
    });

    PhdMap out;
    out.birth_intensity_scale = map.birth_intensity_scale;
    out.trajectory = map.trajectory;
    std::vector<char> used(map.components.size(), 0);
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const std::size_t lead = order[oi];
        if (used[lead]) continue;
        const auto& head = map.components[lead];
        const auto density = GaussianDensity<3>::make(head.cov);
        MomentAccumulator acc;
        for (std::size_t oj = oi; oj < order.size(); ++oj) {
            const std::size_t j = order[oj];
            if (used[j]) continue;
            const auto& c = map.components[j];
            if (c.kind != head.kind) continue;
            const Vec3 d = c.mean - head.mean;
            const bool close = j == lead || (density ? density->mahalanobis2(d) <= merge_threshold : d.isZero(0.0));
            if (!close) continue;
            used[j] = 1;
            acc.add(c.weight, c.mean, c.cov);
        }
        if (acc.total == head.weight) {
            out.components.push_back(head);  // nothing merged: keep bit-identical
        } else {
            out.components.push_back({acc.total, acc.mean(), acc.cov(), head.kind});
        }
    }
    std::stable_sort(out.components.begin(), out.components.end(),
                     [](const GaussianComponent& a, const GaussianComponent& b) { return a.weight > b.weight; });
    if (out.components.size() > cap) out.components.resize(cap);
    return out;
}

[[nodiscard]] inline std::vector<EstimatedLandmark> extract_map(const PhdMap& map, double weight_threshold = 0.5) {
    std::vector<EstimatedLandmark> out;
    for (const auto& c : map.components)
        if (c.weight >= weight_threshold) out.push_back({Landmark(c.mean, c.kind), c.weight});
    return out;
}

/// GM-PHD map filter as used inside the particle filter: birth from the current batch, update, reduce.
struct PhdFilter {
    using Map = PhdMap;
    PhdConfig config;

    [[nodiscard]] Map make_map() const {
        Map m;
        m.birth_intensity_scale = config.birth.intensity;
        return m;
    }

    double step(Map& map, const std::vector<Vec5>& z, const UEState& s, const SensorModel& sm) const {
        BirthConfig birth = config.birth;
        birth.intensity = map.birth_intensity_scale;
        auto [posterior, log_likelihood] = update(predict(map, measurement_births(z, s, sm, birth, map.trajectory)), z, s, sm);
        map = reduce(posterior, config.prune_threshold, config.merge_threshold, config.cap);
        map.trajectory.push_back(s);
        return log_likelihood;
    }

    [[nodiscard]] std::vector<EstimatedLandmark> extract(const Map& map) const {
        return extract_map(map, config.extract_threshold);
    }
};

}  // namespace rfslam::filters
