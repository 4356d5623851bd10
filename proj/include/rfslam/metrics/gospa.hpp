#pragma once

#include "rfslam/assignment/assignment.hpp"
#include "rfslam/core/types.hpp"
#include "rfslam/motion/motion.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace rfslam::metrics {

struct GospaParams {
    double cutoff = 20.0;
    double p = 2.0;
    double alpha = 2.0;

    void validate() const {
        if (!(cutoff > 0.0)) throw ConfigError("gospa.cutoff", "must be positive");
        if (!(p >= 1.0)) throw ConfigError("gospa.p", "must be >= 1");
        if (!(alpha > 0.0 && alpha <= 2.0)) throw ConfigError("gospa.alpha", "must be in (0, 2]");
    }
};

/// Each part is the p-th root of its contribution, so total^p = localization^p + missed^p + false_targets^p.
struct GospaResult {
    double total = 0.0;
    double localization = 0.0;
    double missed = 0.0;
    double false_targets = 0.0;
    int n_missed = 0;
    int n_false = 0;
};

namespace detail {

/// `kinds` empty means every pair is comparable.
inline GospaResult gospa_impl(const std::vector<Vec3>& est, const std::vector<Vec3>& truth,
                              const std::vector<LandmarkKind>& est_kind, const std::vector<LandmarkKind>& truth_kind,
                              const GospaParams& prm) {
    prm.validate();
    const auto n = static_cast<Eigen::Index>(truth.size());
    const auto m = static_cast<Eigen::Index>(est.size());
    const double cp = std::pow(prm.cutoff, prm.p);
    const double unmatched = cp / prm.alpha;

    std::vector<double> loc_terms;
    int n_pairs = 0;
    if (n > 0 && m > 0) {
        // Rows: truth. Columns: estimates, then one dummy (miss) column per truth point.
        assignment::CostMatrix c = assignment::CostMatrix::Constant(n, m + n, assignment::kForbidden);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < m; ++j) {
                if (!truth_kind.empty() && truth_kind[static_cast<std::size_t>(i)] != est_kind[static_cast<std::size_t>(j)])
                    continue;
                const double d = (truth[static_cast<std::size_t>(i)] - est[static_cast<std::size_t>(j)]).norm();
                if (d >= prm.cutoff && prm.alpha >= 2.0) continue;  // pairing costs as much as a miss plus a false
                c(i, j) = std::pow(std::min(d, prm.cutoff), prm.p) - 2.0 * unmatched;
            }
            for (Eigen::Index j = 0; j < n; ++j) c(i, m + j) = 0.0;
        }
        const auto a = assignment::solve_min_cost(c);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int col = a.row_to_col[static_cast<std::size_t>(i)];
            if (col < m) {
                ++n_pairs;
                const double d = (truth[static_cast<std::size_t>(i)] - est[static_cast<std::size_t>(col)]).norm();
                loc_terms.push_back(std::pow(std::min(d, prm.cutoff), prm.p));
            }
        }
    }

    GospaResult r;
    double loc = 0.0;
    for (double t : loc_terms) loc += t;
    r.n_missed = static_cast<int>(n) - n_pairs;
    r.n_false = static_cast<int>(m) - n_pairs;
    const double miss = unmatched * r.n_missed;
    const double fals = unmatched * r.n_false;
    r.localization = std::pow(loc, 1.0 / prm.p);
    r.missed = std::pow(miss, 1.0 / prm.p);
    r.false_targets = std::pow(fals, 1.0 / prm.p);
    r.total = std::pow(loc + miss + fals, 1.0 / prm.p);
    return r;
}

}  // namespace detail

[[nodiscard]] inline GospaResult gospa(const std::vector<Vec3>& est, const std::vector<Vec3>& truth,
                                       const GospaParams& prm = {}) {
    return detail::gospa_impl(est, truth, {}, {}, prm);
}

/// Landmarks of different kinds are never matched.
[[nodiscard]] inline GospaResult gospa(const std::vector<Landmark>& est, const std::vector<Landmark>& truth,
                                       const GospaParams& prm = {}) {
    std::vector<Vec3> ep, tp;
    std::vector<LandmarkKind> ek, tk;
    for (const auto& l : est) {
        ep.push_back(l.position());
        ek.push_back(l.kind());
    }
    for (const auto& l : truth) {
        tp.push_back(l.position());
        tk.push_back(l.kind());
    }
    return detail::gospa_impl(ep, tp, ek, tk, prm);
}

enum class StateField { position, x, y, heading, clock_bias };

[[nodiscard]] inline double field_error(const UEState& est, const UEState& truth, StateField f) {
    switch (f) {
        case StateField::position: return std::hypot(est.x - truth.x, est.y - truth.y);
        case StateField::x: return est.x - truth.x;
        case StateField::y: return est.y - truth.y;
        case StateField::heading: return wrap_angle(est.heading - truth.heading);
        case StateField::clock_bias: return est.clock_bias - truth.clock_bias;
    }
    return 0.0;
}

/// Root mean squared error of one field over a sequence; heading errors are wrapped first.
[[nodiscard]] inline double rmse(const std::vector<UEState>& est, const std::vector<UEState>& truth, StateField f) {
    if (est.size() != truth.size()) throw Error("rmse: sequences differ in length");
    if (est.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t k = 0; k < est.size(); ++k) {
        const double e = field_error(est[k], truth[k], f);
        acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(est.size()));
}

}  // namespace rfslam::metrics
