#pragma once

#include "rfslam/core/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

/// Rectangular min-cost assignment (every row to a distinct column) and
/// Murty's ranked k-best enumeration. Forbidden cells are +infinity.
namespace rfslam::assignment {

using CostMatrix = Eigen::MatrixXd;

inline constexpr double kForbidden = std::numeric_limits<double>::infinity();

struct Assignment {
    std::vector<int> row_to_col;
    double total_cost = 0.0;

    friend bool operator==(const Assignment&, const Assignment&) = default;
};

/// Sum of the selected entries in row order. Every cost reported by this module is computed this way.
[[nodiscard]] inline double assignment_cost(const CostMatrix& c, const std::vector<int>& row_to_col) {
    double total = 0.0;
    for (std::size_t r = 0; r < row_to_col.size(); ++r) total += c(static_cast<Eigen::Index>(r), row_to_col[r]);
    return total;
}

namespace detail {

/// Shortest-augmenting-path Hungarian method with row/column potentials, rows <= cols.
/// Returns nullopt if no assignment with finite cost exists.
[[nodiscard]] inline std::optional<std::vector<int>> hungarian(const CostMatrix& c) {
    const int n = static_cast<int>(c.rows());
    const int m = static_cast<int>(c.cols());
    if (n == 0) return std::vector<int>{};
    if (n > m) return std::nullopt;

    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based arrays; column 0 is the virtual source.
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    std::vector<char> used(m + 1);

    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = -1;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double a = c(i0 - 1, j - 1);
                if (a < inf) {
                    const double cur = a - u[i0] - v[j];
                    if (cur < minv[j]) {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if (j1 < 0 || !(delta < inf)) return std::nullopt;
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= m; ++j)
        if (p[j] != 0) row_to_col[static_cast<std::size_t>(p[j] - 1)] = j - 1;
    return row_to_col;
}

inline void check_matrix(const CostMatrix& c) {
    if (c.rows() > c.cols()) throw Error("assignment: more rows than columns");
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
        bool finite = false;
        for (Eigen::Index j = 0; j < c.cols(); ++j) {
            if (std::isnan(c(r, j)) || c(r, j) == -std::numeric_limits<double>::infinity())
                throw Error("assignment: cost entries must be finite or +inf");
            finite = finite || std::isfinite(c(r, j));
        }
        if (!finite) throw Error("assignment: row " + std::to_string(r) + " has no admissible column");
    }
}

}  // namespace detail

/// Globally optimal assignment of every row to a distinct column. Throws Error when infeasible.
[[nodiscard]] inline Assignment solve_min_cost(const CostMatrix& c) {
    detail::check_matrix(c);
    auto sol = detail::hungarian(c);
    if (!sol) throw Error("assignment: no feasible assignment");
    Assignment a{std::move(*sol), 0.0};
    a.total_cost = assignment_cost(c, a.row_to_col);
    return a;
}

/// Up to `k` best assignments in nondecreasing cost (Murty's partitioning).
/// Enumeration stops early once the next candidate costs more than best + `max_cost_gap`.
/// Ties are broken deterministically for a given matrix.
[[nodiscard]] inline std::vector<Assignment> murty_kbest(const CostMatrix& c, std::size_t k,
                                                         double max_cost_gap = kForbidden) {
    if (k == 0) throw Error("murty_kbest: k must be >= 1");
    detail::check_matrix(c);
    const Eigen::Index n = c.rows();

    struct Node {
        CostMatrix cost;           // constrained copy
        std::vector<int> solution;
        double total = 0.0;
        Eigen::Index fixed_rows = 0;  // rows [0, fixed_rows) are forced to `solution`
    };
    auto worse = [](const Node& a, const Node& b) {
        if (a.total != b.total) return a.total > b.total;
        return a.solution > b.solution;
    };
    std::priority_queue<Node, std::vector<Node>, decltype(worse)> queue(worse);

    std::vector<Assignment> out;
    auto first = detail::hungarian(c);
    if (!first) throw Error("assignment: no feasible assignment");
    {
        Node root{c, std::move(*first), 0.0, 0};
        root.total = assignment_cost(c, root.solution);
        queue.push(std::move(root));
    }

    while (!queue.empty() && out.size() < k) {
        Node node = queue.top();
        queue.pop();
        if (!out.empty() && node.total > out.front().total_cost + max_cost_gap) break;
        out.push_back({node.solution, node.total});

        // Partition the remaining solution space of `node` around its optimum.
        CostMatrix constrained = node.cost;
        for (Eigen::Index r = node.fixed_rows; r < n; ++r) {
            const int col = node.solution[static_cast<std::size_t>(r)];
            CostMatrix child = constrained;
            child(r, col) = kForbidden;
            if (auto sol = detail::hungarian(child)) {
                Node next{child, std::move(*sol), 0.0, r};
                next.total = assignment_cost(c, next.solution);
                if (std::isfinite(next.total)) queue.push(std::move(next));
            }
            // Force row r to `col` for the following siblings.
            for (Eigen::Index j = 0; j < constrained.cols(); ++j)
                if (j != col) constrained(r, j) = kForbidden;
            for (Eigen::Index i = 0; i < n; ++i)
                if (i != r) constrained(i, col) = kForbidden;
        }
    }
    return out;
}

}  // namespace rfslam::assignment
