#pragma once

#include "rfslam/core/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <random>

namespace rfslam {

namespace detail {

/// Scale factors d_i = 1/sqrt(C_ii) that bring a covariance to unit diagonal.
template <int N>
[[nodiscard]] Eigen::Matrix<double, N, 1> equilibration(const Eigen::Matrix<double, N, N>& cov) {
    Eigen::Matrix<double, N, 1> d(cov.rows());
    for (Eigen::Index i = 0; i < cov.rows(); ++i) {
        const double v = cov(i, i);
        d(i) = v > 0.0 ? 1.0 / std::sqrt(v) : 1.0;
    }
    return d;
}

}  // namespace detail

/// Cholesky factor of a positive-definite covariance, prepared for repeated density evaluation.
/// Rows are equilibrated first so mixed-unit covariances (seconds next to radians) stay well conditioned.
template <int N>
class GaussianDensity {
public:
    using Vector = Eigen::Matrix<double, N, 1>;
    using Matrix = Eigen::Matrix<double, N, N>;

    /// Empty optional when `cov` is not numerically positive definite.
    [[nodiscard]] static std::optional<GaussianDensity> make(const Matrix& cov) {
        GaussianDensity g;
        g.d_ = detail::equilibration<N>(cov);
        const Matrix scaled = g.d_.asDiagonal() * cov * g.d_.asDiagonal();
        g.llt_.compute(scaled);
        if (g.llt_.info() != Eigen::Success) return std::nullopt;
        const auto& l = g.llt_.matrixLLT();
        double log_det_scaled = 0.0;
        for (Eigen::Index i = 0; i < l.rows(); ++i) {
            if (!(l(i, i) > 0.0)) return std::nullopt;
            log_det_scaled += 2.0 * std::log(l(i, i));
        }
        g.log_det_ = log_det_scaled - 2.0 * g.d_.array().log().sum();
        g.log_norm_ = -0.5 * (static_cast<double>(cov.rows()) * std::log(kTwoPi) + g.log_det_);
        return g;
    }

    [[nodiscard]] double mahalanobis2(const Vector& residual) const {
        const Vector w = llt_.matrixL().solve(Vector(d_.cwiseProduct(residual)));
        return w.squaredNorm();
    }

    [[nodiscard]] double log_pdf(const Vector& residual) const {
        return log_norm_ - 0.5 * mahalanobis2(residual);
    }

    /// cov^{-1} * rhs
    template <typename Rhs>
    [[nodiscard]] auto solve(const Rhs& rhs) const {
        using Out = Eigen::Matrix<double, N, Rhs::ColsAtCompileTime>;
        Out scaled_rhs = d_.asDiagonal() * rhs;
        Out y = llt_.solve(scaled_rhs);
        return Out(d_.asDiagonal() * y);
    }

    [[nodiscard]] double log_det() const { return log_det_; }

private:
    GaussianDensity() = default;

    Vector d_;
    Eigen::LLT<Matrix> llt_;
    double log_det_ = 0.0;
    double log_norm_ = 0.0;
};

/// log N(residual; 0, cov); -inf when cov is singular.
template <int N>
[[nodiscard]] double gaussian_log_pdf(const Eigen::Matrix<double, N, 1>& residual,
                                      const Eigen::Matrix<double, N, N>& cov) {
    auto g = GaussianDensity<N>::make(cov);
    if (!g) return -std::numeric_limits<double>::infinity();
    return g->log_pdf(residual);
}

/// Draws from N(0, cov) for a positive-semidefinite cov.
template <int N>
class GaussianSampler {
public:
    using Vector = Eigen::Matrix<double, N, 1>;
    using Matrix = Eigen::Matrix<double, N, N>;

    GaussianSampler() : factor_(Matrix::Zero()) {}

    /// Throws ConfigError if `cov` is not symmetric positive semidefinite.
    explicit GaussianSampler(const Matrix& cov, const std::string& what = "covariance") {
        if (!cov.allFinite()) throw ConfigError(what, "must be finite");
        const double scale = std::max(cov.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
        if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw ConfigError(what, "must be symmetric");
        const Vector d = detail::equilibration<N>(cov);
        const Matrix scaled = d.asDiagonal() * cov * d.asDiagonal();
        Eigen::SelfAdjointEigenSolver<Matrix> es(scaled);
        const Vector ev = es.eigenvalues();
        if (ev.minCoeff() < -1e-10 * std::max(1.0, ev.maxCoeff()))
            throw ConfigError(what, "must be positive semidefinite");
        const Vector root = ev.cwiseMax(0.0).cwiseSqrt();
        factor_ = d.cwiseInverse().asDiagonal() * es.eigenvectors() * root.asDiagonal();
        for (Eigen::Index i = 0; i < cov.rows(); ++i)
            if (cov(i, i) == 0.0) factor_.row(i).setZero();
    }

    template <typename Rng>
    [[nodiscard]] Vector operator()(Rng& rng) const {
        std::normal_distribution<double> n01(0.0, 1.0);
        Vector n(factor_.cols());
        for (Eigen::Index i = 0; i < n.size(); ++i) n(i) = n01(rng);
        return factor_ * n;
    }

    [[nodiscard]] const Matrix& factor() const { return factor_; }

private:
    Matrix factor_;
};

}  // namespace rfslam
