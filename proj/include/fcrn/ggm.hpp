#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fcrn/tensor.hpp"

namespace fcrn {

/// Same shape as the covariate matrix; true = missing.
using MissingMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Sparse Gaussian dependency model over P covariates. For each covariate j the
/// conditional law given its neighbourhood w(j) is
///   x_j | x_w ~ N(mu_j + coef_j . (x_w - mu_w), variance_j),
/// with coef_j = S_jw (S_ww + ridge I)^-1 and variance_j = s_j^2 - coef_j . S_wj.
struct GaussianGraphicalModel {
    struct Conditional {
        std::vector<std::size_t> neighbors;
        Vector coef;
        double variance = 1.0;
    };

    Vector mean;
    Vector marginal_variance;
    std::vector<Conditional> conditionals;
    double corr_threshold = 0.2;
    std::size_t k_max = 5;
    double ridge = 1e-3;

    std::size_t dim() const noexcept { return static_cast<std::size_t>(mean.size()); }
    double conditional_mean(std::size_t j, std::span<const double> row) const;
    double conditional_variance(std::size_t j) const { return conditionals.at(j).variance; }

    static GaussianGraphicalModel from_moments(const Vector& mean, const Matrix& cov, double corr_threshold,
                                               std::size_t k_max, double ridge);
};

/// Column medians over observed cells; missing cells replaced by them. Throws config_error on a fully missing column.
Matrix median_init(const Matrix& x, const MissingMask& mask);
Vector observed_medians(const Matrix& x, const MissingMask& mask);

/// Sample moments of a complete matrix, correlation-thresholded neighbourhoods (at most k_max
/// strongest per node), ridge-regularised conditional blocks.
GaussianGraphicalModel fit_ggm(const Matrix& filled, double corr_threshold, std::size_t k_max, double ridge);

/// d/dx_ij log N(x_ij; m_ij, v_j) = -(x_ij - m_ij) / v_j, conditioning on the row's current neighbour values.
double grad_log_prior(std::size_t i, std::size_t j, const Matrix& x, const GaussianGraphicalModel& ggm);

/// Deterministic fill for prediction: median start, then Gauss-Seidel sweeps of conditional means.
void conditional_mean_fill(const GaussianGraphicalModel& ggm, const Vector& medians, Matrix& x,
                           const MissingMask& mask, int sweeps = 50);

}  // namespace fcrn
