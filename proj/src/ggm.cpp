#include "fcrn/ggm.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <string>

#include <Eigen/Cholesky>

#include "fcrn/error.hpp"

namespace fcrn {

double GaussianGraphicalModel::conditional_mean(std::size_t j, std::span<const double> row) const {
    const auto& c = conditionals.at(j);
    double m = mean[static_cast<Eigen::Index>(j)];
    for (std::size_t k = 0; k < c.neighbors.size(); ++k) {
        const auto p = c.neighbors[k];
        m += c.coef[static_cast<Eigen::Index>(k)] * (row[p] - mean[static_cast<Eigen::Index>(p)]);
    }
    return m;
}

GaussianGraphicalModel GaussianGraphicalModel::from_moments(const Vector& mean, const Matrix& cov,
                                                            double corr_threshold, std::size_t k_max,
                                                            double ridge) {
    const auto P = static_cast<std::size_t>(mean.size());
    if (cov.rows() != mean.size() || cov.cols() != mean.size()) throw invalid_argument("from_moments: covariance shape");
    GaussianGraphicalModel ggm;
    ggm.mean = mean;
    ggm.marginal_variance = cov.diagonal();
    ggm.corr_threshold = corr_threshold;
    ggm.k_max = k_max;
    ggm.ridge = ridge;
    ggm.conditionals.resize(P);

    for (std::size_t j = 0; j < P; ++j) {
        const auto J = static_cast<Eigen::Index>(j);
        auto& c = ggm.conditionals[j];
        c.variance = cov(J, J);
        if (!(cov(J, J) > 0.0)) {
            c.variance = std::max(cov(J, J), ridge);
            continue;
        }
        std::vector<std::pair<double, std::size_t>> cand;
        for (std::size_t p = 0; p < P; ++p) {
            const auto Pp = static_cast<Eigen::Index>(p);
            if (p == j || !(cov(Pp, Pp) > 0.0)) continue;
            const double r = cov(J, Pp) / std::sqrt(cov(J, J) * cov(Pp, Pp));
            if (std::abs(r) >= corr_threshold) cand.emplace_back(std::abs(r), p);
        }
        // strongest first; ties resolved by column index for determinism
        std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        if (cand.size() > k_max) cand.resize(k_max);
        for (const auto& [r, p] : cand) c.neighbors.push_back(p);
        std::sort(c.neighbors.begin(), c.neighbors.end());
        if (c.neighbors.empty()) continue;

        const auto K = static_cast<Eigen::Index>(c.neighbors.size());
        Matrix block(K, K);
        Vector cross(K);
        for (Eigen::Index a = 0; a < K; ++a) {
            cross[a] = cov(J, static_cast<Eigen::Index>(c.neighbors[a]));
            for (Eigen::Index b = 0; b < K; ++b) {
                block(a, b) = cov(static_cast<Eigen::Index>(c.neighbors[a]), static_cast<Eigen::Index>(c.neighbors[b]));
            }
        }
        double lambda = ridge;
        for (int attempt = 0; attempt < 12; ++attempt) {
            Matrix reg = block + lambda * Matrix::Identity(K, K);
            Eigen::LLT<Matrix> llt(reg);
            if (llt.info() == Eigen::Success) {
                c.coef = llt.solve(cross);
                c.variance = cov(J, J) - c.coef.dot(cross);
                if (c.variance > 0.0 && c.coef.allFinite()) break;
            }
            lambda = lambda > 0.0 ? lambda * 10.0 : 1e-8;
            std::cerr << "warning: singular neighbourhood block for covariate " << j << ", ridge raised to " << lambda
                      << "\n";
        }
        if (!(c.variance > 0.0)) c.variance = std::max(ridge, 1e-12) * cov(J, J);
    }
    return ggm;
}

Vector observed_medians(const Matrix& x, const MissingMask& mask) {
    if (mask.rows() != x.rows() || mask.cols() != x.cols()) throw invalid_argument("median_init: mask shape");
    Vector med(x.cols());
    std::vector<double> col;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        col.clear();
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            if (!mask(i, j)) col.push_back(x(i, j));
        }
        if (col.empty()) throw config_error("median_init: column " + std::to_string(j) + " has no observed values");
        std::sort(col.begin(), col.end());
        const std::size_t n = col.size();
        med[j] = n % 2 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
    }
    return med;
}

Matrix median_init(const Matrix& x, const MissingMask& mask) {
    Matrix out = x;
    if (x.size() == 0) return out;
    bool any = false;
    for (Eigen::Index i = 0; i < mask.size(); ++i) any = any || mask.data()[i];
    if (!any) return out;
    const Vector med = observed_medians(x, mask);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            if (mask(i, j)) out(i, j) = med[j];
        }
    }
    return out;
}

GaussianGraphicalModel fit_ggm(const Matrix& filled, double corr_threshold, std::size_t k_max, double ridge) {
    if (filled.cols() < 2) throw invalid_argument("fit_ggm: need at least 2 columns");
    if (filled.rows() < 2) throw invalid_argument("fit_ggm: need at least 2 rows");
    if (!filled.allFinite()) throw numeric_error("fit_ggm: matrix contains non-finite values");
    const Vector mean = filled.colwise().mean().transpose();
    const Matrix centered = filled.rowwise() - mean.transpose();
    const Matrix cov = (centered.transpose() * centered) / static_cast<double>(filled.rows() - 1);
    return GaussianGraphicalModel::from_moments(mean, cov, corr_threshold, k_max, ridge);
}

double grad_log_prior(std::size_t i, std::size_t j, const Matrix& x, const GaussianGraphicalModel& ggm) {
    const auto row = x.row(static_cast<Eigen::Index>(i));
    const std::span<const double> r(row.data(), static_cast<std::size_t>(row.size()));
    const double m = ggm.conditional_mean(j, r);
    return -(x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - m) / ggm.conditional_variance(j);
}

void conditional_mean_fill(const GaussianGraphicalModel& ggm, const Vector& medians, Matrix& x,
                           const MissingMask& mask, int sweeps) {
    if (static_cast<std::size_t>(x.cols()) != ggm.dim() || medians.size() != x.cols()) {
        throw compatibility_error("conditional_mean_fill: covariate count differs from the fitted model");
    }
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            if (mask(i, j)) x(i, j) = medians[j];
        }
    }
    for (int s = 0; s < sweeps; ++s) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            for (Eigen::Index j = 0; j < x.cols(); ++j) {
                if (!mask(i, j)) continue;
                const auto row = x.row(i);
                x(i, j) = ggm.conditional_mean(static_cast<std::size_t>(j), {row.data(), static_cast<std::size_t>(row.size())});
            }
        }
    }
}

}  // namespace fcrn
