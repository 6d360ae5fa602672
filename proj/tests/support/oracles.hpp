#pragma once
// Independent reference computations shared by the unit and acceptance tests.
// Nothing here calls the augmentation, loss or Graph code it is used to check.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "fcrn/hazard_model.hpp"
#include "fcrn/survival_data.hpp"

namespace oracle {

using fcrn::Dataset;
using fcrn::FCRNModel;
using fcrn::Matrix;
using fcrn::PreparedData;
using fcrn::TimeGrid;
using fcrn::Vector;

inline int interval_of(double time, const TimeGrid& grid) {
    if (time <= 0.0) return 1;
    int l = 1;
    while (l < grid.intervals() && time > grid.width() * l) ++l;
    return l;
}

/// Kaplan-Meier of the censoring distribution at t_0..t_L, written from the textbook product.
inline std::vector<double> censoring_km(const Dataset& ds, const TimeGrid& grid, double floor = 1e-4) {
    const int L = grid.intervals();
    std::vector<double> g(static_cast<std::size_t>(L + 1), 1.0);
    double prod = 1.0;
    for (int l = 1; l <= L; ++l) {
        double at_risk = 0.0, censored = 0.0;
        for (const auto& s : ds.subjects) {
            const int li = interval_of(s.time, grid);
            if (li >= l) at_risk += 1.0;
            if (li == l && s.cause == 0) censored += 1.0;
        }
        if (at_risk > 0.0) prod *= 1.0 - censored / at_risk;
        g[static_cast<std::size_t>(l)] = std::max(prod, floor);
    }
    return g;
}

inline double g_at(const std::vector<double>& g, int l) {
    if (l <= 0) return 1.0;
    return g[static_cast<std::size_t>(std::min<int>(l, static_cast<int>(g.size()) - 1))];
}

/// w_it = G(t-1)/G(min(l_i, t)-1) * (1{t <= l_i} + 1{l_i <= t-1, cause not in {0, m*}}).
inline double sdm_weight(int t, int li, int cause, int target, const std::vector<double>& g) {
    const double ind = (t <= li ? 1.0 : 0.0) + ((li <= t - 1 && cause != 0 && cause != target) ? 1.0 : 0.0);
    if (ind == 0.0) return 0.0;
    return g_at(g, t - 1) / g_at(g, std::min(li, t) - 1);
}

/// Input vectors for one subject at every interval, built through the graph-free path.
inline std::vector<Vector> subject_inputs(const FCRNModel& model, const PreparedData& data, std::size_t i) {
    std::vector<double> x(data.x.row(static_cast<Eigen::Index>(i)).data(),
                          data.x.row(static_cast<Eigen::Index>(i)).data() + data.x.cols());
    std::vector<Vector> coefs;
    for (std::size_t s = 0; s < model.basis.size(); ++s) {
        const auto row = data.curves[s].row(static_cast<Eigen::Index>(i));
        std::vector<double> v(row.data(), row.data() + row.size());
        coefs.push_back(model.basis[s].project_values(v, model.params));
    }
    std::vector<Vector> out;
    for (int t = 1; t <= model.grid.intervals(); ++t) out.push_back(fcrn::assemble_input(model, x, coefs, t));
    return out;
}

/// -log L for the cause-specific model:
/// sum_i [ sum_{t < l_i} log(1 - sum_m lambda_m(t)) + (event ? log lambda_{R_i}(l_i) : log(1 - sum_m lambda_m(l_i))) ].
inline double direct_nll_cs(const FCRNModel& model, const PreparedData& data, const Dataset& ds) {
    double ll = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto z = subject_inputs(model, data, i);
        const auto& s = ds.subjects[i];
        const int li = interval_of(s.time, model.grid);
        for (int t = 1; t <= li; ++t) {
            const Vector p = fcrn::forward_hazard_cs(model, z[static_cast<std::size_t>(t - 1)]);
            double overall = 0.0;
            for (int m = 1; m < p.size(); ++m) overall += p[m];
            if (t < li || s.cause == 0) {
                ll += std::log(1.0 - overall);
            } else {
                ll += std::log(p[s.cause]);
            }
        }
    }
    return -ll;
}

/// -sum_{i,t} w_it [y_it log xi(t) + (1 - y_it) log(1 - xi(t))] over t = 1..L-1.
inline double direct_nll_sd(const FCRNModel& model, const PreparedData& data, const Dataset& ds, int target) {
    const auto g = censoring_km(ds, model.grid);
    double total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto z = subject_inputs(model, data, i);
        const auto& s = ds.subjects[i];
        const int li = interval_of(s.time, model.grid);
        for (int t = 1; t <= model.grid.intervals() - 1; ++t) {
            const double w = sdm_weight(t, li, s.cause, target, g);
            if (w == 0.0) continue;
            const double xi = fcrn::forward_hazard_sd(model, z[static_cast<std::size_t>(t - 1)]);
            const bool y = t == li && s.cause == target;
            total -= w * (y ? std::log(xi) : std::log(1.0 - xi));
        }
    }
    return total;
}

/// Random dataset with `signals` curves on jittered grids. Causes in 0..M, times inside the grid.
inline Dataset random_dataset(std::mt19937_64& rng, std::size_t n, std::size_t P, std::size_t signals, int M,
                              const TimeGrid& grid) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int> cause(0, M);
    Dataset ds;
    for (std::size_t j = 0; j < P; ++j) ds.covariate_names.push_back("x" + std::to_string(j + 1));
    for (std::size_t s = 0; s < signals; ++s) ds.signal_names.push_back("f" + std::to_string(s + 1));
    for (std::size_t i = 0; i < n; ++i) {
        fcrn::SubjectRecord r;
        r.id = "r" + std::to_string(i);
        for (std::size_t j = 0; j < P; ++j) {
            r.x.push_back(normal(rng));
            r.missing_mask.push_back(false);
        }
        for (std::size_t s = 0; s < signals; ++s) {
            fcrn::FunctionalCurve c;
            c.name = ds.signal_names[s];
            const int J = 5 + static_cast<int>(unif(rng) * 4);
            for (int j = 0; j < J; ++j) {
                c.taus.push_back(j == 0 ? 0.0 : j == J - 1 ? 1.0 : (j + 0.3 * (unif(rng) - 0.5)) / (J - 1));
                c.values.push_back(normal(rng));
            }
            r.curves.push_back(std::move(c));
        }
        r.time = grid.max_time() * unif(rng);
        r.cause = cause(rng);
        ds.subjects.push_back(std::move(r));
    }
    return ds;
}

struct FdReport {
    double max_rel_err = 0.0;
    std::string worst;
    std::size_t checked = 0;
};

/// Relative error with unit floor: |a - b| / max(1, |a|, |b|).
inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

// Zero-initialised biases can leave a ReLU pre-activation exactly at its kink; move off it.
inline void jitter_biases(FCRNModel& model, std::mt19937_64& rng, double scale = 0.1) {
    std::uniform_real_distribution<double> u(-scale, scale);
    for (auto& p : model.params) {
        if (p.name.size() > 2 && p.name.compare(p.name.size() - 2, 2, ".b") == 0) {
            for (Eigen::Index k = 0; k < p.value.size(); ++k) p.value.data()[k] += u(rng);
        }
    }
}

/// Central differences of the summed loss over `rows` against backward(), for every parameter
/// scalar and every covariate cell of the subjects in `rows`.
inline FdReport fd_check(FCRNModel& model, PreparedData& data, std::span<const fcrn::PersonPeriodRow> rows,
                         double h = 1e-5) {
    FdReport rep;
    model.params.zero_grad();
    Matrix input_grad = Matrix::Zero(data.x.rows(), data.x.cols());
    fcrn::batch_loss(model, data, rows, fcrn::Reduction::Sum, true, &input_grad);
    auto loss = [&] { return fcrn::batch_loss(model, data, rows, fcrn::Reduction::Sum, false); };
    for (auto& p : model.params) {
        for (Eigen::Index k = 0; k < p.value.size(); ++k) {
            double& v = p.value.data()[k];
            const double keep = v;
            v = keep + h;
            const double up = loss();
            v = keep - h;
            const double down = loss();
            v = keep;
            const double fd = (up - down) / (2.0 * h);
            const double e = rel_err(fd, p.grad.data()[k]);
            ++rep.checked;
            if (e > rep.max_rel_err) {
                rep.max_rel_err = e;
                rep.worst = p.name + "[" + std::to_string(k) + "]";
            }
        }
    }
    std::vector<bool> used(static_cast<std::size_t>(data.x.rows()), false);
    for (const auto& r : rows) used[r.subject] = true;
    for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
        if (!used[static_cast<std::size_t>(i)]) continue;
        for (Eigen::Index j = 0; j < data.x.cols(); ++j) {
            double& v = data.x(i, j);
            const double keep = v;
            v = keep + h;
            const double up = loss();
            v = keep - h;
            const double down = loss();
            v = keep;
            const double e = rel_err((up - down) / (2.0 * h), input_grad(i, j));
            ++rep.checked;
            if (e > rep.max_rel_err) {
                rep.max_rel_err = e;
                rep.worst = "x(" + std::to_string(i) + "," + std::to_string(j) + ")";
            }
        }
    }
    return rep;
}

}  // namespace oracle
