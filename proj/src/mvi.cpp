#include "fcrn/mvi.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

#include "fcrn/error.hpp"

namespace fcrn {

double impute_lr(const MviOptions& opts, int epoch) {
    double eta = opts.lr;
    for (int m : opts.milestones) {
        if (epoch > m) eta *= opts.decay;
    }
    return eta;
}

void ImputationState::snapshot() {
    Vector v(static_cast<Eigen::Index>(entries.size()));
    for (std::size_t k = 0; k < entries.size(); ++k) {
        v[static_cast<Eigen::Index>(k)] = x(static_cast<Eigen::Index>(entries[k].first), static_cast<Eigen::Index>(entries[k].second));
    }
    history.push_back(std::move(v));
}

Matrix ImputationState::averaged() const {
    Matrix out = x;
    if (history.empty()) return out;
    const std::size_t start = history.size() / 2;
    Vector mean = Vector::Zero(static_cast<Eigen::Index>(entries.size()));
    for (std::size_t h = start; h < history.size(); ++h) mean += history[h];
    mean /= static_cast<double>(history.size() - start);
    for (std::size_t k = 0; k < entries.size(); ++k) {
        out(static_cast<Eigen::Index>(entries[k].first), static_cast<Eigen::Index>(entries[k].second)) = mean[static_cast<Eigen::Index>(k)];
    }
    return out;
}

ImputationState init_imputation(const Matrix& x, const MissingMask& mask) {
    ImputationState s;
    s.mask = mask;
    s.x = median_init(x, mask);
    for (Eigen::Index i = 0; i < mask.rows(); ++i) {
        for (Eigen::Index j = 0; j < mask.cols(); ++j) {
            if (mask(i, j)) s.entries.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        }
    }
    return s;
}

double grad_log_pred(std::size_t i, std::size_t j, FCRNModel& model, const PreparedData& data,
                     std::span<const PersonPeriodRow> rows) {
    std::vector<PersonPeriodRow> own;
    for (const auto& r : rows) {
        if (r.subject == i) own.push_back(r);
    }
    if (own.empty()) return 0.0;
    Matrix g = Matrix::Zero(data.x.rows(), data.x.cols());
    batch_loss(model, data, own, Reduction::Sum, true, &g);
    return -g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
}

Matrix grad_log_pred_all(FCRNModel& model, const PreparedData& data, std::span<const PersonPeriodRow> rows,
                         int batch_size) {
    Matrix g = Matrix::Zero(data.x.rows(), data.x.cols());
    const auto bs = static_cast<std::size_t>(std::max(1, batch_size));
    for (std::size_t start = 0; start < rows.size(); start += bs) {
        batch_loss(model, data, rows.subspan(start, std::min(bs, rows.size() - start)), Reduction::Sum, true, &g);
    }
    return -g;
}

IStepReport i_step(ImputationState& state, const GaussianGraphicalModel& ggm, const Matrix* pred_grad,
                   double pred_weight, double eta, bool noise, std::mt19937_64& rng) {
    IStepReport report;
    if (state.entries.empty()) return report;
    std::normal_distribution<double> normal(0.0, 1.0);
    const double noise_scale = std::sqrt(2.0 * eta);
    // All gradients are taken at the current point before any entry moves.
    std::vector<double> step(state.entries.size());
    for (std::size_t k = 0; k < state.entries.size(); ++k) {
        const auto [i, j] = state.entries[k];
        double g = grad_log_prior(i, j, state.x, ggm);
        if (pred_grad && pred_weight != 0.0) g += pred_weight * (*pred_grad)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        step[k] = eta * g;
        if (noise) step[k] += noise_scale * normal(rng);
    }
    for (std::size_t k = 0; k < state.entries.size(); ++k) {
        const auto [i, j] = state.entries[k];
        double& cell = state.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        const double proposed = cell + step[k];
        if (!std::isfinite(proposed)) {
            ++report.rejected;
            continue;
        }
        cell = proposed;
        ++report.updated;
    }
    if (report.rejected > 0) {
        std::cerr << "warning: i_step rejected " << report.rejected << " non-finite updates\n";
    }
    return report;
}

ImputationState run_imputation(const Matrix& x, const MissingMask& mask, const MviOptions& opts, int epochs,
                               std::uint64_t seed, GaussianGraphicalModel* final_ggm) {
    ImputationState state = init_imputation(x, mask);
    std::mt19937_64 rng(seed);
    auto ggm = fit_ggm(state.x, opts.corr_threshold, opts.k_max, opts.ridge);
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        state.epoch = epoch;
        state.lr = impute_lr(opts, epoch);
        for (int r = 0; r < std::max(1, opts.repeats); ++r) i_step(state, ggm, nullptr, 0.0, state.lr, opts.noise, rng);
        state.snapshot();
        ggm = fit_ggm(state.x, opts.corr_threshold, opts.k_max, opts.ridge);
    }
    if (final_ggm) *final_ggm = ggm;
    return state;
}

IroResult iro_train(const Dataset& ds, const ModelSpec& spec, const TimeGrid& grid, const TrainOptions& train_opts,
                    const MviOptions& mvi_opts, const EpochCallback& on_epoch) {
    IroResult result;
    if (ds.missing_count() == 0) {
        result.fit = train(ds, spec, grid, train_opts, on_epoch);
        const PreparedData data = prepare(result.fit.model, ds);
        result.mask = data.mask;
        result.imputed.resize(data.x.rows(), data.x.cols());
        for (std::size_t i = 0; i < ds.size(); ++i) {
            for (std::size_t j = 0; j < ds.num_covariates(); ++j) {
                result.imputed(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ds.subjects[i].x[j];
            }
        }
        result.epochs = static_cast<int>(result.fit.history.size());
        return result;
    }
    if (ds.num_covariates() < 2) throw config_error("iro_train: imputation needs at least 2 tabular covariates");

    result.fit.model = make_model(ds, spec, grid, train_opts.seed);
    auto& model = result.fit.model;
    PreparedData data = prepare(model, ds);
    ImputationState state = init_imputation(data.x, data.mask);
    data.x = state.x;
    auto ggm = fit_ggm(state.x, mvi_opts.corr_threshold, mvi_opts.k_max, mvi_opts.ridge);

    const RowSplit split = split_rows(ds, model, train_opts);
    if (split.train.empty()) throw invalid_argument("iro_train: no training rows");
    const auto& all_rows = split.table.rows;

    std::mt19937_64 rng(train_opts.seed + 1);
    std::mt19937_64 noise_rng(train_opts.seed + 2);
    AdamState adam = make_adam_state(model.params);
    std::vector<Matrix> best;
    for (const auto& p : model.params) best.push_back(p.value);
    const bool has_val = !split.validation.empty();
    auto val_loss = [&] { return evaluate_loss(model, data, has_val ? split.validation : split.train); };
    result.fit.best_val_loss = val_loss();
    Matrix best_ggm_x = state.x;

    double best_train = std::numeric_limits<double>::infinity();
    double prev_train = std::numeric_limits<double>::quiet_NaN();
    int small_changes = 0;
    int since_best = 0;
    for (int epoch = 1; epoch <= mvi_opts.max_epochs; ++epoch) {
        state.epoch = epoch;
        state.lr = impute_lr(mvi_opts, epoch);

        // I-step
        for (int r = 0; r < std::max(1, mvi_opts.repeats); ++r) {
            Matrix pred;
            const Matrix* pred_ptr = nullptr;
            if (mvi_opts.pred_weight != 0.0) {
                pred = grad_log_pred_all(model, data, all_rows);
                pred_ptr = &pred;
            }
            i_step(state, ggm, pred_ptr, mvi_opts.pred_weight, state.lr, mvi_opts.noise, noise_rng);
            data.x = state.x;
        }
        state.snapshot();

        // RO-step
        EpochLog log;
        log.epoch = epoch;
        log.impute_lr = state.lr;
        log.train_loss = adam_epoch(model, data, split.train, adam, train_opts, rng, epoch);
        ggm = fit_ggm(state.x, mvi_opts.corr_threshold, mvi_opts.k_max, mvi_opts.ridge);
        log.val_loss = val_loss();
        result.fit.history.push_back(log);
        if (on_epoch) on_epoch(log);

        if (log.train_loss > mvi_opts.divergence_factor * best_train) {
            std::ostringstream msg;
            msg << "IRO diverged at epoch " << epoch << ": training loss " << log.train_loss << " vs best "
                << best_train << " (lr=" << train_opts.lr << ", impute lr=" << state.lr << ")";
            throw numeric_error(msg.str());
        }
        best_train = std::min(best_train, log.train_loss);

        if (log.val_loss < result.fit.best_val_loss) {
            result.fit.best_val_loss = log.val_loss;
            result.fit.best_epoch = epoch;
            for (std::size_t k = 0; k < model.params.size(); ++k) best[k] = model.params[k].value;
            best_ggm_x = state.x;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (std::isfinite(prev_train) && std::abs(log.train_loss - prev_train) < mvi_opts.tol * std::abs(prev_train)) {
            ++small_changes;
        } else {
            small_changes = 0;
        }
        prev_train = log.train_loss;
        if (small_changes >= mvi_opts.converge_window || since_best >= train_opts.patience) break;
    }
    result.epochs = static_cast<int>(result.fit.history.size());
    for (std::size_t k = 0; k < model.params.size(); ++k) model.params[k].value = best[k];

    model.imputer = fit_ggm(best_ggm_x, mvi_opts.corr_threshold, mvi_opts.k_max, mvi_opts.ridge);
    model.imputer_medians = observed_medians(data.x, data.mask);

    const Matrix averaged = state.averaged();
    result.mask = state.mask;
    result.missing = state.missing_count();
    result.imputed.resize(averaged.rows(), averaged.cols());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.num_covariates(); ++j) {
            const auto I = static_cast<Eigen::Index>(i);
            const auto J = static_cast<Eigen::Index>(j);
            result.imputed(I, J) = state.mask(I, J) ? averaged(I, J) * model.norm.x_sd[J] + model.norm.x_mean[J]
                                                    : ds.subjects[i].x[j];
        }
    }
    return result;
}

}  // namespace fcrn
