#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "fcrn/ggm.hpp"
#include "fcrn/hazard_model.hpp"

namespace fcrn {

struct MviOptions {
    double lr = 0.003;            // SGLD step eta
    double decay = 0.1;           // multiplied into eta at each milestone
    std::vector<int> milestones = {50, 100};
    double corr_threshold = 0.2;
    std::size_t k_max = 5;
    double ridge = 1e-3;
    double pred_weight = 1.0;     // 0 disables the prediction gradient
    int repeats = 1;              // I-steps per RO-step
    bool noise = true;
    double tol = 1e-4;            // relative training-loss change
    int converge_window = 5;
    int max_epochs = 500;
    double divergence_factor = 10.0;
};

/// eta at a given 1-based epoch under the step-decay schedule.
double impute_lr(const MviOptions& opts, int epoch);

/// Working copy of the covariate matrix on the network's (normalized) scale.
/// Only cells flagged in `mask` are ever written.
struct ImputationState {
    Matrix x;
    MissingMask mask;
    std::vector<std::pair<std::size_t, std::size_t>> entries;  // missing cells (row, col)
    double lr = 0.0;
    int epoch = 0;
    std::vector<Vector> history;  // per-epoch snapshots of the missing entries

    std::size_t missing_count() const noexcept { return entries.size(); }
    void snapshot();
    /// Mean of the snapshots in the second half of the history, written into a copy of x.
    Matrix averaged() const;
};

/// Median-initialised state. `x` holds NaN (or anything) in missing cells.
ImputationState init_imputation(const Matrix& x, const MissingMask& mask);

/// -d/dx_ij of the summed loss over subject i's rows among `rows`.
double grad_log_pred(std::size_t i, std::size_t j, FCRNModel& model, const PreparedData& data,
                     std::span<const PersonPeriodRow> rows);

/// -d(summed loss)/dx for every cell, accumulated over `rows` in mini-batches.
Matrix grad_log_pred_all(FCRNModel& model, const PreparedData& data, std::span<const PersonPeriodRow> rows,
                         int batch_size = 256);

struct IStepReport {
    std::size_t updated = 0;
    std::size_t rejected = 0;
};

/// x_mis <- x_mis + eta (grad log prior + w * grad log pred) + sqrt(2 eta) e.
/// `pred_grad` may be null (prediction gradient off). Non-finite proposals are rejected.
IStepReport i_step(ImputationState& state, const GaussianGraphicalModel& ggm, const Matrix* pred_grad,
                   double pred_weight, double eta, bool noise, std::mt19937_64& rng);

/// Imputation with the prediction gradient off: I-steps and dependency-model refits only.
ImputationState run_imputation(const Matrix& x, const MissingMask& mask, const MviOptions& opts, int epochs,
                               std::uint64_t seed, GaussianGraphicalModel* final_ggm = nullptr);

struct IroResult {
    TrainResult fit;
    Matrix imputed;        // raw covariate scale; observed cells copied from the input
    MissingMask mask;
    std::size_t missing = 0;
    int epochs = 0;
};

/// IRO training: per epoch an I-step pass over all missing cells, then one Adam epoch and a
/// dependency-model refit. Stops on loss convergence, validation patience, or the epoch cap.
/// Falls through to plain train() when the dataset is complete.
IroResult iro_train(const Dataset& ds, const ModelSpec& spec, const TimeGrid& grid, const TrainOptions& train_opts,
                    const MviOptions& mvi_opts, const EpochCallback& on_epoch = {});

}  // namespace fcrn
