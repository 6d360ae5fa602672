#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fcrn/hazard_model.hpp"
#include "fcrn/io.hpp"
#include "fcrn/mvi.hpp"
#include "fcrn/synth.hpp"

namespace fcrn {

/// Every key a run config may contain, with its default value.
nlohmann::json default_run_config();

/// Applies "dotted.key=value"; the value is parsed as JSON and falls back to a plain string.
/// Unknown keys raise config_error.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Defaults, then the optional config file, then overrides in order. Unknown keys are rejected.
nlohmann::json resolve_config(const std::string& config_path, const std::vector<std::string>& overrides);

ModelSpec model_spec_from(const nlohmann::json& config);
TrainOptions train_options_from(const nlohmann::json& config);
MviOptions mvi_options_from(const nlohmann::json& config);
SimConfig sim_config_from(const nlohmann::json& config);
TimeGrid grid_from(const nlohmann::json& config);

/// Replaces missing cells by observed column medians (raw scale).
Dataset median_filled(const Dataset& ds);

struct BasisTrial {
    int num_basis = 0;
    double best_val_loss = 0.0;
    int best_epoch = 0;
    int epochs = 0;
};

struct FitOutcome {
    FCRNModel model;
    std::vector<BasisTrial> trials;
    std::vector<std::pair<int, EpochLog>> history;  // (num_basis, epoch log)
    int selected_basis = 0;
    bool mvi_ran = false;
    Matrix imputed;
    MissingMask mask;
    std::vector<std::pair<std::string, std::string>> notes;
};

/// Trains one model per basis count in model.basis_grid (a single one without functional
/// covariates) and keeps the lowest validation loss. IRO is used when cells are missing.
FitOutcome fit_from_config(const Dataset& train, const nlohmann::json& config);

/// Each writes the resolved config as config.json in output_dir.
void cmd_simulate(const nlohmann::json& config);
FitOutcome cmd_train(const nlohmann::json& config);
PredictionTable cmd_predict(const nlohmann::json& config);
std::vector<ScoreBlock> cmd_evaluate(const nlohmann::json& config);

/// IPCW score curves of a prediction table against observed outcomes.
std::vector<ScoreBlock> evaluate_predictions(const PredictionTable& preds, const Dataset& ds,
                                             const std::vector<double>& horizons, double t0);

}  // namespace fcrn
