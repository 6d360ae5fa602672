#pragma once

#include <string>
#include <vector>

#include "fcrn/evaluation.hpp"
#include "fcrn/ggm.hpp"
#include "fcrn/hazard_model.hpp"
#include "fcrn/survival_data.hpp"
#include "fcrn/tensor.hpp"

namespace fcrn {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Splits one CSV line. Double quotes may wrap a field; "" inside quotes is a literal quote.
std::vector<std::string> split_csv_line(const std::string& line);

/// Subject CSV: id,time,cause,<covariates...>; an empty covariate cell is missing.
/// Curve CSV (optional, pass ""): id,signal_name,tau,value in any row order.
/// Schema problems raise data_error naming the file, row and column.
Dataset read_dataset(const std::string& subjects_path, const std::string& curves_path = "");

void write_subjects_csv(const Dataset& ds, const std::string& path);
void write_curves_csv(const Dataset& ds, const std::string& path);

/// Imputed covariate matrix (raw scale) and its 0/1 missingness mask, both keyed by subject id.
void write_imputation(const Dataset& ds, const Matrix& imputed, const MissingMask& mask,
                      const std::string& values_path, const std::string& mask_path);

/// Long CIF table: one row per subject and interval l = 0..L.
struct PredictionTable {
    HeadType head = HeadType::CauseSpecific;
    TimeGrid grid;
    std::vector<int> causes;          // cause of each cif column
    std::vector<std::string> ids;
    std::vector<std::vector<std::vector<double>>> cif;  // [subject][cause column][l]
    std::vector<std::vector<double>> survival;          // [subject][l]; CSM only
};

PredictionTable make_prediction_table(const FCRNModel& model, const Dataset& ds,
                                      const std::vector<CifPrediction>& preds);
void write_predictions(const PredictionTable& table, const std::string& path);
PredictionTable read_predictions(const std::string& path);

struct ScoreBlock {
    double horizon = 0.0;
    int cause = 1;
    ScoreCurve curve;
};

/// horizon,cause,time,bs,cumulative_ibs
void write_scores(const std::vector<ScoreBlock>& blocks, const std::string& path);
/// horizon,cause,ibs
void write_ibs_summary(const std::vector<ScoreBlock>& blocks, const std::string& path);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace fcrn
