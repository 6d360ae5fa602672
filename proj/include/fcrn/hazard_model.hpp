#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fcrn/basis_layer.hpp"
#include "fcrn/ggm.hpp"
#include "fcrn/survival_data.hpp"
#include "fcrn/tensor.hpp"

namespace fcrn {

enum class HeadType { CauseSpecific, Subdistribution };
enum class TimeEncoding { Scalar, OneHot };

struct ModelSpec {
    HeadType head = HeadType::CauseSpecific;
    int num_causes = 2;    // M
    int target_cause = 1;  // SDM only
    std::vector<int> hidden = {32, 64, 32};
    std::vector<int> micro_hidden = {16, 16};
    int num_basis = 4;  // D, shared by all signals
    TimeEncoding time_encoding = TimeEncoding::Scalar;
    bool normalize_curves = true;

    RowKind row_kind() const noexcept {
        return head == HeadType::CauseSpecific ? RowKind::CauseSpecific : RowKind::Subdistribution;
    }
};

/// Training-set statistics applied to every dataset fed to a model.
struct Normalization {
    Vector x_mean;
    Vector x_sd;
    std::vector<double> curve_mean;  // per signal
    std::vector<double> curve_sd;
};

/// Parameters and everything needed to turn raw subjects into hazards.
class FCRNModel {
public:
    ModelSpec spec;
    TimeGrid grid;
    Normalization norm;
    std::vector<std::string> covariate_names;
    std::vector<std::string> signal_names;
    ParameterStore params;
    std::vector<BasisLayer> basis;
    std::size_t first_mlp_param = 0;
    /// Dependency model and medians (normalized scale) used to fill missing cells at prediction time.
    std::optional<GaussianGraphicalModel> imputer;
    Vector imputer_medians;
    nlohmann::json config;

    std::size_t num_covariates() const noexcept { return covariate_names.size(); }
    int time_width() const noexcept;
    int input_width() const noexcept;
    int output_width() const noexcept;
};

/// Builds normalization, basis grids and freshly initialised parameters from the training data.
FCRNModel make_model(const Dataset& train, const ModelSpec& spec, const TimeGrid& grid, std::uint64_t seed);

/// A dataset mapped into model input space: z-normalized covariates (missing cells NaN until
/// filled) and normalized curves resampled onto each basis layer grid.
struct PreparedData {
    Matrix x;
    MissingMask mask;
    std::vector<Matrix> curves;  // per signal, n x J

    std::size_t size() const noexcept { return static_cast<std::size_t>(x.rows()); }
    bool complete() const noexcept;
};

PreparedData prepare(const FCRNModel& model, const Dataset& ds);

/// Fills missing cells with the model's stored dependency model. No-op when complete.
void fill_for_prediction(const FCRNModel& model, PreparedData& data);

/// z = [normalized x, basis coefficients per signal, time feature].
Vector assemble_input(const FCRNModel& model, std::span<const double> x_normalized,
                      std::span<const Vector> basis_coefficients, int t);

/// CSM head: softmax over M+1 logits; entry 0 is 1 - lambda(t|x), entry m is lambda_m(t|x).
Vector forward_hazard_cs(const FCRNModel& model, const Vector& z);
/// SDM head: xi_1(t|x).
double forward_hazard_sd(const FCRNModel& model, const Vector& z);

/// Graph-free logits for a block of inputs (rows of z).
Matrix mlp_logits(const FCRNModel& model, const Matrix& z);

/// Per-subject basis coefficients and tabular block, n x (P + S*D).
Matrix subject_features(const FCRNModel& model, const PreparedData& data);

double loss_cs(const Matrix& probabilities, std::span<const PersonPeriodRow> rows, Reduction r = Reduction::Mean);
double loss_sub(std::span<const double> xi, std::span<const PersonPeriodRow> rows, Reduction r = Reduction::Mean);

struct CifPrediction {
    Matrix hazards;                 // L x (M+1) for CSM, L x 1 for SDM
    std::vector<double> survival;   // S(0..L); CSM only
    std::vector<std::vector<double>> cif;  // per modelled cause, F(0..L)
    std::vector<int> causes;        // cause label of each cif entry
};

/// S(t) = prod (1 - lambda(s)), F_m(t) = sum lambda_m(s) S(s-1). `probs` is L x (M+1).
CifPrediction cif_from_cause_specific(const Matrix& probs);
/// F(t) = 1 - prod (1 - xi(s)).
CifPrediction cif_from_subdistribution(std::span<const double> xi, int cause);

CifPrediction predict_cif_cs(const FCRNModel& model, const PreparedData& data, std::size_t subject);
CifPrediction predict_cif_sd(const FCRNModel& model, const PreparedData& data, std::size_t subject);
/// Either head; all subjects of a filled dataset.
std::vector<CifPrediction> predict(const FCRNModel& model, const PreparedData& data);

// --- training ---------------------------------------------------------------

struct TrainOptions {
    double lr = 1e-3;
    int batch_size = 64;
    int max_epochs = 500;
    int patience = 20;
    double validation_fraction = 0.1;
    std::uint64_t seed = 1;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double impute_lr = 0.0;  // 0 when no imputation ran
};

/// Rows of one dataset's person-period table split into training and validation subjects.
struct RowSplit {
    PersonPeriodTable table;
    std::vector<PersonPeriodRow> train;
    std::vector<PersonPeriodRow> validation;
};

/// Builds the head's table on `ds` and holds out validation_fraction of subjects (seeded).
RowSplit split_rows(const Dataset& ds, const FCRNModel& model, const TrainOptions& opts);

/// Forward pass over a batch of rows. Returns the batch loss; if `backward` it also fills
/// Parameter::grad and, when `input_grad` is non-null, adds d(loss)/d(x) into it (n x P).
double batch_loss(FCRNModel& model, const PreparedData& data, std::span<const PersonPeriodRow> rows,
                  Reduction r, bool backward, Matrix* input_grad = nullptr);

/// Weighted mean loss over rows, no gradients.
double evaluate_loss(FCRNModel& model, const PreparedData& data, std::span<const PersonPeriodRow> rows,
                     int batch_size = 512);

/// One shuffled pass of mini-batch Adam. Returns the weighted mean training loss seen.
double adam_epoch(FCRNModel& model, const PreparedData& data, std::span<const PersonPeriodRow> rows,
                  AdamState& adam, const TrainOptions& opts, std::mt19937_64& rng, int epoch);

struct TrainResult {
    FCRNModel model;
    std::vector<EpochLog> history;
    double best_val_loss = 0.0;
    int best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Mini-batch Adam with early stopping on held-out subjects. Requires complete covariates;
/// incomplete data goes through iro_train.
TrainResult train(const Dataset& ds, const ModelSpec& spec, const TimeGrid& grid, const TrainOptions& opts,
                  const EpochCallback& on_epoch = {});

// --- covariate-free reference ----------------------------------------------

/// Intercept-only discrete hazards: lambda_m(t) = d_m(t) / n(t). Returns L x (M+1) probabilities.
Matrix intercept_only_hazards(const Dataset& ds, const TimeGrid& grid, int num_causes);

// --- serialization ------------------------------------------------------------

nlohmann::json model_to_json(const FCRNModel& model);
FCRNModel model_from_json(const nlohmann::json& j);
void save_model(const FCRNModel& model, const std::string& path);
FCRNModel load_model(const std::string& path);

}  // namespace fcrn
