#include "fcrn/hazard_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>

#include "fcrn/error.hpp"

namespace fcrn {

namespace {

constexpr double kProbFloor = 1e-12;

// Mean and sample SD over observed cells of column j; SD falls back to 1 when degenerate.
std::pair<double, double> observed_mean_sd(const Dataset& ds, std::size_t j) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& s : ds.subjects) {
        if (s.missing_mask[j]) continue;
        sum += s.x[j];
        ++n;
    }
    const double mean = n ? sum / static_cast<double>(n) : 0.0;
    for (const auto& s : ds.subjects) {
        if (s.missing_mask[j]) continue;
        sq += (s.x[j] - mean) * (s.x[j] - mean);
    }
    const double sd = n > 1 ? std::sqrt(sq / static_cast<double>(n - 1)) : 0.0;
    return {mean, sd > 1e-12 ? sd : 1.0};
}

Matrix time_block(const FCRNModel& model, std::span<const int> intervals) {
    const int L = model.grid.intervals();
    Matrix t = Matrix::Zero(static_cast<Eigen::Index>(intervals.size()), model.time_width());
    for (std::size_t r = 0; r < intervals.size(); ++r) {
        const auto R = static_cast<Eigen::Index>(r);
        if (model.spec.time_encoding == TimeEncoding::Scalar) {
            t(R, 0) = static_cast<double>(intervals[r]) / static_cast<double>(L);
        } else {
            t(R, intervals[r] - 1) = 1.0;
        }
    }
    return t;
}

/// Graph-free B matrix (J x D) for one basis layer.
Matrix basis_matrix(const BasisLayer& layer, const ParameterStore& store) {
    const auto& grid = layer.grid();
    Matrix b(static_cast<Eigen::Index>(grid.size()), layer.num_basis());
    for (int d = 0; d < layer.num_basis(); ++d) {
        for (std::size_t j = 0; j < grid.size(); ++j) b(static_cast<Eigen::Index>(j), d) = layer.micro_forward(grid[j], d, store);
    }
    return b;
}

Matrix features_for(const FCRNModel& model, const PreparedData& data, std::span<const std::size_t> subjects) {
    const auto P = static_cast<Eigen::Index>(model.num_covariates());
    Eigen::Index width = P;
    for (const auto& layer : model.basis) width += layer.num_basis();
    Matrix f(static_cast<Eigen::Index>(subjects.size()), width);
    for (std::size_t k = 0; k < subjects.size(); ++k) {
        f.row(static_cast<Eigen::Index>(k)).head(P) = data.x.row(static_cast<Eigen::Index>(subjects[k]));
    }
    Eigen::Index col = P;
    for (std::size_t s = 0; s < model.basis.size(); ++s) {
        const auto& layer = model.basis[s];
        const Matrix b = basis_matrix(layer, model.params);
        const Vector w = Eigen::Map<const Vector>(layer.weights().data(), static_cast<Eigen::Index>(layer.weights().size()));
        const Matrix wb = w.asDiagonal() * b;
        for (std::size_t k = 0; k < subjects.size(); ++k) {
            f.row(static_cast<Eigen::Index>(k)).segment(col, layer.num_basis()) =
                data.curves[s].row(static_cast<Eigen::Index>(subjects[k])) * wb;
        }
        col += layer.num_basis();
    }
    if (!f.leftCols(P).allFinite()) throw state_error("features: unimputed missing covariate reached the network");
    return f;
}

struct BatchGraph {
    Graph graph;
    Graph::NodeId x_node = 0;
    Graph::NodeId logits = 0;
    std::vector<std::size_t> subjects;  // unique subjects, row order of x_node
};

void forward_batch(BatchGraph& bg, FCRNModel& model, const PreparedData& data, std::span<const PersonPeriodRow> rows,
                   bool x_requires_grad) {
    auto& g = bg.graph;
    std::unordered_map<std::size_t, std::size_t> position;
    std::vector<std::size_t> gather;
    std::vector<int> intervals;
    gather.reserve(rows.size());
    intervals.reserve(rows.size());
    for (const auto& r : rows) {
        auto [it, inserted] = position.try_emplace(r.subject, bg.subjects.size());
        if (inserted) bg.subjects.push_back(r.subject);
        gather.push_back(it->second);
        intervals.push_back(r.interval);
    }
    const auto U = static_cast<Eigen::Index>(bg.subjects.size());
    const auto P = static_cast<Eigen::Index>(model.num_covariates());
    Matrix xu(U, P);
    for (Eigen::Index k = 0; k < U; ++k) xu.row(k) = data.x.row(static_cast<Eigen::Index>(bg.subjects[k]));
    if (!xu.allFinite()) throw state_error("forward: unimputed missing covariate reached the network");
    bg.x_node = g.input(std::move(xu), x_requires_grad);

    std::vector<Graph::NodeId> parts{bg.x_node};
    for (std::size_t s = 0; s < model.basis.size(); ++s) {
        const auto& src = data.curves[s];
        Matrix cu(U, src.cols());
        for (Eigen::Index k = 0; k < U; ++k) cu.row(k) = src.row(static_cast<Eigen::Index>(bg.subjects[k]));
        const auto curves = g.constant(std::move(cu));
        parts.push_back(model.basis[s].project(g, model.params, curves));
    }
    const auto per_subject = parts.size() == 1 ? parts[0] : g.concat_cols(parts);
    const auto expanded = g.gather_rows(per_subject, std::move(gather));
    const auto time = g.constant(time_block(model, intervals));
    const std::vector<Graph::NodeId> zparts{expanded, time};
    auto h = g.concat_cols(zparts);

    std::size_t p = model.first_mlp_param;
    const std::size_t layers = model.spec.hidden.size() + 1;
    for (std::size_t k = 0; k < layers; ++k) {
        const auto w = g.parameter(model.params[p++]);
        const auto b = g.parameter(model.params[p++]);
        h = g.dense(h, w, b);
        // First hidden layer is affine only; later hidden layers use ReLU.
        if (k > 0 && k + 1 < layers) h = g.relu(h);
    }
    bg.logits = h;
}

Graph::NodeId loss_node(BatchGraph& bg, const FCRNModel& model, std::span<const PersonPeriodRow> rows, Reduction r) {
    std::vector<int> targets(rows.size());
    Vector weights(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        targets[k] = rows[k].target;
        weights[static_cast<Eigen::Index>(k)] = rows[k].weight;
    }
    if (model.spec.head == HeadType::CauseSpecific) {
        return bg.graph.softmax_cross_entropy(bg.logits, std::move(targets), std::move(weights), r);
    }
    return bg.graph.sigmoid_binary_cross_entropy(bg.logits, std::move(targets), std::move(weights), r);
}

std::vector<int> int_vec(const nlohmann::json& j) { return j.get<std::vector<int>>(); }

nlohmann::json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vec(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

int FCRNModel::time_width() const noexcept {
    return spec.time_encoding == TimeEncoding::Scalar ? 1 : grid.intervals();
}

int FCRNModel::input_width() const noexcept {
    int w = static_cast<int>(num_covariates()) + time_width();
    for (const auto& layer : basis) w += layer.num_basis();
    return w;
}

int FCRNModel::output_width() const noexcept {
    return spec.head == HeadType::CauseSpecific ? spec.num_causes + 1 : 1;
}

FCRNModel make_model(const Dataset& train, const ModelSpec& spec, const TimeGrid& grid, std::uint64_t seed) {
    if (spec.num_causes < 1) throw invalid_argument("model needs at least one cause");
    if (spec.head == HeadType::Subdistribution && (spec.target_cause < 1 || spec.target_cause > spec.num_causes)) {
        throw invalid_argument("SDM target cause must be in 1..M");
    }
    if (train.empty()) throw invalid_argument("make_model: empty training set");
    FCRNModel model;
    model.spec = spec;
    model.grid = grid;
    model.covariate_names = train.covariate_names;
    model.signal_names = train.signal_names;

    const std::size_t P = train.num_covariates();
    model.norm.x_mean.resize(static_cast<Eigen::Index>(P));
    model.norm.x_sd.resize(static_cast<Eigen::Index>(P));
    for (std::size_t j = 0; j < P; ++j) {
        const auto [mean, sd] = observed_mean_sd(train, j);
        model.norm.x_mean[static_cast<Eigen::Index>(j)] = mean;
        model.norm.x_sd[static_cast<Eigen::Index>(j)] = sd;
    }

    std::mt19937_64 rng(seed);
    for (std::size_t s = 0; s < train.num_signals(); ++s) {
        auto grid_s = canonical_grid(train, s);
        double mean = 0.0, sd = 1.0;
        if (spec.normalize_curves) {
            double sum = 0.0, sq = 0.0;
            std::size_t n = 0;
            for (const auto& subj : train.subjects) {
                for (double v : resample_linear(subj.curves[s], grid_s)) {
                    sum += v;
                    sq += v * v;
                    ++n;
                }
            }
            mean = sum / static_cast<double>(n);
            const double var = n > 1 ? (sq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1) : 0.0;
            sd = var > 1e-24 ? std::sqrt(var) : 1.0;
        }
        model.norm.curve_mean.push_back(mean);
        model.norm.curve_sd.push_back(sd);
        model.basis.emplace_back(train.signal_names[s], spec.num_basis, std::move(grid_s), spec.micro_hidden,
                                 model.params, rng);
    }

    model.first_mlp_param = model.params.size();
    int fan_in = model.input_width();
    for (std::size_t k = 0; k <= spec.hidden.size(); ++k) {
        const int fan_out = k < spec.hidden.size() ? spec.hidden[k] : model.output_width();
        model.params.add("mlp." + std::to_string(k) + ".W", glorot_uniform(fan_out, fan_in, rng));
        model.params.add("mlp." + std::to_string(k) + ".b", Matrix::Zero(1, fan_out));
        fan_in = fan_out;
    }
    return model;
}

bool PreparedData::complete() const noexcept {
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
        if (mask.data()[i]) return false;
    }
    return true;
}

PreparedData prepare(const FCRNModel& model, const Dataset& ds) {
    if (ds.covariate_names != model.covariate_names) {
        throw compatibility_error("dataset covariates do not match the model's covariates");
    }
    // An empty subject file carries no curve rows, so its signal list is unknown.
    if (ds.size() > 0 && ds.signal_names != model.signal_names) {
        throw compatibility_error("dataset functional signals do not match the model's signals");
    }
    const auto n = static_cast<Eigen::Index>(ds.size());
    const auto P = static_cast<Eigen::Index>(ds.num_covariates());
    PreparedData out;
    out.x.resize(n, P);
    out.mask.resize(n, P);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = ds.subjects[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < P; ++j) {
            const bool miss = s.missing_mask[static_cast<std::size_t>(j)];
            out.mask(i, j) = miss;
            out.x(i, j) = miss ? kMissing : (s.x[static_cast<std::size_t>(j)] - model.norm.x_mean[j]) / model.norm.x_sd[j];
        }
    }
    for (std::size_t s = 0; s < model.basis.size(); ++s) {
        const auto& grid = model.basis[s].grid();
        Matrix c(n, static_cast<Eigen::Index>(grid.size()));
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto v = resample_linear(ds.subjects[static_cast<std::size_t>(i)].curves[s], grid);
            for (std::size_t j = 0; j < v.size(); ++j) {
                c(i, static_cast<Eigen::Index>(j)) = (v[j] - model.norm.curve_mean[s]) / model.norm.curve_sd[s];
            }
        }
        out.curves.push_back(std::move(c));
    }
    return out;
}

void fill_for_prediction(const FCRNModel& model, PreparedData& data) {
    if (data.complete()) return;
    if (model.imputer && model.imputer_medians.size() == data.x.cols()) {
        conditional_mean_fill(*model.imputer, model.imputer_medians, data.x, data.mask);
        return;
    }
    // No dependency model (P < 2): the normalized training mean is 0.
    for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
        for (Eigen::Index j = 0; j < data.x.cols(); ++j) {
            if (data.mask(i, j)) data.x(i, j) = model.imputer_medians.size() > j ? model.imputer_medians[j] : 0.0;
        }
    }
}

Vector assemble_input(const FCRNModel& model, std::span<const double> x_normalized,
                      std::span<const Vector> basis_coefficients, int t) {
    if (x_normalized.size() != model.num_covariates()) throw invalid_argument("assemble_input: covariate count");
    if (basis_coefficients.size() != model.basis.size()) throw invalid_argument("assemble_input: signal count");
    if (t < 1 || t > model.grid.intervals()) throw out_of_range("assemble_input: interval outside 1..L");
    Vector z(model.input_width());
    Eigen::Index k = 0;
    for (double v : x_normalized) {
        if (!std::isfinite(v)) throw state_error("assemble_input: unimputed missing covariate");
        z[k++] = v;
    }
    for (std::size_t s = 0; s < basis_coefficients.size(); ++s) {
        if (basis_coefficients[s].size() != model.basis[s].num_basis()) throw invalid_argument("assemble_input: basis width");
        z.segment(k, basis_coefficients[s].size()) = basis_coefficients[s];
        k += basis_coefficients[s].size();
    }
    const int tt[1] = {t};
    z.tail(model.time_width()) = time_block(model, tt).row(0).transpose();
    return z;
}

Matrix mlp_logits(const FCRNModel& model, const Matrix& z) {
    if (z.cols() != model.input_width()) throw invalid_argument("mlp_logits: input width mismatch");
    Matrix h = z;
    std::size_t p = model.first_mlp_param;
    const std::size_t layers = model.spec.hidden.size() + 1;
    for (std::size_t k = 0; k < layers; ++k) {
        const auto& w = model.params[p++].value;
        const auto& b = model.params[p++].value;
        Matrix next = h * w.transpose();
        next.rowwise() += b.row(0);
        if (k > 0 && k + 1 < layers) next = next.cwiseMax(0.0);
        h = std::move(next);
    }
    return h;
}

Vector forward_hazard_cs(const FCRNModel& model, const Vector& z) {
    if (model.spec.head != HeadType::CauseSpecific) throw state_error("forward_hazard_cs: model head is SDM");
    return softmax(mlp_logits(model, z.transpose())).row(0).transpose();
}

double forward_hazard_sd(const FCRNModel& model, const Vector& z) {
    if (model.spec.head != HeadType::Subdistribution) throw state_error("forward_hazard_sd: model head is CSM");
    return sigmoid(mlp_logits(model, z.transpose())(0, 0));
}

Matrix subject_features(const FCRNModel& model, const PreparedData& data) {
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return features_for(model, data, all);
}

double loss_cs(const Matrix& probabilities, std::span<const PersonPeriodRow> rows, Reduction r) {
    if (probabilities.rows() != static_cast<Eigen::Index>(rows.size())) throw invalid_argument("loss_cs: row count");
    double total = 0.0, wsum = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const double p = probabilities(static_cast<Eigen::Index>(k), rows[k].target);
        total += -rows[k].weight * std::log(std::max(p, kProbFloor));
        wsum += rows[k].weight;
    }
    if (r == Reduction::Sum) return total;
    return wsum > 0.0 ? total / wsum : 0.0;
}

double loss_sub(std::span<const double> xi, std::span<const PersonPeriodRow> rows, Reduction r) {
    if (xi.size() != rows.size()) throw invalid_argument("loss_sub: row count");
    double total = 0.0, wsum = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const double p = rows[k].target == 1 ? xi[k] : 1.0 - xi[k];
        total += -rows[k].weight * std::log(std::max(p, kProbFloor));
        wsum += rows[k].weight;
    }
    if (r == Reduction::Sum) return total;
    return wsum > 0.0 ? total / wsum : 0.0;
}

CifPrediction cif_from_cause_specific(const Matrix& probs) {
    const auto L = probs.rows();
    const auto M = probs.cols() - 1;
    CifPrediction out;
    out.hazards = probs;
    out.survival.assign(static_cast<std::size_t>(L) + 1, 1.0);
    out.cif.assign(static_cast<std::size_t>(M), std::vector<double>(static_cast<std::size_t>(L) + 1, 0.0));
    for (Eigen::Index m = 1; m <= M; ++m) out.causes.push_back(static_cast<int>(m));
    for (Eigen::Index t = 1; t <= L; ++t) {
        const double s_prev = out.survival[static_cast<std::size_t>(t - 1)];
        double overall = 0.0;
        for (Eigen::Index m = 1; m <= M; ++m) {
            const double lam = probs(t - 1, m);
            overall += lam;
            auto& f = out.cif[static_cast<std::size_t>(m - 1)];
            f[static_cast<std::size_t>(t)] = f[static_cast<std::size_t>(t - 1)] + lam * s_prev;
        }
        out.survival[static_cast<std::size_t>(t)] = s_prev * (1.0 - overall);
    }
    return out;
}

CifPrediction cif_from_subdistribution(std::span<const double> xi, int cause) {
    CifPrediction out;
    out.hazards = Eigen::Map<const Matrix>(xi.data(), static_cast<Eigen::Index>(xi.size()), 1);
    out.causes = {cause};
    std::vector<double> f(xi.size() + 1, 0.0);
    double surv = 1.0;
    for (std::size_t t = 1; t <= xi.size(); ++t) {
        surv *= 1.0 - xi[t - 1];
        f[t] = 1.0 - surv;
    }
    out.cif.push_back(std::move(f));
    return out;
}

namespace {

Matrix subject_rows(const FCRNModel& model, const Matrix& feature_row) {
    const int L = model.grid.intervals();
    std::vector<int> ts(static_cast<std::size_t>(L));
    std::iota(ts.begin(), ts.end(), 1);
    Matrix z(L, model.input_width());
    z.leftCols(feature_row.cols()) = feature_row.replicate(L, 1);
    z.rightCols(model.time_width()) = time_block(model, ts);
    return z;
}

CifPrediction predict_from_features(const FCRNModel& model, const Matrix& feature_row) {
    const Matrix logits = mlp_logits(model, subject_rows(model, feature_row));
    if (model.spec.head == HeadType::CauseSpecific) return cif_from_cause_specific(softmax(logits));
    std::vector<double> xi(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index t = 0; t < logits.rows(); ++t) xi[static_cast<std::size_t>(t)] = sigmoid(logits(t, 0));
    return cif_from_subdistribution(xi, model.spec.target_cause);
}

}  // namespace

CifPrediction predict_cif_cs(const FCRNModel& model, const PreparedData& data, std::size_t subject) {
    if (model.spec.head != HeadType::CauseSpecific) throw state_error("predict_cif_cs: model head is SDM");
    const std::size_t idx[1] = {subject};
    return predict_from_features(model, features_for(model, data, idx));
}

CifPrediction predict_cif_sd(const FCRNModel& model, const PreparedData& data, std::size_t subject) {
    if (model.spec.head != HeadType::Subdistribution) throw state_error("predict_cif_sd: model head is CSM");
    const std::size_t idx[1] = {subject};
    return predict_from_features(model, features_for(model, data, idx));
}

std::vector<CifPrediction> predict(const FCRNModel& model, const PreparedData& data) {
    const Matrix f = subject_features(model, data);
    std::vector<CifPrediction> out;
    out.reserve(data.size());
    for (Eigen::Index i = 0; i < f.rows(); ++i) out.push_back(predict_from_features(model, f.row(i)));
    return out;
}

RowSplit split_rows(const Dataset& ds, const FCRNModel& model, const TrainOptions& opts) {
    RowSplit split;
    if (model.spec.head == HeadType::CauseSpecific) {
        split.table = augment_cause_specific(ds, model.grid, model.spec.num_causes);
    } else {
        split.table = augment_subdistribution(ds, model.grid, model.spec.target_cause, censoring_survival(ds, model.grid));
    }
    const std::size_t n = ds.size();
    const auto n_val = static_cast<std::size_t>(std::floor(opts.validation_fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> is_val(n, false);
    for (std::size_t k = 0; k < n_val; ++k) is_val[order[k]] = true;
    for (const auto& r : split.table.rows) (is_val[r.subject] ? split.validation : split.train).push_back(r);
    return split;
}

double batch_loss(FCRNModel& model, const PreparedData& data, std::span<const PersonPeriodRow> rows, Reduction r,
                  bool backward, Matrix* input_grad) {
    if (rows.empty()) return 0.0;
    BatchGraph bg;
    forward_batch(bg, model, data, rows, input_grad != nullptr);
    const auto loss = loss_node(bg, model, rows, r);
    const double value = bg.graph.scalar(loss);
    if (backward) {
        bg.graph.backward(loss);
        if (input_grad) {
            const auto& gx = bg.graph.grad(bg.x_node);
            for (std::size_t k = 0; k < bg.subjects.size(); ++k) {
                input_grad->row(static_cast<Eigen::Index>(bg.subjects[k])) += gx.row(static_cast<Eigen::Index>(k));
            }
        }
    }
    return value;
}

double evaluate_loss(FCRNModel& model, const PreparedData& data, std::span<const PersonPeriodRow> rows, int batch_size) {
    double total = 0.0, wsum = 0.0;
    for (std::size_t start = 0; start < rows.size(); start += static_cast<std::size_t>(batch_size)) {
        const auto chunk = rows.subspan(start, std::min(rows.size() - start, static_cast<std::size_t>(batch_size)));
        total += batch_loss(model, data, chunk, Reduction::Sum, false);
        for (const auto& r : chunk) wsum += r.weight;
    }
    return wsum > 0.0 ? total / wsum : 0.0;
}

double adam_epoch(FCRNModel& model, const PreparedData& data, std::span<const PersonPeriodRow> rows, AdamState& adam,
                  const TrainOptions& opts, std::mt19937_64& rng, int epoch) {
    std::vector<PersonPeriodRow> order(rows.begin(), rows.end());
    std::shuffle(order.begin(), order.end(), rng);
    const auto bs = static_cast<std::size_t>(std::max(1, opts.batch_size));
    double total = 0.0, wsum = 0.0;
    int batch_id = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++batch_id) {
        const std::span<const PersonPeriodRow> batch(order.data() + start, std::min(bs, order.size() - start));
        double bw = 0.0;
        for (const auto& r : batch) bw += r.weight;
        if (bw <= 0.0) continue;
        model.params.zero_grad();
        const double loss = batch_loss(model, data, batch, Reduction::Mean, true);
        if (!std::isfinite(loss)) {
            std::ostringstream msg;
            msg << "non-finite training loss at epoch " << epoch << ", batch " << batch_id << " (lr=" << opts.lr
                << ", batch_size=" << opts.batch_size << ")";
            throw numeric_error(msg.str());
        }
        adam_step(model.params, adam, opts.lr);
        total += loss * bw;
        wsum += bw;
    }
    return wsum > 0.0 ? total / wsum : 0.0;
}

TrainResult train(const Dataset& ds, const ModelSpec& spec, const TimeGrid& grid, const TrainOptions& opts,
                  const EpochCallback& on_epoch) {
    if (ds.missing_count() > 0) throw state_error("train: dataset has missing covariates; use iro_train");
    TrainResult result{make_model(ds, spec, grid, opts.seed), {}, 0.0, 0};
    auto& model = result.model;
    const PreparedData data = prepare(model, ds);
    const RowSplit split = split_rows(ds, model, opts);
    if (split.train.empty()) throw invalid_argument("train: no training rows");

    std::mt19937_64 rng(opts.seed + 1);
    AdamState adam = make_adam_state(model.params);
    std::vector<Matrix> best;
    for (const auto& p : model.params) best.push_back(p.value);
    const bool has_val = !split.validation.empty();
    result.best_val_loss = has_val ? evaluate_loss(model, data, split.validation) : evaluate_loss(model, data, split.train);
    int since_best = 0;
    for (int epoch = 1; epoch <= opts.max_epochs; ++epoch) {
        EpochLog log;
        log.epoch = epoch;
        log.train_loss = adam_epoch(model, data, split.train, adam, opts, rng, epoch);
        log.val_loss = has_val ? evaluate_loss(model, data, split.validation) : evaluate_loss(model, data, split.train);
        result.history.push_back(log);
        if (on_epoch) on_epoch(log);
        if (log.val_loss < result.best_val_loss) {
            result.best_val_loss = log.val_loss;
            result.best_epoch = epoch;
            for (std::size_t k = 0; k < model.params.size(); ++k) best[k] = model.params[k].value;
            since_best = 0;
        } else if (++since_best >= opts.patience) {
            break;
        }
    }
    for (std::size_t k = 0; k < model.params.size(); ++k) model.params[k].value = best[k];
    if (data.x.cols() >= 2 && data.x.rows() >= 2) {
        model.imputer = fit_ggm(data.x, 0.2, 5, 1e-3);
    }
    model.imputer_medians = data.x.rows() > 0 ? observed_medians(data.x, data.mask) : Vector();
    return result;
}

Matrix intercept_only_hazards(const Dataset& ds, const TimeGrid& grid, int num_causes) {
    const auto table = augment_cause_specific(ds, grid, num_causes);
    const int L = grid.intervals();
    Matrix counts = Matrix::Zero(L, num_causes + 1);
    for (const auto& r : table.rows) counts(r.interval - 1, r.target) += 1.0;
    Matrix probs(L, num_causes + 1);
    for (int t = 0; t < L; ++t) {
        const double n = counts.row(t).sum();
        if (n > 0.0) {
            probs.row(t) = counts.row(t) / n;
        } else {
            probs.row(t).setZero();
            probs(t, 0) = 1.0;
        }
    }
    return probs;
}

// --- serialization ------------------------------------------------------------

nlohmann::json model_to_json(const FCRNModel& model) {
    using nlohmann::json;
    json j;
    j["format"] = "fcrn-model";
    j["version"] = 1;
    const auto& s = model.spec;
    j["spec"] = {
        {"head", s.head == HeadType::CauseSpecific ? "csm" : "sdm"},
        {"num_causes", s.num_causes},
        {"target_cause", s.target_cause},
        {"hidden", s.hidden},
        {"micro_hidden", s.micro_hidden},
        {"num_basis", s.num_basis},
        {"time_encoding", s.time_encoding == TimeEncoding::Scalar ? "scalar" : "onehot"},
        {"normalize_curves", s.normalize_curves},
    };
    j["grid"] = {{"width", model.grid.width()}, {"intervals", model.grid.intervals()}};
    j["normalization"] = {
        {"x_mean", vec_json(model.norm.x_mean)},
        {"x_sd", vec_json(model.norm.x_sd)},
        {"curve_mean", model.norm.curve_mean},
        {"curve_sd", model.norm.curve_sd},
    };
    j["covariates"] = model.covariate_names;
    j["signals"] = model.signal_names;
    json basis = json::array();
    for (const auto& b : model.basis) {
        basis.push_back({{"signal", b.signal()},
                         {"num_basis", b.num_basis()},
                         {"grid", b.grid()},
                         {"hidden", b.hidden()},
                         {"first_param", b.first_param()}});
    }
    j["basis"] = basis;
    j["first_mlp_param"] = model.first_mlp_param;
    json params = json::array();
    for (const auto& p : model.params) {
        params.push_back({{"name", p.name},
                          {"rows", p.value.rows()},
                          {"cols", p.value.cols()},
                          {"values", std::vector<double>(p.value.data(), p.value.data() + p.value.size())}});
    }
    j["parameters"] = params;
    if (model.imputer) {
        const auto& g = *model.imputer;
        json conds = json::array();
        for (const auto& c : g.conditionals) {
            conds.push_back({{"neighbors", c.neighbors}, {"coef", vec_json(c.coef)}, {"variance", c.variance}});
        }
        j["imputer"] = {{"mean", vec_json(g.mean)},
                        {"marginal_variance", vec_json(g.marginal_variance)},
                        {"conditionals", conds},
                        {"corr_threshold", g.corr_threshold},
                        {"k_max", g.k_max},
                        {"ridge", g.ridge}};
    } else {
        j["imputer"] = nullptr;
    }
    j["imputer_medians"] = vec_json(model.imputer_medians);
    j["config"] = model.config;
    return j;
}

FCRNModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "fcrn-model") throw data_error("not an fcrn model document");
        FCRNModel model;
        const auto& s = j.at("spec");
        model.spec.head = s.at("head").get<std::string>() == "csm" ? HeadType::CauseSpecific : HeadType::Subdistribution;
        model.spec.num_causes = s.at("num_causes").get<int>();
        model.spec.target_cause = s.at("target_cause").get<int>();
        model.spec.hidden = int_vec(s.at("hidden"));
        model.spec.micro_hidden = int_vec(s.at("micro_hidden"));
        model.spec.num_basis = s.at("num_basis").get<int>();
        model.spec.time_encoding = s.at("time_encoding").get<std::string>() == "scalar" ? TimeEncoding::Scalar : TimeEncoding::OneHot;
        model.spec.normalize_curves = s.at("normalize_curves").get<bool>();
        model.grid = TimeGrid(j.at("grid").at("width").get<double>(), j.at("grid").at("intervals").get<int>());
        const auto& nm = j.at("normalization");
        model.norm.x_mean = json_vec(nm.at("x_mean"));
        model.norm.x_sd = json_vec(nm.at("x_sd"));
        model.norm.curve_mean = nm.at("curve_mean").get<std::vector<double>>();
        model.norm.curve_sd = nm.at("curve_sd").get<std::vector<double>>();
        model.covariate_names = j.at("covariates").get<std::vector<std::string>>();
        model.signal_names = j.at("signals").get<std::vector<std::string>>();
        for (const auto& p : j.at("parameters")) {
            const auto rows = p.at("rows").get<Eigen::Index>();
            const auto cols = p.at("cols").get<Eigen::Index>();
            const auto values = p.at("values").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(values.size()) != rows * cols) throw data_error("parameter size mismatch");
            model.params.add(p.at("name").get<std::string>(), Eigen::Map<const Matrix>(values.data(), rows, cols));
        }
        for (const auto& b : j.at("basis")) {
            model.basis.emplace_back(b.at("signal").get<std::string>(), b.at("num_basis").get<int>(),
                                     b.at("grid").get<std::vector<double>>(), int_vec(b.at("hidden")),
                                     b.at("first_param").get<std::size_t>());
        }
        model.first_mlp_param = j.at("first_mlp_param").get<std::size_t>();
        if (!j.at("imputer").is_null()) {
            const auto& im = j.at("imputer");
            GaussianGraphicalModel g;
            g.mean = json_vec(im.at("mean"));
            g.marginal_variance = json_vec(im.at("marginal_variance"));
            g.corr_threshold = im.at("corr_threshold").get<double>();
            g.k_max = im.at("k_max").get<std::size_t>();
            g.ridge = im.at("ridge").get<double>();
            for (const auto& c : im.at("conditionals")) {
                GaussianGraphicalModel::Conditional cond;
                cond.neighbors = c.at("neighbors").get<std::vector<std::size_t>>();
                cond.coef = json_vec(c.at("coef"));
                cond.variance = c.at("variance").get<double>();
                g.conditionals.push_back(std::move(cond));
            }
            model.imputer = std::move(g);
        }
        model.imputer_medians = json_vec(j.at("imputer_medians"));
        model.config = j.value("config", nlohmann::json::object());
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("malformed model document: ") + e.what());
    }
}

void save_model(const FCRNModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write model file " + path);
    out << model_to_json(model).dump(1) << "\n";
    if (!out) throw io_error("failed writing model file " + path);
}

FCRNModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read model file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("model file " + path + " is not valid JSON: " + e.what());
    }
    return model_from_json(j);
}

}  // namespace fcrn
