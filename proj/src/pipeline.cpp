#include "fcrn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <sstream>

#include "fcrn/error.hpp"
#include "fcrn/evaluation.hpp"

namespace fcrn {

namespace fs = std::filesystem;
using nlohmann::json;

json default_run_config() {
    json sim = SimConfig{}.to_json();
    sim.erase("seed");
    return {
        {"seed", 1},
        {"output_dir", "fcrn_out"},
        {"data", {{"subjects", ""}, {"curves", ""}}},
        {"grid", {{"width", 5.0}, {"max_time", 100.0}}},
        {"model",
         {{"head", "csm"},
          {"cause", 1},
          {"num_causes", 2},
          {"hidden", {32, 64, 32}},
          {"micro_hidden", {16, 16}},
          {"basis_grid", {2, 3, 4, 5, 6, 7, 8}},
          {"time_encoding", "scalar"},
          {"normalize_curves", true}}},
        {"train",
         {{"lr", 0.001}, {"batch_size", 64}, {"max_epochs", 500}, {"patience", 20}, {"validation_fraction", 0.1}}},
        {"mvi",
         {{"enabled", true},
          {"lr", 0.003},
          {"decay", 0.1},
          {"milestones", {50, 100}},
          {"corr_threshold", 0.2},
          {"k_max", 5},
          {"ridge", 1e-3},
          {"pred_weight", 1.0},
          {"repeats", 1},
          {"noise", true},
          {"tol", 1e-4},
          {"converge_window", 5},
          {"max_epochs", 500},
          {"divergence_factor", 10.0}}},
        {"predict", {{"model", ""}}},
        {"evaluate", {{"predictions", ""}, {"horizons", {50.0, 100.0}}, {"t0", 0.0}}},
        {"simulate", sim},
    };
}

namespace {

// Objects are checked key by key; everything else is a leaf.
void check_known(const json& value, const json& defaults, const std::string& prefix) {
    if (!value.is_object()) return;
    if (!defaults.is_object()) throw config_error("config key '" + prefix + "' is not an object");
    for (const auto& [k, v] : value.items()) {
        const std::string path = prefix.empty() ? k : prefix + "." + k;
        if (!defaults.contains(k)) throw config_error("unknown config key '" + path + "'");
        if (defaults.at(k).is_object()) {
            if (!v.is_object()) throw config_error("config key '" + path + "' must be an object");
            check_known(v, defaults.at(k), path);
        }
    }
}

template <class T>
T get(const json& config, const char* section, const char* key) {
    try {
        return config.at(section).at(key).get<T>();
    } catch (const json::exception& e) {
        throw config_error(std::string("config key '") + section + "." + key + "': " + e.what());
    }
}

std::string out_path(const json& config, const std::string& name) {
    return (fs::path(config.at("output_dir").get<std::string>()) / name).string();
}

void ensure_dir(const json& config) {
    const fs::path dir(config.at("output_dir").get<std::string>());
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io_error("cannot create output directory '" + dir.string() + "': " + ec.message());
}

void write_config(const json& config) {
    ensure_dir(config);
    write_text(out_path(config, "config.json"), config.dump(2) + "\n");
}

Dataset load_data(const json& config) {
    const auto subjects = get<std::string>(config, "data", "subjects");
    if (subjects.empty()) throw config_error("data.subjects is required");
    return read_dataset(subjects, get<std::string>(config, "data", "curves"));
}

}  // namespace

void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw config_error("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    const json defaults = default_run_config();
    json* node = &config;
    const json* def = &defaults;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        if (!def->is_object() || !def->contains(parts[k])) throw config_error("unknown config key '" + key + "'");
        def = &def->at(parts[k]);
        if (k + 1 == parts.size()) {
            if (value.is_string() && def->is_number()) throw config_error("config key '" + key + "' expects a number");
            (*node)[parts[k]] = value;
        } else {
            node = &(*node)[parts[k]];
        }
    }
}

json resolve_config(const std::string& config_path, const std::vector<std::string>& overrides) {
    json config = default_run_config();
    if (!config_path.empty()) {
        json user;
        try {
            user = json::parse(read_text(config_path));
        } catch (const json::exception& e) {
            throw config_error("cannot parse config '" + config_path + "': " + e.what());
        }
        if (!user.is_object()) throw config_error("config '" + config_path + "' must be a JSON object");
        check_known(user, config, "");
        config.merge_patch(user);
    }
    for (const auto& o : overrides) apply_override(config, o);
    return config;
}

ModelSpec model_spec_from(const json& config) {
    ModelSpec s;
    const auto head = get<std::string>(config, "model", "head");
    if (head == "csm") {
        s.head = HeadType::CauseSpecific;
    } else if (head == "sdm") {
        s.head = HeadType::Subdistribution;
    } else {
        throw config_error("model.head must be 'csm' or 'sdm'");
    }
    s.num_causes = get<int>(config, "model", "num_causes");
    s.target_cause = get<int>(config, "model", "cause");
    if (s.num_causes < 1) throw config_error("model.num_causes must be >= 1");
    if (s.target_cause < 1 || s.target_cause > s.num_causes) throw config_error("model.cause must be in 1..num_causes");
    s.hidden = get<std::vector<int>>(config, "model", "hidden");
    s.micro_hidden = get<std::vector<int>>(config, "model", "micro_hidden");
    for (int h : s.hidden) {
        if (h < 1) throw config_error("model.hidden widths must be positive");
    }
    for (int h : s.micro_hidden) {
        if (h < 1) throw config_error("model.micro_hidden widths must be positive");
    }
    const auto enc = get<std::string>(config, "model", "time_encoding");
    if (enc == "scalar") {
        s.time_encoding = TimeEncoding::Scalar;
    } else if (enc == "onehot") {
        s.time_encoding = TimeEncoding::OneHot;
    } else {
        throw config_error("model.time_encoding must be 'scalar' or 'onehot'");
    }
    s.normalize_curves = get<bool>(config, "model", "normalize_curves");
    const auto grid = get<std::vector<int>>(config, "model", "basis_grid");
    if (grid.empty()) throw config_error("model.basis_grid must not be empty");
    for (int d : grid) {
        if (d < 1) throw config_error("model.basis_grid entries must be >= 1");
    }
    s.num_basis = grid.front();
    return s;
}

TrainOptions train_options_from(const json& config) {
    TrainOptions o;
    o.lr = get<double>(config, "train", "lr");
    o.batch_size = get<int>(config, "train", "batch_size");
    o.max_epochs = get<int>(config, "train", "max_epochs");
    o.patience = get<int>(config, "train", "patience");
    o.validation_fraction = get<double>(config, "train", "validation_fraction");
    o.seed = config.at("seed").get<std::uint64_t>();
    if (!(o.lr > 0.0)) throw config_error("train.lr must be positive");
    if (o.batch_size < 1 || o.max_epochs < 0 || o.patience < 1) throw config_error("train: batch_size, patience must be >= 1");
    if (!(o.validation_fraction >= 0.0 && o.validation_fraction < 1.0)) {
        throw config_error("train.validation_fraction must be in [0, 1)");
    }
    return o;
}

MviOptions mvi_options_from(const json& config) {
    MviOptions o;
    o.lr = get<double>(config, "mvi", "lr");
    o.decay = get<double>(config, "mvi", "decay");
    o.milestones = get<std::vector<int>>(config, "mvi", "milestones");
    o.corr_threshold = get<double>(config, "mvi", "corr_threshold");
    o.k_max = get<std::size_t>(config, "mvi", "k_max");
    o.ridge = get<double>(config, "mvi", "ridge");
    o.pred_weight = get<double>(config, "mvi", "pred_weight");
    o.repeats = get<int>(config, "mvi", "repeats");
    o.noise = get<bool>(config, "mvi", "noise");
    o.tol = get<double>(config, "mvi", "tol");
    o.converge_window = get<int>(config, "mvi", "converge_window");
    o.max_epochs = get<int>(config, "mvi", "max_epochs");
    o.divergence_factor = get<double>(config, "mvi", "divergence_factor");
    if (!(o.lr > 0.0)) throw config_error("mvi.lr must be positive");
    if (o.ridge < 0.0) throw config_error("mvi.ridge must be nonnegative");
    return o;
}

SimConfig sim_config_from(const json& config) {
    json sim = config.at("simulate");
    sim["seed"] = config.at("seed");
    return SimConfig::from_json(sim);
}

TimeGrid grid_from(const json& config) {
    const double width = get<double>(config, "grid", "width");
    const double max_time = get<double>(config, "grid", "max_time");
    if (!(width > 0.0) || !(max_time > 0.0)) throw config_error("grid.width and grid.max_time must be positive");
    return build_time_grid(max_time, width);
}

Dataset median_filled(const Dataset& ds) {
    Dataset out = ds;
    for (std::size_t j = 0; j < ds.num_covariates(); ++j) {
        std::vector<double> obs;
        for (const auto& s : ds.subjects) {
            if (!s.missing_mask[j]) obs.push_back(s.x[j]);
        }
        if (obs.empty()) throw config_error("covariate '" + ds.covariate_names[j] + "' is never observed");
        std::sort(obs.begin(), obs.end());
        const std::size_t m = obs.size() / 2;
        const double med = obs.size() % 2 ? obs[m] : 0.5 * (obs[m - 1] + obs[m]);
        for (auto& s : out.subjects) {
            if (s.missing_mask[j]) {
                s.x[j] = med;
                s.missing_mask[j] = false;
            }
        }
    }
    return out;
}

FitOutcome fit_from_config(const Dataset& train_ds, const json& config) {
    ModelSpec spec = model_spec_from(config);
    const TrainOptions topts = train_options_from(config);
    const MviOptions mopts = mvi_options_from(config);
    const TimeGrid grid = grid_from(config);
    train_ds.validate(spec.num_causes);
    if (train_ds.empty()) throw data_error("training dataset is empty");

    FitOutcome out;
    const bool missing = train_ds.missing_count() > 0;
    const bool use_mvi = missing && get<bool>(config, "mvi", "enabled");
    const Dataset* fit_ds = &train_ds;
    Dataset filled;
    if (!missing) {
        out.notes.emplace_back("mvi", "skipped: no missing covariate cells");
    } else if (!use_mvi) {
        filled = median_filled(train_ds);
        fit_ds = &filled;
        out.notes.emplace_back("mvi", "disabled: " + std::to_string(train_ds.missing_count()) + " missing cells filled with medians");
    } else {
        out.notes.emplace_back("mvi", "engaged: " + std::to_string(train_ds.missing_count()) + " missing cells");
    }

    std::vector<int> basis_grid = get<std::vector<int>>(config, "model", "basis_grid");
    if (train_ds.num_signals() == 0) {
        basis_grid.resize(1);
        out.notes.emplace_back("basis_search", "skipped: no functional covariates");
    }
    double best = std::numeric_limits<double>::infinity();
    for (int d : basis_grid) {
        spec.num_basis = d;
        auto on_epoch = [&](const EpochLog& log) { out.history.emplace_back(d, log); };
        TrainResult fit;
        Matrix imputed;
        MissingMask mask;
        if (use_mvi) {
            IroResult r = iro_train(*fit_ds, spec, grid, topts, mopts, on_epoch);
            fit = std::move(r.fit);
            imputed = std::move(r.imputed);
            mask = std::move(r.mask);
        } else {
            fit = train(*fit_ds, spec, grid, topts, on_epoch);
        }
        out.trials.push_back({d, fit.best_val_loss, fit.best_epoch, static_cast<int>(fit.history.size())});
        if (fit.best_val_loss < best) {
            best = fit.best_val_loss;
            out.model = std::move(fit.model);
            out.selected_basis = d;
            out.imputed = std::move(imputed);
            out.mask = std::move(mask);
        }
    }
    out.mvi_ran = use_mvi;
    if (train_ds.num_signals() > 0) {
        out.notes.emplace_back("basis_search", "selected D=" + std::to_string(out.selected_basis));
    }
    out.model.config = config;
    return out;
}

void cmd_simulate(const json& config) {
    const SimConfig sim = sim_config_from(config);
    write_config(config);
    const SimResult res = simulate(sim);
    write_subjects_csv(res.train, out_path(config, "train_subjects.csv"));
    write_subjects_csv(res.test, out_path(config, "test_subjects.csv"));
    if (res.full.num_signals() > 0) {
        write_curves_csv(res.train, out_path(config, "train_curves.csv"));
        write_curves_csv(res.test, out_path(config, "test_curves.csv"));
    }
    write_text(out_path(config, "manifest.json"), res.manifest.dump(2) + "\n");
}

FitOutcome cmd_train(const json& config) {
    const Dataset ds = load_data(config);
    write_config(config);
    FitOutcome out = fit_from_config(ds, config);
    save_model(out.model, out_path(config, "model.json"));

    std::ostringstream log;
    log << "num_basis,epoch,train_loss,val_loss,impute_lr\n";
    for (const auto& [d, e] : out.history) {
        log << d << ',' << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << ','
            << format_double(e.impute_lr) << '\n';
    }
    write_text(out_path(config, "train_log.csv"), log.str());

    std::ostringstream search;
    search << "num_basis,best_val_loss,best_epoch,epochs,selected\n";
    for (const auto& t : out.trials) {
        search << t.num_basis << ',' << format_double(t.best_val_loss) << ',' << t.best_epoch << ',' << t.epochs << ','
               << (t.num_basis == out.selected_basis ? 1 : 0) << '\n';
    }
    write_text(out_path(config, "basis_search.csv"), search.str());

    std::ostringstream notes;
    notes << "step,detail\n";
    for (const auto& [k, v] : out.notes) notes << k << ',' << v << '\n';
    write_text(out_path(config, "run_log.csv"), notes.str());

    if (out.mvi_ran) {
        write_imputation(ds, out.imputed, out.mask, out_path(config, "imputed.csv"), out_path(config, "imputed_mask.csv"));
    }
    return out;
}

PredictionTable cmd_predict(const json& config) {
    const auto model_path = get<std::string>(config, "predict", "model");
    if (model_path.empty()) throw config_error("predict.model is required");
    const FCRNModel model = load_model(model_path);
    const TimeGrid grid = grid_from(config);
    if (!(grid == model.grid)) {
        std::ostringstream msg;
        msg << "grid mismatch: config has width " << grid.width() << " x " << grid.intervals() << " intervals, model has "
            << model.grid.width() << " x " << model.grid.intervals();
        throw compatibility_error(msg.str());
    }
    const Dataset ds = load_data(config);
    write_config(config);
    PreparedData data = prepare(model, ds);
    fill_for_prediction(model, data);
    const auto preds = predict(model, data);
    PredictionTable table = make_prediction_table(model, ds, preds);
    write_predictions(table, out_path(config, "predictions.csv"));
    return table;
}

std::vector<ScoreBlock> evaluate_predictions(const PredictionTable& preds, const Dataset& ds,
                                             const std::vector<double>& horizons, double t0) {
    std::map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < preds.ids.size(); ++i) row_of.emplace(preds.ids[i], i);
    std::vector<std::size_t> order;
    for (const auto& s : ds.subjects) {
        const auto it = row_of.find(s.id);
        if (it == row_of.end()) throw compatibility_error("no predictions for subject '" + s.id + "'");
        order.push_back(it->second);
    }
    const CensoringSurvival g = censoring_survival(ds, preds.grid);
    std::vector<ScoreBlock> blocks;
    for (double h : horizons) {
        if (h > preds.grid.max_time() + 1e-9 * preds.grid.width()) {
            std::ostringstream msg;
            msg << "horizon " << h << " beyond predictions (last time " << preds.grid.max_time() << ")";
            throw compatibility_error(msg.str());
        }
        for (std::size_t c = 0; c < preds.causes.size(); ++c) {
            std::vector<std::vector<double>> cif;
            cif.reserve(order.size());
            for (std::size_t k : order) cif.push_back(preds.cif[k][c]);
            blocks.push_back({h, preds.causes[c], score_curve(cif, ds, preds.grid, preds.causes[c], g, t0, h)});
        }
    }
    return blocks;
}

std::vector<ScoreBlock> cmd_evaluate(const json& config) {
    const auto pred_path = get<std::string>(config, "evaluate", "predictions");
    if (pred_path.empty()) throw config_error("evaluate.predictions is required");
    const PredictionTable preds = read_predictions(pred_path);
    const Dataset ds = load_data(config);
    const auto horizons = get<std::vector<double>>(config, "evaluate", "horizons");
    const double t0 = get<double>(config, "evaluate", "t0");
    if (horizons.empty()) throw config_error("evaluate.horizons must not be empty");
    write_config(config);
    const auto blocks = evaluate_predictions(preds, ds, horizons, t0);
    write_scores(blocks, out_path(config, "scores.csv"));
    write_ibs_summary(blocks, out_path(config, "ibs.csv"));
    return blocks;
}

}  // namespace fcrn
