// fcrn: simulate / train / predict / evaluate.
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fcrn/error.hpp"
#include "fcrn/pipeline.hpp"

namespace {

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    long long seed = -1;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "JSON run config");
    app->add_option("--set", c.sets, "Override a config key, e.g. train.batch_size=32")->take_all();
    app->add_option("--out", c.out, "Output directory");
    app->add_option("--seed", c.seed, "Seed for simulation and training");
}

nlohmann::json resolve(const Common& c, std::vector<std::string> extra) {
    std::vector<std::string> sets;
    if (!c.out.empty()) sets.push_back("output_dir=" + nlohmann::json(c.out).dump());
    if (c.seed >= 0) sets.push_back("seed=" + std::to_string(c.seed));
    sets.insert(sets.end(), extra.begin(), extra.end());
    sets.insert(sets.end(), c.sets.begin(), c.sets.end());
    return fcrn::resolve_config(c.config, sets);
}

std::string quoted(const std::string& key, const std::string& v) { return key + "=" + nlohmann::json(v).dump(); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Functional competing-risks networks"};
    app.require_subcommand(1);

    Common sim_c, train_c, pred_c, eval_c;
    std::string train_subjects, train_curves, pred_subjects, pred_curves, pred_model, eval_subjects, eval_preds;
    std::string head;
    int cause = 0;
    std::vector<double> horizons;

    auto* sim = app.add_subcommand("simulate", "Generate a synthetic train/test dataset");
    add_common(sim, sim_c);

    auto* tr = app.add_subcommand("train", "Train a CSM or SDM model");
    add_common(tr, train_c);
    tr->add_option("--subjects", train_subjects, "Subject CSV");
    tr->add_option("--curves", train_curves, "Curve CSV");
    tr->add_option("--head", head, "csm or sdm");
    tr->add_option("--cause", cause, "Target cause for sdm");

    auto* pr = app.add_subcommand("predict", "Write cumulative incidence predictions");
    add_common(pr, pred_c);
    pr->add_option("--model", pred_model, "Model JSON");
    pr->add_option("--subjects", pred_subjects, "Subject CSV");
    pr->add_option("--curves", pred_curves, "Curve CSV");

    auto* ev = app.add_subcommand("evaluate", "Score predictions with the IPCW Brier score");
    add_common(ev, eval_c);
    ev->add_option("--predictions", eval_preds, "Prediction CSV");
    ev->add_option("--subjects", eval_subjects, "Subject CSV with observed outcomes");
    ev->add_option("--horizons", horizons, "Evaluation horizons")->take_all();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            fcrn::cmd_simulate(resolve(sim_c, {}));
        } else if (tr->parsed()) {
            std::vector<std::string> extra;
            if (!train_subjects.empty()) extra.push_back(quoted("data.subjects", train_subjects));
            if (!train_curves.empty()) extra.push_back(quoted("data.curves", train_curves));
            if (!head.empty()) extra.push_back(quoted("model.head", head));
            if (cause > 0) extra.push_back("model.cause=" + std::to_string(cause));
            const auto out = fcrn::cmd_train(resolve(train_c, extra));
            for (const auto& [k, v] : out.notes) std::cerr << k << ": " << v << "\n";
        } else if (pr->parsed()) {
            std::vector<std::string> extra;
            if (!pred_model.empty()) extra.push_back(quoted("predict.model", pred_model));
            if (!pred_subjects.empty()) extra.push_back(quoted("data.subjects", pred_subjects));
            if (!pred_curves.empty()) extra.push_back(quoted("data.curves", pred_curves));
            fcrn::cmd_predict(resolve(pred_c, extra));
        } else if (ev->parsed()) {
            std::vector<std::string> extra;
            if (!eval_preds.empty()) extra.push_back(quoted("evaluate.predictions", eval_preds));
            if (!eval_subjects.empty()) extra.push_back(quoted("data.subjects", eval_subjects));
            if (!horizons.empty()) extra.push_back("evaluate.horizons=" + nlohmann::json(horizons).dump());
            const auto blocks = fcrn::cmd_evaluate(resolve(eval_c, extra));
            for (const auto& b : blocks) std::cout << "horizon " << b.horizon << " cause " << b.cause << " ibs " << b.curve.ibs << "\n";
        }
    } catch (const fcrn::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return fcrn::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
