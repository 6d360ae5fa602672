// Python bindings. Configs travel as JSON text; the package wrapper converts dicts.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fcrn/error.hpp"
#include "fcrn/evaluation.hpp"
#include "fcrn/io.hpp"
#include "fcrn/pipeline.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

const char* kind_name(fcrn::ErrorKind k) {
    switch (k) {
    case fcrn::ErrorKind::InvalidArgument: return "invalid_argument";
    case fcrn::ErrorKind::OutOfRange: return "out_of_range";
    case fcrn::ErrorKind::State: return "state";
    case fcrn::ErrorKind::Data: return "data";
    case fcrn::ErrorKind::Numeric: return "numeric";
    case fcrn::ErrorKind::Compatibility: return "compatibility";
    case fcrn::ErrorKind::Config: return "config";
    case fcrn::ErrorKind::Io: return "io";
    }
    return "unknown";
}

json parse(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw fcrn::config_error(std::string("config is not valid JSON: ") + e.what());
    }
}

void apply_tree(json& out, const json& user, const json& defaults, const std::string& prefix) {
    for (const auto& [k, v] : user.items()) {
        const std::string path = prefix.empty() ? k : prefix + "." + k;
        if (!defaults.contains(k)) throw fcrn::config_error("unknown config key '" + path + "'");
        if (defaults.at(k).is_object() && v.is_object()) {
            apply_tree(out, v, defaults.at(k), path);
        } else {
            fcrn::apply_override(out, path + "=" + v.dump());
        }
    }
}

// Missing keys come from the defaults; unknown keys are rejected.
json with_defaults(const std::string& text) {
    const json user = parse(text);
    if (!user.is_object()) throw fcrn::config_error("config must be a JSON object");
    json out = fcrn::default_run_config();
    const json defaults = out;
    apply_tree(out, user, defaults, "");
    return out;
}

py::dict table_dict(const fcrn::PredictionTable& t) {
    py::dict d;
    d["head"] = t.head == fcrn::HeadType::CauseSpecific ? "csm" : "sdm";
    d["cuts"] = t.grid.cuts();
    d["causes"] = t.causes;
    d["ids"] = t.ids;
    d["cif"] = t.cif;
    d["survival"] = t.survival;
    return d;
}

py::list blocks_list(const std::vector<fcrn::ScoreBlock>& blocks) {
    py::list out;
    for (const auto& b : blocks) {
        py::dict d;
        d["horizon"] = b.horizon;
        d["cause"] = b.cause;
        d["times"] = b.curve.times;
        d["scores"] = b.curve.scores;
        d["ibs"] = b.curve.ibs;
        out.append(d);
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_fcrn, m) {
    m.doc() = "Functional competing-risks networks";

    static py::exception<fcrn::Error> error(m, "FcrnError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const fcrn::Error& e) {
            py::object exc = py::handle(error.ptr())(py::str(e.what()));
            exc.attr("kind") = kind_name(e.kind());
            exc.attr("exit_code") = fcrn::exit_code(e.kind());
            PyErr_SetObject(error.ptr(), exc.ptr());
        }
    });

    m.def("default_config", [] { return fcrn::default_run_config().dump(); }, "Default run config as JSON text.");
    m.def("resolve_config", [](const std::string& path, const std::vector<std::string>& overrides) {
        return fcrn::resolve_config(path, overrides).dump();
    }, py::arg("path") = "", py::arg("overrides") = std::vector<std::string>{});

    m.def("simulate", [](const std::string& config) {
        const json c = with_defaults(config);
        fcrn::cmd_simulate(c);
        return fcrn::read_text(c.at("output_dir").get<std::string>() + "/manifest.json");
    }, py::arg("config"), "Writes a synthetic dataset; returns the manifest as JSON text.");

    m.def("train", [](const std::string& config) {
        const auto out = fcrn::cmd_train(with_defaults(config));
        py::dict d;
        d["selected_basis"] = out.selected_basis;
        d["mvi_ran"] = out.mvi_ran;
        py::list trials;
        for (const auto& t : out.trials) {
            py::dict td;
            td["num_basis"] = t.num_basis;
            td["best_val_loss"] = t.best_val_loss;
            td["best_epoch"] = t.best_epoch;
            td["epochs"] = t.epochs;
            trials.append(td);
        }
        d["trials"] = trials;
        return d;
    }, py::arg("config"));

    m.def("predict", [](const std::string& config) { return table_dict(fcrn::cmd_predict(with_defaults(config))); },
          py::arg("config"));
    m.def("evaluate", [](const std::string& config) { return blocks_list(fcrn::cmd_evaluate(with_defaults(config))); },
          py::arg("config"));

    m.def("ibs", [](const std::vector<double>& times, const std::vector<double>& scores) {
        return fcrn::ibs(times, scores);
    }, py::arg("times"), py::arg("scores"), "Trapezoidal average of a score curve.");

    m.def("censoring_survival", [](const std::vector<double>& times, const std::vector<int>& causes, double width,
                                   int intervals) {
        if (times.size() != causes.size()) throw fcrn::invalid_argument("times and causes differ in length");
        fcrn::Dataset ds;
        for (std::size_t i = 0; i < times.size(); ++i) {
            fcrn::SubjectRecord r;
            r.id = std::to_string(i);
            r.time = times[i];
            r.cause = causes[i];
            ds.subjects.push_back(r);
        }
        return fcrn::censoring_survival(ds, fcrn::TimeGrid(width, intervals)).g;
    }, py::arg("times"), py::arg("causes"), py::arg("width"), py::arg("intervals"));
}
