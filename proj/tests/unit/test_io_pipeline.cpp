#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fcrn/error.hpp"
#include "fcrn/io.hpp"
#include "fcrn/pipeline.hpp"

using namespace fcrn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("fcrn_unit_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void put(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an fcrn::Error");
    return ErrorKind::State;
}

}  // namespace

TEST_CASE("number formatting and CSV splitting") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, 0.0}) CHECK(std::stod(format_double(v)) == v);
    CHECK(split_csv_line("a,\"b,c\",,d") == std::vector<std::string>{"a", "b,c", "", "d"});
    CHECK(split_csv_line("\"x\"\"y\"") == std::vector<std::string>{"x\"y"});
}

TEST_CASE("dataset CSV round trip") {
    const auto dir = scratch("roundtrip");
    SimConfig cfg;
    cfg.n = 40;
    cfg.n_train = 30;
    cfg.n_test = 10;
    cfg.missing_rate = 0.2;
    const auto sim = simulate(cfg);
    write_subjects_csv(sim.train, (dir / "s.csv").string());
    write_curves_csv(sim.train, (dir / "c.csv").string());
    const auto back = read_dataset((dir / "s.csv").string(), (dir / "c.csv").string());
    REQUIRE(back.size() == sim.train.size());
    CHECK(back.covariate_names == sim.train.covariate_names);
    CHECK(back.signal_names == sim.train.signal_names);
    CHECK(back.missing_count() == sim.train.missing_count());
    for (std::size_t i = 0; i < back.size(); ++i) {
        const auto& a = back.subjects[i];
        const auto& b = sim.train.subjects[i];
        CHECK(a.id == b.id);
        CHECK(a.time == b.time);
        CHECK(a.cause == b.cause);
        CHECK(a.missing_mask == b.missing_mask);
        for (std::size_t k = 0; k < a.x.size(); ++k) {
            if (!b.missing_mask[k]) CHECK(a.x[k] == b.x[k]);
        }
        REQUIRE(a.curves.size() == b.curves.size());
        for (std::size_t s = 0; s < a.curves.size(); ++s) {
            CHECK(a.curves[s].taus == b.curves[s].taus);
            CHECK(a.curves[s].values == b.curves[s].values);
        }
    }
}

TEST_CASE("malformed input names the row and column") {
    const auto dir = scratch("malformed");
    put(dir / "bad.csv", "id,time,cause,x1\na,1.0,1,0.5\nb,2.0,1,oops\n");
    try {
        read_dataset((dir / "bad.csv").string());
        FAIL("expected data error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Data);
        const std::string msg = e.what();
        CHECK(msg.find("row 3") != std::string::npos);
        CHECK(msg.find("x1") != std::string::npos);
    }
    put(dir / "hdr.csv", "name,time,cause\n");
    CHECK(kind_of([&] { read_dataset((dir / "hdr.csv").string()); }) == ErrorKind::Data);
    put(dir / "cause.csv", "id,time,cause\na,1.0,-1\n");
    CHECK(kind_of([&] { read_dataset((dir / "cause.csv").string()); }) == ErrorKind::Data);
    CHECK(kind_of([&] { read_dataset((dir / "absent.csv").string()); }) == ErrorKind::Io);
}

TEST_CASE("config resolution") {
    auto cfg = default_run_config();
    apply_override(cfg, "train.lr=0.01");
    CHECK(cfg["train"]["lr"] == 0.01);
    apply_override(cfg, "model.head=sdm");
    CHECK(cfg["model"]["head"] == "sdm");
    CHECK(kind_of([&] { apply_override(cfg, "train.learning_rate=1"); }) == ErrorKind::Config);
    CHECK(kind_of([&] { apply_override(cfg, "train.lr=fast"); }) == ErrorKind::Config);
    CHECK(kind_of([&] { apply_override(cfg, "nonsense"); }) == ErrorKind::Config);

    const auto dir = scratch("config");
    put(dir / "c.json", R"({"grid": {"width": 2.0}, "seed": 4})");
    const auto r = resolve_config((dir / "c.json").string(), {"seed=9"});
    CHECK(r["grid"]["width"] == 2.0);
    CHECK(r["grid"]["max_time"] == 100.0);
    CHECK(r["seed"] == 9);
    put(dir / "u.json", R"({"grid": {"widht": 2.0}})");
    CHECK(kind_of([&] { resolve_config((dir / "u.json").string(), {}); }) == ErrorKind::Config);
}

TEST_CASE("simulate, train, predict and evaluate through the pipeline") {
    const auto dir = scratch("pipeline");
    auto cfg = default_run_config();
    cfg["output_dir"] = (dir / "sim").string();
    cfg["simulate"]["n"] = 120;
    cfg["simulate"]["n_train"] = 90;
    cfg["simulate"]["n_test"] = 30;
    cfg["simulate"]["missing_rate"] = 0.1;
    cmd_simulate(cfg);
    CHECK(fs::exists(dir / "sim" / "manifest.json"));

    auto tr = cfg;
    tr["output_dir"] = (dir / "train").string();
    tr["data"]["subjects"] = (dir / "sim" / "train_subjects.csv").string();
    tr["data"]["curves"] = (dir / "sim" / "train_curves.csv").string();
    tr["model"]["basis_grid"] = {2};
    tr["model"]["hidden"] = {8};
    tr["train"]["max_epochs"] = 5;
    tr["mvi"]["max_epochs"] = 5;
    const auto fit = cmd_train(tr);
    CHECK(fit.mvi_ran);
    CHECK(fs::exists(dir / "train" / "model.json"));
    CHECK(fs::exists(dir / "train" / "imputed.csv"));

    auto pr = cfg;
    pr["output_dir"] = (dir / "pred").string();
    pr["predict"]["model"] = (dir / "train" / "model.json").string();
    pr["data"]["subjects"] = (dir / "sim" / "test_subjects.csv").string();
    pr["data"]["curves"] = (dir / "sim" / "test_curves.csv").string();
    const auto table = cmd_predict(pr);
    CHECK(table.ids.size() == 30);
    const auto text1 = read_text((dir / "pred" / "predictions.csv").string());
    cmd_predict(pr);
    CHECK(read_text((dir / "pred" / "predictions.csv").string()) == text1);

    const auto back = read_predictions((dir / "pred" / "predictions.csv").string());
    CHECK(back.grid == table.grid);
    CHECK(back.ids == table.ids);
    CHECK(back.cif == table.cif);

    auto ev = pr;
    ev["output_dir"] = (dir / "eval").string();
    ev["evaluate"]["predictions"] = (dir / "pred" / "predictions.csv").string();
    const auto blocks = cmd_evaluate(ev);
    CHECK(blocks.size() == 4);
    for (const auto& b : blocks) {
        CHECK(b.curve.ibs > 0.0);
        CHECK(b.curve.ibs < 0.5);
    }
    ev["evaluate"]["horizons"] = {150.0};
    CHECK(kind_of([&] { cmd_evaluate(ev); }) == ErrorKind::Compatibility);

    auto mismatch = pr;
    mismatch["grid"]["width"] = 10.0;
    mismatch["grid"]["max_time"] = 100.0;
    CHECK(kind_of([&] { cmd_predict(mismatch); }) == ErrorKind::Compatibility);

    // An empty dataset writes the header only.
    put(dir / "empty.csv", read_text((dir / "sim" / "test_subjects.csv").string()).substr(
                               0, read_text((dir / "sim" / "test_subjects.csv").string()).find('\n') + 1));
    auto empty = pr;
    empty["output_dir"] = (dir / "empty").string();
    empty["data"]["subjects"] = (dir / "empty.csv").string();
    empty["data"]["curves"] = "";
    cmd_predict(empty);
    const auto etext = read_text((dir / "empty" / "predictions.csv").string());
    CHECK(std::count(etext.begin(), etext.end(), '\n') == 1);
}
