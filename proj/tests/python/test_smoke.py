import math

import pytest

import fcrn


def small_config(tmp_path, name, **sections):
    cfg = {"output_dir": str(tmp_path / name), "seed": 3}
    cfg.update(sections)
    return cfg


def test_defaults_and_overrides():
    cfg = fcrn.default_config()
    assert cfg["grid"] == {"width": 5.0, "max_time": 100.0}
    assert cfg["model"]["hidden"] == [32, 64, 32]
    assert fcrn.resolve_config("", ["train.lr=0.01"])["train"]["lr"] == 0.01
    with pytest.raises(fcrn.FcrnError) as err:
        fcrn.resolve_config("", ["train.nope=1"])
    assert err.value.kind == "config"


def test_ibs_and_censoring_survival():
    assert fcrn.ibs([0, 1, 2, 3], [0.2, 0.2, 0.2, 0.2]) == pytest.approx(0.2)
    g = fcrn.censoring_survival([0.5, 1.5, 2.5, 3.5], [1, 0, 2, 1], 1.0, 4)
    assert g[:3] == pytest.approx([1.0, 1.0, 2.0 / 3.0])


def test_pipeline(tmp_path):
    sim = {"n": 120, "n_train": 90, "n_test": 30, "missing_rate": 0.1}
    manifest = fcrn.simulate(small_config(tmp_path, "sim", simulate=sim))
    assert manifest["n_train"] == 90
    assert len(manifest["covariates"]) == 10

    data = {"subjects": str(tmp_path / "sim" / "train_subjects.csv"),
            "curves": str(tmp_path / "sim" / "train_curves.csv")}
    fit = fcrn.train(small_config(tmp_path, "train", data=data,
                                  model={"basis_grid": [2], "hidden": [8]},
                                  train={"max_epochs": 4}, mvi={"max_epochs": 4}))
    assert fit["selected_basis"] == 2
    assert fit["mvi_ran"]

    test = {"subjects": str(tmp_path / "sim" / "test_subjects.csv"),
            "curves": str(tmp_path / "sim" / "test_curves.csv")}
    table = fcrn.predict(small_config(tmp_path, "pred", data=test,
                                      predict={"model": str(tmp_path / "train" / "model.json")}))
    assert len(table["ids"]) == 30
    for cif, surv in zip(table["cif"], table["survival"]):
        for t in range(len(surv)):
            assert math.isclose(cif[0][t] + cif[1][t] + surv[t], 1.0, abs_tol=1e-10)

    blocks = fcrn.evaluate(small_config(tmp_path, "eval", data=test,
                                        evaluate={"predictions": str(tmp_path / "pred" / "predictions.csv")}))
    assert len(blocks) == 4
    assert all(0.0 < b["ibs"] < 0.5 for b in blocks)


def test_bad_input_raises(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,time,cause,x\na,1.0,1,oops\n")
    with pytest.raises(fcrn.FcrnError) as err:
        fcrn.train(small_config(tmp_path, "t", data={"subjects": str(bad)}))
    assert err.value.kind == "data"
    assert err.value.exit_code == 3
