import json

import numpy as np
import pandas as pd
import pytest

from conftest import write_table
from peakshape.cli import main
from peakshape.core import Grid
from peakshape.simulate import scenario_signal

TINY = {
    "grid_points": 40,
    "samples": 6,
    "kappa_grid": [0.0, 1.0],
    "align": {"max_iter": 3, "tol": 0.001},
    "ppd": {"lambda_grid": [0.0, 0.05, 0.1]},
    "fit": {"K": 4, "restarts": 1, "max_evals": 500},
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(TINY))
    return str(path)


@pytest.fixture
def bimodal_csv(tmp_path):
    grid = Grid(40)
    g = scenario_signal(1, grid).values
    return write_table(tmp_path / "bimodal.csv", grid.points, {f"f{i}": g for i in range(4)})


def read(path):
    return pd.read_csv(path)


def test_simulate_is_deterministic(tmp_path, config):
    for name in ("a", "b"):
        assert main(["simulate", "--scenario", "1", "--seed", "7", "--config", config,
                     "--output-dir", str(tmp_path / name)]) == 0
    for artifact in ("data.csv", "gtrue.csv"):
        assert (tmp_path / "a" / artifact).read_bytes() == (tmp_path / "b" / artifact).read_bytes()
    data = read(tmp_path / "a" / "data.csv")
    assert list(data.columns) == ["t"] + [f"f_{i}" for i in range(1, 7)]


def test_align_identical_columns(tmp_path, config, bimodal_csv):
    out = tmp_path / "out"
    assert main(["align", "--input", str(bimodal_csv), "--lambda", "0", "--config", config,
                 "--output-dir", str(out)]) == 0
    mean = read(out / "mean.csv")["mean"].to_numpy()
    np.testing.assert_allclose(mean, read(bimodal_csv)["f0"].to_numpy(), atol=1e-12)
    assert list(read(out / "warps.csv").columns) == ["t", "f0", "f1", "f2", "f3"]
    assert (out / "aligned.csv").exists()


def test_align_huge_lambda_is_pointwise_average(tmp_path, config):
    sim = tmp_path / "sim"
    main(["simulate", "--config", config, "--output-dir", str(sim)])
    out = tmp_path / "out"
    assert main(["align", "--input", str(sim / "data.csv"), "--lambda", "1e9", "--config", config,
                 "--output-dir", str(out)]) == 0
    data = read(sim / "data.csv").drop(columns="t").to_numpy()
    np.testing.assert_allclose(read(out / "mean.csv")["mean"].to_numpy(), data.mean(axis=1), atol=1e-3)


def test_align_outputs_are_reproducible(tmp_path, config):
    sim = tmp_path / "sim"
    main(["simulate", "--config", config, "--output-dir", str(sim)])
    for name in ("a", "b"):
        assert main(["align", "--input", str(sim / "data.csv"), "--lambda", "0.05", "--config", config,
                     "--output-dir", str(tmp_path / name)]) == 0
    for artifact in ("aligned.csv", "warps.csv", "mean.csv"):
        assert (tmp_path / "a" / artifact).read_bytes() == (tmp_path / "b" / artifact).read_bytes()


def test_malformed_csv_exits_with_data_error(tmp_path, config, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,a\n0,1\n0.5,oops\n1,2\n")
    assert main(["align", "--input", str(bad), "--config", config, "--output-dir", str(tmp_path)]) == 2
    assert "row 2, column 'a'" in capsys.readouterr().err


def test_ppd_on_noiseless_bimodal(tmp_path, config, bimodal_csv):
    out = tmp_path / "out"
    assert main(["ppd", "--input", str(bimodal_csv), "--config", config, "--output-dir", str(out)]) == 0
    selection = json.loads((out / "selection.json").read_text())
    assert selection["m"] == 2
    assert selection["lambda_star"] == 0.0
    assert set(selection) >= {"m", "lambda_star", "persistent_labels", "flags"}
    barchart = read(out / "ppd_barchart.csv")
    assert set(barchart["label"]) == set(selection["persistent_labels"])
    surface = json.loads((out / "ppd_surface.json").read_text())
    assert len(surface["values"]) == 3


def test_empty_lambda_grid_is_config_error(tmp_path, bimodal_csv):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"ppd": {"lambda_grid": []}}))
    assert main(["ppd", "--input", str(bimodal_csv), "--config", str(path), "--output-dir", str(tmp_path)]) == 1


def test_unknown_config_key_and_usage_errors(tmp_path, bimodal_csv):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"nope": 1}))
    assert main(["ppd", "--input", str(bimodal_csv), "--config", str(path)]) == 1
    assert main(["ppd"]) == 1
    assert main(["frobnicate"]) == 1


def test_estimate_then_bootstrap(tmp_path, config):
    sim = tmp_path / "sim"
    main(["simulate", "--config", config, "--output-dir", str(sim)])
    out = tmp_path / "out"
    data = str(sim / "data.csv")
    assert main(["estimate", "--input", data, "--config", config, "--output-dir", str(out)]) == 0
    for artifact in ("selection.json", "ginit.csv", "ghat.csv"):
        assert (out / artifact).exists()
    first = (out / "ghat.csv").read_bytes()
    # second run reuses selection.json
    assert main(["estimate", "--input", data, "--config", config, "--output-dir", str(out)]) == 0
    assert (out / "ghat.csv").read_bytes() == first
    assert main(["bootstrap", "--input", data, "--config", config, "--output-dir", str(out),
                 "--bootstrap-B", "4", "--alpha", "0.5"]) == 0
    band = read(out / "band.csv")
    assert list(band.columns) == ["t", "lower", "upper"]
    assert (band["lower"] <= band["upper"]).all()


def test_estimate_on_clean_data(tmp_path, config, bimodal_csv):
    out = tmp_path / "out"
    assert main(["estimate", "--input", str(bimodal_csv), "--config", config, "--output-dir", str(out)]) == 0
    truth = read(bimodal_csv)["f0"].to_numpy()
    ghat = read(out / "ghat.csv")["ghat"].to_numpy()
    ginit = read(out / "ginit.csv")["ginit"].to_numpy()
    assert np.sqrt(np.mean((ghat - truth) ** 2)) <= np.sqrt(np.mean((ginit - truth) ** 2))


def test_bootstrap_without_estimate_fails(tmp_path, config, bimodal_csv):
    assert main(["bootstrap", "--input", str(bimodal_csv), "--config", config,
                 "--output-dir", str(tmp_path / "empty")]) == 2


def test_compare_is_deterministic(tmp_path, config):
    for name in ("a", "b"):
        assert main(["compare", "--scenario", "1", "--reps", "2", "--seed", "5", "--config", config,
                     "--output-dir", str(tmp_path / name)]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "report.csv").read_bytes() == (b / "report.csv").read_bytes()
    report = read(a / "report.csv")
    assert len(report) == 2
    assert "m" in report.columns
    assert (report.filter(like="rmse_") >= 0).all().all()
    summary = json.loads((a / "summary.json").read_text())
    assert summary["replications"] == 2
    assert (a / "timings.csv").exists()
