import numpy as np
import pytest

from peakshape import simulate as simulate_module
from peakshape.align import AlignConfig, L2Config
from peakshape.core import Grid
from peakshape.errors import ConfigError, DataError
from peakshape.ppd import PpdConfig, find_internal_peaks
from peakshape.shapefit import FitConfig
from peakshape.simulate import (
    NO_NOISE,
    SCENARIOS,
    NoiseModel,
    default_noise,
    generate,
    make_scenario,
    random_warping,
    replication_seed,
    rmse,
    run_experiment,
    run_replication,
    scenario_signal,
)


@pytest.mark.parametrize("scenario,m", [("1", 2), ("2", 2), ("3", 2), ("4", 1), ("mixture-B", 3)])
def test_true_peak_counts(grid, scenario, m):
    assert len(find_internal_peaks(scenario_signal(scenario, grid))) == m


def test_unknown_scenario(grid):
    with pytest.raises(ConfigError):
        scenario_signal("7", grid)


def test_negative_noise_rejected():
    with pytest.raises(ConfigError):
        NoiseModel(sigma_a=-0.1)


def test_default_noise_scales_with_range(bimodal):
    noise = default_noise(bimodal)
    assert noise.sigma_eps == pytest.approx(0.05 * np.ptp(bimodal.values))
    assert noise.sigma_a == 0.05


def test_noiseless_generation_copies_truth(grid):
    scn = make_scenario(1, grid, n=5, seed=1, noise=NO_NOISE)
    data, g = generate(scn)
    for f in data:
        np.testing.assert_array_equal(f.values, g.values)


def test_generation_is_deterministic(grid):
    scn = make_scenario(2, grid, n=6, seed=9)
    a, _ = generate(scn)
    b, _ = generate(scn)
    np.testing.assert_array_equal(a.matrix, b.matrix)
    c, _ = generate(make_scenario(2, grid, n=6, seed=10))
    assert not np.array_equal(a.matrix, c.matrix)


def test_mixture_composition(grid):
    scn = make_scenario("mixture-A", grid, n=10, seed=0, noise=NO_NOISE)
    data, g = generate(scn)
    assert scn.contaminant_count == 2
    assert sum(np.array_equal(f.values, g.values) for f in data) == 8
    assert len(find_internal_peaks(data.functions[-1])) == 3


def test_random_warps_average_to_identity(grid, rng):
    warps = np.array([random_warping(0.3, rng, grid).values for _ in range(4000)])
    assert np.max(np.abs(warps.mean(axis=0) - grid.points)) < 0.015
    assert random_warping(0.0, rng, grid).is_identity


def test_rmse(bimodal):
    assert rmse(bimodal, bimodal) == 0.0


def test_replication_seeds_differ():
    assert replication_seed(7, 0) != replication_seed(7, 1)
    assert replication_seed(7, 0) == replication_seed(7, 0)


def test_small_experiment(small_grid):
    scn = make_scenario(1, small_grid, n=6, seed=4)
    args = (scn, 2, AlignConfig(max_iter=3, tol=1e-3), PpdConfig(lambda_grid=(0.0, 0.05, 0.1)),
            FitConfig(K=4, restarts=1, max_evals=500))
    report = run_experiment(*args, kappa_grid=(0.0, 1.0))
    frame = report.to_frame()
    assert len(frame) == 2
    assert report.m_true == 2
    rmse_columns = [c for c in frame.columns if c.startswith("rmse_")]
    assert set(rmse_columns) == {"rmse_ginf", "rmse_g0", "rmse_gl2_kappa_0", "rmse_gl2_kappa_1", "rmse_ghat"}
    assert (frame[rmse_columns] >= 0).all().all()
    assert (frame["objective_final"] <= frame["objective_init"]).all()
    assert all(k.startswith("seconds_") for k in report.to_frame(timings=True).columns if k not in frame.columns)
    summary = report.summary()
    assert summary["replications"] == 2 and "median_rmse_ghat" in summary
    again = run_experiment(*args, kappa_grid=(0.0, 1.0))
    assert again.to_frame().equals(frame)


@pytest.mark.slow
@pytest.mark.parametrize("scenario", SCENARIOS[:4])
def test_estimator_ordering(scenario):
    scn = make_scenario(scenario, Grid(100), n=50, seed=21)
    report = run_experiment(scn, 5, AlignConfig(n_jobs=-1), PpdConfig(), FitConfig())
    frame = report.to_frame()
    assert (frame["objective_final"] <= frame["objective_init"]).all()
    assert (frame["m"] >= 1).all()


def test_l2_baseline_uses_configured_settings(small_grid, monkeypatch):
    seen = []

    def record(data, cfg):
        seen.append(cfg)
        raise DataError("stop after the first L2 alignment")

    monkeypatch.setattr(simulate_module, "penalized_l2_align", record)
    scn = make_scenario(1, small_grid, n=4, seed=1)
    l2cfg = L2Config(kappa=9.0, dp_max_step=3, max_iter=2, tol=0.5)
    record_ = run_replication(scn, AlignConfig(max_iter=2), PpdConfig(), FitConfig(), (0.0, 1.0), 0, l2cfg=l2cfg)
    assert record_.error == "stop after the first L2 alignment"
    assert (seen[0].kappa, seen[0].dp_max_step, seen[0].max_iter, seen[0].tol) == (0.0, 3, 2, 0.5)
