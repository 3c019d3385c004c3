import numpy as np
import pytest

from conftest import copies
from peakshape.align import AlignConfig, L2Config
from peakshape.core import FunctionSample, FunctionSet, Grid
from peakshape.errors import ConfigError, DataError
from peakshape.ppd import (
    PeakObservation,
    PpdConfig,
    _diagram,
    build_l2_ppd,
    build_ppd,
    default_lambda_grid,
    find_internal_peaks,
    observe_peaks,
    peak_counts,
    peak_strength,
    ppd_barchart,
    ppd_surface,
    track_peaks,
)
from peakshape.simulate import NoiseModel, generate, make_scenario, scenario_signal


def bumps(grid, centers, heights, width=0.06):
    t = grid.points
    return FunctionSample(grid, sum(h * np.exp(-((t - c) ** 2) / (2 * width**2)) for c, h in zip(centers, heights)))


def obs(lam, location, significant=True):
    return PeakObservation(lam, 0, location, 1.0, 1.0 if significant else 0.0, significant)


def test_default_lambda_grid():
    lam = default_lambda_grid()
    assert len(lam) == 41
    assert lam[0] == 0.0 and lam[-1] == pytest.approx(0.2)


@pytest.mark.parametrize("lambdas", [(), (0.1, 0.2), (0.0, 0.1, 0.1)])
def test_lambda_grid_validation(lambdas):
    with pytest.raises(ConfigError):
        PpdConfig(lambda_grid=lambdas)


def test_measure_weights_cover_the_grid():
    cfg = PpdConfig(lambda_grid=(0.0, 0.1, 0.3))
    w = cfg.measure_weights()
    np.testing.assert_allclose(w, [0.05, 0.15, 0.1])
    assert w.sum() == pytest.approx(0.3)


def test_find_peaks_and_strength(grid, bimodal):
    peaks = find_internal_peaks(bimodal)
    assert [round(loc, 1) for _, loc, _ in peaks] == [0.3, 0.7]
    strengths = [peak_strength(bimodal, i) for i, _, _ in peaks]
    assert all(s > 0.03 for s in strengths)
    assert strengths[0] > strengths[1]


def test_flat_function_has_no_peaks(grid):
    assert find_internal_peaks(FunctionSample(grid, np.ones(grid.num_points))) == []
    assert peak_strength(FunctionSample(grid, grid.points), 50) == 0.0


def test_peak_detection_needs_five_points():
    with pytest.raises(DataError):
        find_internal_peaks(FunctionSample(Grid(4), [0.0, 1.0, 0.5, 0.0]))


def test_tracking_follows_moving_peaks():
    lambdas = [0.0, 0.1, 0.2]
    observations = [
        [obs(0.0, 0.30), obs(0.0, 0.70)],
        [obs(0.1, 0.32), obs(0.1, 0.69)],
        [obs(0.2, 0.34)],
    ]
    tracks = track_peaks(observations, radius=0.05)
    assert len(tracks) == 2
    assert [o.location for _, o in tracks[0]] == [0.30, 0.32, 0.34]
    assert [li for li, _ in tracks[1]] == [0, 1]
    assert lambdas[tracks[0][-1][0]] == 0.2


def test_merging_peaks_end_the_farther_track():
    observations = [[obs(0.0, 0.48), obs(0.0, 0.53)], [obs(0.1, 0.50)]]
    tracks = track_peaks(observations, radius=0.05)
    assert len(tracks) == 2
    assert len(tracks[0]) == 2 and len(tracks[1]) == 1


def test_dormant_track_revives():
    observations = [[obs(0.0, 0.5)], [], [obs(0.2, 0.51)]]
    tracks = track_peaks(observations, radius=0.05)
    assert len(tracks) == 1
    assert [li for li, _ in tracks[0]] == [0, 2]


def test_diagram_selects_persistent_peaks(grid):
    cfg = PpdConfig(lambda_grid=(0.0, 0.05, 0.1, 0.15, 0.2))
    three = bumps(grid, [0.25, 0.5, 0.75], [1.0, 0.3, 1.0])
    two = bumps(grid, [0.25, 0.75], [1.0, 1.0])
    means = [(0.0, three), (0.05, two), (0.1, two), (0.15, two), (0.2, two)]
    ppd = _diagram(means, cfg)
    assert ppd.m == 2
    assert ppd.lambda_star == 0.05
    assert not ppd.flagged
    assert ppd.significant_counts == (3, 2, 2, 2, 2)
    assert [tr.label for tr in ppd.tracks] == [1, 2, 3]
    assert ppd.tracks[1].persistence == pytest.approx(0.025)


def test_barchart_intervals_sum_to_persistence(grid):
    cfg = PpdConfig(lambda_grid=(0.0, 0.05, 0.1))
    g = bumps(grid, [0.3, 0.7], [1.0, 0.8])
    ppd = _diagram([(lam, g) for lam in cfg.lambda_grid], cfg)
    for row in ppd_barchart(ppd):
        assert sum(b - a for a, b in row.intervals) == pytest.approx(row.persistence)
        assert row.persistent


def test_fallback_lambda_star_is_flagged(grid):
    cfg = PpdConfig(lambda_grid=(0.0, 0.1, 0.2), theta=0.1)
    one = bumps(grid, [0.3], [1.0])
    other = bumps(grid, [0.7], [1.0])
    ppd = _diagram([(0.0, one), (0.1, one), (0.2, other)], cfg)
    assert ppd.m == 2
    assert ppd.flagged
    assert ppd.lambda_star == 0.0


def test_noiseless_bimodal_set(bimodal, short_ppd):
    ppd = build_ppd(copies(bimodal, 4), AlignConfig(), short_ppd)
    assert ppd.m == 2
    assert ppd.lambda_star == 0.0
    assert ppd.alignment_star.lam == 0.0
    assert peak_counts(ppd) == (2, 2)
    surface = ppd_surface(ppd)
    assert surface.values.shape == (len(short_ppd.lambda_grid), 100)
    assert set(surface.tracks) == set(ppd.persistent_labels)


def test_single_function_rejected(bimodal, short_ppd):
    with pytest.raises(DataError):
        build_ppd(copies(bimodal, 1), AlignConfig(), short_ppd)


def test_ppd_on_noisy_data_and_l2_variant(small_scenario, short_ppd):
    _, data, _ = small_scenario
    ppd = build_ppd(data, AlignConfig(max_iter=4, tol=1e-3), short_ppd)
    assert ppd.lambda_star in short_ppd.lambda_grid
    assert len(ppd.alignments) == len(short_ppd.lambda_grid)
    assert ppd.m >= 1
    l2 = build_l2_ppd(data, L2Config(max_iter=4, tol=1e-3), PpdConfig(lambda_grid=(0.0, 0.1, 1.0)))
    assert l2.m >= 1


def test_ppd_is_independent_of_n_jobs(small_scenario, short_ppd):
    _, data, _ = small_scenario
    serial = build_ppd(data, AlignConfig(max_iter=3, tol=1e-3), short_ppd)
    parallel = build_ppd(data, AlignConfig(max_iter=3, tol=1e-3, n_jobs=2), short_ppd)
    assert (serial.m, serial.lambda_star) == (parallel.m, parallel.lambda_star)
    for (_, a), (_, b) in zip(serial.means, parallel.means):
        np.testing.assert_array_equal(a.values, b.values)


@pytest.mark.slow
@pytest.mark.parametrize("scenario,m_true", [("1", 2), ("2", 2), ("3", 2), ("4", 1)])
def test_ppd_recovers_peak_count(scenario, m_true):
    hits = 0
    for rep in range(5):
        data, _ = generate(make_scenario(scenario, Grid(100), n=50, seed=100 + rep))
        hits += build_ppd(data, AlignConfig(n_jobs=-1), PpdConfig()).m == m_true
    assert hits >= 4


def test_observe_peaks_marks_significance(grid):
    g = bumps(grid, [0.3, 0.7], [1.0, 0.01], width=0.1)
    flags = [o.significant for o in observe_peaks(g, 0.0, tau=0.03)]
    assert flags == [True, False]


def affine(data, a, b):
    return FunctionSet(data.grid, tuple(FunctionSample(data.grid, a * f.values + b) for f in data))


def test_offset_leaves_selection_unchanged(small_scenario, short_ppd):
    _, data, _ = small_scenario
    acfg = AlignConfig(max_iter=3, tol=1e-3)
    base = build_ppd(data, acfg, short_ppd)
    moved = build_ppd(affine(data, 1.0, 5.0), acfg, short_ppd)
    assert (moved.m, moved.lambda_star) == (base.m, base.lambda_star)


def test_peak_count_survives_positive_scaling(short_ppd):
    warped_only = NoiseModel(sigma_a=0.0, sigma_eps=0.0, eps_smoothness=0, warp_strength=0.3)
    data, _ = generate(make_scenario(1, Grid(40), n=6, seed=2, noise=warped_only))
    acfg = AlignConfig(max_iter=3, tol=1e-3)
    assert build_ppd(affine(data, 2.5, -1.0), acfg, short_ppd).m == build_ppd(data, acfg, short_ppd).m
