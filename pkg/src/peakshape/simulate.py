"""Synthetic data f_i = a_i (g o gamma_i) + eps_i and the estimator comparison harness."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .align import AlignConfig, L2Config, cross_sectional_mean, multiple_align, penalized_l2_align
from .config import (
    EPS_MODES,
    KAPPA_GRID,
    N_JOBS,
    SAMPLES,
    SIGMA_A,
    SIGMA_EPS_RATIO,
    WARP_MODES,
    WARP_STRENGTH,
)
from .core import FunctionSample, FunctionSet, Grid, Warping, warp_function
from .errors import ConfigError, DataError, PeakShapeError
from .parallel import parallel_map
from .pipeline import estimate_shape
from .ppd import PpdConfig, build_ppd, find_internal_peaks, peak_counts
from .shapefit import FitConfig, extract_template, fourier_basis, tangent_to_warping

logger = logging.getLogger(__name__)

SCENARIOS = ("1", "2", "3", "4", "mixture-A", "mixture-B")
MIXTURE_FRACTION = 0.2


@dataclass(frozen=True)
class NoiseModel:
    sigma_a: float = SIGMA_A
    sigma_eps: float = SIGMA_EPS_RATIO
    eps_smoothness: int = EPS_MODES
    warp_strength: float = WARP_STRENGTH

    def __post_init__(self):
        if min(self.sigma_a, self.sigma_eps, self.warp_strength) < 0 or self.eps_smoothness < 0:
            raise ConfigError("noise parameters must be non-negative")


NO_NOISE = NoiseModel(0.0, 0.0, 0, 0.0)


def default_noise(g: FunctionSample) -> NoiseModel:
    return NoiseModel(sigma_eps=SIGMA_EPS_RATIO * float(np.ptp(g.values)))


@dataclass(frozen=True, eq=False)
class Scenario:
    id: str
    g_true: FunctionSample
    n: int = SAMPLES
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0
    contaminant: Optional[FunctionSample] = None
    contaminant_count: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("a scenario needs n >= 1")
        if not 0 <= self.contaminant_count <= self.n:
            raise ConfigError("contaminant count must lie in 0..n")


# ===================== SIGNALS =====================

def _gauss(t, c, w):
    return np.exp(-((t - c) ** 2) / (2.0 * w**2))


def _raised_cosine(t, c, w):
    return np.where(np.abs(t - c) < w, 0.5 * (1.0 + np.cos(np.pi * (t - c) / w)), 0.0)


def _bimodal(t):
    return _gauss(t, 0.3, 0.07) + 0.8 * _gauss(t, 0.7, 0.07)


def _trimodal(t):
    return _gauss(t, 0.2, 0.06) + 0.9 * _gauss(t, 0.5, 0.06) + _gauss(t, 0.8, 0.06)


_SIGNALS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    # two Gaussian bumps of unequal height
    "1": _bimodal,
    # two-tooth sawtooth: slow rise, fast drop
    "2": lambda t: np.interp(t, [0.0, 0.4, 0.5, 0.9, 1.0], [0.0, 1.0, 0.1, 1.0, 0.1]),
    # two narrow bumps separated by an exactly flat stretch
    "3": lambda t: _raised_cosine(t, 0.15, 0.12) + _raised_cosine(t, 0.85, 0.12),
    # one broad bump
    "4": lambda t: _gauss(t, 0.5, 0.2),
    "mixture-A": _bimodal,
    "mixture-B": _trimodal,
}
_CONTAMINANTS = {"mixture-A": _trimodal, "mixture-B": _bimodal}


def scenario_signal(scenario_id, grid: Grid) -> FunctionSample:
    key = str(scenario_id)
    if key not in _SIGNALS:
        raise ConfigError(f"unknown scenario {scenario_id!r}; choose from {', '.join(SCENARIOS)}")
    return FunctionSample(grid, _SIGNALS[key](grid.points))


def make_scenario(scenario_id, grid: Grid, n: int = SAMPLES, seed: int = 0,
                  noise: Optional[NoiseModel] = None) -> Scenario:
    key = str(scenario_id)
    g = scenario_signal(key, grid)
    noise = default_noise(g) if noise is None else noise
    if key in _CONTAMINANTS:
        count = int(round(MIXTURE_FRACTION * n))
        return Scenario(key, g, n, noise, seed, FunctionSample(grid, _CONTAMINANTS[key](grid.points)), count)
    return Scenario(key, g, n, noise, seed)


# ===================== GENERATORS =====================

def random_warping(strength: float, rng: np.random.Generator, grid: Grid, modes: int = WARP_MODES) -> Warping:
    """Tangent perturbation of the identity with paired sin/cos modes, ||v|| < pi/2.

    Pairing each frequency's sine and cosine makes E[gamma(t)] = t.
    """
    z = rng.standard_normal(modes)
    v = strength * (z @ fourier_basis(grid, modes))
    return tangent_to_warping(v, grid, max_norm=np.pi / 2.0 - 1e-3)


def _scaling(sigma_a: float, rng: np.random.Generator) -> float:
    while True:
        a = 1.0 + sigma_a * rng.standard_normal()
        if a > 0.0:
            return a


def _additive_noise(noise: NoiseModel, rng: np.random.Generator, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    for j in range(1, noise.eps_smoothness + 1):
        z_sin, z_cos = rng.standard_normal(2)
        out += (z_sin / j) * np.sin(j * np.pi * t) + (z_cos / j) * np.cos(j * np.pi * t)
    return noise.sigma_eps * out


def generate(scn: Scenario) -> Tuple[FunctionSet, FunctionSample]:
    """Draw scn.n functions; the last contaminant_count come from the contaminant signal."""
    rng = np.random.default_rng(scn.seed)
    grid = scn.g_true.grid
    functions = []
    for i in range(scn.n):
        g = scn.contaminant if i >= scn.n - scn.contaminant_count else scn.g_true
        a = _scaling(scn.noise.sigma_a, rng)
        gamma = random_warping(scn.noise.warp_strength, rng, grid)
        eps = _additive_noise(scn.noise, rng, grid.points)
        functions.append(FunctionSample(grid, a * warp_function(g, gamma).values + eps))
    return FunctionSet(grid, tuple(functions)), scn.g_true


def rmse(a: FunctionSample, b: FunctionSample) -> float:
    if a.grid != b.grid:
        raise DataError("rmse: grid mismatch")
    return float(np.sqrt(np.mean((a.values - b.values) ** 2)))


# ===================== EXPERIMENTS =====================

@dataclass(frozen=True)
class ReplicationRecord:
    rep: int
    seed: int
    rmse_inf: float = float("nan")
    rmse_zero: float = float("nan")
    rmse_l2: Tuple[Tuple[float, float], ...] = ()
    rmse_hat: float = float("nan")
    m: int = -1
    lambda_star: float = float("nan")
    peaks_all: int = -1
    peaks_significant: int = -1
    ppd_flagged: bool = False
    template_m: int = -1
    objective_init: float = float("nan")
    objective_final: float = float("nan")
    timings: Tuple[Tuple[str, float], ...] = ()
    error: str = ""


@dataclass(frozen=True)
class ExperimentReport:
    scenario: str
    m_true: int
    kappa_grid: Tuple[float, ...]
    records: Tuple[ReplicationRecord, ...]

    def to_frame(self, timings: bool = False) -> pd.DataFrame:
        rows = []
        for r in self.records:
            row = {
                "rep": r.rep,
                "seed": r.seed,
                "rmse_ginf": r.rmse_inf,
                "rmse_g0": r.rmse_zero,
            }
            l2 = dict(r.rmse_l2)
            for kappa in self.kappa_grid:
                row[f"rmse_gl2_kappa_{kappa:g}"] = l2.get(kappa, float("nan"))
            row.update({
                "rmse_ghat": r.rmse_hat,
                "m": r.m,
                "lambda_star": r.lambda_star,
                "n_peaks": r.peaks_all,
                "n_significant": r.peaks_significant,
                "ppd_flagged": r.ppd_flagged,
                "template_m": r.template_m,
                "objective_init": r.objective_init,
                "objective_final": r.objective_final,
                "error": r.error,
            })
            if timings:
                row.update({f"seconds_{k}": v for k, v in r.timings})
            rows.append(row)
        return pd.DataFrame(rows)

    def summary(self) -> dict:
        ok = [r for r in self.records if not r.error]
        out = {"scenario": self.scenario, "m_true": self.m_true, "replications": len(self.records),
               "failed": len(self.records) - len(ok)}
        if not ok:
            return out
        m_values = [r.m for r in ok]
        out.update({
            "median_rmse_ginf": float(np.median([r.rmse_inf for r in ok])),
            "median_rmse_g0": float(np.median([r.rmse_zero for r in ok])),
            "median_rmse_ghat": float(np.median([r.rmse_hat for r in ok])),
            "median_rmse_gl2": {f"{k:g}": float(np.median([dict(r.rmse_l2)[k] for r in ok])) for k in self.kappa_grid},
            "modal_m": int(pd.Series(m_values).mode().min()),
            "fraction_m_correct": float(np.mean([m == self.m_true for m in m_values])),
        })
        return out


def replication_seed(seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([seed, rep]).generate_state(1)[0])


def _timed(timings: Dict[str, float], name: str, fn, *args):
    start = time.perf_counter()
    out = fn(*args)
    timings[name] = time.perf_counter() - start
    return out


def run_replication(scn: Scenario, acfg: AlignConfig, pcfg: PpdConfig, fcfg: FitConfig,
                    kappa_grid: Sequence[float], rep: int, l2cfg: Optional[L2Config] = None) -> ReplicationRecord:
    if l2cfg is None:
        l2cfg = L2Config(0.0, acfg.dp_max_step, acfg.tol, acfg.max_iter, acfg.n_jobs)
    seed = replication_seed(scn.seed, rep)
    timings: Dict[str, float] = {}
    try:
        data, g_true = generate(replace(scn, seed=seed))
        g_inf = _timed(timings, "unaligned_mean", cross_sectional_mean, data)
        g_zero = _timed(timings, "elastic_mean", multiple_align, data, acfg.with_lambda(0.0)).mean
        l2 = []
        start = time.perf_counter()
        for kappa in kappa_grid:
            res = penalized_l2_align(data, replace(l2cfg, kappa=float(kappa)))
            l2.append((float(kappa), rmse(res.mean, g_true)))
        timings["l2_alignment"] = time.perf_counter() - start
        ppd = _timed(timings, "ppd", build_ppd, data, acfg, pcfg)
        est = _timed(timings, "estimation", estimate_shape, data, acfg, pcfg, fcfg, ppd)
    except PeakShapeError as exc:
        logger.warning("✗ replication %d failed: %s", rep, exc)
        return ReplicationRecord(rep, seed, timings=tuple(timings.items()), error=str(exc))
    n_all, n_sig = peak_counts(ppd)
    return ReplicationRecord(
        rep=rep,
        seed=seed,
        rmse_inf=rmse(g_inf, g_true),
        rmse_zero=rmse(g_zero, g_true),
        rmse_l2=tuple(l2),
        rmse_hat=rmse(est.g_hat, g_true),
        m=ppd.m,
        lambda_star=ppd.lambda_star,
        peaks_all=n_all,
        peaks_significant=n_sig,
        ppd_flagged=ppd.flagged,
        template_m=extract_template(est.g_hat).m,
        objective_init=est.fit.objective_init,
        objective_final=est.fit.objective_final,
        timings=tuple(timings.items()),
    )


def run_experiment(scn: Scenario, reps: int, acfg: AlignConfig, pcfg: PpdConfig, fcfg: FitConfig,
                   kappa_grid: Sequence[float] = KAPPA_GRID, n_jobs: int = N_JOBS,
                   l2cfg: Optional[L2Config] = None) -> ExperimentReport:
    """Replicate generate -> (g_inf, g_0, g_L2 per kappa, g_hat) and score each against g_true."""
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    inner = acfg if n_jobs == 1 else acfg.with_lambda(acfg.lam, n_jobs=1)
    if l2cfg is not None and n_jobs != 1:
        l2cfg = replace(l2cfg, n_jobs=1)
    job = partial(run_replication, scn, inner, pcfg, fcfg, tuple(kappa_grid), l2cfg=l2cfg)
    records = parallel_map(job, range(reps), n_jobs=n_jobs)
    m_true = len(find_internal_peaks(scn.g_true))
    report = ExperimentReport(scn.id, m_true, tuple(float(k) for k in kappa_grid), tuple(records))
    logger.info("✓ scenario %s: %d replications", scn.id, reps)
    return report
