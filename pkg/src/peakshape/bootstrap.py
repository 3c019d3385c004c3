"""Pointwise bootstrap bands for the shape-constrained estimate.

Each replicate resamples the functions with replacement, realigns them at the
fixed lambda*, and refits from the fixed initial estimate. Replicate j draws
from a generator seeded by (seed, j), so the band does not depend on the order
replicates run in.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import partial

import numpy as np

from .align import AlignConfig, multiple_align
from .config import ALPHA, BOOTSTRAP_B, MAX_DROP_FRACTION, N_JOBS, SEED
from .core import FunctionSample, FunctionSet, Grid
from .errors import ConfigError, DataError, NumericalError, PeakShapeError
from .parallel import parallel_map
from .shapefit import FitConfig, ShapeTemplate, extract_template, fit

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = BOOTSTRAP_B
    alpha: float = ALPHA
    seed: int = SEED
    max_drop_fraction: float = MAX_DROP_FRACTION
    n_jobs: int = N_JOBS

    def __post_init__(self):
        if self.B < 2:
            raise ConfigError("bootstrap needs B >= 2")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a non-negative 64-bit integer")
        if self.B * self.alpha / 2.0 < 1.0:
            logger.warning("✗ B*alpha/2 = %.2f < 1: the band's tails rest on fewer than one replicate",
                           self.B * self.alpha / 2.0)


@dataclass(frozen=True, eq=False)
class ConfidenceBand:
    grid: Grid
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    B: int  # replicates the quantiles were taken over

    def contains(self, g: FunctionSample) -> np.ndarray:
        return (self.lower <= g.values) & (g.values <= self.upper)


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    band: ConfidenceBand
    replicates: np.ndarray  # kept replicates x T
    dropped: int


def resample_indices(n: int, seed: int, j: int) -> np.ndarray:
    return np.random.default_rng([seed, j]).integers(0, n, size=n)


def band_from_replicates(grid: Grid, replicates: np.ndarray, alpha: float) -> ConfidenceBand:
    """Pointwise alpha/2 and 1 - alpha/2 quantiles, interpolating at rank p(B - 1) + 1."""
    lower, upper = np.quantile(replicates, [alpha / 2.0, 1.0 - alpha / 2.0], axis=0, method="linear")
    return ConfidenceBand(grid, lower, upper, alpha, len(replicates))


def _replicate(data: FunctionSet, g_init: FunctionSample, template: ShapeTemplate, lambda_star: float,
               acfg: AlignConfig, fcfg: FitConfig, seed: int, j: int):
    sample = data.subset(resample_indices(data.n, seed, j))
    try:
        aligned = multiple_align(sample, acfg.with_lambda(lambda_star, n_jobs=1))
        result = fit(aligned.aligned, g_init, fcfg, template=template)
    except PeakShapeError as exc:
        logger.debug("replicate %d failed: %s", j, exc)
        return None
    if result.failed:
        return None
    return result.estimate.values


def bootstrap(data: FunctionSet, g_init: FunctionSample, lambda_star: float, acfg: AlignConfig,
              fcfg: FitConfig, bcfg: BootstrapConfig) -> BootstrapResult:
    if data.n < 2:
        raise DataError("bootstrap needs at least two functions")
    template = extract_template(g_init)
    job = partial(_replicate, data, g_init, template, lambda_star, acfg, fcfg, bcfg.seed)
    estimates = parallel_map(job, range(bcfg.B), n_jobs=bcfg.n_jobs)
    kept = [e for e in estimates if e is not None]
    dropped = bcfg.B - len(kept)
    if dropped > bcfg.max_drop_fraction * bcfg.B:
        raise NumericalError(f"{dropped} of {bcfg.B} bootstrap replicates failed")
    if dropped:
        logger.warning("✗ dropped %d of %d bootstrap replicates", dropped, bcfg.B)
    replicates = np.vstack(kept)
    logger.info("✓ bootstrap band from %d replicates", len(kept))
    return BootstrapResult(band_from_replicates(data.grid, replicates, bcfg.alpha), replicates, dropped)


def bootstrap_band(data: FunctionSet, g_init: FunctionSample, lambda_star: float, acfg: AlignConfig,
                   fcfg: FitConfig, bcfg: BootstrapConfig) -> ConfidenceBand:
    return bootstrap(data, g_init, lambda_star, acfg, fcfg, bcfg).band
