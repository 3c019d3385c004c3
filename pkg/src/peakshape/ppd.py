"""Peak-persistence diagrams.

For each lambda on a grid the data are partially aligned; the internal peaks of
the aligned mean are scored by normalized curvature, linked across adjacent
lambdas into tracks, and the tracks' persistence decides how many peaks the
unknown function has (m) and the smallest lambda that shows them (lambda*).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import find_peaks

from .align import AlignConfig, AlignmentResult, L2Config, multiple_align, penalized_l2_align
from .config import LAMBDA_MAX, LAMBDA_STEP, TAU, THETA, TRACK_RADIUS
from .core import FunctionSample, FunctionSet, l2_norm, second_derivative
from .errors import ConfigError, DataError, NumericalError
from .parallel import parallel_map

logger = logging.getLogger(__name__)


def default_lambda_grid() -> Tuple[float, ...]:
    count = int(round(LAMBDA_MAX / LAMBDA_STEP)) + 1
    return tuple(float(x) for x in np.round(np.arange(count) * LAMBDA_STEP, 12))


@dataclass(frozen=True)
class PpdConfig:
    lambda_grid: Tuple[float, ...] = field(default_factory=default_lambda_grid)
    tau: float = TAU
    theta: float = THETA
    track_radius: float = TRACK_RADIUS

    def __post_init__(self):
        grid = tuple(float(x) for x in self.lambda_grid)
        if not grid:
            raise ConfigError("lambda grid is empty")
        if grid[0] != 0.0:
            raise ConfigError("lambda grid must start at 0")
        if any(b <= a for a, b in zip(grid[:-1], grid[1:])):
            raise ConfigError("lambda grid must be strictly increasing")
        if self.tau < 0:
            raise ConfigError("tau must be >= 0")
        if not 0.0 < self.theta < 1.0:
            raise ConfigError("theta must lie in (0, 1)")
        if self.track_radius <= 0:
            raise ConfigError("track_radius must be > 0")
        object.__setattr__(self, "lambda_grid", grid)

    def measure_weights(self) -> np.ndarray:
        """Half of each adjacent grid gap is credited to a grid point."""
        lam = np.asarray(self.lambda_grid)
        if len(lam) == 1:
            return np.zeros(1)
        gaps = np.diff(lam)
        weights = np.zeros(len(lam))
        weights[:-1] += gaps / 2.0
        weights[1:] += gaps / 2.0
        return weights


@dataclass(frozen=True)
class PeakObservation:
    lam: float
    index: int
    location: float
    height: float
    strength: float
    significant: bool


@dataclass(frozen=True)
class PeakTrack:
    label: int
    observations: Tuple[PeakObservation, ...]
    persistence: float
    intervals: Tuple[Tuple[float, float], ...]


@dataclass(frozen=True, eq=False)
class PpdResult:
    config: PpdConfig
    means: Tuple[Tuple[float, FunctionSample], ...]
    tracks: Tuple[PeakTrack, ...]
    m: int
    lambda_star: float
    persistent_labels: Tuple[int, ...]
    significant_counts: Tuple[int, ...]
    flagged: bool
    alignments: Tuple[AlignmentResult, ...] = ()

    @property
    def star_index(self) -> int:
        return self.config.lambda_grid.index(self.lambda_star)

    @property
    def g_star(self) -> FunctionSample:
        return self.means[self.star_index][1]

    @property
    def alignment_star(self) -> Optional[AlignmentResult]:
        return self.alignments[self.star_index] if self.alignments else None


@dataclass(frozen=True)
class BarchartRow:
    label: int
    intervals: Tuple[Tuple[float, float], ...]
    persistence: float
    persistent: bool


@dataclass(frozen=True, eq=False)
class PpdSurface:
    lambdas: np.ndarray
    t: np.ndarray
    values: np.ndarray  # len(lambdas) x len(t)
    tracks: Dict[int, Tuple[Tuple[float, float], ...]]


# ===================== PEAKS =====================

def find_internal_peaks(g: FunctionSample) -> List[Tuple[int, float, float]]:
    """Strict interior local maxima; a flat top yields one peak at its midpoint."""
    if g.grid.num_points < 5:
        raise DataError("peak detection needs at least 5 grid points")
    idx, _ = find_peaks(g.values)
    t = g.grid.points
    return [(int(i), float(t[i]), float(g.values[i])) for i in idx]


def peak_strength(g: FunctionSample, t0_index: int) -> float:
    """-g''(t0) / ||g''||, zero for a function without curvature."""
    g2 = second_derivative(g)
    norm = l2_norm(g2, g.grid)
    if norm == 0.0:
        return 0.0
    return float(-g2[t0_index] / norm)


def observe_peaks(g: FunctionSample, lam: float, tau: float) -> List[PeakObservation]:
    out = []
    for index, location, height in find_internal_peaks(g):
        strength = peak_strength(g, index)
        out.append(PeakObservation(lam, index, location, height, strength, strength > tau))
    return out


# ===================== TRACKING =====================

def _greedy_match(track_ids, track_locs, peaks, free_peaks, radius):
    pairs = sorted(
        (abs(loc - peaks[p].location), tid, p)
        for tid, loc in zip(track_ids, track_locs)
        for p in free_peaks
    )
    used_tracks, matched = set(), {}
    for dist, tid, p in pairs:
        if dist > radius:
            break
        if tid in used_tracks or p in matched:
            continue
        used_tracks.add(tid)
        matched[p] = tid
    return matched


def track_peaks(observations: Sequence[Sequence[PeakObservation]], radius: float) -> List[List[Tuple[int, PeakObservation]]]:
    """Link per-lambda peaks into tracks by greedy nearest-location matching.

    Tracks seen at the previous lambda are matched first; leftover peaks may
    revive a dormant track within the same radius. When two peaks merge, the
    one that moved farther loses the match and its track ends. Each track is
    returned as a list of (lambda index, observation).
    """
    tracks: List[List[Tuple[int, PeakObservation]]] = []
    for li, peaks in enumerate(observations):
        free = list(range(len(peaks)))
        active = [k for k, tr in enumerate(tracks) if tr[-1][0] == li - 1]
        dormant = [k for k, tr in enumerate(tracks) if tr[-1][0] < li - 1]
        for group in (active, dormant):
            matched = _greedy_match(group, [tracks[k][-1][1].location for k in group], peaks, free, radius)
            for p, k in matched.items():
                tracks[k].append((li, peaks[p]))
            free = [p for p in free if p not in matched]
        for p in free:
            tracks.append([(li, peaks[p])])
    return tracks


def _runs(indices: Sequence[int]) -> List[Tuple[int, int]]:
    runs = []
    for i in indices:
        if runs and i == runs[-1][1] + 1:
            runs[-1] = (runs[-1][0], i)
        else:
            runs.append((i, i))
    return runs


def _significance_intervals(indices: Sequence[int], lam: np.ndarray) -> Tuple[Tuple[float, float], ...]:
    out = []
    last = len(lam) - 1
    for a, b in _runs(indices):
        begin = lam[a] if a == 0 else lam[a] - (lam[a] - lam[a - 1]) / 2.0
        end = lam[b] if b == last else lam[b] + (lam[b + 1] - lam[b]) / 2.0
        out.append((float(begin), float(end)))
    return tuple(out)


def _diagram(means, pcfg: PpdConfig, alignments=()) -> PpdResult:
    lam = np.asarray(pcfg.lambda_grid)
    weights = pcfg.measure_weights()
    observations = [observe_peaks(g, lv, pcfg.tau) for lv, g in means]
    raw = track_peaks(observations, pcfg.track_radius)
    raw = [tr for tr in raw if any(obs.significant for _, obs in tr)]
    raw.sort(key=lambda tr: (tr[0][0], tr[0][1].location))

    tracks = []
    for label, tr in enumerate(raw, start=1):
        sig = [li for li, obs in tr if obs.significant]
        tracks.append(PeakTrack(
            label=label,
            observations=tuple(obs for _, obs in tr),
            persistence=float(sum(weights[li] for li in sig)),
            intervals=_significance_intervals(sig, lam),
        ))

    counts = tuple(sum(obs.significant for obs in obs_at) for obs_at in observations)
    if tracks:
        p = np.array([tr.persistence for tr in tracks])
        p0 = p.max()
        if p0 > 0:
            persistent = tuple(tr.label for tr in tracks if tr.persistence / p0 > pcfg.theta)
        else:
            # a single-point grid gives every track zero measure; fall back to the most persistent
            persistent = (tracks[int(np.argmax(p))].label,)
    else:
        persistent = ()
    m = len(persistent)

    exact = [i for i, c in enumerate(counts) if c == m]
    flagged = not exact
    star = exact[0] if exact else int(np.argmin([abs(c - m) for c in counts]))
    if flagged:
        logger.warning("✗ no lambda shows exactly %d significant peaks; using lambda=%g", m, lam[star])
    return PpdResult(
        config=pcfg,
        means=tuple(means),
        tracks=tuple(tracks),
        m=m,
        lambda_star=float(pcfg.lambda_grid[star]),
        persistent_labels=persistent,
        significant_counts=counts,
        flagged=flagged,
        alignments=tuple(alignments),
    )


def _align_at(data: FunctionSet, acfg: AlignConfig, lam: float) -> AlignmentResult:
    return multiple_align(data, acfg.with_lambda(lam, n_jobs=1))


def _l2_align_at(data: FunctionSet, l2cfg: L2Config, kappa: float) -> AlignmentResult:
    return penalized_l2_align(data, L2Config(kappa, l2cfg.dp_max_step, l2cfg.tol, l2cfg.max_iter, 1))


def build_ppd(data: FunctionSet, acfg: AlignConfig, pcfg: PpdConfig) -> PpdResult:
    """Align at every grid lambda (in parallel) and reduce the peaks to (m, lambda*)."""
    if data.n < 2:
        raise DataError("a PPD needs at least two functions")
    if not pcfg.lambda_grid:
        raise NumericalError("empty lambda grid")
    alignments = parallel_map(partial(_align_at, data, acfg), pcfg.lambda_grid, n_jobs=acfg.n_jobs)
    means = [(float(res.lam), res.mean) for res in alignments]
    result = _diagram(means, pcfg, alignments)
    logger.info("✓ PPD over %d lambdas: m=%d, lambda*=%g", len(means), result.m, result.lambda_star)
    return result


def build_l2_ppd(data: FunctionSet, l2cfg: L2Config, pcfg: PpdConfig) -> PpdResult:
    """The same diagram over a kappa grid for the penalized-L2 means."""
    if data.n < 2:
        raise DataError("a PPD needs at least two functions")
    alignments = parallel_map(partial(_l2_align_at, data, l2cfg), pcfg.lambda_grid, n_jobs=l2cfg.n_jobs)
    means = [(float(res.lam), res.mean) for res in alignments]
    return _diagram(means, pcfg, alignments)


def peak_counts(ppd: PpdResult) -> Tuple[int, int]:
    """(all internal peaks, significant peaks) of the mean at lambda*."""
    g = ppd.g_star
    return len(find_internal_peaks(g)), ppd.significant_counts[ppd.star_index]


# ===================== DISPLAYS =====================

def ppd_barchart(ppd: PpdResult) -> List[BarchartRow]:
    persistent = set(ppd.persistent_labels)
    return [BarchartRow(tr.label, tr.intervals, tr.persistence, tr.label in persistent) for tr in ppd.tracks]


def ppd_surface(ppd: PpdResult) -> PpdSurface:
    lambdas = np.array([lv for lv, _ in ppd.means])
    values = np.vstack([g.values for _, g in ppd.means])
    t = ppd.means[0][1].grid.points.copy()
    polylines = {tr.label: tuple((obs.lam, obs.location) for obs in tr.observations) for tr in ppd.tracks}
    return PpdSurface(lambdas, t, values, polylines)
