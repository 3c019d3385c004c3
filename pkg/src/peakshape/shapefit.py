"""Shape-constrained refinement of the aligned mean.

The estimate is f_s o gamma: f_s is the monotone piecewise-cubic curve through
the template's extrema at heights s, and gamma moves those extrema in time.
Heights are kept feasible (every min-type extremum below its max-type
neighbours) by optimizing peak heights directly and valleys as a log-gap below
their lower neighbour. gamma is coordinatized by Fourier coefficients of the
inverse exponential map of sqrt(gamma') at the identity.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize
from scipy.signal import find_peaks

from .config import (
    BASIS_SIZE,
    FTOL,
    GTOL,
    MAX_EVALS,
    MIN_HEIGHT_GAP,
    NORM_CLAMP_MARGIN,
    RESTART_JITTER,
    RESTARTS,
    RHO,
    SEED,
)
from .core import (
    FunctionSample,
    FunctionSet,
    Grid,
    Warping,
    derivative,
    identity_warping,
    l2_norm,
    second_derivative,
)
from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)


class ExtremumKind(str, enum.Enum):
    PEAK = "peak"
    VALLEY = "valley"
    ENDPOINT_MIN = "endpoint-min"
    ENDPOINT_MAX = "endpoint-max"

    @property
    def is_max(self) -> bool:
        return self in (ExtremumKind.PEAK, ExtremumKind.ENDPOINT_MAX)

    @property
    def is_endpoint(self) -> bool:
        return self in (ExtremumKind.ENDPOINT_MIN, ExtremumKind.ENDPOINT_MAX)


@dataclass(frozen=True)
class Extremum:
    kind: ExtremumKind
    location: float
    height: float
    index: int = -1
    strength: float = float("inf")


@dataclass(frozen=True)
class ShapeTemplate:
    extrema: Tuple[Extremum, ...]

    def __post_init__(self):
        ext = tuple(self.extrema)
        if len(ext) < 2:
            raise DataError("a template needs at least the two endpoints")
        locs = [e.location for e in ext]
        if locs[0] != 0.0 or locs[-1] != 1.0:
            raise DataError("template must start at 0 and end at 1")
        if any(b <= a for a, b in zip(locs[:-1], locs[1:])):
            raise DataError("template locations must be strictly increasing")
        if not (ext[0].kind.is_endpoint and ext[-1].kind.is_endpoint):
            raise DataError("template must begin and end with endpoints")
        if any(e.kind.is_endpoint for e in ext[1:-1]):
            raise DataError("interior extrema cannot be endpoints")
        if any(a.kind.is_max == b.kind.is_max for a, b in zip(ext[:-1], ext[1:])):
            raise DataError("template extrema must alternate between max and min")
        object.__setattr__(self, "extrema", ext)

    @property
    def M(self) -> int:
        return len(self.extrema)

    @property
    def m(self) -> int:
        return sum(e.kind is ExtremumKind.PEAK for e in self.extrema)

    @property
    def locations(self) -> np.ndarray:
        return np.array([e.location for e in self.extrema])

    @property
    def heights(self) -> np.ndarray:
        return np.array([e.height for e in self.extrema])

    @property
    def max_mask(self) -> np.ndarray:
        return np.array([e.kind.is_max for e in self.extrema])

    def with_heights(self, s: Sequence[float]) -> "ShapeTemplate":
        return ShapeTemplate(tuple(replace(e, height=float(h)) for e, h in zip(self.extrema, s)))


@dataclass(frozen=True, eq=False)
class HeightVector:
    s: np.ndarray

    def is_feasible(self, tpl: ShapeTemplate) -> bool:
        return heights_feasible(tpl, self.s)


@dataclass(frozen=True, eq=False)
class WarpCoefficients:
    c: np.ndarray

    @property
    def K(self) -> int:
        return len(self.c)


@dataclass(frozen=True)
class FitConfig:
    rho: float = RHO
    K: int = BASIS_SIZE
    max_evals: int = MAX_EVALS
    ftol: float = FTOL
    gtol: float = GTOL
    restarts: int = RESTARTS
    jitter: float = RESTART_JITTER
    seed: int = SEED

    def __post_init__(self):
        if not np.isfinite(self.rho) or self.rho < 0:
            raise ConfigError("rho must be >= 0")
        if self.K < 1:
            raise ConfigError("basis size K must be >= 1")
        if self.max_evals < 1 or self.restarts < 1:
            raise ConfigError("max_evals and restarts must be >= 1")
        if self.ftol <= 0 or self.gtol <= 0 or self.jitter < 0:
            raise ConfigError("invalid optimizer tolerances")


@dataclass(frozen=True, eq=False)
class FitResult:
    estimate: FunctionSample
    template: ShapeTemplate
    heights: np.ndarray
    warping: Warping
    coefficients: WarpCoefficients
    objective_init: float
    objective_final: float
    converged: bool
    failed: bool
    evaluations: int


# ===================== TEMPLATES =====================

def heights_feasible(tpl: ShapeTemplate, s: Sequence[float]) -> bool:
    s = np.asarray(s, dtype=float)
    if len(s) != tpl.M or not np.all(np.isfinite(s)):
        return False
    is_max = tpl.max_mask
    for i in range(tpl.M - 1):
        hi, lo = (s[i], s[i + 1]) if is_max[i] else (s[i + 1], s[i])
        if not hi > lo:
            return False
    return True


def _endpoint_kind(value: float, neighbour: Optional[Extremum], other_end: float) -> ExtremumKind:
    ref = neighbour.height if neighbour is not None else other_end
    if neighbour is None:
        return ExtremumKind.ENDPOINT_MIN if value <= ref else ExtremumKind.ENDPOINT_MAX
    return ExtremumKind.ENDPOINT_MIN if value < ref else ExtremumKind.ENDPOINT_MAX


def _flip_endpoint(e: Extremum) -> Extremum:
    kind = ExtremumKind.ENDPOINT_MAX if e.kind is ExtremumKind.ENDPOINT_MIN else ExtremumKind.ENDPOINT_MIN
    return replace(e, kind=kind)


def _less_extreme(a: Extremum, b: Extremum) -> int:
    """0 or 1: which of two same-type extrema to drop. Endpoints are never dropped."""
    if a.kind.is_endpoint:
        return 1
    if b.kind.is_endpoint:
        return 0
    if a.height == b.height:
        return 0 if a.strength < b.strength else 1
    if a.kind.is_max:
        return 0 if a.height < b.height else 1
    return 0 if a.height > b.height else 1


def _enforce_alternation(ext: List[Extremum], v: np.ndarray, t: np.ndarray) -> List[Extremum]:
    for _ in range(4 * len(v)):
        for i in range(len(ext) - 1):
            a, b = ext[i], ext[i + 1]
            if a.kind.is_max == b.kind.is_max:
                if a.kind.is_max and b.index - a.index > 1:
                    j = a.index + 1 + int(np.argmin(v[a.index + 1:b.index]))
                    if v[j] < min(a.height, b.height):
                        ext.insert(i + 1, Extremum(ExtremumKind.VALLEY, float(t[j]), float(v[j]), j, 0.0))
                        break
                if a.kind.is_endpoint and b.kind.is_endpoint:
                    hi_idx, lo_idx = (i, i + 1) if a.height > b.height else (i + 1, i)
                    flip = lo_idx if a.kind.is_max else hi_idx
                    ext[flip] = _flip_endpoint(ext[flip])
                    break
                del ext[i + _less_extreme(a, b)]
                break
            hi, lo = (a, b) if a.kind.is_max else (b, a)
            if hi.height <= lo.height and not (a.kind.is_endpoint and b.kind.is_endpoint):
                if a.kind.is_endpoint:
                    del ext[i + 1]
                elif b.kind.is_endpoint:
                    del ext[i]
                else:
                    del ext[i if a.strength < b.strength else i + 1]
                break
        else:
            return ext
    raise DataError("could not build an alternating extrema template")


def extract_template(g: FunctionSample, min_strength: Optional[float] = None,
                     max_peaks: Optional[int] = None) -> ShapeTemplate:
    """Ordered extrema of g, endpoints included.

    Interior extrema weaker than min_strength (normalized curvature) are
    ignored, and at most max_peaks of the strongest peaks are kept. Adjacent
    extrema of the same type are resolved by keeping the more extreme one.
    """
    v, t = g.values, g.grid.points
    if len(v) < 3:
        raise DataError("template extraction needs at least 3 grid points")
    g2 = second_derivative(g)
    norm = l2_norm(g2, g.grid)
    curvature = g2 / norm if norm > 0 else np.zeros_like(g2)

    peaks = [(int(i), float(-curvature[i])) for i in find_peaks(v)[0]]
    valleys = [(int(i), float(curvature[i])) for i in find_peaks(-v)[0]]
    if min_strength is not None:
        peaks = [p for p in peaks if p[1] > min_strength]
        valleys = [p for p in valleys if p[1] > min_strength]
    if max_peaks is not None and len(peaks) > max_peaks:
        peaks = sorted(sorted(peaks, key=lambda p: (-p[1], p[0]))[:max_peaks])

    interior = sorted(
        [Extremum(ExtremumKind.PEAK, float(t[i]), float(v[i]), i, s) for i, s in peaks]
        + [Extremum(ExtremumKind.VALLEY, float(t[i]), float(v[i]), i, s) for i, s in valleys],
        key=lambda e: e.index,
    )
    first = interior[0] if interior else None
    last = interior[-1] if interior else None
    start = Extremum(_endpoint_kind(v[0], first, v[-1]), 0.0, float(v[0]), 0)
    end_kind = _endpoint_kind(v[-1], last, v[0])
    if last is None:
        end_kind = ExtremumKind.ENDPOINT_MAX if start.kind is ExtremumKind.ENDPOINT_MIN else ExtremumKind.ENDPOINT_MIN
    end = Extremum(end_kind, 1.0, float(v[-1]), len(v) - 1)
    return ShapeTemplate(tuple(_enforce_alternation([start, *interior, end], v, t)))


def shape_curve(tpl: ShapeTemplate, s: Optional[Sequence[float]] = None) -> PchipInterpolator:
    heights = tpl.heights if s is None else np.asarray(s, dtype=float)
    return PchipInterpolator(tpl.locations, heights, extrapolate=True)


def initial_estimate(tpl: ShapeTemplate, grid: Grid) -> FunctionSample:
    """Monotone cubic interpolation through the template's extrema."""
    flat = tpl.M == 2 and tpl.heights[0] == tpl.heights[1]
    if not flat and not heights_feasible(tpl, tpl.heights):
        raise DataError("template heights violate the max/min ordering")
    return FunctionSample(grid, shape_curve(tpl)(grid.points))


# ===================== WARPING COORDINATES =====================

def fourier_basis(grid: Grid, K: int) -> np.ndarray:
    """K x T orthonormal basis of the functions orthogonal to 1: sqrt2 sin, sqrt2 cos, ..."""
    t = grid.points
    rows = []
    for r in range(K):
        freq = 2.0 * np.pi * (r // 2 + 1)
        rows.append(np.sqrt(2.0) * (np.sin(freq * t) if r % 2 == 0 else np.cos(freq * t)))
    return np.vstack(rows)


def tangent_to_warping(v: np.ndarray, grid: Grid, max_norm: float = np.pi - NORM_CLAMP_MARGIN) -> Warping:
    """Exponential map at psi = 1, then gamma = int psi^2 normalized to gamma(1) = 1."""
    nv = l2_norm(v, grid)
    if nv == 0.0:
        return identity_warping(grid)
    if nv > max_norm:
        v = v * (max_norm / nv)
        nv = max_norm
    psi = np.cos(nv) + np.sin(nv) * v / nv
    gam = cumulative_trapezoid(psi**2, dx=grid.h, initial=0.0)
    gam = gam / gam[-1]
    gam[-1] = 1.0
    return Warping(grid, np.maximum.accumulate(gam))


def decode_warping(c: WarpCoefficients, grid: Grid) -> Warping:
    return tangent_to_warping(c.c @ fourier_basis(grid, c.K), grid)


def encode_warping(gamma: Warping, K: int = BASIS_SIZE) -> WarpCoefficients:
    """Project the inverse exponential map of sqrt(gamma') onto the first K basis functions."""
    if gamma.is_identity:
        return WarpCoefficients(np.zeros(K))
    grid = gamma.grid
    dgam = derivative(gamma)
    if np.any(dgam < -1e-9):
        raise DataError("warping has a negative slope")
    psi = np.sqrt(np.clip(dgam, 0.0, None))
    psi = psi / l2_norm(psi, grid)
    theta = float(np.arccos(np.clip(trapezoid(psi, dx=grid.h), -1.0, 1.0)))
    if theta < 1e-12:
        return WarpCoefficients(np.zeros(K))
    v = theta / np.sin(theta) * (psi - np.cos(theta))
    return WarpCoefficients(trapezoid(fourier_basis(grid, K) * v, dx=grid.h, axis=1))


# ===================== OBJECTIVE =====================

_Z_CLIP = 50.0


def heights_to_params(tpl: ShapeTemplate, s: Sequence[float]) -> np.ndarray:
    """Free max-type heights followed by log-gaps of the min-type heights."""
    s = np.asarray(s, dtype=float)
    is_max = tpl.max_mask
    out = list(s[is_max])
    for i in np.flatnonzero(~is_max):
        neigh = [s[j] for j in (i - 1, i + 1) if 0 <= j < tpl.M]
        out.append(np.log(max(min(neigh) - s[i], MIN_HEIGHT_GAP)))
    return np.array(out)


def params_to_heights(tpl: ShapeTemplate, u: Sequence[float]) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    is_max = tpl.max_mask
    n_max = int(is_max.sum())
    s = np.empty(tpl.M)
    s[is_max] = u[:n_max]
    for z, i in zip(u[n_max:], np.flatnonzero(~is_max)):
        neigh = [s[j] for j in (i - 1, i + 1) if 0 <= j < tpl.M]
        s[i] = min(neigh) - np.exp(np.clip(z, -_Z_CLIP, _Z_CLIP))
    return s


def _composed(tpl: ShapeTemplate, s: np.ndarray, gamma: Warping) -> np.ndarray:
    return shape_curve(tpl, s)(gamma.values)


def _objective_values(curve: np.ndarray, data: np.ndarray, grid: Grid, rho: float) -> float:
    data_term = trapezoid((data - curve[None, :]) ** 2, dx=grid.h, axis=1).sum()
    if rho == 0.0:
        return float(data_term)
    g2 = second_derivative(FunctionSample(grid, curve))
    return float(data_term + rho * trapezoid(g2**2, dx=grid.h))


def objective(c: WarpCoefficients, s: HeightVector, tpl: ShapeTemplate, data: FunctionSet, cfg: FitConfig) -> float:
    """Summed squared distance of f_s o gamma to the aligned data plus rho * roughness."""
    if not heights_feasible(tpl, s.s):
        raise DataError("height vector is outside the feasible set")
    gamma = decode_warping(c, data.grid)
    return _objective_values(_composed(tpl, s.s, gamma), data.matrix, data.grid, cfg.rho)


def smoothness(g: FunctionSample) -> float:
    return float(trapezoid(second_derivative(g) ** 2, dx=g.grid.h))


# ===================== FIT =====================

def fit(data_aligned: FunctionSet, g_init: FunctionSample, cfg: FitConfig,
        template: Optional[ShapeTemplate] = None) -> FitResult:
    """Minimize the objective over (gamma, s) from gamma = identity and the template heights.

    Restarts after the first begin from jittered copies of the start point; the
    best iterate wins, and the start point itself is returned if nothing beats
    it, so the final objective never exceeds the initial one.
    """
    grid = data_aligned.grid
    if g_init.grid != grid:
        raise DataError("initial estimate and data live on different grids")
    tpl = template if template is not None else extract_template(g_init)
    basis = fourier_basis(grid, cfg.K)
    data = data_aligned.matrix
    K = cfg.K

    def unpack(x):
        v = x[:K] @ basis
        return tangent_to_warping(v, grid), params_to_heights(tpl, x[K:])

    def f(x):
        gamma, s = unpack(x)
        return _objective_values(_composed(tpl, s, gamma), data, grid, cfg.rho)

    u0 = heights_to_params(tpl, tpl.heights)
    x0 = np.concatenate([np.zeros(K), u0])
    f0 = f(x0)
    span = float(np.ptp(tpl.heights)) or 1.0
    n_max = int(tpl.max_mask.sum())
    scales = np.concatenate([np.ones(K), np.full(n_max, span), np.ones(len(u0) - n_max)])

    rng = np.random.default_rng(cfg.seed)
    best_f, best_x = f0, x0
    succeeded, evaluations = False, 1
    for r in range(cfg.restarts):
        start = x0 if r == 0 else x0 + cfg.jitter * scales * rng.standard_normal(len(x0))
        res = minimize(f, start, method="L-BFGS-B",
                       options={"maxfun": cfg.max_evals, "ftol": cfg.ftol, "gtol": cfg.gtol})
        evaluations += int(res.nfev)
        succeeded = succeeded or bool(res.success)
        if np.isfinite(res.fun) and res.fun < best_f:
            best_f, best_x = float(res.fun), res.x
        logger.debug("restart %d: objective %.6g (%s)", r, res.fun, res.message)

    gamma, s = unpack(best_x)
    failed = not succeeded and best_f >= f0
    if failed:
        logger.warning("✗ shape fit made no progress after %d restarts", cfg.restarts)
    return FitResult(
        estimate=FunctionSample(grid, _composed(tpl, s, gamma)),
        template=tpl.with_heights(s),
        heights=s,
        warping=gamma,
        coefficients=WarpCoefficients(best_x[:K].copy()),
        objective_init=float(f0),
        objective_final=float(best_f),
        converged=succeeded,
        failed=failed,
        evaluations=evaluations,
    )
