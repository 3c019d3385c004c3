"""Grids, function samples, SRVFs and the warping group acting on them.

Every function lives on a uniform grid over I = [0, 1]. Objects are frozen and
their arrays are read-only, so they can be shared freely between workers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .config import WARP_MIN_INCREMENT
from .errors import DataError

logger = logging.getLogger(__name__)


def _frozen_array(values, length: int, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != length:
        raise DataError(f"{what}: expected {length} values, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{what}: values must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grid:
    num_points: int

    def __post_init__(self):
        if int(self.num_points) != self.num_points or self.num_points < 3:
            raise DataError(f"grid needs at least 3 points, got {self.num_points}")

    @cached_property
    def points(self) -> np.ndarray:
        t = np.linspace(0.0, 1.0, self.num_points)
        t.setflags(write=False)
        return t

    @property
    def h(self) -> float:
        return 1.0 / (self.num_points - 1)


@dataclass(frozen=True, eq=False)
class FunctionSample:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, self.grid.num_points, "function"))

    def __len__(self):
        return self.grid.num_points


@dataclass(frozen=True, eq=False)
class Srvf:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, self.grid.num_points, "srvf"))


@dataclass(frozen=True, eq=False)
class Warping:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        gam = _frozen_array(self.values, self.grid.num_points, "warping")
        if gam[0] != 0.0 or gam[-1] != 1.0:
            raise DataError(f"warping must satisfy gamma(0)=0 and gamma(1)=1, got {gam[0]!r}, {gam[-1]!r}")
        if np.any(np.diff(gam) < 0.0):
            raise DataError("warping must be non-decreasing")
        object.__setattr__(self, "values", gam)

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.values, self.grid.points))

    def slopes(self) -> np.ndarray:
        """Forward-difference slope of gamma on each grid cell."""
        return np.diff(self.values) / self.grid.h

    def flat_run(self, min_increment: float = WARP_MIN_INCREMENT) -> int:
        """Length, in cells, of the longest run with increments below min_increment."""
        flat = np.diff(self.values) < min_increment
        longest = run = 0
        for is_flat in flat:
            run = run + 1 if is_flat else 0
            longest = max(longest, run)
        return longest


@dataclass(frozen=True, eq=False)
class FunctionSet:
    grid: Grid
    functions: tuple = field(default_factory=tuple)

    def __post_init__(self):
        funcs = tuple(self.functions)
        if not funcs:
            raise DataError("a function set needs at least one function")
        for f in funcs:
            if f.grid != self.grid:
                raise DataError("all functions in a set must share the grid")
        object.__setattr__(self, "functions", funcs)

    @property
    def n(self) -> int:
        return len(self.functions)

    @cached_property
    def matrix(self) -> np.ndarray:
        m = np.vstack([f.values for f in self.functions])
        m.setflags(write=False)
        return m

    @classmethod
    def from_matrix(cls, grid: Grid, matrix) -> "FunctionSet":
        rows = np.atleast_2d(np.asarray(matrix, dtype=float))
        return cls(grid, tuple(FunctionSample(grid, row) for row in rows))

    def subset(self, indices: Iterable[int]) -> "FunctionSet":
        return FunctionSet(self.grid, tuple(self.functions[i] for i in indices))

    def __iter__(self):
        return iter(self.functions)

    def __len__(self):
        return self.n


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise DataError(f"grid mismatch: {a.grid.num_points} vs {b.grid.num_points} points")


def identity_warping(grid: Grid) -> Warping:
    return Warping(grid, grid.points)


def derivative(f: Union[FunctionSample, Srvf, Warping]) -> np.ndarray:
    """Central differences inside, second-order one-sided differences at the ends."""
    return np.gradient(f.values, f.grid.h, edge_order=2)


def second_derivative(f: FunctionSample) -> np.ndarray:
    v, h = f.values, f.grid.h
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2
    if len(v) >= 4:
        out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h**2
        out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h**2
    else:
        out[0] = out[-1] = out[1]
    return out


def to_srvf(f: FunctionSample) -> Srvf:
    df = derivative(f)
    return Srvf(f.grid, np.sign(df) * np.sqrt(np.abs(df)))


def from_srvf(q: Srvf, f0: float) -> FunctionSample:
    v = q.values
    return FunctionSample(q.grid, f0 + cumulative_trapezoid(v * np.abs(v), dx=q.grid.h, initial=0.0))


def warp_function(f: FunctionSample, gamma: Warping) -> FunctionSample:
    """f o gamma by linear interpolation of f."""
    _check_same_grid(f, gamma)
    if gamma.is_identity:
        return f
    return FunctionSample(f.grid, np.interp(gamma.values, f.grid.points, f.values))


def warp_srvf(q: Srvf, gamma: Warping) -> Srvf:
    """(q o gamma) * sqrt(gamma'), the norm-preserving action on SRVFs."""
    _check_same_grid(q, gamma)
    if gamma.is_identity:
        return q
    dgam = np.clip(derivative(gamma), 0.0, None)
    return Srvf(q.grid, np.interp(gamma.values, q.grid.points, q.values) * np.sqrt(dgam))


def compose_warpings(outer: Warping, inner: Warping) -> Warping:
    """outer o inner."""
    _check_same_grid(outer, inner)
    if inner.is_identity:
        return outer
    if outer.is_identity:
        return inner
    vals = np.interp(inner.values, outer.grid.points, outer.values)
    vals[0], vals[-1] = 0.0, 1.0
    return Warping(outer.grid, np.maximum.accumulate(vals))


def mean_warping(warpings: Sequence[Warping]) -> Warping:
    grid = warpings[0].grid
    if all(w.is_identity for w in warpings):
        return identity_warping(grid)
    vals = np.mean([w.values for w in warpings], axis=0)
    vals[0], vals[-1] = 0.0, 1.0
    return Warping(grid, np.maximum.accumulate(vals))


def invert_warping(gamma: Warping) -> Warping:
    """Pseudo-inverse of gamma sampled on its grid.

    Increments below WARP_MIN_INCREMENT are lifted to that value first, so the
    result is defined even for the flat steps dynamic programming can produce.
    """
    if gamma.is_identity:
        return gamma
    grid = gamma.grid
    flat = gamma.flat_run()
    if flat > 1:
        logger.warning("✗ warping has a flat run of %d cells; inverse is a pseudo-inverse", flat)
    steps = np.maximum(np.diff(gamma.values), WARP_MIN_INCREMENT)
    abscissa = np.concatenate([[0.0], np.cumsum(steps)])
    abscissa /= abscissa[-1]
    vals = np.interp(grid.points, abscissa, grid.points)
    vals[0], vals[-1] = 0.0, 1.0
    return Warping(grid, vals)


def l2_norm(v: Union[Srvf, FunctionSample, np.ndarray], grid: Grid | None = None) -> float:
    if isinstance(v, np.ndarray):
        h = grid.h if grid is not None else 1.0 / (len(v) - 1)
        return float(np.sqrt(trapezoid(v**2, dx=h)))
    return float(np.sqrt(trapezoid(v.values**2, dx=v.grid.h)))


def resample(t, values, grid: Grid) -> np.ndarray:
    """Linear interpolation of samples (t, values) onto the uniform grid.

    t is rescaled to [0, 1] first; it must be strictly increasing.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if t.ndim != 1 or len(t) < 2:
        raise DataError("need at least two sample times")
    if np.any(np.diff(t) <= 0):
        raise DataError("sample times must be strictly increasing")
    u = (t - t[0]) / (t[-1] - t[0])
    if values.ndim == 1:
        return np.interp(grid.points, u, values)
    return np.vstack([np.interp(grid.points, u, row) for row in values])
