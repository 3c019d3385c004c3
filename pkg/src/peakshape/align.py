"""Penalized elastic alignment.

Pairwise alignment is a dynamic program over the T x T lattice of grid nodes,
node (j, k) meaning gamma(t_j) = t_k. multiple_align runs the iterative
template algorithm on SRVFs; penalized_l2_align runs the same loop on raw
function values, which is the baseline that suffers from pinching.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import gcd
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .config import ALIGN_MAX_ITER, ALIGN_TOL, DP_MAX_STEP, N_JOBS
from .core import (
    FunctionSample,
    FunctionSet,
    Grid,
    Srvf,
    Warping,
    identity_warping,
    invert_warping,
    l2_norm,
    mean_warping,
    to_srvf,
    warp_function,
    warp_srvf,
)
from .errors import ConfigError, DataError
from .parallel import parallel_map

logger = logging.getLogger(__name__)

Move = Tuple[int, int]
FLAT_MOVE: Move = (1, 0)


def reduced_slope_set(max_step: int) -> Tuple[Move, ...]:
    """All moves (a, b) with 1 <= a, b <= max_step and gcd(a, b) = 1, (1, 1) first."""
    moves = [(a, b) for a in range(1, max_step + 1) for b in range(1, max_step + 1) if gcd(a, b) == 1]
    moves.remove((1, 1))
    return ((1, 1), *moves)


def _check_slope_set(moves: Sequence[Move], max_step: int) -> Tuple[Move, ...]:
    moves = tuple((int(a), int(b)) for a, b in moves)
    if not moves:
        raise ConfigError("slope set is empty")
    if (1, 1) not in moves:
        raise ConfigError("slope set must contain (1, 1)")
    for a, b in moves:
        if a < 1 or b < 1 or a > max_step or b > max_step:
            raise ConfigError(f"move {(a, b)} outside 1..{max_step}")
        if gcd(a, b) != 1:
            raise ConfigError(f"move {(a, b)} is not gcd-reduced")
    if len(set(moves)) != len(moves):
        raise ConfigError("slope set has duplicate moves")
    return ((1, 1), *[m for m in moves if m != (1, 1)])


@dataclass(frozen=True)
class AlignConfig:
    lam: float = 0.0
    dp_max_step: int = DP_MAX_STEP
    dp_slope_set: Optional[Tuple[Move, ...]] = None
    tol: float = ALIGN_TOL
    max_iter: int = ALIGN_MAX_ITER
    n_jobs: int = N_JOBS

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ConfigError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.dp_max_step < 1:
            raise ConfigError("dp_max_step must be >= 1")
        if self.tol <= 0:
            raise ConfigError("tol must be > 0")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        moves = reduced_slope_set(self.dp_max_step) if self.dp_slope_set is None else self.dp_slope_set
        object.__setattr__(self, "dp_slope_set", _check_slope_set(moves, self.dp_max_step))

    def with_lambda(self, lam: float, n_jobs: Optional[int] = None) -> "AlignConfig":
        return AlignConfig(lam, self.dp_max_step, self.dp_slope_set, self.tol, self.max_iter,
                           self.n_jobs if n_jobs is None else n_jobs)


@dataclass(frozen=True)
class L2Config:
    """Penalized-L2 alignment; R(gamma) is always the first-order form int (1 - sqrt(gamma'))^2."""

    kappa: float = 0.0
    dp_max_step: int = DP_MAX_STEP
    tol: float = ALIGN_TOL
    max_iter: int = ALIGN_MAX_ITER
    n_jobs: int = N_JOBS

    def __post_init__(self):
        if not np.isfinite(self.kappa) or self.kappa < 0:
            raise ConfigError(f"kappa must be finite and >= 0, got {self.kappa}")
        if self.tol <= 0 or self.max_iter < 1 or self.dp_max_step < 1:
            raise ConfigError("invalid L2 alignment tolerances")

    @property
    def moves(self) -> Tuple[Move, ...]:
        return reduced_slope_set(self.dp_max_step) + (FLAT_MOVE,)


@dataclass(frozen=True, eq=False)
class AlignmentResult:
    lam: float
    aligned: FunctionSet
    warpings: Tuple[Warping, ...]
    mean: FunctionSample
    iterations: int
    final_eps: float
    tol: float
    costs: Tuple[float, ...] = ()
    objective_trace: Tuple[float, ...] = ()

    @property
    def converged(self) -> bool:
        return self.final_eps <= self.tol


# ===================== DYNAMIC PROGRAM =====================

def edge_cost_table(ref: np.ndarray, vals: np.ndarray, lam: float, moves: Sequence[Move],
                    grid: Grid, jacobian: bool = True) -> Dict[Move, np.ndarray]:
    """Cost of every lattice edge, indexed by move and end node.

    table[(a, b)][j, k] is the cost of the edge (j - a, k - b) -> (j, k): the
    trapezoidal integral over [t_{j-a}, t_j] of (ref(t) - vals(gamma(t)) * c)^2
    with gamma linear on the segment, c = sqrt(b / a) when jacobian is set and 1
    otherwise, plus lam * (1 - sqrt(b / a))^2 * (t_j - t_{j-a}). Unreachable
    entries are +inf.
    """
    T, h, t = grid.num_points, grid.h, grid.points
    table = {}
    for a, b in moves:
        slope = b / a
        factor = np.sqrt(slope) if jacobian else 1.0
        k = np.arange(b, T)
        cost = np.zeros((T - a, T - b))
        for i in range(a + 1):
            weight = 0.5 * h if i in (0, a) else h
            warped = np.interp((k - b + i * slope) * h, t, vals)
            resid = ref[i:T - a + i, None] - factor * warped[None, :]
            cost += weight * resid**2
        cost += lam * (1.0 - np.sqrt(slope)) ** 2 * a * h
        full = np.full((T, T), np.inf)
        full[a:, b:] = cost
        table[(a, b)] = full
    return table


def _solve_lattice(table: Dict[Move, np.ndarray], moves: Sequence[Move], T: int):
    D = np.full((T, T), np.inf)
    D[0, 0] = 0.0
    back = np.full((T, T), -1, dtype=int)
    for j in range(1, T):
        best = np.full(T, np.inf)
        arg = np.full(T, -1, dtype=int)
        for idx, (a, b) in enumerate(moves):
            if a > j:
                continue
            cand = D[j - a, :T - b] + table[(a, b)][j, b:]
            tail_best, tail_arg = best[b:], arg[b:]
            better = cand < tail_best
            tail_best[better] = cand[better]
            tail_arg[better] = idx
        D[j], back[j] = best, arg
    if not np.isfinite(D[-1, -1]):
        raise DataError("no admissible lattice path reaches (T-1, T-1)")
    path = [(T - 1, T - 1)]
    j = k = T - 1
    while (j, k) != (0, 0):
        a, b = moves[back[j, k]]
        j, k = j - a, k - b
        path.append((j, k))
    return float(D[-1, -1]), path[::-1]


def path_cost(table: Dict[Move, np.ndarray], path: Sequence[Tuple[int, int]]) -> float:
    """Sum a lattice path's edge costs in path order."""
    total = 0.0
    for (j0, k0), (j1, k1) in zip(path[:-1], path[1:]):
        total = total + table[(j1 - j0, k1 - k0)][j1, k1]
    return float(total)


def _path_to_warping(path, grid: Grid) -> Warping:
    if all(j == k for j, k in path):
        return identity_warping(grid)
    js, ks = zip(*path)
    vals = np.interp(np.arange(grid.num_points), js, ks) * grid.h
    vals[-1] = 1.0
    return Warping(grid, vals)


def _dp_align(ref: np.ndarray, vals: np.ndarray, lam: float, moves, grid: Grid, jacobian: bool):
    if np.array_equal(ref, vals):
        return identity_warping(grid), 0.0
    table = edge_cost_table(ref, vals, lam, moves, grid, jacobian)
    cost, path = _solve_lattice(table, moves, grid.num_points)
    return _path_to_warping(path, grid), cost


def pairwise_align(q_ref: Srvf, q: Srvf, cfg: AlignConfig) -> Tuple[Warping, float]:
    """gamma minimizing ||q_ref - q * gamma||^2 + lam * ||1 - sqrt(gamma')||^2, with its cost."""
    if q_ref.grid != q.grid:
        raise DataError("pairwise_align: SRVFs live on different grids")
    return _dp_align(q_ref.values, q.values, cfg.lam, cfg.dp_slope_set, q.grid, jacobian=True)


# ===================== MULTIPLE ALIGNMENT =====================

def cross_sectional_mean(data: FunctionSet) -> FunctionSample:
    return FunctionSample(data.grid, data.matrix.mean(axis=0))


def _srvf_mean(srvfs: Sequence[Srvf]) -> Srvf:
    return Srvf(srvfs[0].grid, np.mean([q.values for q in srvfs], axis=0))


def _lattice_template(targets: Sequence[np.ndarray], warpings: Sequence[Warping], grid: Grid,
                      jacobian: bool) -> np.ndarray:
    """Template minimizing the summed lattice cost of fixed warpings.

    The edge cost weighs each cell's two end nodes by h/2 with that cell's own
    slope factor, so a node takes the average of the warped values seen from
    its neighbouring cells, averaged over the targets.
    """
    t, h = grid.points, grid.h
    left = np.zeros(grid.num_points - 1)
    right = np.zeros(grid.num_points - 1)
    for v, w in zip(targets, warpings):
        if w.is_identity:
            warped, factor = v, 1.0
        else:
            warped = np.interp(w.values, t, v)
            factor = np.sqrt(np.clip(np.diff(w.values) / h, 0.0, None)) if jacobian else 1.0
        left += factor * warped[:-1]
        right += factor * warped[1:]
    out = np.empty(grid.num_points)
    out[0], out[-1] = left[0], right[-1]
    out[1:-1] = 0.5 * (right[:-1] + left[1:])
    return out / len(targets)


def _align_all(template: np.ndarray, targets: Sequence[np.ndarray], lam, moves, grid, jacobian, n_jobs):
    return parallel_map(lambda v: _dp_align(template, v, lam, moves, grid, jacobian), targets,
                        n_jobs=n_jobs, threading=True)


def multiple_align(data: FunctionSet, cfg: AlignConfig, template_index: Optional[int] = None) -> AlignmentResult:
    """Iterative template alignment of SRVFs at elasticity cfg.lam.

    The starting template is the sample SRVF closest to the SRVF mean unless
    template_index fixes it. Non-convergence within max_iter is reported
    through final_eps > tol, not raised.
    """
    if data.n < 2:
        raise DataError("multiple_align needs at least two functions")
    grid, moves = data.grid, cfg.dp_slope_set
    srvfs = [to_srvf(f) for f in data]
    if template_index is None:
        q_mean = _srvf_mean(srvfs).values
        template_index = int(np.argmin([l2_norm(q.values - q_mean, grid) for q in srvfs]))
    q_bar = srvfs[template_index]

    trace = []
    eps, iterations = np.inf, 0
    warpings = []
    while iterations < cfg.max_iter:
        iterations += 1
        results = _align_all(q_bar.values, [q.values for q in srvfs], cfg.lam, moves, grid, True, cfg.n_jobs)
        warpings = [w for w, _ in results]
        trace.append(float(sum(c for _, c in results)))
        q_star = Srvf(grid, _lattice_template([q.values for q in srvfs], warpings, grid, jacobian=True))
        eps = l2_norm(q_bar.values - q_star.values, grid) ** 2
        logger.debug("lambda=%g iteration %d eps=%.3e objective=%.6g", cfg.lam, iterations, eps, trace[-1])
        if eps <= cfg.tol:
            break
        q_bar = q_star
    if eps > cfg.tol:
        logger.warning("✗ alignment at lambda=%g stopped after %d iterations (eps=%.3e)", cfg.lam, iterations, eps)

    gamma_bar_inv = invert_warping(mean_warping(warpings))
    q_center = warp_srvf(q_star, gamma_bar_inv)
    results = _align_all(q_center.values, [q.values for q in srvfs], cfg.lam, moves, grid, True, cfg.n_jobs)
    warpings = tuple(w for w, _ in results)
    aligned = FunctionSet(grid, tuple(warp_function(f, w) for f, w in zip(data, warpings)))
    return AlignmentResult(
        lam=cfg.lam,
        aligned=aligned,
        warpings=warpings,
        mean=cross_sectional_mean(aligned),
        iterations=iterations,
        final_eps=float(eps),
        tol=cfg.tol,
        costs=tuple(c for _, c in results),
        objective_trace=tuple(trace),
    )


def penalized_l2_align(data: FunctionSet, cfg: L2Config) -> AlignmentResult:
    """Template alignment on raw function values with penalty kappa.

    The lattice also offers the flat move (1, 0), so a warping can stall and
    pinch when kappa is small.
    """
    if data.n < 2:
        raise DataError("penalized_l2_align needs at least two functions")
    grid, moves = data.grid, cfg.moves
    f_mean = data.matrix.mean(axis=0)
    start = int(np.argmin([l2_norm(f.values - f_mean, grid) for f in data]))
    g_bar = data.functions[start]

    trace = []
    eps, iterations = np.inf, 0
    warpings = []
    while iterations < cfg.max_iter:
        iterations += 1
        results = _align_all(g_bar.values, [f.values for f in data], cfg.kappa, moves, grid, False, cfg.n_jobs)
        warpings = [w for w, _ in results]
        trace.append(float(sum(c for _, c in results)))
        g_star = FunctionSample(grid, _lattice_template([f.values for f in data], warpings, grid, jacobian=False))
        eps = l2_norm(g_bar.values - g_star.values, grid) ** 2
        logger.debug("kappa=%g iteration %d eps=%.3e", cfg.kappa, iterations, eps)
        if eps <= cfg.tol:
            break
        g_bar = g_star

    g_center = warp_function(g_star, invert_warping(mean_warping(warpings)))
    results = _align_all(g_center.values, [f.values for f in data], cfg.kappa, moves, grid, False, cfg.n_jobs)
    warpings = tuple(w for w, _ in results)
    aligned = FunctionSet(grid, tuple(warp_function(f, w) for f, w in zip(data, warpings)))
    return AlignmentResult(
        lam=cfg.kappa,
        aligned=aligned,
        warpings=warpings,
        mean=cross_sectional_mean(aligned),
        iterations=iterations,
        final_eps=float(eps),
        tol=cfg.tol,
        costs=tuple(c for _, c in results),
        objective_trace=tuple(trace),
    )


def pinching_score(result: AlignmentResult) -> float:
    """Smallest per-cell slope over all warpings; values near 0 mean pinching."""
    return float(min(w.slopes().min() for w in result.warpings))
