"""JSON run configuration bundling every stage's config."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from .align import AlignConfig, L2Config
from .bootstrap import BootstrapConfig
from .config import GRID_POINTS, KAPPA_GRID, N_JOBS, SAMPLES, SEED
from .core import Grid
from .errors import ConfigError
from .ppd import PpdConfig
from .shapefit import FitConfig
from .simulate import NoiseModel

logger = logging.getLogger(__name__)

# JSON key -> dataclass field where they differ
_RENAMES = {"lambda": "lam"}


@dataclass(frozen=True)
class RunConfig:
    grid_points: int = GRID_POINTS
    seed: int = SEED
    n_jobs: int = N_JOBS
    samples: int = SAMPLES
    output_dir: str = "results"
    kappa_grid: Tuple[float, ...] = KAPPA_GRID
    align: AlignConfig = field(default_factory=AlignConfig)
    l2: L2Config = field(default_factory=L2Config)
    ppd: PpdConfig = field(default_factory=PpdConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    noise: Optional[NoiseModel] = None  # None: default_noise(g) per scenario

    def __post_init__(self):
        if self.grid_points < 5:
            raise ConfigError("grid_points must be >= 5")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if any(k < 0 for k in self.kappa_grid):
            raise ConfigError("kappa grid values must be >= 0")
        object.__setattr__(self, "kappa_grid", tuple(float(k) for k in self.kappa_grid))

    @property
    def grid(self) -> Grid:
        return Grid(self.grid_points)

    def with_overrides(self, seed: Optional[int] = None, n_jobs: Optional[int] = None,
                       output_dir: Optional[str] = None, lam: Optional[float] = None,
                       B: Optional[int] = None, alpha: Optional[float] = None) -> "RunConfig":
        """Apply CLI flags on top of the file values."""
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed, fit=replace(cfg.fit, seed=seed),
                          bootstrap=replace(cfg.bootstrap, seed=seed))
        if n_jobs is not None:
            cfg = replace(cfg, n_jobs=n_jobs, align=replace(cfg.align, n_jobs=n_jobs),
                          l2=replace(cfg.l2, n_jobs=n_jobs), bootstrap=replace(cfg.bootstrap, n_jobs=n_jobs))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=output_dir)
        if lam is not None:
            cfg = replace(cfg, align=cfg.align.with_lambda(lam))
        if B is not None or alpha is not None:
            cfg = replace(cfg, bootstrap=replace(cfg.bootstrap,
                                                 B=cfg.bootstrap.B if B is None else B,
                                                 alpha=cfg.bootstrap.alpha if alpha is None else alpha))
        return cfg


def _section(cls, values: Any, where: str, inherited: Dict[str, Any]):
    if not isinstance(values, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    kwargs = {k: v for k, v in inherited.items() if k in known}
    for key, value in values.items():
        name = _RENAMES.get(key, key)
        if name not in known:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_SECTIONS = {
    "align": AlignConfig,
    "l2": L2Config,
    "ppd": PpdConfig,
    "fit": FitConfig,
    "bootstrap": BootstrapConfig,
    "noise": NoiseModel,
}
_SCALARS = {"grid_points", "seed", "n_jobs", "samples", "output_dir", "kappa_grid"}


def run_config_from_dict(tree: Dict[str, Any]) -> RunConfig:
    """Top-level seed and n_jobs flow into the sections unless a section sets its own."""
    if not isinstance(tree, dict):
        raise ConfigError("config root must be an object")
    unknown = set(tree) - _SCALARS - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    scalars = {k: tree[k] for k in _SCALARS if k in tree}
    if "kappa_grid" in scalars:
        scalars["kappa_grid"] = tuple(scalars["kappa_grid"])
    inherited = {"seed": scalars.get("seed", SEED), "n_jobs": scalars.get("n_jobs", N_JOBS)}
    sections = {}
    for key, cls in _SECTIONS.items():
        if key in tree:
            sections[key] = _section(cls, tree[key], key, inherited)
        elif key != "noise":
            sections[key] = _section(cls, {}, key, inherited)
    try:
        return RunConfig(**scalars, **sections)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_run_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return run_config_from_dict({})
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        tree = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    logger.debug("loaded config %s", p)
    return run_config_from_dict(tree)
