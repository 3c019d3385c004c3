"""CSV/JSON artifacts: wide tables of curves keyed by a leading `t` column."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import FLOAT_FORMAT
from .core import FunctionSample, FunctionSet, Grid, Warping, resample
from .errors import DataError
from .ppd import BarchartRow, PpdResult, PpdSurface

logger = logging.getLogger(__name__)


def read_function_csv(path, grid: Grid) -> Tuple[FunctionSet, List[str]]:
    """Read `t,f_1,...,f_n` and resample every column onto the grid.

    Errors name the offending data row (1-based, header excluded) and column.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    try:
        raw = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot parse CSV ({exc})") from exc
    columns = [str(c).strip() for c in raw.columns]
    if not columns or columns[0] != "t":
        raise DataError(f"{path}: first column must be 't'")
    if len(columns) < 2:
        raise DataError(f"{path}: no function columns")
    if len(raw) < 2:
        raise DataError(f"{path}: need at least two rows")
    numeric = raw.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().to_numpy() | ~np.isfinite(numeric.to_numpy(dtype=float, na_value=np.nan))
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DataError(f"{path}: row {row + 1}, column {columns[col]!r}: "
                        f"non-numeric value {raw.iat[row, col]!r}")
    values = numeric.to_numpy(dtype=float)
    t = values[:, 0]
    if np.any(np.diff(t) <= 0):
        row = int(np.argmax(np.diff(t) <= 0)) + 2
        raise DataError(f"{path}: row {row}, column 't': t must be strictly increasing")
    functions = tuple(FunctionSample(grid, resample(t, values[:, j], grid)) for j in range(1, values.shape[1]))
    logger.debug("read %d functions x %d rows from %s", len(functions), len(t), path)
    return FunctionSet(grid, functions), columns[1:]


def write_frame(df: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("✓ Wrote %s", path.name)
    return path


def write_json(payload, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("✓ Wrote %s", path.name)
    return path


def read_json(path: Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing upstream artifact: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def write_curves(path, grid: Grid, curves: Dict[str, np.ndarray]) -> Path:
    frame = {"t": grid.points}
    frame.update({name: np.asarray(v, dtype=float) for name, v in curves.items()})
    return write_frame(pd.DataFrame(frame), Path(path))


def write_function_set(path, data: FunctionSet, names: Sequence[str]) -> Path:
    return write_curves(path, data.grid, {n: f.values for n, f in zip(names, data)})


def write_warpings(path, warpings: Sequence[Warping], names: Sequence[str]) -> Path:
    return write_curves(path, warpings[0].grid, {n: w.values for n, w in zip(names, warpings)})


def read_curve(path, grid: Grid, column: str) -> FunctionSample:
    """One named column of a curve file written by write_curves."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing upstream artifact: {path}")
    data, names = read_function_csv(path, grid)
    if column not in names:
        raise DataError(f"{path}: no column {column!r}")
    return data.functions[names.index(column)]


def write_barchart(path, rows: Sequence[BarchartRow]) -> Path:
    records = []
    for row in rows:
        for begin, end in row.intervals:
            records.append({"label": row.label, "lambda_begin": begin, "lambda_end": end,
                            "persistence": row.persistence, "persistent": row.persistent})
    columns = ["label", "lambda_begin", "lambda_end", "persistence", "persistent"]
    return write_frame(pd.DataFrame(records, columns=columns), Path(path))


def write_surface(path, surface: PpdSurface) -> Path:
    payload = {
        "lambdas": surface.lambdas.tolist(),
        "t": surface.t.tolist(),
        "values": surface.values.tolist(),
        "tracks": {str(label): [list(p) for p in pts] for label, pts in surface.tracks.items()},
    }
    return write_json(payload, Path(path))


def selection_payload(ppd: PpdResult) -> dict:
    nonconverged = [float(a.lam) for a in ppd.alignments if not a.converged]
    return {
        "m": ppd.m,
        "lambda_star": ppd.lambda_star,
        "persistent_labels": list(ppd.persistent_labels),
        "significant_counts": list(ppd.significant_counts),
        "flags": {"fallback_lambda_star": ppd.flagged, "nonconverged_lambdas": nonconverged},
    }


def read_selection(path) -> Tuple[int, float]:
    payload = read_json(Path(path))
    try:
        return int(payload["m"]), float(payload["lambda_star"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed selection ({exc})") from exc
