"""PPD selection followed by the shape-constrained fit."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

from .align import AlignConfig, AlignmentResult, multiple_align
from .core import FunctionSample, FunctionSet
from .ppd import PpdConfig, PpdResult, build_ppd
from .shapefit import FitConfig, FitResult, ShapeTemplate, extract_template, fit, initial_estimate

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ShapeEstimate:
    m: int
    lambda_star: float
    alignment: AlignmentResult
    template: ShapeTemplate
    g_init: FunctionSample
    fit: FitResult
    ppd: Optional[PpdResult] = None

    @property
    def g_hat(self) -> FunctionSample:
        return self.fit.estimate


def initial_template(g_star: FunctionSample, m: int, tau: float) -> ShapeTemplate:
    """Extrema of the mean at lambda*, limited to its m strongest significant peaks."""
    return extract_template(g_star, min_strength=tau, max_peaks=m)


def estimate_at(data: FunctionSet, lambda_star: float, m: int, acfg: AlignConfig, pcfg: PpdConfig,
                fcfg: FitConfig, alignment: Optional[AlignmentResult] = None,
                ppd: Optional[PpdResult] = None) -> ShapeEstimate:
    if alignment is None:
        alignment = multiple_align(data, acfg.with_lambda(lambda_star))
    template = initial_template(alignment.mean, m, pcfg.tau)
    g_init = initial_estimate(template, data.grid)
    result = fit(alignment.aligned, g_init, fcfg, template=template)
    logger.info("✓ shape fit: m=%d, objective %.6g -> %.6g", template.m, result.objective_init,
                result.objective_final)
    return ShapeEstimate(m, lambda_star, alignment, template, g_init, result, ppd)


def estimate_shape(data: FunctionSet, acfg: AlignConfig, pcfg: PpdConfig, fcfg: FitConfig,
                   ppd: Optional[PpdResult] = None) -> ShapeEstimate:
    if ppd is None:
        ppd = build_ppd(data, acfg, pcfg)
    return estimate_at(data, ppd.lambda_star, ppd.m, acfg, pcfg, fcfg, alignment=ppd.alignment_star, ppd=ppd)
