"""Elastic shape estimation of functional data with peak-persistence diagrams."""

from .align import AlignConfig, L2Config, multiple_align, pairwise_align, penalized_l2_align
from .bootstrap import BootstrapConfig, bootstrap, bootstrap_band
from .core import FunctionSample, FunctionSet, Grid, Warping
from .errors import ConfigError, DataError, NumericalError, PeakShapeError
from .pipeline import estimate_shape
from .ppd import PpdConfig, build_ppd
from .shapefit import FitConfig, extract_template, fit

__version__ = "0.1.0"
