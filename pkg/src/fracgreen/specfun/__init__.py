"""Special functions: complex gamma, Mittag-Leffler and Fox H-functions."""

from .gamma import GammaPoleError, complex_gamma, complex_loggamma, loggamma_array
from .hfunction import (
    ContourParams,
    EvalResult,
    HFunctionError,
    HFunctionSpec,
    RegimeThresholds,
    hfun_contour,
    hfun_eval,
    hfun_large_z,
    hfun_shift_derivative,
    hfun_small_z,
    residue_terms,
)
from .mittag_leffler import MittagLefflerError, mittag_leffler, mittag_leffler_neg

__all__ = [
    "ContourParams",
    "EvalResult",
    "GammaPoleError",
    "HFunctionError",
    "HFunctionSpec",
    "MittagLefflerError",
    "RegimeThresholds",
    "complex_gamma",
    "complex_loggamma",
    "hfun_contour",
    "hfun_eval",
    "hfun_large_z",
    "hfun_shift_derivative",
    "hfun_small_z",
    "loggamma_array",
    "mittag_leffler",
    "mittag_leffler_neg",
    "residue_terms",
]
