"""Rank-reduced multi-term transform for sample-based compression.

The transform maps an observed sample matrix Y and an auxiliary
"injection" matrix V to ``D1 C1 Y + D2 C2 (V G)``, where G projects onto
the null space of Y so the two terms never compete for the same
directions.  The closed-form two-factor transform falls out as the
single-term special case; the solver alternates exact best-response
updates of the injection and the second factor pair, which makes the
error trace non-increasing.
"""

from .errors import CorpusError, DegenerateInjectionError, NumericalError
from .matops import (
    SvdFactors,
    gram_sqrt_pinv,
    left_singular_block,
    null_projector,
    numerical_rank,
    pinv,
    rank_constrained_lsq,
    svd,
    truncated_svd,
)
from .solver import (
    MttConfig,
    MttModel,
    MttTrace,
    compress,
    compression_ratio,
    decompress,
    mtt_fit,
    mtt_init,
    update_injection,
    update_second_factor,
)
from .transforms import (
    ErrorReport,
    FactorPair,
    TwoTermTransform,
    apply_transform,
    gbt1_fit,
    reconstruction_error,
    step1_fit,
)

__version__ = "0.1.0"

__all__ = [
    "CorpusError",
    "DegenerateInjectionError",
    "ErrorReport",
    "FactorPair",
    "MttConfig",
    "MttModel",
    "MttTrace",
    "NumericalError",
    "SvdFactors",
    "TwoTermTransform",
    "apply_transform",
    "compress",
    "compression_ratio",
    "decompress",
    "gbt1_fit",
    "gram_sqrt_pinv",
    "left_singular_block",
    "mtt_fit",
    "mtt_init",
    "null_projector",
    "numerical_rank",
    "pinv",
    "rank_constrained_lsq",
    "reconstruction_error",
    "step1_fit",
    "svd",
    "truncated_svd",
    "update_injection",
    "update_second_factor",
]
