"""Hopfield retrieval as fixed-point iteration, with geometry-aware attention guidance."""
__version__ = "0.1.0"

from .attention import (
    AttentionBatch,
    AttentionOutput,
    GuidedAttention,
    attention,
    gag_attention,
    pladis_extrapolate,
)
from .errors import (
    BisectionError,
    DivergenceError,
    DomainError,
    HopgagError,
    InvalidInputError,
    NumericalError,
)
from .fixed_point import (
    GuidanceParams,
    IterationTrace,
    Operator,
    SyntheticWeakContraction,
    anderson_iterate,
    decompose_residual,
    gag_iterate,
    gag_step,
    km_iterate,
    orthogonal_error,
    picard_iterate,
)
from .hopfield import (
    ErrorBoundReport,
    HopfieldConfig,
    HopfieldRetriever,
    PatternMatrix,
    energy,
    pattern_separation,
    retrieval_error_bound,
    retrieve,
)
from .probability import (
    ThresholdReport,
    alpha_entmax,
    softmax,
    sparsemax,
    threshold_and_support,
    tsallis_conjugate,
    tsallis_entropy,
)

__all__ = [
    "AttentionBatch", "AttentionOutput", "GuidedAttention", "attention", "gag_attention",
    "pladis_extrapolate",
    "BisectionError", "DivergenceError", "DomainError", "HopgagError", "InvalidInputError",
    "NumericalError",
    "GuidanceParams", "IterationTrace", "Operator", "SyntheticWeakContraction", "anderson_iterate",
    "decompose_residual", "gag_iterate", "gag_step", "km_iterate", "orthogonal_error",
    "picard_iterate",
    "ErrorBoundReport", "HopfieldConfig", "HopfieldRetriever", "PatternMatrix", "energy",
    "pattern_separation", "retrieval_error_bound", "retrieve",
    "ThresholdReport", "alpha_entmax", "softmax", "sparsemax", "threshold_and_support",
    "tsallis_conjugate", "tsallis_entropy",
]
