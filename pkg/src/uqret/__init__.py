"""Uncertainty quantification for cross-modal embedding-and-retrieval.

Quantifies feature uncertainty (embedding variance across Monte-Carlo
model draws) and posterior uncertainty (mutual information over the
retrieval posterior), performs model averaging, computes retrieval
metrics, and builds uncertainty-based rejection curves and dataset-shift
diagnostics. A desk-scale toy lab (synthetic biased pairs plus dropout
MLP encoders trained with hinge rank losses) exercises the whole chain.
"""

from .errors import InputValidationError, NumericalError, UqretError
from .reliability import (
    RejectionCurve,
    ShiftHistogram,
    auprc_gap,
    rejection_curve,
    shift_histograms,
)
from .retrieval import (
    AveragingMode,
    RankResult,
    RetrievalMetrics,
    RetrievalTask,
    evaluate,
    feature_average,
    median_rank,
    posterior_average,
    rank_targets,
    rank_with_mode,
    recall_at_k,
    retrieval_posterior,
)
from .similarity import SimilarityKind, similarity_matrix
from .tensor_io import (
    EmbeddingTensor,
    PositivesMap,
    parse_tensor,
    read_positives,
    read_tensor,
    write_positives,
    write_tensor,
)
from .uncertainty import (
    PosteriorEnsemble,
    UncertaintyReport,
    entropy,
    feature_uncertainty,
    posterior_ensemble,
    posterior_uncertainty,
    posterior_variance,
    uncertainty_report,
)

__version__ = "0.1.0"

__all__ = [
    "AveragingMode",
    "EmbeddingTensor",
    "InputValidationError",
    "NumericalError",
    "PositivesMap",
    "PosteriorEnsemble",
    "RankResult",
    "RejectionCurve",
    "RetrievalMetrics",
    "RetrievalTask",
    "ShiftHistogram",
    "SimilarityKind",
    "UncertaintyReport",
    "UqretError",
    "auprc_gap",
    "entropy",
    "evaluate",
    "feature_average",
    "feature_uncertainty",
    "median_rank",
    "parse_tensor",
    "posterior_average",
    "posterior_ensemble",
    "posterior_uncertainty",
    "posterior_variance",
    "rank_targets",
    "rank_with_mode",
    "recall_at_k",
    "read_positives",
    "read_tensor",
    "rejection_curve",
    "retrieval_posterior",
    "shift_histograms",
    "similarity_matrix",
    "uncertainty_report",
    "write_positives",
    "write_tensor",
]
