"""Uncertainty measures over Monte-Carlo embedding stacks.

Two per-query measures, both estimated from L stochastic model draws:

* feature uncertainty: per-dimension variance of the embedding across
  draws, summed over dimensions. Defined without reference to targets.
* posterior uncertainty: mutual information between the retrieval
  outcome and the model draw, computed as the entropy of the averaged
  retrieval posterior minus the average per-draw entropy. Defined
  against a target gallery.

The variance of the retrieval posterior (a first-order stand-in for the
mutual information) is reported alongside.

All entropies are natural-log, so the posterior uncertainty is bounded
by ln(number of targets).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InputValidationError
from .retrieval import ROW_SUM_TOL, NonNormalizedRowError, retrieval_posterior
from .similarity import SimilarityKind, similarity_matrix
from .tensor_io import EmbeddingTensor

# Only permitted deviation from exact math: Jensen guarantees the mutual
# information is >= 0, but rounding can leave a tiny negative residue.
MI_ROUNDING_TOL = 1e-12


class SingleModelWarning(UserWarning):
    """A spread measure was asked of a single draw; the result is 0."""


@dataclass(frozen=True)
class PosteriorEnsemble:
    """Per-model retrieval posteriors: (L, Nq, Nt) probabilities."""

    values: np.ndarray
    temperature: float
    kind: SimilarityKind

    def __post_init__(self):
        p = np.asarray(self.values, dtype=np.float64)
        if p.ndim != 3:
            raise InputValidationError(
                f"expected (L, Nq, Nt) posteriors, got shape {p.shape}"
            )
        if not np.all(np.isfinite(p)):
            raise InputValidationError("posteriors contain NaN or Inf")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise InputValidationError("posterior entries must lie in [0, 1]")
        sums = p.sum(axis=-1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            worst = float(np.abs(sums - 1.0).max())
            raise NonNormalizedRowError(
                f"posterior rows must sum to 1 within {ROW_SUM_TOL}, "
                f"worst |sum-1|={worst:g}"
            )
        if not self.temperature > 0:
            raise InputValidationError(
                f"temperature must be > 0, got {self.temperature}"
            )
        p = np.ascontiguousarray(p)
        p.flags.writeable = False
        object.__setattr__(self, "values", p)

    @property
    def num_models(self) -> int:
        return self.values.shape[0]

    @property
    def num_queries(self) -> int:
        return self.values.shape[1]

    @property
    def num_targets(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class UncertaintyReport:
    """Per-query uncertainty values at one temperature."""

    feature_u: np.ndarray
    posterior_u: np.ndarray
    posterior_var: np.ndarray
    temperature: float
    kind: SimilarityKind


def entropy(p) -> np.ndarray | float:
    """Shannon entropy in nats along the last axis, with 0*ln(0) := 0."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any(arr < 0.0):
        raise InputValidationError("probabilities must be non-negative")
    sums = arr.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
        worst = float(np.abs(sums - 1.0).max())
        raise NonNormalizedRowError(
            f"probability rows must sum to 1 within {ROW_SUM_TOL}, "
            f"worst |sum-1|={worst:g}"
        )
    safe = np.where(arr > 0.0, arr, 1.0)
    h = -(arr * np.log(safe)).sum(axis=-1)
    return float(h) if h.ndim == 0 else h


def feature_uncertainty(stack) -> np.ndarray:
    """Summed per-dimension population variance across the L draws.

    Returns one value per sample. A single-draw stack carries no spread
    information; it yields zeros and a :class:`SingleModelWarning`.
    """
    values = stack.values if isinstance(stack, EmbeddingTensor) else None
    if values is None:
        values = np.asarray(stack, dtype=np.float64)
        if values.ndim != 3:
            raise InputValidationError(
                f"expected an (L, N, D) stack, got shape {values.shape}"
            )
    if values.shape[0] < 2:
        warnings.warn(
            "feature uncertainty of a single model draw is identically zero",
            SingleModelWarning,
            stacklevel=2,
        )
    return values.var(axis=0, ddof=0).sum(axis=-1)


def posterior_ensemble(
    query_stack, targets_avg: np.ndarray, kind: SimilarityKind, temperature: float
) -> PosteriorEnsemble:
    """Retrieval posterior of every query slice against one averaged
    target gallery."""
    q = query_stack.values if isinstance(query_stack, EmbeddingTensor) else None
    if q is None:
        q = np.asarray(query_stack, dtype=np.float64)
        if q.ndim != 3:
            raise InputValidationError(
                f"expected an (L, Nq, D) stack, got shape {q.shape}"
            )
    targets = np.asarray(targets_avg, dtype=np.float64)
    per_model = np.stack(
        [
            retrieval_posterior(similarity_matrix(q[l], targets, kind), temperature)
            for l in range(q.shape[0])
        ]
    )
    return PosteriorEnsemble(values=per_model, temperature=temperature, kind=kind)


def posterior_uncertainty(ensemble: PosteriorEnsemble) -> np.ndarray:
    """Mutual information (nats) between retrieval outcome and model draw.

    Entropy of the model-averaged posterior minus the average per-model
    entropy. Negative rounding residues within ``MI_ROUNDING_TOL`` are
    clamped to exactly 0.
    """
    if ensemble.num_models < 2:
        warnings.warn(
            "posterior uncertainty of a single model draw is identically zero",
            SingleModelWarning,
            stacklevel=2,
        )
    mean_posterior = ensemble.values.mean(axis=0)
    mi = entropy(mean_posterior) - entropy(ensemble.values).mean(axis=0)
    return np.where((mi < 0.0) & (mi >= -MI_ROUNDING_TOL), 0.0, mi)


def posterior_variance(ensemble: PosteriorEnsemble) -> np.ndarray:
    """Population variance of each posterior entry across draws, summed
    over targets."""
    return ensemble.values.var(axis=0, ddof=0).sum(axis=-1)


def uncertainty_report(
    query_stack, targets_avg: np.ndarray, kind: SimilarityKind, temperature: float
) -> UncertaintyReport:
    """Feature and posterior uncertainty of every query at one temperature."""
    ens = posterior_ensemble(query_stack, targets_avg, kind, temperature)
    return UncertaintyReport(
        feature_u=feature_uncertainty(query_stack),
        posterior_u=posterior_uncertainty(ens),
        posterior_var=posterior_variance(ens),
        temperature=temperature,
        kind=kind,
    )


def write_report_csv(path, report: UncertaintyReport) -> None:
    """Emit one row per query: query_index, feature_u, posterior_u,
    posterior_var."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("query_index,feature_u,posterior_u,posterior_var\n")
        for q in range(len(report.feature_u)):
            f.write(
                f"{q},{float(report.feature_u[q])!r},"
                f"{float(report.posterior_u[q])!r},"
                f"{float(report.posterior_var[q])!r}\n"
            )
