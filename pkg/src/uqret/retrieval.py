"""Ranking, retrieval metrics, and averaging modes for embedding stacks.

Three ways to turn a stack of L stochastic embedding draws into one
ranking:

* ``weight``: rank a single deterministic embedding (stochastic layers
  disabled under inverted scaling, i.e. the expected parameters).
* ``feature-avg``: average the L embedding slices, then rank.
* ``posterior-avg``: turn each slice's similarities into a softmax
  retrieval posterior, average the L posteriors, rank the average.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InputValidationError
from .similarity import SimilarityKind, similarity_matrix
from .tensor_io import EmbeddingTensor, PositivesMap

ROW_SUM_TOL = 1e-9


class AveragingMode(Enum):
    WEIGHT = "weight"
    FEATURE = "feature-avg"
    POSTERIOR = "posterior-avg"

    @classmethod
    def parse(cls, name: str) -> "AveragingMode":
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise InputValidationError(
                f"unknown averaging mode {name!r}; expected one of: {valid}"
            ) from None


class ModeStackMismatchError(InputValidationError):
    """Averaging mode is incompatible with the stack shapes."""


class NonNormalizedRowError(InputValidationError):
    """A probability row does not sum to 1 within tolerance."""


@dataclass(frozen=True)
class RetrievalTask:
    """Query stack, target stack, ground truth, and scoring parameters."""

    query_stack: EmbeddingTensor
    target_stack: EmbeddingTensor
    positives: PositivesMap
    kind: SimilarityKind
    temperature: float = 1.0

    def __post_init__(self):
        if self.query_stack.dim != self.target_stack.dim:
            raise InputValidationError(
                f"embedding dims differ: query {self.query_stack.dim} "
                f"vs target {self.target_stack.dim}"
            )
        if self.positives.num_queries != self.query_stack.num_samples:
            raise InputValidationError(
                f"positives cover {self.positives.num_queries} queries, "
                f"stack has {self.query_stack.num_samples}"
            )
        if self.positives.num_targets != self.target_stack.num_samples:
            raise InputValidationError(
                f"positives expect {self.positives.num_targets} targets, "
                f"stack has {self.target_stack.num_samples}"
            )
        if not self.temperature > 0:
            raise InputValidationError(
                f"temperature must be > 0, got {self.temperature}"
            )


@dataclass(frozen=True)
class RankResult:
    """Per-query target orderings (descending score) and 1-based rank of
    the best-ranked positive."""

    orderings: np.ndarray
    first_positive_rank: np.ndarray


@dataclass(frozen=True)
class RetrievalMetrics:
    mode: AveragingMode
    num_models: int
    temperature: float
    r1: float
    r5: float
    r10: float
    medr: float


def _stack_values(stack) -> np.ndarray:
    if isinstance(stack, EmbeddingTensor):
        return stack.values
    arr = np.asarray(stack, dtype=np.float64)
    if arr.ndim != 3:
        raise InputValidationError(f"expected an (L, N, D) stack, got {arr.shape}")
    return arr


def feature_average(stack) -> np.ndarray:
    """Mean embedding over the L model draws: (L, N, D) -> (N, D)."""
    return _stack_values(stack).mean(axis=0)


def retrieval_posterior(sims, temperature: float) -> np.ndarray:
    """Softmax over similarities along the last axis, treating each target
    as a candidate class.

    Computed with max-subtraction so large |s|/T never overflows. At very
    low temperatures non-maximal entries can underflow to exactly 0.0;
    mathematically every entry is positive.
    """
    if not temperature > 0:
        raise InputValidationError(f"temperature must be > 0, got {temperature}")
    s = np.asarray(sims, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise InputValidationError("similarities contain NaN or Inf")
    z = s / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def posterior_average(ensemble) -> np.ndarray:
    """Arithmetic mean of per-model posteriors: (L, Nq, Nt) -> (Nq, Nt)."""
    p = np.asarray(ensemble, dtype=np.float64)
    if p.ndim != 3:
        raise InputValidationError(f"expected (L, Nq, Nt) posteriors, got {p.shape}")
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
        worst = float(np.abs(sums - 1.0).max())
        raise NonNormalizedRowError(
            f"posterior rows must sum to 1 within {ROW_SUM_TOL}, worst |sum-1|={worst:g}"
        )
    return p.mean(axis=0)


def rank_targets(sim: np.ndarray, positives: PositivesMap) -> RankResult:
    """Sort targets by descending score; ties break to the lower index."""
    s = np.asarray(sim, dtype=np.float64)
    if s.ndim != 2:
        raise InputValidationError(f"expected an (Nq, Nt) matrix, got {s.shape}")
    nq, nt = s.shape
    if positives.num_queries != nq or positives.num_targets != nt:
        raise InputValidationError(
            f"positives shaped for ({positives.num_queries}, "
            f"{positives.num_targets}), scores are ({nq}, {nt})"
        )
    orderings = np.argsort(-s, axis=1, kind="stable")
    position = np.empty_like(orderings)
    rows = np.arange(nq)[:, None]
    position[rows, orderings] = np.arange(nt)[None, :]
    first = np.empty(nq, dtype=np.int64)
    for q in range(nq):
        first[q] = position[q, list(positives.positives[q])].min() + 1
    orderings.flags.writeable = False
    first.flags.writeable = False
    return RankResult(orderings=orderings, first_positive_rank=first)


def recall_at_k(ranks: RankResult, k: int) -> float:
    """Fraction of queries with a positive among the top K candidates."""
    if k < 1:
        raise InputValidationError(f"K must be >= 1, got {k}")
    return float(np.mean(ranks.first_positive_rank <= k))


def median_rank(ranks: RankResult) -> float:
    """Median first-positive rank; even counts use the midpoint."""
    if ranks.first_positive_rank.size == 0:
        raise InputValidationError("median rank of zero queries is undefined")
    return float(np.median(ranks.first_positive_rank))


def rank_with_mode(
    task: RetrievalTask, mode: AveragingMode, num_models: int
) -> RankResult:
    """Rank all queries under one averaging mode using the first
    ``num_models`` slices of each stack."""
    q = task.query_stack.values
    t = task.target_stack.values
    if num_models < 1:
        raise ModeStackMismatchError(f"num_models must be >= 1, got {num_models}")
    if num_models > min(q.shape[0], t.shape[0]):
        raise ModeStackMismatchError(
            f"num_models={num_models} exceeds available draws "
            f"({q.shape[0]} query, {t.shape[0]} target)"
        )
    if mode is AveragingMode.WEIGHT:
        if q.shape[0] != 1 or t.shape[0] != 1:
            raise ModeStackMismatchError(
                "weight mode expects deterministic single-slice stacks, "
                f"got L={q.shape[0]} and L={t.shape[0]}"
            )
        sim = similarity_matrix(q[0], t[0], task.kind)
        return rank_targets(sim, task.positives)
    if mode is AveragingMode.FEATURE:
        sim = similarity_matrix(
            feature_average(q[:num_models]),
            feature_average(t[:num_models]),
            task.kind,
        )
        return rank_targets(sim, task.positives)
    if mode is AveragingMode.POSTERIOR:
        targets_avg = feature_average(t[:num_models])
        per_model = np.stack(
            [
                retrieval_posterior(
                    similarity_matrix(q[l], targets_avg, task.kind),
                    task.temperature,
                )
                for l in range(num_models)
            ]
        )
        return rank_targets(posterior_average(per_model), task.positives)
    raise InputValidationError(f"unknown averaging mode {mode!r}")


def evaluate(
    task: RetrievalTask, mode: AveragingMode, num_models: int
) -> RetrievalMetrics:
    """R@1/R@5/R@10 and median rank under one averaging mode."""
    ranks = rank_with_mode(task, mode, num_models)
    return RetrievalMetrics(
        mode=mode,
        num_models=num_models,
        temperature=task.temperature,
        r1=recall_at_k(ranks, 1),
        r5=recall_at_k(ranks, 5),
        r10=recall_at_k(ranks, 10),
        medr=median_rank(ranks),
    )


def write_metrics_csv(path, records) -> None:
    """Emit metric rows as CSV: mode, L, T, r1, r5, r10, medr."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("mode,L,T,r1,r5,r10,medr\n")
        for m in records:
            f.write(
                f"{m.mode.value},{m.num_models},{m.temperature!r},"
                f"{m.r1!r},{m.r5!r},{m.r10!r},{m.medr!r}\n"
            )
