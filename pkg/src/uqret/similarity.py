"""Similarity matrices between query rows and target rows.

Three similarity functions are supported: cosine, inner product, and
negative Euclidean distance. Galleries at this artifact's scale are
scored exhaustively; there is no approximate indexing.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import InputValidationError


class DimensionMismatchError(InputValidationError):
    pass


class ZeroNormRowError(InputValidationError):
    """Cosine similarity of a zero vector is undefined; fail loudly."""


class SimilarityKind(Enum):
    COSINE = "cosine"
    DOT = "dot"
    NEGL2 = "negl2"

    @classmethod
    def parse(cls, name: str) -> "SimilarityKind":
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise InputValidationError(
                f"unknown similarity kind {name!r}; expected one of: {valid}"
            ) from None


def similarity_matrix(
    queries: np.ndarray, targets: np.ndarray, kind: SimilarityKind
) -> np.ndarray:
    """Score every query row against every target row.

    Returns an (Nq, Nt) float64 matrix. Cosine entries are clamped to
    [-1, 1] after computation: rounding can push them past the bound by
    ~1e-16, and downstream posterior bounds assume the exact range.
    """
    q = np.asarray(queries, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if q.ndim != 2 or t.ndim != 2:
        raise DimensionMismatchError(
            f"expected 2-d matrices, got shapes {q.shape} and {t.shape}"
        )
    if q.shape[1] != t.shape[1]:
        raise DimensionMismatchError(
            f"embedding dims differ: {q.shape[1]} vs {t.shape[1]}"
        )
    if kind is SimilarityKind.COSINE:
        qn = np.linalg.norm(q, axis=1)
        tn = np.linalg.norm(t, axis=1)
        if np.any(qn == 0.0) or np.any(tn == 0.0):
            raise ZeroNormRowError("cosine similarity is undefined for a zero row")
        sim = (q / qn[:, None]) @ (t / tn[:, None]).T
        return np.clip(sim, -1.0, 1.0)
    if kind is SimilarityKind.DOT:
        return q @ t.T
    if kind is SimilarityKind.NEGL2:
        # Gram expansion; the clamp absorbs the tiny negative residues
        # cancellation can leave for near-coincident rows.
        sq = (
            np.sum(q * q, axis=1)[:, None]
            + np.sum(t * t, axis=1)[None, :]
            - 2.0 * (q @ t.T)
        )
        return -np.sqrt(np.maximum(sq, 0.0))
    raise InputValidationError(f"unknown similarity kind {kind!r}")
