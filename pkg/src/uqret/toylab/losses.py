"""Bidirectional in-batch hinge rank losses with exact subgradients.

The batch similarity matrix holds positive-pair scores on its diagonal;
every off-diagonal entry is a negative. Each loss is applied twice, with
rows as queries and with columns as queries, and the two sums are added.

Two variants:

* max-hinge: per query, only the hardest (most violating) negative
  contributes.
* mean-hinge: per query, the hinge terms of all in-batch negatives are
  averaged.

The hinge subgradient at the kink is taken as 0, so the loss stays
descent-consistent.
"""

from __future__ import annotations

import numpy as np

from ..errors import InputValidationError


def _check_sim(sim, margin: float) -> np.ndarray:
    s = np.asarray(sim, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise InputValidationError(
            f"expected a square in-batch similarity matrix, got {s.shape}"
        )
    if s.shape[0] < 2:
        raise InputValidationError("need at least 2 pairs for in-batch negatives")
    if not margin > 0:
        raise InputValidationError(f"margin must be > 0, got {margin}")
    return s


def hinge_loss_max(sim, margin: float) -> tuple[float, np.ndarray]:
    """Hardest-negative hinge: per query, max over negatives of
    |s(q,n) - s(q,p) + margin|_+, summed over queries in both directions.

    Returns the scalar loss and its subgradient w.r.t. the similarity
    matrix. Argmax ties resolve to the lowest index.
    """
    s = _check_sim(sim, margin)
    b = s.shape[0]
    diag = np.diagonal(s).copy()
    grad = np.zeros_like(s)
    loss = 0.0

    viol = s - diag[:, None] + margin  # rows as queries
    np.fill_diagonal(viol, -np.inf)
    hardest = viol.argmax(axis=1)
    hardest_viol = viol[np.arange(b), hardest]
    active = hardest_viol > 0.0
    loss += float(hardest_viol[active].sum())
    rows = np.flatnonzero(active)
    grad[rows, hardest[rows]] += 1.0
    grad[rows, rows] -= 1.0

    viol = s - diag[None, :] + margin  # columns as queries
    np.fill_diagonal(viol, -np.inf)
    hardest = viol.argmax(axis=0)
    hardest_viol = viol[hardest, np.arange(b)]
    active = hardest_viol > 0.0
    loss += float(hardest_viol[active].sum())
    cols = np.flatnonzero(active)
    grad[hardest[cols], cols] += 1.0
    grad[cols, cols] -= 1.0

    return loss, grad


def hinge_loss_mean(sim, margin: float) -> tuple[float, np.ndarray]:
    """All-negatives hinge: per query, mean over the batch's negatives of
    |s(q,n) - s(q,p) + margin|_+, summed over queries in both directions."""
    s = _check_sim(sim, margin)
    b = s.shape[0]
    diag = np.diagonal(s).copy()
    offdiag = ~np.eye(b, dtype=bool)
    inv = 1.0 / (b - 1)
    grad = np.zeros_like(s)

    viol = s - diag[:, None] + margin
    active = (viol > 0.0) & offdiag
    loss = float(viol[active].sum()) * inv
    grad += active * inv
    np.fill_diagonal(grad, np.diagonal(grad) - active.sum(axis=1) * inv)

    viol = s - diag[None, :] + margin
    active = (viol > 0.0) & offdiag
    loss += float(viol[active].sum()) * inv
    grad += active * inv
    np.fill_diagonal(grad, np.diagonal(grad) - active.sum(axis=0) * inv)

    return loss, grad
