"""Uncertainty-ranked rejection analysis and dataset-shift diagnostics.

Rejecting the most uncertain queries trades recall (fraction of queries
retained) against precision (metric among the retained). Sweeping the
rejection threshold over all Nq attainable levels yields a PR curve; its
mean precision is the AUPRC, and the unrejected success rate is the
chance level a random-rejection baseline would hold flat.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InputValidationError


class DegenerateRangeWarning(UserWarning):
    """All pooled values are equal; the histogram collapses to one bin."""


@dataclass(frozen=True)
class RejectionCurve:
    """PR points ordered by retained count, plus AUPRC and chance level.

    ``recalls[i]`` is (i+1)/Nq and ``precisions[i]`` the success rate
    among the i+1 most certain queries; the final point reproduces the
    unrejected metric exactly.
    """

    recalls: np.ndarray
    precisions: np.ndarray
    auprc: float
    chance: float


@dataclass(frozen=True)
class ShiftHistogram:
    """Histograms of an uncertainty measure over shared bin edges."""

    edges: np.ndarray
    counts_in: np.ndarray
    counts_out: np.ndarray
    mean_in: float
    mean_out: float
    mean_diff: float


def rejection_curve(uncertainty, success) -> RejectionCurve:
    """Sweep rejection thresholds from strictest to none.

    Queries are retained in order of ascending uncertainty (ties break to
    the lower query index, keeping curves deterministic). AUPRC is the
    mean of the Nq precisions, a rectangle rule exact for the discrete
    sweep.
    """
    u = np.asarray(uncertainty, dtype=np.float64)
    s = np.asarray(success, dtype=bool)
    if u.ndim != 1 or s.ndim != 1:
        raise InputValidationError("uncertainty and success must be 1-d")
    if u.shape != s.shape:
        raise InputValidationError(
            f"length mismatch: {u.shape[0]} uncertainties, {s.shape[0]} successes"
        )
    if u.size == 0:
        raise InputValidationError("rejection curve of zero queries is undefined")
    if not np.all(np.isfinite(u)):
        raise InputValidationError("uncertainties contain NaN or Inf")
    order = np.argsort(u, kind="stable")
    retained = np.arange(1, u.size + 1, dtype=np.float64)
    hits = np.cumsum(s[order])
    precisions = hits / retained
    recalls = retained / u.size
    for arr in (recalls, precisions):
        arr.flags.writeable = False
    return RejectionCurve(
        recalls=recalls,
        precisions=precisions,
        auprc=float(precisions.mean()),
        chance=float(s.mean()),
    )


def auprc_gap(curve: RejectionCurve) -> float:
    """AUPRC minus chance: how much rejection ordering beats random."""
    return curve.auprc - curve.chance


def shift_histograms(u_in, u_out, bins: int) -> ShiftHistogram:
    """Compare an uncertainty measure on in-distribution vs shifted data.

    Both sets are binned over shared edges spanning the pooled range. A
    degenerate pooled range (all values equal) falls back to a single
    bin with a warning.
    """
    a = np.asarray(u_in, dtype=np.float64)
    b = np.asarray(u_out, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise InputValidationError("both uncertainty sets must be non-empty")
    if bins < 2:
        raise InputValidationError(f"bins must be >= 2, got {bins}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InputValidationError("uncertainties contain NaN or Inf")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if lo == hi:
        warnings.warn(
            "pooled uncertainty range is degenerate; using a single bin",
            DegenerateRangeWarning,
            stacklevel=2,
        )
        edges = np.array([lo, hi])
        counts_in = np.array([a.size])
        counts_out = np.array([b.size])
    else:
        edges = np.linspace(lo, hi, bins + 1)
        counts_in, _ = np.histogram(a, bins=edges)
        counts_out, _ = np.histogram(b, bins=edges)
    return ShiftHistogram(
        edges=edges,
        counts_in=counts_in,
        counts_out=counts_out,
        mean_in=float(a.mean()),
        mean_out=float(b.mean()),
        mean_diff=float(b.mean() - a.mean()),
    )


def write_curve_csv(path, curve: RejectionCurve) -> None:
    """Rows of retained, recall, precision; trailer rows for auprc and
    chance."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("retained,recall,precision\n")
        for i in range(curve.recalls.size):
            f.write(
                f"{i + 1},{float(curve.recalls[i])!r},{float(curve.precisions[i])!r}\n"
            )
        f.write(f"auprc,{curve.auprc!r}\n")
        f.write(f"chance,{curve.chance!r}\n")


def write_histogram_csv(path, hist: ShiftHistogram) -> None:
    """Rows of bin_lo, bin_hi, count_in, count_out; trailer rows for the
    means and their difference."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("bin_lo,bin_hi,count_in,count_out\n")
        for i in range(hist.counts_in.size):
            f.write(
                f"{float(hist.edges[i])!r},{float(hist.edges[i + 1])!r},"
                f"{int(hist.counts_in[i])},{int(hist.counts_out[i])}\n"
            )
        f.write(f"mean_in,{hist.mean_in!r}\n")
        f.write(f"mean_out,{hist.mean_out!r}\n")
        f.write(f"mean_diff,{hist.mean_diff!r}\n")
