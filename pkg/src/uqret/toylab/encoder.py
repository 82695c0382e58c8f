"""Single-hidden-layer MLP encoder with inverted dropout.

Stochastic mode draws Bernoulli keep-masks per sample and divides the
kept activations by the keep probability, so the deterministic pass
(no masking at all) equals the mask expectation for linear layers; on
the hidden nonlinearity this equality is the usual approximation.
Deterministic mode therefore plays the role of inference with expected
parameters.

Forward caches carry everything the manual backward pass needs; all
gradients are exact for the sampled masks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InputValidationError

_ACTIVATIONS = ("relu", "identity")


@dataclass
class EncoderParams:
    """Weights, biases, dropout keep probabilities, and output options."""

    w1: np.ndarray  # (hidden, d_in)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (d_out, hidden)
    b2: np.ndarray  # (d_out,)
    keep_input: float = 1.0
    keep_hidden: float = 0.7
    normalize: bool = False
    activation: str = "relu"

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        if self.w1.ndim != 2 or self.w2.ndim != 2:
            raise InputValidationError("weight matrices must be 2-d")
        hidden, _ = self.w1.shape
        if self.b1.shape != (hidden,):
            raise InputValidationError("b1 shape does not match w1")
        if self.w2.shape[1] != hidden:
            raise InputValidationError("w2 input dim does not match hidden dim")
        if self.b2.shape != (self.w2.shape[0],):
            raise InputValidationError("b2 shape does not match w2")
        for arr in (self.w1, self.b1, self.w2, self.b2):
            if not np.all(np.isfinite(arr)):
                raise InputValidationError("encoder parameters must be finite")
        for name in ("keep_input", "keep_hidden"):
            keep = getattr(self, name)
            if not 0.0 < keep <= 1.0:
                raise InputValidationError(f"{name} must lie in (0, 1], got {keep}")
        if self.activation not in _ACTIVATIONS:
            raise InputValidationError(
                f"activation must be one of {_ACTIVATIONS}, got {self.activation!r}"
            )

    @property
    def d_in(self) -> int:
        return self.w1.shape[1]

    @property
    def d_out(self) -> int:
        return self.w2.shape[0]

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            w1=self.w1.copy(), b1=self.b1.copy(),
            w2=self.w2.copy(), b2=self.b2.copy(),
            keep_input=self.keep_input, keep_hidden=self.keep_hidden,
            normalize=self.normalize, activation=self.activation,
        )


@dataclass
class ForwardCache:
    """Intermediates of one forward pass, kept for backprop."""

    x_dropped: np.ndarray
    pre: np.ndarray
    hidden_dropped: np.ndarray
    mask_hidden: np.ndarray | None
    raw: np.ndarray
    norms: np.ndarray | None
    output: np.ndarray


@dataclass
class EncoderGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def glorot_init(
    d_in: int,
    hidden: int,
    d_out: int,
    rng: np.random.Generator,
    *,
    keep_input: float = 1.0,
    keep_hidden: float = 0.7,
    normalize: bool = False,
    activation: str = "relu",
) -> EncoderParams:
    """Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    lim1 = math.sqrt(6.0 / (d_in + hidden))
    lim2 = math.sqrt(6.0 / (hidden + d_out))
    return EncoderParams(
        w1=rng.uniform(-lim1, lim1, size=(hidden, d_in)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-lim2, lim2, size=(d_out, hidden)),
        b2=np.zeros(d_out),
        keep_input=keep_input,
        keep_hidden=keep_hidden,
        normalize=normalize,
        activation=activation,
    )


def forward_cached(
    params: EncoderParams, x: np.ndarray, rng: np.random.Generator | None = None
) -> ForwardCache:
    """Forward pass over a batch of rows; ``rng=None`` is deterministic."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != params.d_in:
        raise InputValidationError(
            f"input dim {x.shape[1]} does not match encoder dim {params.d_in}"
        )
    if rng is not None:
        mask_in = (rng.random(x.shape) < params.keep_input).astype(np.float64)
        x_dropped = x * mask_in / params.keep_input
    else:
        x_dropped = x
    pre = x_dropped @ params.w1.T + params.b1
    hidden = np.maximum(pre, 0.0) if params.activation == "relu" else pre
    if rng is not None:
        mask_hidden = (rng.random(hidden.shape) < params.keep_hidden).astype(
            np.float64
        )
        hidden_dropped = hidden * mask_hidden / params.keep_hidden
    else:
        mask_hidden = None
        hidden_dropped = hidden
    raw = hidden_dropped @ params.w2.T + params.b2
    if params.normalize:
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise InputValidationError(
                "cannot L2-normalize a zero embedding; adjust init or inputs"
            )
        output = raw / norms
    else:
        norms = None
        output = raw
    return ForwardCache(
        x_dropped=x_dropped,
        pre=pre,
        hidden_dropped=hidden_dropped,
        mask_hidden=mask_hidden,
        raw=raw,
        norms=norms,
        output=output,
    )


def encoder_forward(
    params: EncoderParams, x: np.ndarray, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Embed a row or a batch of rows.

    With an rng, dropout masks are sampled (one stochastic model draw);
    without one, the pass is deterministic and reproducible.
    """
    out = forward_cached(params, x, rng).output
    return out[0] if np.asarray(x).ndim == 1 else out


def backward(
    params: EncoderParams, cache: ForwardCache, d_output: np.ndarray
) -> EncoderGrads:
    """Exact gradients w.r.t. all parameters given d(loss)/d(output)."""
    d_out = np.asarray(d_output, dtype=np.float64)
    if params.normalize:
        # y = raw/|raw|: dL/draw = (dL/dy - (dL/dy . y) y)/|raw|
        inner = (d_out * cache.output).sum(axis=1, keepdims=True)
        d_raw = (d_out - inner * cache.output) / cache.norms
    else:
        d_raw = d_out
    g_w2 = d_raw.T @ cache.hidden_dropped
    g_b2 = d_raw.sum(axis=0)
    d_hidden_dropped = d_raw @ params.w2
    if cache.mask_hidden is not None:
        d_hidden = d_hidden_dropped * cache.mask_hidden / params.keep_hidden
    else:
        d_hidden = d_hidden_dropped
    if params.activation == "relu":
        d_pre = d_hidden * (cache.pre > 0.0)
    else:
        d_pre = d_hidden
    g_w1 = d_pre.T @ cache.x_dropped
    g_b1 = d_pre.sum(axis=0)
    return EncoderGrads(w1=g_w1, b1=g_b1, w2=g_w2, b2=g_b2)
