"""Mini-batch SGD for the two encoders, and MC embedding extraction.

Plain SGD with a fixed learning rate keeps the manual-gradient core
small enough to verify against finite differences end to end. Training
is single-threaded and bit-reproducible per seed.

``mc_embed`` derives one rng stream per model draw from (seed, slice),
so slices could be computed concurrently without changing the result;
this implementation stays sequential.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputValidationError, NumericalError
from ..similarity import SimilarityKind
from ..tensor_io import EmbeddingTensor
from .encoder import EncoderGrads, EncoderParams, backward, forward_cached
from .losses import hinge_loss_max, hinge_loss_mean

_SHUFFLE_STREAM = 0x5A
_MASK_STREAM = 0x6B
_MC_STREAM = 0x7C

LOSS_VARIANTS = ("max-hinge", "mean-hinge")


class DivergenceError(NumericalError):
    """Training loss became non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    """Defaults are the frozen reference settings; mean-hinge is the
    default because the hardest-negative variant needs a warm start to
    escape collapse under plain SGD from random init."""

    loss_variant: str = "mean-hinge"
    margin: float = 0.2
    kind: SimilarityKind = SimilarityKind.COSINE
    learning_rate: float = 0.01
    batch_size: int = 50
    epochs: int = 120
    seed: int = 0

    def __post_init__(self):
        if self.loss_variant not in LOSS_VARIANTS:
            raise InputValidationError(
                f"loss_variant must be one of {LOSS_VARIANTS}, "
                f"got {self.loss_variant!r}"
            )
        if not self.margin > 0:
            raise InputValidationError(f"margin must be > 0, got {self.margin}")
        if not self.learning_rate >= 0:
            raise InputValidationError(
                f"learning_rate must be >= 0, got {self.learning_rate}"
            )
        if self.batch_size < 2:
            raise InputValidationError(
                f"batch_size must be >= 2, got {self.batch_size}"
            )
        if self.epochs < 1:
            raise InputValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.seed < 0:
            raise InputValidationError(f"seed must be >= 0, got {self.seed}")


@dataclass
class TrainResult:
    params_a: EncoderParams
    params_b: EncoderParams
    epoch_losses: list[float]


@dataclass
class _SimCache:
    kind: SimilarityKind
    qa: np.ndarray
    qb: np.ndarray
    # cosine intermediates
    ua: np.ndarray | None = None
    ub: np.ndarray | None = None
    na: np.ndarray | None = None
    nb: np.ndarray | None = None
    # negative-euclidean intermediates
    diff: np.ndarray | None = None
    dist: np.ndarray | None = None


def sim_forward(
    qa: np.ndarray, qb: np.ndarray, kind: SimilarityKind
) -> tuple[np.ndarray, _SimCache]:
    """In-batch similarity with the intermediates its backward needs."""
    cache = _SimCache(kind=kind, qa=qa, qb=qb)
    if kind is SimilarityKind.DOT:
        return qa @ qb.T, cache
    if kind is SimilarityKind.COSINE:
        na = np.linalg.norm(qa, axis=1, keepdims=True)
        nb = np.linalg.norm(qb, axis=1, keepdims=True)
        if np.any(na == 0.0) or np.any(nb == 0.0):
            raise InputValidationError("cosine similarity of a zero embedding")
        cache.na, cache.nb = na, nb
        cache.ua, cache.ub = qa / na, qb / nb
        return cache.ua @ cache.ub.T, cache
    if kind is SimilarityKind.NEGL2:
        diff = qa[:, None, :] - qb[None, :, :]
        dist = np.sqrt((diff * diff).sum(axis=-1))
        cache.diff, cache.dist = diff, dist
        return -dist, cache
    raise InputValidationError(f"unknown similarity kind {kind!r}")


def sim_backward(
    cache: _SimCache, d_sim: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """d(loss)/d(qa), d(loss)/d(qb) given d(loss)/d(similarity)."""
    if cache.kind is SimilarityKind.DOT:
        return d_sim @ cache.qb, d_sim.T @ cache.qa
    if cache.kind is SimilarityKind.COSINE:
        d_ua = d_sim @ cache.ub
        d_ub = d_sim.T @ cache.ua
        d_qa = (d_ua - (d_ua * cache.ua).sum(axis=1, keepdims=True) * cache.ua)
        d_qa /= cache.na
        d_qb = (d_ub - (d_ub * cache.ub).sum(axis=1, keepdims=True) * cache.ub)
        d_qb /= cache.nb
        return d_qa, d_qb
    if cache.kind is SimilarityKind.NEGL2:
        # s = -dist: ds/dqa_i = -(qa_i - qb_j)/dist; zero-distance pairs
        # have no usable direction, their contribution is dropped.
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(cache.dist > 0.0, d_sim / cache.dist, 0.0)
        weighted = scale[:, :, None] * cache.diff
        return -weighted.sum(axis=1), weighted.sum(axis=0)
    raise InputValidationError(f"unknown similarity kind {cache.kind!r}")


def pair_loss_and_grads(
    params_a: EncoderParams,
    params_b: EncoderParams,
    xa: np.ndarray,
    xb: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator | None,
) -> tuple[float, EncoderGrads, EncoderGrads]:
    """One full forward/backward over a batch of aligned pairs."""
    cache_a = forward_cached(params_a, xa, rng)
    cache_b = forward_cached(params_b, xb, rng)
    sim, sim_cache = sim_forward(cache_a.output, cache_b.output, cfg.kind)
    if not np.all(np.isfinite(sim)):
        raise DivergenceError(
            "similarities became non-finite; reduce the learning rate"
        )
    loss_fn = hinge_loss_max if cfg.loss_variant == "max-hinge" else hinge_loss_mean
    loss, d_sim = loss_fn(sim, cfg.margin)
    d_qa, d_qb = sim_backward(sim_cache, d_sim)
    return loss, backward(params_a, cache_a, d_qa), backward(params_b, cache_b, d_qb)


def _sgd_step(params: EncoderParams, grads: EncoderGrads, lr: float) -> None:
    params.w1 -= lr * grads.w1
    params.b1 -= lr * grads.b1
    params.w2 -= lr * grads.w2
    params.b2 -= lr * grads.b2


def train(
    xa: np.ndarray,
    xb: np.ndarray,
    params_a: EncoderParams,
    params_b: EncoderParams,
    cfg: TrainConfig,
) -> TrainResult:
    """Joint mini-batch SGD over both encoders.

    Inputs are row-aligned pairs. The final partial batch is kept when it
    still holds >= 2 pairs and dropped otherwise. Logged losses are the
    epoch mean of per-pair batch losses.
    """
    xa = np.asarray(xa, dtype=np.float64)
    xb = np.asarray(xb, dtype=np.float64)
    if xa.shape[0] != xb.shape[0]:
        raise InputValidationError("modalities must hold the same number of pairs")
    n = xa.shape[0]
    if n < 2:
        raise InputValidationError("need at least 2 pairs to form negatives")
    params_a = params_a.copy()
    params_b = params_b.copy()
    shuffle_rng = np.random.default_rng([cfg.seed, _SHUFFLE_STREAM])
    mask_rng = np.random.default_rng([cfg.seed, _MASK_STREAM])
    epoch_losses = []
    for _ in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            if idx.size < 2:
                continue
            loss, g_a, g_b = pair_loss_and_grads(
                params_a, params_b, xa[idx], xb[idx], cfg, mask_rng
            )
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"training loss became non-finite ({loss!r}); "
                    "reduce the learning rate"
                )
            _sgd_step(params_a, g_a, cfg.learning_rate)
            _sgd_step(params_b, g_b, cfg.learning_rate)
            batch_losses.append(loss / idx.size)
        epoch_losses.append(float(np.mean(batch_losses)))
    return TrainResult(
        params_a=params_a, params_b=params_b, epoch_losses=epoch_losses
    )


def mc_embed(
    params: EncoderParams, x: np.ndarray, num_models: int, seed: int, stream: int = 0
) -> EmbeddingTensor:
    """Stack of ``num_models`` stochastic embeddings of every row.

    Slice l draws its masks from an rng stream derived from
    (seed, stream, l), so the stack depends only on those values and a
    longer stack extends a shorter one slice for slice. Give stacks that
    share a seed (e.g. the two modalities) distinct ``stream`` tags.
    """
    if num_models < 1:
        raise InputValidationError(f"num_models must be >= 1, got {num_models}")
    if seed < 0 or stream < 0:
        raise InputValidationError("seed and stream must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((num_models, x.shape[0], params.d_out))
    for l in range(num_models):
        rng = np.random.default_rng([seed, _MC_STREAM, stream, l])
        out[l] = forward_cached(params, x, rng).output
    return EmbeddingTensor(out)


def deterministic_embed(params: EncoderParams, x: np.ndarray) -> EmbeddingTensor:
    """Single-slice stack from the deterministic (expected-parameter) pass."""
    x = np.asarray(x, dtype=np.float64)
    return EmbeddingTensor(forward_cached(params, x, None).output[None, :, :])
