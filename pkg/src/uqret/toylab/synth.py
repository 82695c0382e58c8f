"""Synthetic paired two-modality data with a deliberately biased cluster mix.

Pairs are generated from a shared latent point: cluster c is drawn from
the (by default Zipf-weighted, so head-heavy) cluster distribution, the
latent z is the cluster anchor plus isotropic noise, and each modality
observes z through its own fixed random mixing matrix plus observation
noise. Row i of modality A and row i of modality B form a positive pair.

The head-heavy mix is the point: a handful of clusters receive most of
the pairs, so encoders see many near-duplicate samples from them, while
tail clusters stay rare.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InputValidationError
from ..tensor_io import PositivesMap

# Distinct sub-stream tags so independent draws never share an rng stream.
_ANCHOR_STREAM = 0xA1
_MIXING_STREAM = 0xB2
_TRAIN_STREAM = 0xC3
_TEST_STREAM = 0xD4


def zipf_weights(clusters: int, exponent: float = 1.0) -> tuple[float, ...]:
    """Normalized 1/rank^exponent cluster weights, heaviest first."""
    if clusters < 1:
        raise InputValidationError(f"clusters must be >= 1, got {clusters}")
    raw = [1.0 / (k + 1) ** exponent for k in range(clusters)]
    total = math.fsum(raw)
    return tuple(w / total for w in raw)


@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the synthetic pair generator.

    ``weights`` overrides the Zipf default when given; it must be a
    simplex over ``clusters`` entries. The default exponent 1.5 puts
    half the mass on the head cluster, which is what makes the
    familiar-but-crowded uncertainty split measurable at this scale.
    """

    clusters: int = 10
    zipf_exponent: float = 1.5
    weights: tuple[float, ...] | None = None
    latent_dim: int = 4
    dim_a: int = 12
    dim_b: int = 10
    latent_noise: float = 0.07
    observation_noise: float = 0.02
    train_pairs: int = 500
    test_pairs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.clusters < 1:
            raise InputValidationError(f"clusters must be >= 1, got {self.clusters}")
        for name in ("latent_dim", "dim_a", "dim_b", "train_pairs", "test_pairs"):
            if getattr(self, name) < 1:
                raise InputValidationError(f"{name} must be >= 1")
        if self.latent_noise < 0 or self.observation_noise < 0:
            raise InputValidationError("noise levels must be >= 0")
        if self.seed < 0:
            raise InputValidationError(f"seed must be >= 0, got {self.seed}")
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if len(w) != self.clusters:
                raise InputValidationError(
                    f"{len(w)} weights for {self.clusters} clusters"
                )
            if any(x <= 0 for x in w):
                raise InputValidationError("cluster weights must all be > 0")
            total = math.fsum(w)
            if abs(total - 1.0) > 1e-9:
                raise InputValidationError(
                    f"cluster weights must sum to 1, got {total!r}"
                )
            # renormalize exactly so rng.choice never sees drift
            object.__setattr__(self, "weights", tuple(x / total for x in w))

    def cluster_weights(self) -> np.ndarray:
        if self.weights is not None:
            return np.asarray(self.weights, dtype=np.float64)
        return np.asarray(zipf_weights(self.clusters, self.zipf_exponent))


@dataclass(frozen=True)
class PairedDataset:
    """Generated pairs plus the generative pieces needed for shifted sets."""

    xa_train: np.ndarray
    xb_train: np.ndarray
    xa_test: np.ndarray
    xb_test: np.ndarray
    labels_train: np.ndarray
    labels_test: np.ndarray
    anchors: np.ndarray
    mixing_a: np.ndarray
    mixing_b: np.ndarray
    config: SynthConfig

    def test_positives(self, direction: str = "a->b") -> PositivesMap:
        """Identity pairing of the test split: query i matches target i."""
        n = self.xa_test.shape[0]
        return PositivesMap(
            direction=direction,
            num_targets=n,
            positives=tuple((i,) for i in range(n)),
        )


def _unit_anchors(rng: np.random.Generator, clusters: int, dim: int) -> np.ndarray:
    raw = rng.standard_normal((clusters, dim))
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return raw / norms


def _draw_split(
    cfg: SynthConfig,
    anchors: np.ndarray,
    mixing_a: np.ndarray,
    mixing_b: np.ndarray,
    n: int,
    rng: np.random.Generator,
):
    weights = cfg.cluster_weights()
    labels = rng.choice(cfg.clusters, size=n, p=weights)
    z = anchors[labels]
    if cfg.latent_noise > 0:
        z = z + cfg.latent_noise * rng.standard_normal((n, cfg.latent_dim))
    xa = z @ mixing_a.T
    xb = z @ mixing_b.T
    if cfg.observation_noise > 0:
        xa = xa + cfg.observation_noise * rng.standard_normal(xa.shape)
        xb = xb + cfg.observation_noise * rng.standard_normal(xb.shape)
    return xa, xb, labels


def gen_synthetic(cfg: SynthConfig) -> PairedDataset:
    """Deterministic per seed: anchors, mixing matrices, and both splits
    each draw from their own derived rng stream."""
    anchors = _unit_anchors(
        np.random.default_rng([cfg.seed, _ANCHOR_STREAM]),
        cfg.clusters,
        cfg.latent_dim,
    )
    mix_rng = np.random.default_rng([cfg.seed, _MIXING_STREAM])
    scale = 1.0 / math.sqrt(cfg.latent_dim)
    mixing_a = scale * mix_rng.standard_normal((cfg.dim_a, cfg.latent_dim))
    mixing_b = scale * mix_rng.standard_normal((cfg.dim_b, cfg.latent_dim))
    xa_tr, xb_tr, y_tr = _draw_split(
        cfg, anchors, mixing_a, mixing_b, cfg.train_pairs,
        np.random.default_rng([cfg.seed, _TRAIN_STREAM]),
    )
    xa_te, xb_te, y_te = _draw_split(
        cfg, anchors, mixing_a, mixing_b, cfg.test_pairs,
        np.random.default_rng([cfg.seed, _TEST_STREAM]),
    )
    return PairedDataset(
        xa_train=xa_tr, xb_train=xb_tr,
        xa_test=xa_te, xb_test=xb_te,
        labels_train=y_tr, labels_test=y_te,
        anchors=anchors, mixing_a=mixing_a, mixing_b=mixing_b,
        config=cfg,
    )


@dataclass(frozen=True)
class ShiftedTestSet:
    """A test split drawn around freshly sampled anchors, observed
    through the original mixing matrices."""

    xa: np.ndarray
    xb: np.ndarray
    labels: np.ndarray
    anchors: np.ndarray

    def positives(self, direction: str = "a->b") -> PositivesMap:
        n = self.xa.shape[0]
        return PositivesMap(
            direction=direction,
            num_targets=n,
            positives=tuple((i,) for i in range(n)),
        )


def gen_shifted(dataset: PairedDataset, anchor_seed: int) -> ShiftedTestSet:
    """Shifted counterpart of a dataset's test split: new cluster anchor
    means, same cluster mix, same observation process."""
    if anchor_seed < 0:
        raise InputValidationError(f"anchor_seed must be >= 0, got {anchor_seed}")
    cfg = dataset.config
    anchors = _unit_anchors(
        np.random.default_rng([anchor_seed, _ANCHOR_STREAM]),
        cfg.clusters,
        cfg.latent_dim,
    )
    xa, xb, labels = _draw_split(
        cfg, anchors, dataset.mixing_a, dataset.mixing_b, cfg.test_pairs,
        np.random.default_rng([anchor_seed, _TEST_STREAM]),
    )
    return ShiftedTestSet(xa=xa, xb=xb, labels=labels, anchors=anchors)
