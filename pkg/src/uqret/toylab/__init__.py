"""Desk-scale end-to-end lab: biased synthetic pairs, two dropout MLP
encoders trained with hinge rank losses, and MC embedding extraction.

``run_pipeline`` wires the stages together the same way the CLI does, so
library callers and the command line produce identical artifacts. The
dataclass defaults constitute the frozen reference configuration used by
the acceptance suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputValidationError
from ..tensor_io import EmbeddingTensor
from .encoder import (
    EncoderGrads,
    EncoderParams,
    ForwardCache,
    backward,
    encoder_forward,
    forward_cached,
    glorot_init,
)
from .losses import hinge_loss_max, hinge_loss_mean
from .synth import (
    PairedDataset,
    ShiftedTestSet,
    SynthConfig,
    gen_shifted,
    gen_synthetic,
    zipf_weights,
)
from .train import (
    DivergenceError,
    TrainConfig,
    TrainResult,
    deterministic_embed,
    mc_embed,
    pair_loss_and_grads,
    sim_backward,
    sim_forward,
    train,
)

_INIT_STREAM = 0x8D


@dataclass(frozen=True)
class EncoderSpec:
    """Architecture knobs shared by both modality encoders.

    Outputs stay unnormalized by default: cosine scoring is scale
    invariant anyway, and raw embeddings let the feature-uncertainty
    measure see the magnitude differences that training imprints on
    frequently- vs rarely-seen regions.
    """

    hidden_dim: int = 64
    embed_dim: int = 16
    keep_input: float = 1.0
    keep_hidden: float = 0.7
    normalize: bool = False
    activation: str = "relu"

    def __post_init__(self):
        if self.hidden_dim < 1 or self.embed_dim < 1:
            raise InputValidationError("encoder dims must be >= 1")


@dataclass
class ToyRun:
    """Everything one pipeline run produces, before any file is written."""

    dataset: PairedDataset
    params_a: EncoderParams
    params_b: EncoderParams
    epoch_losses: list[float]
    mc_a: EmbeddingTensor
    mc_b: EmbeddingTensor
    det_a: EmbeddingTensor
    det_b: EmbeddingTensor
    num_models: int


def init_encoders(
    synth_cfg: SynthConfig,
    spec: EncoderSpec,
    train_cfg: TrainConfig,
) -> tuple[EncoderParams, EncoderParams]:
    """Seeded Glorot init for both encoders."""
    rng = np.random.default_rng([train_cfg.seed, _INIT_STREAM])
    kwargs = dict(
        keep_input=spec.keep_input,
        keep_hidden=spec.keep_hidden,
        normalize=spec.normalize,
        activation=spec.activation,
    )
    params_a = glorot_init(
        synth_cfg.dim_a, spec.hidden_dim, spec.embed_dim, rng, **kwargs
    )
    params_b = glorot_init(
        synth_cfg.dim_b, spec.hidden_dim, spec.embed_dim, rng, **kwargs
    )
    return params_a, params_b


def run_pipeline(
    synth_cfg: SynthConfig,
    spec: EncoderSpec,
    train_cfg: TrainConfig,
    num_models: int,
    embed_seed: int | None = None,
) -> ToyRun:
    """Generate data, train both encoders, and extract test embeddings.

    ``embed_seed`` defaults to the training seed; the two modalities use
    distinct derived streams so their mask draws are independent.
    """
    if num_models < 1:
        raise InputValidationError(f"num_models must be >= 1, got {num_models}")
    dataset = gen_synthetic(synth_cfg)
    params_a, params_b = init_encoders(synth_cfg, spec, train_cfg)
    result = train(dataset.xa_train, dataset.xb_train, params_a, params_b, train_cfg)
    seed = train_cfg.seed if embed_seed is None else embed_seed
    return ToyRun(
        dataset=dataset,
        params_a=result.params_a,
        params_b=result.params_b,
        epoch_losses=result.epoch_losses,
        mc_a=mc_embed(result.params_a, dataset.xa_test, num_models, seed, stream=0),
        mc_b=mc_embed(result.params_b, dataset.xb_test, num_models, seed, stream=1),
        det_a=deterministic_embed(result.params_a, dataset.xa_test),
        det_b=deterministic_embed(result.params_b, dataset.xb_test),
        num_models=num_models,
    )


REFERENCE_NUM_MODELS = 50


def reference_synth_config(seed: int = 0) -> SynthConfig:
    """Frozen reference generator settings (the dataclass defaults)."""
    return SynthConfig(seed=seed)


def reference_encoder_spec() -> EncoderSpec:
    return EncoderSpec()


def reference_train_config(seed: int = 0) -> TrainConfig:
    return TrainConfig(seed=seed)
