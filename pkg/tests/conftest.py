import time
from dataclasses import dataclass

import pytest

from uqret import toylab
from uqret.tensor_io import EmbeddingTensor

REFERENCE_SEEDS = tuple(range(10))
SHIFT_ANCHOR_OFFSET = 1000


@dataclass
class ReferenceBundle:
    """One frozen-config pipeline run plus its shifted-world embeddings."""

    seed: int
    run: toylab.ToyRun
    shifted: toylab.ShiftedTestSet
    shift_mc_a: EmbeddingTensor
    shift_mc_b: EmbeddingTensor


def build_reference_bundle(seed: int) -> ReferenceBundle:
    run = toylab.run_pipeline(
        toylab.reference_synth_config(seed),
        toylab.reference_encoder_spec(),
        toylab.reference_train_config(seed),
        toylab.REFERENCE_NUM_MODELS,
    )
    shifted = toylab.gen_shifted(run.dataset, anchor_seed=seed + SHIFT_ANCHOR_OFFSET)
    return ReferenceBundle(
        seed=seed,
        run=run,
        shifted=shifted,
        shift_mc_a=toylab.mc_embed(
            run.params_a, shifted.xa, run.num_models, seed, stream=2
        ),
        shift_mc_b=toylab.mc_embed(
            run.params_b, shifted.xb, run.num_models, seed, stream=3
        ),
    )


@pytest.fixture(scope="session")
def reference_runs():
    """The ten frozen-seed reference runs plus their wall-clock cost."""
    start = time.perf_counter()
    bundles = [build_reference_bundle(seed) for seed in REFERENCE_SEEDS]
    elapsed = time.perf_counter() - start
    return bundles, elapsed
