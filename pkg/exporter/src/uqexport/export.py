"""Monte-Carlo embedding export from PyTorch models.

The model is put in eval mode and only its dropout modules are switched
back to train mode, so stochastic masks are drawn at inference while
everything else (batch norm statistics in particular) stays frozen.
Slice l reseeds torch's generator from a stream derived from (seed, l):
the written stack depends only on (seed, num_models, data order), and a
longer export extends a shorter one slice for slice.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .writer import ExportError, ShapeDriftError, StreamingTensorWriter, write_positives

_DROPOUT_TYPES = (
    torch.nn.modules.dropout._DropoutNd,
    torch.nn.AlphaDropout,
    torch.nn.FeatureAlphaDropout,
)

# TorchScript wraps submodules in RecursiveScriptModule, which defeats
# isinstance checks; match those by their original class name instead.
_DROPOUT_CLASS_NAMES = frozenset(
    {
        "Dropout",
        "Dropout1d",
        "Dropout2d",
        "Dropout3d",
        "AlphaDropout",
        "FeatureAlphaDropout",
    }
)


def _is_dropout(module) -> bool:
    if isinstance(module, _DROPOUT_TYPES):
        return True
    return getattr(module, "original_name", None) in _DROPOUT_CLASS_NAMES


class NoStochasticLayersWarning(UserWarning):
    """Stochastic export requested from a model without dropout; every
    slice will be identical."""


@dataclass
class ExportSpec:
    """What to export and where.

    ``model`` is an ``nn.Module'' with an embedding forward; ``data`` is
    an (N, ...) array or tensor of model inputs in the row order the
    positives file refers to.
    """

    model: torch.nn.Module
    data: object
    output: Path
    modality: str = "a"
    direction: str = "a->b"
    num_models: int = 1
    seed: int = 0
    batch_size: int = 64
    stochastic: bool = True
    positives_output: Path | None = None
    det_output: Path | None = None

    def __post_init__(self):
        if self.num_models < 1:
            raise ExportError(f"num_models must be >= 1, got {self.num_models}")
        if self.seed < 0:
            raise ExportError(f"seed must be >= 0, got {self.seed}")
        if self.batch_size < 1:
            raise ExportError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class ExportResult:
    output: Path
    num_models: int
    num_rows: int
    dim: int
    stochastic_modules: int
    positives_output: Path | None = None
    det_output: Path | None = None


def find_stochastic_modules(model: torch.nn.Module) -> list:
    return [m for m in model.modules() if _is_dropout(m)]


def _set_dropout_active(model: torch.nn.Module) -> int:
    """eval() everywhere, then train() just the dropout modules."""
    model.eval()
    modules = find_stochastic_modules(model)
    for m in modules:
        m.train()
    return len(modules)


def _slice_seed(seed: int, slice_index: int) -> int:
    return int(np.random.SeedSequence([seed, slice_index]).generate_state(1)[0])


def _embed_batches(model, data, batch_size):
    n = data.shape[0]
    with torch.no_grad():
        for start in range(0, n, batch_size):
            out = model(data[start : start + batch_size])
            if not torch.is_tensor(out):
                raise ExportError("model forward must return a tensor")
            if out.ndim != 2:
                raise ShapeDriftError(
                    f"expected (batch, dim) embeddings, got shape "
                    f"{tuple(out.shape)}"
                )
            if out.shape[0] != min(batch_size, n - start):
                raise ShapeDriftError(
                    f"batch of {min(batch_size, n - start)} rows produced "
                    f"{out.shape[0]} embeddings"
                )
            yield out.detach().cpu().to(torch.float64).numpy()


def _probe_dim(model, data, batch_size) -> int:
    for batch in _embed_batches(model, data[:1], 1):
        return batch.shape[1]
    raise ExportError("no data rows to export")


def export_mc_embeddings(spec: ExportSpec) -> ExportResult:
    """Run num_models forward passes over the data and stream the
    (L, N, D) stack to disk; optionally also write the identity
    positives file and a deterministic single-slice companion."""
    data = torch.as_tensor(np.asarray(spec.data))
    if data.ndim < 2:
        raise ExportError(f"data must be (N, ...), got shape {tuple(data.shape)}")
    n = data.shape[0]

    if spec.stochastic:
        active = _set_dropout_active(spec.model)
        if active == 0:
            warnings.warn(
                "model has no dropout modules; all exported slices will be "
                "identical",
                NoStochasticLayersWarning,
                stacklevel=2,
            )
    else:
        spec.model.eval()
        active = 0

    dim = _probe_dim(spec.model, data, spec.batch_size)
    writer = StreamingTensorWriter(spec.output, spec.num_models, n, dim)
    try:
        for l in range(spec.num_models):
            torch.manual_seed(_slice_seed(spec.seed, l))
            for batch in _embed_batches(spec.model, data, spec.batch_size):
                writer.write_rows(batch)
        writer.close()
    except Exception:
        writer.abort()
        raise

    det_path = None
    if spec.det_output is not None:
        spec.model.eval()
        det_writer = StreamingTensorWriter(spec.det_output, 1, n, dim)
        try:
            for batch in _embed_batches(spec.model, data, spec.batch_size):
                det_writer.write_rows(batch)
            det_writer.close()
        except Exception:
            det_writer.abort()
            raise
        det_path = spec.det_output

    positives_path = None
    if spec.positives_output is not None:
        write_positives(
            spec.positives_output,
            spec.direction,
            n,
            [[i] for i in range(n)],
        )
        positives_path = spec.positives_output

    return ExportResult(
        output=spec.output,
        num_models=spec.num_models,
        num_rows=n,
        dim=dim,
        stochastic_modules=active,
        positives_output=positives_path,
        det_output=det_path,
    )
