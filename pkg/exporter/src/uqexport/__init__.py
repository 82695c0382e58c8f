"""Export Monte-Carlo embedding stacks from PyTorch models.

Runs L forward passes with dropout forced active at inference and
streams the results to the UQET stack format the uncertainty toolkit
consumes, together with a positives file in matching row order. No
metrics or uncertainties are computed here.
"""

from .export import (
    ExportResult,
    ExportSpec,
    NoStochasticLayersWarning,
    export_mc_embeddings,
    find_stochastic_modules,
)
from .writer import ExportError, ShapeDriftError, StreamingTensorWriter, write_positives

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "ExportResult",
    "ExportSpec",
    "NoStochasticLayersWarning",
    "ShapeDriftError",
    "StreamingTensorWriter",
    "export_mc_embeddings",
    "find_stochastic_modules",
    "write_positives",
]
