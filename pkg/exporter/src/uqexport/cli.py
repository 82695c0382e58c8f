"""Standalone export script.

Loads a serialized model (TorchScript or a pickled nn.Module), runs L
stochastic forward passes over an .npy input array, and writes the
embedding stack plus an identity positives file.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import torch

from .export import ExportSpec, export_mc_embeddings
from .writer import ExportError


def load_model(path: Path) -> torch.nn.Module:
    try:
        return torch.jit.load(str(path), map_location="cpu")
    except RuntimeError:
        model = torch.load(str(path), map_location="cpu", weights_only=False)
        if not isinstance(model, torch.nn.Module):
            raise ExportError(f"{path} did not contain an nn.Module")
        return model


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uqexport",
        description="export Monte-Carlo embedding stacks from a PyTorch model",
    )
    parser.add_argument("--model", required=True, help="TorchScript or pickled module")
    parser.add_argument("--input", required=True, help=".npy array of model inputs")
    parser.add_argument("--output", required=True, help="stack file to write")
    parser.add_argument("--modality", default="a")
    parser.add_argument("--direction", default="a->b")
    parser.add_argument("--models", type=int, default=1, metavar="L")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="disable stochastic layers for the main export",
    )
    parser.add_argument("--positives-out", help="identity positives file to write")
    parser.add_argument(
        "--det-output",
        help="also write a deterministic L=1 companion stack",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = ExportSpec(
            model=load_model(Path(args.model)),
            data=np.load(args.input),
            output=Path(args.output),
            modality=args.modality,
            direction=args.direction,
            num_models=args.models,
            seed=args.seed,
            batch_size=args.batch_size,
            stochastic=not args.deterministic,
            positives_output=Path(args.positives_out) if args.positives_out else None,
            det_output=Path(args.det_output) if args.det_output else None,
        )
        result = export_mc_embeddings(spec)
    except (ExportError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"wrote {result.output}: L={result.num_models} N={result.num_rows} "
        f"D={result.dim} ({result.stochastic_modules} stochastic modules)"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
