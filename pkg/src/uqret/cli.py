"""Command-line front door.

Subcommands map onto the four experiment types plus the toy pipeline:

* ``eval``: retrieval metrics for every (mode, L, T) combination.
* ``uncertainty``: per-query uncertainty report, one CSV per temperature.
* ``prcurve``: uncertainty-ranked rejection PR curves per (measure, K, T).
* ``shift``: in-distribution vs shifted uncertainty histograms.
* ``toy``: generate data, train the toy encoders, dump embedding stacks.

All outputs are CSV/JSON/tensor files under ``--out``; nothing is
plotted. Every file is byte-identical across runs given identical flags
and seed. Exit codes: 0 success, 2 input validation, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import toylab
from .errors import InputValidationError, NumericalError
from .reliability import (
    rejection_curve,
    shift_histograms,
    write_curve_csv,
    write_histogram_csv,
)
from .retrieval import (
    AveragingMode,
    RetrievalTask,
    evaluate,
    feature_average,
    rank_with_mode,
    write_metrics_csv,
)
from .similarity import SimilarityKind
from .tensor_io import (
    EmbeddingTensor,
    read_positives,
    read_tensor,
    write_positives,
    write_tensor,
)
from .uncertainty import (
    feature_uncertainty,
    posterior_ensemble,
    posterior_uncertainty,
    uncertainty_report,
    write_report_csv,
)

DEFAULT_TEMPERATURES = (0.001, 0.01, 0.1, 1.0, 10.0)
DEFAULT_KS = (1, 5, 10)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _fmt_t(t: float) -> str:
    return repr(float(t))


def _load_tensor(path):
    try:
        return read_tensor(path)
    except InputValidationError as exc:
        raise InputValidationError(f"{path}: {exc}") from exc


def _temps(args) -> list[float]:
    temps = args.temps if args.temps else list(DEFAULT_TEMPERATURES)
    for t in temps:
        if not t > 0:
            raise InputValidationError(f"temperature must be > 0, got {t}")
    return temps


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _det_pair(args, queries, targets):
    """Deterministic (weight-averaging) stacks: explicit dumps, or the
    main stacks when those are already single-slice."""
    if args.det_queries or args.det_targets:
        if not (args.det_queries and args.det_targets):
            raise InputValidationError(
                "--det-queries and --det-targets must be given together"
            )
        det_q = _load_tensor(args.det_queries)
        det_t = _load_tensor(args.det_targets)
        if det_q.num_models != 1 or det_t.num_models != 1:
            raise InputValidationError("deterministic dumps must have L=1")
        return det_q, det_t
    if queries.num_models == 1 and targets.num_models == 1:
        return queries, targets
    return None


def cmd_eval(args) -> None:
    kind = SimilarityKind.parse(args.similarity)
    temps = _temps(args)
    out = _out_dir(args)
    queries = _load_tensor(args.queries)
    targets = _load_tensor(args.targets)
    positives = read_positives(args.positives)
    det = _det_pair(args, queries, targets)
    directions = [("eval.csv", queries, targets, positives, det)]
    if args.positives_reverse:
        det_rev = (det[1], det[0]) if det else None
        directions.append(
            (
                "eval_reverse.csv",
                targets,
                queries,
                read_positives(args.positives_reverse),
                det_rev,
            )
        )
    max_models = min(queries.num_models, targets.num_models)
    models = args.models if args.models else [max_models]
    for n in models:
        if not 1 <= n <= max_models:
            raise InputValidationError(
                f"--models {n} outside available draws [1, {max_models}]"
            )
    if det is None:
        print("note: no deterministic dumps; weight rows omitted", file=sys.stderr)
    for filename, q, t, pos, det_qt in directions:
        records = []
        for temp in temps:
            if det_qt is not None:
                records.append(
                    evaluate(
                        RetrievalTask(det_qt[0], det_qt[1], pos, kind, temp),
                        AveragingMode.WEIGHT,
                        1,
                    )
                )
            for n in models:
                task = RetrievalTask(q, t, pos, kind, temp)
                records.append(evaluate(task, AveragingMode.FEATURE, n))
                records.append(evaluate(task, AveragingMode.POSTERIOR, n))
        write_metrics_csv(out / filename, records)


def cmd_uncertainty(args) -> None:
    kind = SimilarityKind.parse(args.similarity)
    temps = _temps(args)
    out = _out_dir(args)
    queries = _load_tensor(args.queries)
    targets_avg = feature_average(_load_tensor(args.targets))
    for temp in temps:
        report = uncertainty_report(queries, targets_avg, kind, temp)
        write_report_csv(out / f"uncertainty_T{_fmt_t(temp)}.csv", report)


def cmd_prcurve(args) -> None:
    kind = SimilarityKind.parse(args.similarity)
    temps = _temps(args)
    ks = args.ks if args.ks else list(DEFAULT_KS)
    for k in ks:
        if k < 1:
            raise InputValidationError(f"--k must be >= 1, got {k}")
    out = _out_dir(args)
    queries = _load_tensor(args.queries)
    targets = _load_tensor(args.targets)
    positives = read_positives(args.positives)
    det = _det_pair(args, queries, targets)
    if det is None:
        raise InputValidationError(
            "success flags need --det-queries/--det-targets "
            "(or single-slice main stacks)"
        )
    ranks = rank_with_mode(
        RetrievalTask(det[0], det[1], positives, kind), AveragingMode.WEIGHT, 1
    )
    u_feature = feature_uncertainty(queries)
    for k in ks:
        success = ranks.first_positive_rank <= k
        write_curve_csv(
            out / f"prcurve_feature_k{k}.csv", rejection_curve(u_feature, success)
        )
    targets_avg = feature_average(targets)
    for temp in temps:
        ens = posterior_ensemble(queries, targets_avg, kind, temp)
        u_posterior = posterior_uncertainty(ens)
        for k in ks:
            success = ranks.first_positive_rank <= k
            write_curve_csv(
                out / f"prcurve_posterior_k{k}_T{_fmt_t(temp)}.csv",
                rejection_curve(u_posterior, success),
            )


def cmd_shift(args) -> None:
    kind = SimilarityKind.parse(args.similarity)
    temps = _temps(args)
    if args.bins < 2:
        raise InputValidationError(f"--bins must be >= 2, got {args.bins}")
    out = _out_dir(args)
    q_in = _load_tensor(args.queries_in)
    t_in = _load_tensor(args.targets_in)
    q_out = _load_tensor(args.queries_out)
    t_out = _load_tensor(args.targets_out)
    write_histogram_csv(
        out / "shift_feature.csv",
        shift_histograms(
            feature_uncertainty(q_in), feature_uncertainty(q_out), args.bins
        ),
    )
    tin_avg = feature_average(t_in)
    tout_avg = feature_average(t_out)
    for temp in temps:
        u_in = posterior_uncertainty(posterior_ensemble(q_in, tin_avg, kind, temp))
        u_out = posterior_uncertainty(posterior_ensemble(q_out, tout_avg, kind, temp))
        write_histogram_csv(
            out / f"shift_posterior_T{_fmt_t(temp)}.csv",
            shift_histograms(u_in, u_out, args.bins),
        )


def _parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes"):
        return True
    if low in ("0", "false", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


# toy configuration: key -> (cast, owning dataclass). Defaults live on
# the dataclasses; a key is forwarded only when the user set it.
_TOY_KEYS = {
    "clusters": (int, "synth"),
    "zipf_exponent": (float, "synth"),
    "latent_dim": (int, "synth"),
    "dim_a": (int, "synth"),
    "dim_b": (int, "synth"),
    "latent_noise": (float, "synth"),
    "observation_noise": (float, "synth"),
    "train_pairs": (int, "synth"),
    "test_pairs": (int, "synth"),
    "hidden_dim": (int, "spec"),
    "embed_dim": (int, "spec"),
    "keep_input": (float, "spec"),
    "keep_hidden": (float, "spec"),
    "normalize": (lambda s: _parse_bool(s), "spec"),
    "activation": (str, "spec"),
    "loss_variant": (str, "train"),
    "margin": (float, "train"),
    "learning_rate": (float, "train"),
    "batch_size": (int, "train"),
    "epochs": (int, "train"),
    "models": (int, "run"),
    "shift_seed": (int, "run"),
}


def load_kv_config(path) -> dict[str, str]:
    """Flat key=value file: one pair per line, '#' comments, blanks ok."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputValidationError(
                    f"{path}:{lineno}: expected key=value, got {raw.strip()!r}"
                )
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def _resolve_toy_settings(args) -> dict[str, dict]:
    """Merge CLI flags over config-file values; unset keys fall through
    to the dataclass defaults."""
    file_values = load_kv_config(args.config) if args.config else {}
    for key in file_values:
        if key not in _TOY_KEYS and key not in ("seed", "similarity"):
            raise InputValidationError(f"unknown config key {key!r}")
    groups: dict[str, dict] = {"synth": {}, "spec": {}, "train": {}, "run": {}}
    for key, (cast, group) in _TOY_KEYS.items():
        flag_value = getattr(args, key)
        if flag_value is not None:
            groups[group][key] = flag_value
        elif key in file_values:
            try:
                groups[group][key] = cast(file_values[key])
            except ValueError:
                raise InputValidationError(
                    f"config key {key!r}: cannot parse {file_values[key]!r} "
                    f"as {cast.__name__}"
                ) from None
    if args.seed is None and "seed" in file_values:
        args.seed = int(file_values["seed"])
    if args.similarity is None and "similarity" in file_values:
        args.similarity = file_values["similarity"]
    return groups


def _params_to_obj(params) -> dict:
    return {
        "w1": params.w1.tolist(),
        "b1": params.b1.tolist(),
        "w2": params.w2.tolist(),
        "b2": params.b2.tolist(),
        "keep_input": params.keep_input,
        "keep_hidden": params.keep_hidden,
        "normalize": params.normalize,
        "activation": params.activation,
    }


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, separators=(",", ":"))
        f.write("\n")


def _write_matrix(path, matrix) -> None:
    write_tensor(path, EmbeddingTensor(np.asarray(matrix, dtype=np.float64)[None]))


def _write_labels(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("split,index,cluster\n")
        for split, index, cluster in rows:
            f.write(f"{split},{index},{cluster}\n")


def cmd_toy(args) -> None:
    groups = _resolve_toy_settings(args)
    seed = args.seed if args.seed is not None else 0
    kind = SimilarityKind.parse(args.similarity or "cosine")
    synth_cfg = toylab.SynthConfig(**groups["synth"], seed=seed)
    spec = toylab.EncoderSpec(**groups["spec"])
    run_keys = groups["run"]
    num_models = run_keys.get("models", toylab.REFERENCE_NUM_MODELS)
    train_cfg = toylab.TrainConfig(**groups["train"], kind=kind, seed=seed)
    out = _out_dir(args)

    run = toylab.run_pipeline(synth_cfg, spec, train_cfg, num_models)
    ds = run.dataset
    _write_matrix(out / "xa_train.uqet", ds.xa_train)
    _write_matrix(out / "xb_train.uqet", ds.xb_train)
    _write_matrix(out / "xa_test.uqet", ds.xa_test)
    _write_matrix(out / "xb_test.uqet", ds.xb_test)
    write_positives(out / "positives_ab.json", ds.test_positives("a->b"))
    write_positives(out / "positives_ba.json", ds.test_positives("b->a"))
    _write_labels(
        out / "labels.csv",
        [("train", i, int(c)) for i, c in enumerate(ds.labels_train)]
        + [("test", i, int(c)) for i, c in enumerate(ds.labels_test)],
    )
    _write_json(out / "params_a.json", _params_to_obj(run.params_a))
    _write_json(out / "params_b.json", _params_to_obj(run.params_b))
    with open(out / "loss_log.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("epoch,loss\n")
        for epoch, loss in enumerate(run.epoch_losses):
            f.write(f"{epoch},{loss!r}\n")
    write_tensor(out / "mc_a.uqet", run.mc_a)
    write_tensor(out / "mc_b.uqet", run.mc_b)
    write_tensor(out / "det_a.uqet", run.det_a)
    write_tensor(out / "det_b.uqet", run.det_b)

    if "shift_seed" in run_keys:
        shifted = toylab.gen_shifted(ds, run_keys["shift_seed"])
        _write_matrix(out / "shift_xa_test.uqet", shifted.xa)
        _write_matrix(out / "shift_xb_test.uqet", shifted.xb)
        write_positives(out / "shift_positives_ab.json", shifted.positives("a->b"))
        write_positives(out / "shift_positives_ba.json", shifted.positives("b->a"))
        _write_labels(
            out / "shift_labels.csv",
            [("test", i, int(c)) for i, c in enumerate(shifted.labels)],
        )
        write_tensor(
            out / "shift_mc_a.uqet",
            toylab.mc_embed(run.params_a, shifted.xa, num_models, seed, stream=2),
        )
        write_tensor(
            out / "shift_mc_b.uqet",
            toylab.mc_embed(run.params_b, shifted.xb, num_models, seed, stream=3),
        )
        write_tensor(
            out / "shift_det_a.uqet",
            toylab.deterministic_embed(run.params_a, shifted.xa),
        )
        write_tensor(
            out / "shift_det_b.uqet",
            toylab.deterministic_embed(run.params_b, shifted.xb),
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uqret",
        description="Monte-Carlo embedding uncertainty and retrieval toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, *, similarity_default="cosine"):
        p.add_argument(
            "--similarity",
            default=similarity_default,
            choices=[k.value for k in SimilarityKind],
            help="similarity function (default: %(default)s)",
        )
        p.add_argument(
            "--temp",
            dest="temps",
            type=float,
            action="append",
            metavar="T",
            help="softmax temperature, repeatable "
            f"(default: {', '.join(str(t) for t in DEFAULT_TEMPERATURES)})",
        )
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, metavar="DIR")

    p_eval = sub.add_parser("eval", help="retrieval metrics per (mode, L, T)")
    add_common(p_eval)
    p_eval.add_argument("--queries", required=True)
    p_eval.add_argument("--targets", required=True)
    p_eval.add_argument("--positives", required=True)
    p_eval.add_argument(
        "--positives-reverse",
        help="positives for the swapped direction; enables eval_reverse.csv",
    )
    p_eval.add_argument("--det-queries", help="deterministic L=1 query dump")
    p_eval.add_argument("--det-targets", help="deterministic L=1 target dump")
    p_eval.add_argument(
        "--models",
        type=int,
        action="append",
        metavar="L",
        help="number of model draws to average, repeatable (default: all)",
    )
    p_eval.set_defaults(func=cmd_eval)

    p_unc = sub.add_parser(
        "uncertainty", help="per-query uncertainty report per temperature"
    )
    add_common(p_unc)
    p_unc.add_argument("--queries", required=True)
    p_unc.add_argument("--targets", required=True)
    p_unc.set_defaults(func=cmd_uncertainty)

    p_pr = sub.add_parser(
        "prcurve", help="rejection PR curves per (measure, K, T)"
    )
    add_common(p_pr)
    p_pr.add_argument("--queries", required=True)
    p_pr.add_argument("--targets", required=True)
    p_pr.add_argument("--positives", required=True)
    p_pr.add_argument("--det-queries", help="deterministic L=1 query dump")
    p_pr.add_argument("--det-targets", help="deterministic L=1 target dump")
    p_pr.add_argument(
        "--k",
        dest="ks",
        type=int,
        action="append",
        metavar="K",
        help="success cutoff, repeatable (default: 1, 5, 10)",
    )
    p_pr.set_defaults(func=cmd_prcurve)

    p_shift = sub.add_parser(
        "shift", help="uncertainty histograms, in-distribution vs shifted"
    )
    add_common(p_shift)
    p_shift.add_argument("--queries-in", required=True)
    p_shift.add_argument("--targets-in", required=True)
    p_shift.add_argument("--queries-out", required=True)
    p_shift.add_argument("--targets-out", required=True)
    p_shift.add_argument("--bins", type=int, default=20)
    p_shift.set_defaults(func=cmd_shift)

    p_toy = sub.add_parser(
        "toy", help="run the synthetic-data training pipeline"
    )
    p_toy.add_argument("--config", help="flat key=value settings file")
    p_toy.add_argument(
        "--similarity",
        default=None,
        choices=[k.value for k in SimilarityKind],
        help="similarity function (default: cosine)",
    )
    p_toy.add_argument("--seed", type=int, default=None)
    p_toy.add_argument("--out", required=True, metavar="DIR")
    for key, (cast, _) in _TOY_KEYS.items():
        p_toy.add_argument(
            f"--{key.replace('_', '-')}", dest=key, type=cast, default=None
        )
    p_toy.set_defaults(func=cmd_toy)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except InputValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
