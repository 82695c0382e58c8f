"""Command-line behavior: file outputs, equivalence with the library,
config handling, and exit codes."""

import csv
import json

import numpy as np
import pytest

from uqret import cli
from uqret.similarity import SimilarityKind
from uqret.tensor_io import EmbeddingTensor, read_positives, read_tensor, write_tensor
from uqret.uncertainty import (
    feature_uncertainty,
    posterior_ensemble,
    posterior_uncertainty,
)

TINY_TOY_FLAGS = [
    "--clusters", "3",
    "--latent-dim", "3",
    "--train-pairs", "40",
    "--test-pairs", "16",
    "--hidden-dim", "16",
    "--embed-dim", "8",
    "--epochs", "3",
    "--models", "4",
    "--seed", "11",
]


def run_cli(*argv) -> int:
    return cli.main(list(argv))


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


@pytest.fixture(scope="module")
def toy_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    code = run_cli("toy", "--out", str(out), *TINY_TOY_FLAGS)
    assert code == 0
    return out


class TestToyCommand:
    EXPECTED = [
        "xa_train.uqet", "xb_train.uqet", "xa_test.uqet", "xb_test.uqet",
        "positives_ab.json", "positives_ba.json", "labels.csv",
        "params_a.json", "params_b.json", "loss_log.csv",
        "mc_a.uqet", "mc_b.uqet", "det_a.uqet", "det_b.uqet",
    ]

    def test_emits_expected_files(self, toy_dir):
        for name in self.EXPECTED:
            assert (toy_dir / name).exists(), name

    def test_emitted_tensors_validate(self, toy_dir):
        mc = read_tensor(toy_dir / "mc_a.uqet")
        assert mc.num_models == 4
        assert mc.num_samples == 16
        assert read_tensor(toy_dir / "det_a.uqet").num_models == 1
        assert read_tensor(toy_dir / "xa_train.uqet").values.shape == (1, 40, 12)

    def test_positives_validate(self, toy_dir):
        pos = read_positives(toy_dir / "positives_ab.json")
        assert pos.num_queries == pos.num_targets == 16

    def test_labels_cover_both_splits(self, toy_dir):
        rows = read_rows(toy_dir / "labels.csv")
        assert rows[0] == ["split", "index", "cluster"]
        splits = [r[0] for r in rows[1:]]
        assert splits.count("train") == 40
        assert splits.count("test") == 16

    def test_params_json_parse(self, toy_dir):
        obj = json.loads((toy_dir / "params_a.json").read_text())
        assert len(obj["w1"]) == 16
        assert obj["activation"] == "relu"

    def test_repeat_run_byte_identical(self, toy_dir, tmp_path):
        again = tmp_path / "again"
        assert run_cli("toy", "--out", str(again), *TINY_TOY_FLAGS) == 0
        for name in self.EXPECTED:
            assert (again / name).read_bytes() == (toy_dir / name).read_bytes(), name

    def test_shift_outputs_on_request(self, tmp_path):
        out = tmp_path / "shifted"
        code = run_cli(
            "toy", "--out", str(out), *TINY_TOY_FLAGS, "--shift-seed", "123"
        )
        assert code == 0
        assert read_tensor(out / "shift_mc_a.uqet").num_models == 4
        assert (out / "shift_positives_ab.json").exists()

    def test_config_file_with_flag_override(self, tmp_path):
        config = tmp_path / "toy.cfg"
        config.write_text(
            "clusters=3\nlatent_dim=3\ntrain_pairs=40\ntest_pairs=16\n"
            "hidden_dim=16\nembed_dim=8\nepochs=3\nmodels=4\nseed=11\n"
            "# comment line\n",
            encoding="utf-8",
        )
        from_config = tmp_path / "from_config"
        assert run_cli("toy", "--config", str(config), "--out", str(from_config)) == 0
        # flag must override the file value
        overridden = tmp_path / "overridden"
        assert (
            run_cli(
                "toy", "--config", str(config), "--out", str(overridden),
                "--test-pairs", "8",
            )
            == 0
        )
        assert read_tensor(from_config / "mc_a.uqet").num_samples == 16
        assert read_tensor(overridden / "mc_a.uqet").num_samples == 8

    def test_unknown_config_key_rejected(self, tmp_path):
        config = tmp_path / "bad.cfg"
        config.write_text("not_a_knob=3\n", encoding="utf-8")
        assert run_cli("toy", "--config", str(config), "--out", str(tmp_path / "o")) == 2


class TestEvalCommand:
    def test_single_model_stacks_make_all_modes_agree(self, toy_dir, tmp_path):
        out = tmp_path / "eval1"
        code = run_cli(
            "eval",
            "--queries", str(toy_dir / "det_a.uqet"),
            "--targets", str(toy_dir / "det_b.uqet"),
            "--positives", str(toy_dir / "positives_ab.json"),
            "--temp", "1.0",
            "--out", str(out),
        )
        assert code == 0
        rows = read_rows(out / "eval.csv")
        assert rows[0] == ["mode", "L", "T", "r1", "r5", "r10", "medr"]
        by_mode = {r[0]: r[3:] for r in rows[1:]}
        assert by_mode["weight"] == by_mode["feature-avg"] == by_mode["posterior-avg"]

    def test_both_directions_emitted(self, toy_dir, tmp_path):
        out = tmp_path / "eval2"
        code = run_cli(
            "eval",
            "--queries", str(toy_dir / "mc_a.uqet"),
            "--targets", str(toy_dir / "mc_b.uqet"),
            "--positives", str(toy_dir / "positives_ab.json"),
            "--positives-reverse", str(toy_dir / "positives_ba.json"),
            "--det-queries", str(toy_dir / "det_a.uqet"),
            "--det-targets", str(toy_dir / "det_b.uqet"),
            "--models", "2", "--models", "4",
            "--temp", "10.0",
            "--out", str(out),
        )
        assert code == 0
        rows = read_rows(out / "eval.csv")
        # per temperature: 1 weight row + (feature+posterior) per L
        assert len(rows) == 1 + 1 + 2 * 2
        assert (out / "eval_reverse.csv").exists()

    def test_missing_positives_file_is_input_error(self, toy_dir, tmp_path):
        code = run_cli(
            "eval",
            "--queries", str(toy_dir / "mc_a.uqet"),
            "--targets", str(toy_dir / "mc_b.uqet"),
            "--positives", str(toy_dir / "nope.json"),
            "--out", str(tmp_path / "x"),
        )
        assert code == 2

    def test_corrupt_tensor_is_input_error(self, toy_dir, tmp_path):
        bad = tmp_path / "bad.uqet"
        bad.write_bytes(b"XXXX" + bytes(40))
        code = run_cli(
            "eval",
            "--queries", str(bad),
            "--targets", str(toy_dir / "mc_b.uqet"),
            "--positives", str(toy_dir / "positives_ab.json"),
            "--out", str(tmp_path / "x"),
        )
        assert code == 2

    def test_models_beyond_stack_is_input_error(self, toy_dir, tmp_path):
        code = run_cli(
            "eval",
            "--queries", str(toy_dir / "mc_a.uqet"),
            "--targets", str(toy_dir / "mc_b.uqet"),
            "--positives", str(toy_dir / "positives_ab.json"),
            "--models", "99",
            "--out", str(tmp_path / "x"),
        )
        assert code == 2


class TestUncertaintyCommand:
    def test_constant_stack_all_zero(self, tmp_path):
        rng = np.random.default_rng(0)
        constant = EmbeddingTensor(np.repeat(rng.standard_normal((1, 6, 4)), 5, 0))
        targets = EmbeddingTensor(rng.standard_normal((5, 9, 4)))
        write_tensor(tmp_path / "q.uqet", constant)
        write_tensor(tmp_path / "t.uqet", targets)
        out = tmp_path / "u"
        code = run_cli(
            "uncertainty",
            "--queries", str(tmp_path / "q.uqet"),
            "--targets", str(tmp_path / "t.uqet"),
            "--temp", "1.0",
            "--out", str(out),
        )
        assert code == 0
        rows = read_rows(out / "uncertainty_T1.0.csv")
        assert rows[0] == ["query_index", "feature_u", "posterior_u", "posterior_var"]
        for row in rows[1:]:
            assert float(row[1]) <= 1e-25
            assert float(row[2]) <= 1e-12
            assert float(row[3]) <= 1e-25

    def test_row_count_is_queries_times_temperatures(self, toy_dir, tmp_path):
        out = tmp_path / "u"
        temps = ["0.001", "0.1", "10.0"]
        argv = [
            "uncertainty",
            "--queries", str(toy_dir / "mc_a.uqet"),
            "--targets", str(toy_dir / "mc_b.uqet"),
            "--out", str(out),
        ]
        for t in temps:
            argv += ["--temp", t]
        assert run_cli(*argv) == 0
        total = 0
        for t in temps:
            rows = read_rows(out / f"uncertainty_T{float(t)!r}.csv")
            total += len(rows) - 1
        assert total == 16 * len(temps)

    def test_matches_library_values(self, toy_dir, tmp_path):
        out = tmp_path / "u"
        assert run_cli(
            "uncertainty",
            "--queries", str(toy_dir / "mc_a.uqet"),
            "--targets", str(toy_dir / "mc_b.uqet"),
            "--temp", "0.5",
            "--out", str(out),
        ) == 0
        rows = read_rows(out / "uncertainty_T0.5.csv")[1:]
        queries = read_tensor(toy_dir / "mc_a.uqet")
        targets = read_tensor(toy_dir / "mc_b.uqet")
        targets_avg = targets.values.mean(axis=0)
        expected_f = feature_uncertainty(queries)
        ens = posterior_ensemble(queries, targets_avg, SimilarityKind.COSINE, 0.5)
        expected_p = posterior_uncertainty(ens)
        for i, row in enumerate(rows):
            assert float(row[1]) == expected_f[i]
            assert float(row[2]) == expected_p[i]


class TestPrcurveCommand:
    def test_endpoint_equals_weight_mode_recall(self, toy_dir, tmp_path):
        eval_out = tmp_path / "ev"
        assert run_cli(
            "eval",
            "--queries", str(toy_dir / "det_a.uqet"),
            "--targets", str(toy_dir / "det_b.uqet"),
            "--positives", str(toy_dir / "positives_ab.json"),
            "--temp", "1.0",
            "--out", str(eval_out),
        ) == 0
        weight_row = [r for r in read_rows(eval_out / "eval.csv")[1:]
                      if r[0] == "weight"][0]
        r_at = {1: float(weight_row[3]), 5: float(weight_row[4]),
                10: float(weight_row[5])}

        pr_out = tmp_path / "pr"
        assert run_cli(
            "prcurve",
            "--queries", str(toy_dir / "mc_a.uqet"),
            "--targets", str(toy_dir / "mc_b.uqet"),
            "--positives", str(toy_dir / "positives_ab.json"),
            "--det-queries", str(toy_dir / "det_a.uqet"),
            "--det-targets", str(toy_dir / "det_b.uqet"),
            "--temp", "0.001",
            "--out", str(pr_out),
        ) == 0
        for k in (1, 5, 10):
            for name in (f"prcurve_feature_k{k}.csv",
                         f"prcurve_posterior_k{k}_T0.001.csv"):
                rows = read_rows(pr_out / name)
                assert rows[0] == ["retained", "recall", "precision"]
                assert rows[-2][0] == "auprc"
                assert rows[-1][0] == "chance"
                last_point = rows[-3]
                assert float(last_point[1]) == 1.0
                assert float(last_point[2]) == r_at[k]
                assert float(rows[-1][1]) == r_at[k]

    def test_needs_deterministic_dumps(self, toy_dir, tmp_path):
        code = run_cli(
            "prcurve",
            "--queries", str(toy_dir / "mc_a.uqet"),
            "--targets", str(toy_dir / "mc_b.uqet"),
            "--positives", str(toy_dir / "positives_ab.json"),
            "--out", str(tmp_path / "x"),
        )
        assert code == 2


class TestShiftCommand:
    def test_identical_inputs_zero_mean_difference(self, toy_dir, tmp_path):
        out = tmp_path / "s"
        code = run_cli(
            "shift",
            "--queries-in", str(toy_dir / "mc_a.uqet"),
            "--targets-in", str(toy_dir / "mc_b.uqet"),
            "--queries-out", str(toy_dir / "mc_a.uqet"),
            "--targets-out", str(toy_dir / "mc_b.uqet"),
            "--temp", "0.001",
            "--out", str(out),
        )
        assert code == 0
        for name in ("shift_feature.csv", "shift_posterior_T0.001.csv"):
            rows = read_rows(out / name)
            assert rows[0] == ["bin_lo", "bin_hi", "count_in", "count_out"]
            trailer = {r[0]: float(r[1]) for r in rows if r[0].startswith("mean")}
            assert trailer["mean_diff"] == 0.0

    def test_disjoint_supports_separate(self, tmp_path):
        rng = np.random.default_rng(1)
        lo = EmbeddingTensor(np.repeat(rng.standard_normal((1, 5, 3)), 4, 0))
        hi = EmbeddingTensor(rng.standard_normal((4, 5, 3)) * 5)
        targets = EmbeddingTensor(rng.standard_normal((4, 7, 3)))
        for name, tensor in (("lo", lo), ("hi", hi), ("t", targets)):
            write_tensor(tmp_path / f"{name}.uqet", tensor)
        out = tmp_path / "s"
        code = run_cli(
            "shift",
            "--queries-in", str(tmp_path / "lo.uqet"),
            "--targets-in", str(tmp_path / "t.uqet"),
            "--queries-out", str(tmp_path / "hi.uqet"),
            "--targets-out", str(tmp_path / "t.uqet"),
            "--temp", "1.0",
            "--bins", "2",
            "--out", str(out),
        )
        assert code == 0
        rows = read_rows(out / "shift_feature.csv")
        first_bin = rows[1]
        assert int(first_bin[2]) == 5  # constant stack: all in-dist mass at zero
        trailer = {r[0]: float(r[1]) for r in rows if r[0].startswith("mean")}
        assert trailer["mean_diff"] > 0


class TestExitCodes:
    @pytest.mark.filterwarnings("ignore:overflow")
    def test_numerical_failure_exit_code(self, tmp_path):
        # identity activation so runaway weights cannot hide in dead ReLUs
        code = run_cli(
            "toy", "--out", str(tmp_path / "x"),
            "--clusters", "2", "--train-pairs", "20", "--test-pairs", "4",
            "--hidden-dim", "8", "--embed-dim", "4", "--epochs", "20",
            "--models", "1", "--similarity", "dot", "--activation", "identity",
            "--learning-rate", "100000000.0",
        )
        assert code == 3
