from types import SimpleNamespace

import orjson
import pytest

from src.cli import build_parser
from src.main import run


def metrics_of(out):
    return orjson.loads((out / "metrics.json").read_bytes())


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    code = run(["gen", "--users", "400", "--b-users", "300", "--seed", "3", "--out", str(out)])
    assert code == 0
    return out


def corpus_args(generated, out, *extra):
    return [
        "--cdr", str(generated / "cdr.csv"),
        "--truth", str(generated / "truth.csv"),
        "--out", str(out),
        "--seed", "1",
        *extra,
    ]


def test_gen_writes_corpus_and_manifest(generated):
    names = {p.name for p in generated.iterdir()}

    assert {"cdr.csv", "truth.csv", "sides.csv", "bipartite.csv", "hidden_b.csv", "cross_cdr.csv"} <= names
    assert {"metrics.json", "metrics.txt", "manifest.json"} <= names
    manifest = orjson.loads((generated / "manifest.json").read_bytes())
    assert manifest["seed"] == 3
    assert manifest["config"]["synth"]["n_users"] == 400
    assert metrics_of(generated)["metrics"]["users"] == 400


def test_gen_is_byte_identical_across_runs(generated, tmp_path):
    run(["gen", "--users", "400", "--b-users", "300", "--seed", "3", "--out", str(tmp_path)])

    for name in ("cdr.csv", "truth.csv", "bipartite.csv", "metrics.json"):
        assert (tmp_path / name).read_bytes() == (generated / name).read_bytes()


def test_compressed_corpus_parses_the_same(generated, tmp_path):
    run(["gen", "--users", "400", "--b-users", "300", "--seed", "3", "--compress", "--out", str(tmp_path / "gz")])
    plain = tmp_path / "plain"
    packed = tmp_path / "packed"

    assert run(["classify", *corpus_args(generated, plain)]) == 0
    assert run([
        "classify", "--cdr", str(tmp_path / "gz" / "cdr.csv.gz"), "--truth", str(generated / "truth.csv"),
        "--out", str(packed), "--seed", "1",
    ]) == 0
    assert metrics_of(plain) == metrics_of(packed)


def test_classify_reports_both_classifiers(generated, tmp_path, capsys):
    code = run(["classify", *corpus_args(generated, tmp_path)])

    assert code == 0
    metrics = metrics_of(tmp_path)["metrics"]
    assert metrics["naive_bayes"]["accuracy"] > 0.6
    assert metrics["adaboost"]["accuracy"] > 0.6
    assert (tmp_path / "nb_model.json").exists()
    assert (tmp_path / "features.csv").read_text().startswith("user_id,label,log_n_calls_out")
    assert "\"subcommand\": \"classify\"" in capsys.readouterr().out


def test_label_with_zero_lambda_matches_naive_bayes(generated, tmp_path):
    code = run(["label", *corpus_args(generated, tmp_path, "--lambda", "0")])

    assert code == 0
    metrics = metrics_of(tmp_path)["metrics"]
    assert metrics["graph_labeling"]["counts"] == metrics["naive_bayes"]["counts"]
    assert metrics["energy"] == pytest.approx(metrics["flow_value"])


def test_label_with_pruning_sweep_and_export(generated, tmp_path):
    code = run([
        "label", *corpus_args(generated, tmp_path, "--lambda", "10", "--prune", "--lambda-sweep", "0.1:10:3",
                              "--export-problem"),
    ])

    assert code == 0
    metrics = metrics_of(tmp_path)["metrics"]
    assert 0.0 <= metrics["fixed_fraction"] <= 1.0
    assert len(metrics["lambda_sweep"]) == 3
    assert (tmp_path / "problem.json").exists()
    assert (tmp_path / "lambda_sweep.csv").read_text().startswith("lambda,accuracy,energy,fixed_fraction")
    assert "graph_labeling: accuracy" in (tmp_path / "metrics.txt").read_text()


def test_label_runs_are_byte_identical(generated, tmp_path):
    for name in ("a", "b"):
        assert run(["label", *corpus_args(generated, tmp_path / name, "--lambda", "auto")]) == 0

    assert (tmp_path / "a" / "metrics.json").read_bytes() == (tmp_path / "b" / "metrics.json").read_bytes()
    assert (tmp_path / "a" / "solution.csv").read_bytes() == (tmp_path / "b" / "solution.csv").read_bytes()


def test_label_reuses_a_trained_naive_bayes_model(generated, tmp_path):
    trained, plain, reused = tmp_path / "trained", tmp_path / "plain", tmp_path / "reused"
    assert run(["classify", *corpus_args(generated, trained)]) == 0
    assert run(["label", *corpus_args(generated, plain, "--lambda", "0")]) == 0

    code = run(["label", *corpus_args(generated, reused, "--lambda", "0",
                                      "--nb-model", str(trained / "nb_model.json"))])

    assert code == 0
    assert metrics_of(reused)["metrics"]["naive_bayes"] == metrics_of(plain)["metrics"]["naive_bayes"]
    manifest = orjson.loads((reused / "manifest.json").read_bytes())
    assert manifest["inputs"]["nb_model"]["path"] == str(trained / "nb_model.json")


def test_label_rejects_a_portion_model(generated, tmp_path):
    assert run(["classify", *corpus_args(generated, tmp_path / "portion", "--portion")]) == 0

    code = run(["label", *corpus_args(generated, tmp_path / "out", "--nb-model",
                                      str(tmp_path / "portion" / "nb_model.json"))])

    assert code == 3


@pytest.mark.parametrize("window, expected", [("1400000000:1402592000", 0), ("0:1", 3)])
def test_observation_window_flag(generated, tmp_path, window, expected):
    code = run(["classify", *corpus_args(generated, tmp_path, "--window", window)])

    assert code == expected
    if expected == 0:
        assert metrics_of(tmp_path)["metrics"]["parse"]["malformed"] == 0


def test_eval_scores_a_solution_file(generated, tmp_path):
    run(["label", *corpus_args(generated, tmp_path / "label", "--lambda", "1")])

    code = run([
        "eval", "--predictions", str(tmp_path / "label" / "solution.csv"),
        "--truth", str(generated / "truth.csv"), "--out", str(tmp_path / "eval"),
    ])

    assert code == 0
    confusion = metrics_of(tmp_path / "eval")["metrics"]["confusion"]
    assert confusion["accuracy"] > 0.6


def test_crossnet_propagation_with_oracle(generated, tmp_path):
    code = run([
        "--threads", "2", "crossnet", "--mode", "prop", "--sides", str(generated / "sides.csv"),
        "--edges", str(generated / "bipartite.csv"), "--realizations", "4", "--oracle-b",
        "--out", str(tmp_path), "--seed", "2",
    ])

    assert code == 0
    metrics = metrics_of(tmp_path)["metrics"]
    assert metrics["realizations"] == 4
    assert metrics["a_accuracy"] > 0.6
    assert metrics["oracle_b"]["accuracy"] > 0.6
    assert (tmp_path / "b_labels.csv").exists()


def test_crossnet_attribute_mode(generated, tmp_path):
    code = run([
        "crossnet", "--mode", "attr", "--sides", str(generated / "sides.csv"),
        "--cross-cdr", str(generated / "cross_cdr.csv"), "--out", str(tmp_path),
    ])

    assert code == 0
    metrics = metrics_of(tmp_path)["metrics"]
    assert metrics["mode"] == "attr"
    assert 0.0 <= metrics["naive_bayes"]["accuracy"] <= 1.0


@pytest.mark.parametrize(
    "argv, expected",
    [
        (["label", "--cdr", "missing.csv", "--truth", "missing.csv", "--out", "x"], 2),
        (["label", "--lambda", "-2"], 2),
        (["--threads", "0", "eval"], 2),
        (["frobnicate"], 2),
    ],
)
def test_exit_codes_for_bad_invocations(tmp_path, monkeypatch, argv, expected):
    monkeypatch.chdir(tmp_path)

    assert run(argv) == expected


def test_missing_truth_file_exits_with_config_code(generated, tmp_path):
    argv = ["classify", "--cdr", str(generated / "cdr.csv"), "--truth", str(tmp_path / "nope.csv"),
            "--out", str(tmp_path / "out")]

    assert run(argv) == 2


def test_malformed_cdr_exits_with_data_code(tmp_path):
    cdr = tmp_path / "cdr.csv"
    cdr.write_text("this,is,not,a,cdr\n" * 10, encoding="utf-8")
    truth = tmp_path / "truth.csv"
    truth.write_text("user_id,label\n1,0\n", encoding="utf-8")

    assert run(["classify", "--cdr", str(cdr), "--truth", str(truth), "--out", str(tmp_path / "out")]) == 3


def test_eval_handler_renders_pipeline_metrics(tmp_path):
    # Arrange
    for name in ("p.csv", "t.csv"):
        (tmp_path / name).write_text("user_id,label\n1,0\n2,1\n", encoding="utf-8")
    confusion = {"counts": [[1, 0], [0, 1]], "rates": [[1.0, 0.0], [0.0, 1.0]], "accuracy": 1.0, "total": 2}
    fake_pipeline = SimpleNamespace(evaluate_files=lambda predictions, truth: {"confusion": confusion})
    args = build_parser().parse_args([
        "eval", "--predictions", str(tmp_path / "p.csv"), "--truth", str(tmp_path / "t.csv"),
        "--out", str(tmp_path / "out"),
    ])

    # Act
    summary = args.handler(args, fake_pipeline)

    # Assert
    assert summary["subcommand"] == "eval"
    assert "confusion: accuracy 1.0000 over 2 users" in (tmp_path / "out" / "metrics.txt").read_text()
    manifest = orjson.loads((tmp_path / "out" / "manifest.json").read_bytes())
    assert set(manifest["inputs"]) == {"predictions", "truth"}
    assert len(manifest["inputs"]["truth"]["sha256"]) == 64
