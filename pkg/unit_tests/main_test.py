"""Unit tests for the command-line interface"""

import json
import os

import pandas as pd
import pytest

from conftest import synthetic_rows, write_csv
from logger import Logger
from main import load_training_data, main, parser, resolve_config
from models import Head, Weighting
from unsw_dataset import FEATURE_NAMES


@pytest.fixture
def prepared(tmp_path, official_csvs):
    """Caches written by the prepare command"""
    train_csv, test_csv = official_csvs
    out = str(tmp_path / "prepared")
    assert main(["prepare", "--train-csv", train_csv, "--test-csv", test_csv, "--out", out]) == 0
    return out


@pytest.fixture
def model_file(tmp_path, prepared):
    """A binary model trained for one epoch"""
    out = str(tmp_path / "run")
    code = main(["train", "--prepared", prepared, "--epochs", "1", "--batch-size", "32", "--out", out])
    assert code == 0
    return os.path.join(out, "model.lids")


def test_prepare(tmp_path, official_csvs, capsys):
    """
    Both caches and a summary are written, with row counts printed
    """
    train_csv, test_csv = official_csvs
    out = str(tmp_path / "prepared")
    assert main(["prepare", "--train-csv", train_csv, "--test-csv", test_csv, "--out", out]) == 0

    assert "train: 120 rows, test: 60 rows" in capsys.readouterr().out
    for name in ("train.lids-data", "test.lids-data", "summary.json"):
        assert os.path.isfile(os.path.join(out, name))
    with open(os.path.join(out, "summary.json"), "r", encoding="utf-8") as f:
        summary = json.load(f)
    assert summary["train"]["categories"]["Normal"] == 12
    assert summary["test"]["records"] == 60


def test_train_writes_outputs(tmp_path, prepared, capsys):
    """
    Training saves the model, its history and both report formats
    """
    out = str(tmp_path / "run")
    code = main(["train", "--prepared", prepared, "--epochs", "2", "--batch-size", "32", "--out", out])
    assert code == 0

    for name in ("model.lids", "history.json", "report.txt", "report.json"):
        assert os.path.isfile(os.path.join(out, name))
    with open(os.path.join(out, "history.json"), "r", encoding="utf-8") as f:
        assert len(json.load(f)["train_loss"]) == 2
    printed = capsys.readouterr().out
    assert "Binary classification" in printed and "CNN-BiLSTM" in printed


def test_train_is_deterministic(tmp_path, prepared):
    """
    Same seed and configuration produce byte-identical model files
    """
    blobs = []
    for run in ("a", "b"):
        out = str(tmp_path / run)
        args = ["train", "--prepared", prepared, "--epochs", "1", "--batch-size", "32"]
        assert main([*args, "--seed", "7", "--threads", "2", "--deterministic", "--out", out]) == 0
        with open(os.path.join(out, "model.lids"), "rb") as f:
            blobs.append(f.read())
    assert blobs[0] == blobs[1]


def test_train_random_split_with_baselines(tmp_path, official_csvs):
    """
    Random split over both files with baseline rows ahead of the model row
    """
    train_csv, test_csv = official_csvs
    out = str(tmp_path / "run")
    code = main(
        [
            "train",
            "--train-csv", train_csv,
            "--test-csv", test_csv,
            "--split", "random:0.2",
            "--epochs", "1",
            "--baselines",
            "--format", "json",
            "--out", out,
        ]
    )
    assert code == 0
    with open(os.path.join(out, "report.json"), "r", encoding="utf-8") as f:
        reports = json.load(f)["reports"]
    assert [r["model"] for r in reports] == ["Logistic Regression", "KNN", "CNN-BiLSTM"]
    assert sum(sum(row) for row in reports[-1]["confusion_matrix"]["counts"]) == 40


def test_train_multiclass_subsample(tmp_path, prepared):
    """
    Multiclass head scored on half of the test split
    """
    out = str(tmp_path / "multi")
    args = ["train", "--prepared", prepared, "--head", "multiclass", "--subsample", "0.5"]
    assert main([*args, "--epochs", "1", "--out", out]) == 0
    with open(os.path.join(out, "report.json"), "r", encoding="utf-8") as f:
        report = json.load(f)["reports"][0]
    assert report["head"] == "multiclass"
    assert len(report["per_class"]) == 10


def test_configuration_errors_exit_2(tmp_path, official_csvs):
    """
    Unknown keys, missing inputs and invalid values map to exit code 2
    """
    train_csv, test_csv = official_csvs
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"model": {"filterz": 3}}), encoding="utf-8")
    data = ["--train-csv", train_csv, "--test-csv", test_csv]

    assert main(["train", "--config", str(config), *data]) == 2
    assert main(["train", "--train-csv", str(tmp_path / "nope.csv"), "--test-csv", test_csv]) == 2
    assert main(["train", *data, "--split", "random:1.5"]) == 2
    assert main(["train", *data, "--epochs", "0"]) == 2
    assert main(["train", "--config", str(tmp_path / "missing.json"), *data]) == 2


def test_usage_error_exits_2():
    """
    argparse rejects unknown flags with status 2
    """
    with pytest.raises(SystemExit) as excinfo:
        main(["train", "--no-such-flag"])
    assert excinfo.value.code == 2


def test_malformed_dataset_exits_3(tmp_path, official_csvs):
    """
    A malformed CSV row is a data error
    """
    rows = synthetic_rows(20)
    rows[3]["dur"] = "n/a"
    bad = write_csv(str(tmp_path / "bad.csv"), rows)
    assert main(["train", "--train-csv", bad, "--test-csv", official_csvs[1], "--epochs", "1"]) == 3


def test_resolve_config_precedence(tmp_path, monkeypatch):
    """
    Flags override the file, the file overrides IDS_THREADS, multiclass picks its own schedule
    """
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"seed": 3, "model": {"head": "multiclass"}}), encoding="utf-8")
    monkeypatch.setenv("IDS_THREADS", "3")

    cfg = resolve_config(parser.parse_args(["train", "--config", str(config)]))
    assert cfg.model.head == Head.MULTICLASS
    assert cfg.train.epochs == 30
    assert cfg.train.weighting == Weighting.INVERSE_FREQUENCY
    assert cfg.threads == 3
    assert cfg.train.seed == 3

    cfg = resolve_config(
        parser.parse_args(["train", "--config", str(config), "--seed", "9", "--weighting", "uniform"])
    )
    assert cfg.seed == 9 and cfg.train.seed == 9
    assert cfg.train.weighting == Weighting.UNIFORM

    config.write_text(json.dumps({"threads": 1}), encoding="utf-8")
    cfg = resolve_config(parser.parse_args(["train", "--config", str(config)]))
    assert cfg.threads == 1
    assert cfg.train.epochs == 15


def test_evaluate(tmp_path, prepared, model_file, capsys):
    """
    A saved model scores the prepared test split
    """
    out = str(tmp_path / "eval")
    assert main(["evaluate", model_file, "--prepared", prepared, "--format", "json", "--out", out]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["reports"][0]["confusion_matrix"]["classes"] == ["normal", "attack"]
    assert os.path.isfile(os.path.join(out, "report.txt"))


def test_evaluate_head_mismatch(prepared, model_file):
    """
    Asking a binary model for a multiclass evaluation is a configuration error
    """
    assert main(["evaluate", model_file, "--prepared", prepared, "--head", "multiclass"]) == 2


def test_predict_single_row(tmp_path, model_file):
    """
    One unlabelled record gives one prediction row
    """
    path = write_csv(str(tmp_path / "flow.csv"), synthetic_rows(1, seed=5), FEATURE_NAMES)
    out = str(tmp_path / "pred")
    assert main(["predict", model_file, "--input", path, "--out", out]) == 0

    frame = pd.read_csv(os.path.join(out, "predictions.csv"))
    assert list(frame.columns) == ["row", "label", "label_index", "prob_attack"]
    assert len(frame) == 1
    assert frame.loc[0, "label"] in ("normal", "attack")
    assert 0.0 <= frame.loc[0, "prob_attack"] <= 1.0


def test_inspect(model_file, capsys):
    """
    Text inspection reports the parameter count of the default stack
    """
    assert main(["inspect", model_file]) == 0
    text = capsys.readouterr().out
    assert "parameters: 6433" in text
    assert "bilstm" in text

    assert main(["inspect", model_file, "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["parameters"] == 6433


def test_corrupted_model_exits_3(tmp_path, model_file):
    """
    A damaged model file is reported with exit code 3
    """
    with open(model_file, "rb") as f:
        blob = f.read()
    damaged = str(tmp_path / "damaged.lids")
    with open(damaged, "wb") as f:
        f.write(blob[: len(blob) // 2])
    assert main(["inspect", damaged]) == 3
    assert main(["inspect", str(tmp_path / "absent.lids")]) == 2


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def test_prepare_is_deterministic(tmp_path, official_csvs):
    """
    Preparing the same files twice writes byte-identical caches
    """
    train_csv, test_csv = official_csvs
    for run in ("a", "b"):
        out = str(tmp_path / run)
        assert main(["prepare", "--train-csv", train_csv, "--test-csv", test_csv, "--out", out]) == 0
    for name in ("train.lids-data", "test.lids-data"):
        assert read_bytes(str(tmp_path / "a" / name)) == read_bytes(str(tmp_path / "b" / name))


def test_subsample_keeps_full_training_set(prepared):
    """
    subsample:F thins the test split and leaves the training split whole
    """
    cfg = resolve_config(parser.parse_args(["train", "--prepared", prepared, "--subsample", "0.5"]))
    train, test = load_training_data(cfg)
    assert len(train) == 120
    assert len(test) == 30


def test_multiclass_inverse_frequency_logs_weights(tmp_path, prepared):
    """
    Multiclass training with inverse-frequency weighting records the weights it uses
    """
    out = str(tmp_path / "multi")
    args = ["train", "--prepared", prepared, "--head", "multiclass"]
    assert main([*args, "--weighting", "inverse-frequency", "--epochs", "1", "--out", out]) == 0

    with open(Logger().log_file, "r", encoding="utf-8") as f:
        log = f.read()
    assert "Class weights (inverse-frequency): [1.0, 1.0" in log


def test_evaluate_random_split_reuses_training_seed(tmp_path, official_csvs):
    """
    Evaluating a random split without --seed rebuilds the test side the model was scored on
    """
    train_csv, test_csv = official_csvs
    data = ["--train-csv", train_csv, "--test-csv", test_csv, "--split", "random:0.2"]
    run = str(tmp_path / "run")
    assert main(["train", *data, "--seed", "7", "--epochs", "1", "--out", run]) == 0
    model = os.path.join(run, "model.lids")

    scored = str(tmp_path / "eval")
    assert main(["evaluate", model, *data, "--out", scored]) == 0

    with open(os.path.join(run, "report.json"), "r", encoding="utf-8") as f:
        trained = json.load(f)["reports"][-1]["confusion_matrix"]
    with open(os.path.join(scored, "report.json"), "r", encoding="utf-8") as f:
        evaluated = json.load(f)["reports"][0]["confusion_matrix"]
    assert evaluated == trained

    assert main(["evaluate", model, *data, "--seed", "7", "--out", scored]) == 0
    assert main(["evaluate", model, *data, "--seed", "3", "--out", scored]) == 2


def test_predict_unseen_categories_is_repeatable(tmp_path, model_file):
    """
    Unseen categorical values are accepted and reruns write identical predictions
    """
    rows = synthetic_rows(3, seed=6)
    rows[0]["proto"] = "zzz"
    rows[1]["service"] = "gopher-x"
    rows[2]["state"] = "XYZ"
    path = write_csv(str(tmp_path / "unseen.csv"), rows, FEATURE_NAMES)

    outputs = []
    for run in ("a", "b"):
        out = str(tmp_path / run)
        assert main(["predict", model_file, "--input", path, "--out", out]) == 0
        outputs.append(read_bytes(os.path.join(out, "predictions.csv")))

    assert outputs[0] == outputs[1]
    assert len(pd.read_csv(os.path.join(str(tmp_path / "a"), "predictions.csv"))) == 3
