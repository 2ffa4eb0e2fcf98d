"""Unit tests for metrics and report rendering"""

import json

import numpy as np
import pytest

from errors import ConfigError, ShapeError
from metrics_report import (
    BINARY_COLUMNS,
    MULTICLASS_COLUMNS,
    ConfusionMatrix,
    binary_metrics,
    confusion_matrix,
    multiclass_metrics,
    render_report,
    reports_from_json,
)


def pairs_from_counts(counts):
    """Expand a confusion matrix into (actual, predicted) label arrays"""
    counts = np.asarray(counts)
    num = counts.shape[0]
    cells = np.repeat(np.arange(num * num), counts.reshape(-1))
    return cells // num, cells % num


@pytest.fixture
def binary_report():
    actual, predicted = pairs_from_counts([[8795, 174], [272, 7226]])
    return binary_metrics(confusion_matrix(actual, predicted, ["normal", "attack"]))


@pytest.fixture
def three_class_cm():
    return ConfusionMatrix(np.array([[5, 0, 0], [1, 3, 0], [0, 1, 2]]), ("a", "b", "c"))


def test_confusion_matrix_counts():
    """
    Rows are actual classes and the total equals the number of pairs
    """
    cm = confusion_matrix([0, 1, 1, 2, 2, 2], [0, 1, 2, 2, 2, 0], 3)
    assert cm.counts.tolist() == [[1, 0, 0], [0, 1, 1], [1, 0, 2]]
    assert cm.total == 6
    assert cm.class_names == ("0", "1", "2")

    actual, predicted = pairs_from_counts([[8795, 174], [272, 7226]])
    assert confusion_matrix(actual, predicted, 2).counts.tolist() == [[8795, 174], [272, 7226]]


def test_confusion_matrix_errors():
    """
    Empty input, length mismatch, out-of-range labels and single-class spaces
    """
    with pytest.raises(ConfigError):
        confusion_matrix([], [], 2)
    with pytest.raises(ShapeError):
        confusion_matrix([0, 1], [0], 2)
    with pytest.raises(ConfigError, match="outside"):
        confusion_matrix([0, 2], [0, 1], 2)
    with pytest.raises(ConfigError):
        confusion_matrix([0, 0], [0, 0], 1)


def test_binary_metrics_hand_case(binary_report):
    """
    TP 7226, TN 8795, FP 174, FN 272
    """
    assert binary_report.accuracy == pytest.approx(0.97291, abs=1e-5)
    assert binary_report.recall == pytest.approx(0.96372, abs=1e-5)
    assert binary_report.precision == pytest.approx(0.97649, abs=1e-5)
    p, r = binary_report.precision, binary_report.recall
    assert binary_report.f1 == pytest.approx(2 * p * r / (p + r))
    assert binary_report.flags == []
    assert [c.support for c in binary_report.per_class] == [8969, 7498]


def test_binary_metrics_flags_zero_denominators():
    """
    A model that never predicts attack reports precision 0 with a flag
    """
    report = binary_metrics(confusion_matrix([0, 1, 1], [0, 0, 0], 2))
    assert report.precision == 0.0 and report.recall == 0.0 and report.f1 == 0.0
    assert "precision" in report.flags and "f1" in report.flags
    assert report.accuracy == pytest.approx(1 / 3)


def test_binary_metrics_require_two_classes(three_class_cm):
    """
    Binary metrics on a 3x3 matrix are refused
    """
    with pytest.raises(ConfigError):
        binary_metrics(three_class_cm)


def test_multiclass_metrics_hand_case(three_class_cm):
    """
    Accuracy 10/12 with per-class and averaged values
    """
    report = multiclass_metrics(three_class_cm)
    assert report.accuracy == pytest.approx(10 / 12)

    precision = [c.precision for c in report.per_class]
    recall = [c.recall for c in report.per_class]
    assert precision == pytest.approx([5 / 6, 3 / 4, 1.0])
    assert recall == pytest.approx([1.0, 3 / 4, 2 / 3])
    assert report.macro["precision"] == pytest.approx((5 / 6 + 3 / 4 + 1.0) / 3)
    assert report.precision == pytest.approx((5 * 5 / 6 + 4 * 3 / 4 + 3 * 1.0) / 12)


def test_accuracy_equals_weighted_recall():
    """
    Support-weighted recall is accuracy on random matrices
    """
    rng = np.random.default_rng(0)
    for _ in range(20):
        cm = ConfusionMatrix(rng.integers(1, 50, size=(4, 4)), ("a", "b", "c", "d"))
        report = multiclass_metrics(cm)
        assert report.recall == pytest.approx(report.accuracy)


def test_two_class_multiclass_agrees_with_binary(binary_report):
    """
    The attack row of a 2-class multiclass report equals the binary headline
    """
    report = multiclass_metrics(binary_report.confusion)
    assert report.accuracy == pytest.approx(binary_report.accuracy)
    attack = report.per_class[1]
    assert attack.precision == pytest.approx(binary_report.precision)
    assert attack.recall == pytest.approx(binary_report.recall)
    assert attack.f1 == pytest.approx(binary_report.f1)


def test_multiclass_flags_unpredicted_class():
    """
    A class never predicted gets precision 0 and a flag instead of NaN
    """
    cm = ConfusionMatrix(np.array([[3, 0], [2, 0]]), ("x", "y"))
    report = multiclass_metrics(cm)
    assert report.per_class[1].precision == 0.0
    assert "precision[y]" in report.flags
    assert all(np.isfinite([report.precision, report.recall, report.f1]))


def test_with_timing(binary_report):
    """
    Timings are attached without touching the metrics
    """
    timed = binary_report.with_timing(12.5, 0.75, model="KNN")
    assert timed.total_s == pytest.approx(13.25)
    assert timed.model == "KNN"
    assert timed.accuracy == binary_report.accuracy
    assert binary_report.total_s is None


def test_render_text_binary_columns(binary_report):
    """
    Binary table columns and number formats
    """
    text = render_report([binary_report.with_timing(120.0, 3.25)])
    header = next(line for line in text.splitlines() if line.startswith("Model"))
    positions = [header.index(column) for column in BINARY_COLUMNS]
    assert positions == sorted(positions)
    assert "97.29%" in text
    assert "120.0" in text and "123.2" in text
    assert "Confusion matrix" in text


def test_render_text_multiclass_columns(three_class_cm):
    """
    Multiclass table puts precision before recall and shows missing timing as '-'
    """
    text = render_report([multiclass_metrics(three_class_cm)])
    header = next(line for line in text.splitlines() if line.startswith("Model"))
    positions = [header.index(column) for column in MULTICLASS_COLUMNS]
    assert positions == sorted(positions)
    row = next(line for line in text.splitlines() if line.startswith("CNN-BiLSTM"))
    assert row.rstrip().endswith("-")
    assert "83.33%" in row


def test_render_json_round_trip(binary_report, three_class_cm):
    """
    JSON output is stable and parses back into the same reports
    """
    reports = [binary_report.with_timing(1.0, 0.5), multiclass_metrics(three_class_cm, "KNN")]
    document = render_report(reports, "json")
    assert document == render_report(reports, "json")
    assert list(json.loads(document)) == ["reports"]

    parsed = reports_from_json(document)
    assert [r.to_json() for r in parsed] == [r.to_json() for r in reports]
    assert json.loads(document)["reports"][0]["timing"] == {"predict_s": 0.5, "train_s": 1.0}


def test_render_errors(binary_report):
    """
    Empty input and unknown formats are rejected
    """
    with pytest.raises(ConfigError):
        render_report([])
    with pytest.raises(ConfigError):
        render_report([binary_report], "csv")
    with pytest.raises(ConfigError):
        reports_from_json("{}")
