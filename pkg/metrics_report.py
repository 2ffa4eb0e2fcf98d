"""
Evaluation metrics and report rendering
Builds confusion matrices, derives accuracy/precision/recall/F1 and renders comparison tables
"""

import json
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ConfigError, ShapeError

BINARY_COLUMNS = (
    "Accuracy",
    "Recall",
    "Precision",
    "F1-Score",
    "time to train (s)",
    "time to predict (s)",
    "total time (s)",
)
MULTICLASS_COLUMNS = (
    "Accuracy",
    "Precision",
    "Recall",
    "F1-Score",
    "Time to Train (s)",
    "Time to Predict (s)",
)
FORMATS = ("text", "json")


@dataclass(frozen=True)
class ConfusionMatrix:
    """
    Counts [C, C]: rows are actual classes, columns are predicted classes
    """

    counts: np.ndarray
    class_names: Tuple[str, ...]

    @property
    def num_classes(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_json(self) -> Dict[str, Any]:
        return {"classes": list(self.class_names), "counts": self.counts.tolist()}

    @staticmethod
    def from_json(data: Dict[str, Any]) -> "ConfusionMatrix":
        return ConfusionMatrix(np.asarray(data["counts"], dtype=np.int64), tuple(data["classes"]))


def confusion_matrix(
    actual: Sequence[int],
    predicted: Sequence[int],
    classes: Union[int, Sequence[str]],
) -> ConfusionMatrix:
    """
    Count (actual, predicted) pairs

    Args:
        actual (Sequence[int]): True labels
        predicted (Sequence[int]): Predicted labels
        classes (Union[int, Sequence[str]]): Class count or class names in index order

    Raises:
        ConfigError: Empty input, length mismatch, or a label outside [0, C)

    Returns:
        ConfusionMatrix: Matrix whose total equals the number of pairs
    """
    if isinstance(classes, int):
        names = tuple(str(c) for c in range(classes))
    else:
        names = tuple(classes)
    num = len(names)
    if num < 2:
        raise ConfigError(f"a confusion matrix needs at least 2 classes, got {num}")

    a = np.asarray(actual, dtype=np.int64).reshape(-1)
    p = np.asarray(predicted, dtype=np.int64).reshape(-1)
    if a.size == 0:
        raise ConfigError("cannot build a confusion matrix from zero samples")
    if a.size != p.size:
        raise ShapeError("samples", a.size, p.size, "confusion_matrix")

    for label_name, labels in (("actual", a), ("predicted", p)):
        bad = np.flatnonzero((labels < 0) | (labels >= num))
        if bad.size:
            raise ConfigError(
                f"{label_name} label {int(labels[bad[0]])} at position {int(bad[0])} "
                f"is outside [0, {num})"
            )

    counts = np.bincount(a * num + p, minlength=num * num).reshape(num, num)
    return ConfusionMatrix(counts.astype(np.int64), names)


@dataclass
class ClassMetrics:
    name: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class MetricsReport:
    """
    Headline metrics for one model plus per-class detail and timing
    """

    model: str
    head: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: List[ClassMetrics] = field(default_factory=list)
    macro: Dict[str, float] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)
    train_s: Optional[float] = None
    predict_s: Optional[float] = None
    confusion: Optional[ConfusionMatrix] = None

    @property
    def total_s(self) -> Optional[float]:
        if self.train_s is None or self.predict_s is None:
            return None
        return self.train_s + self.predict_s

    def with_timing(
        self, train_s: Optional[float], predict_s: Optional[float], model: Optional[str] = None
    ) -> "MetricsReport":
        return replace(self, train_s=train_s, predict_s=predict_s, model=model or self.model)

    def to_json(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "head": self.head,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "macro": dict(self.macro),
            "per_class": [
                {
                    "class": c.name,
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1": c.f1,
                    "support": c.support,
                }
                for c in self.per_class
            ],
            "flags": list(self.flags),
            "timing": {"train_s": self.train_s, "predict_s": self.predict_s},
            "confusion_matrix": None if self.confusion is None else self.confusion.to_json(),
        }

    @staticmethod
    def from_json(data: Dict[str, Any]) -> "MetricsReport":
        timing = data.get("timing") or {}
        confusion = data.get("confusion_matrix")
        return MetricsReport(
            model=data["model"],
            head=data["head"],
            accuracy=float(data["accuracy"]),
            precision=float(data["precision"]),
            recall=float(data["recall"]),
            f1=float(data["f1"]),
            per_class=[
                ClassMetrics(
                    c["class"], float(c["precision"]), float(c["recall"]), float(c["f1"]),
                    int(c["support"]),
                )
                for c in data.get("per_class", [])
            ],
            macro={k: float(v) for k, v in (data.get("macro") or {}).items()},
            flags=list(data.get("flags", [])),
            train_s=timing.get("train_s"),
            predict_s=timing.get("predict_s"),
            confusion=None if confusion is None else ConfusionMatrix.from_json(confusion),
        )


def _ratio(numerator: float, denominator: float, flag: str, flags: List[str]) -> float:
    # Zero denominators report 0 and are flagged, never NaN
    if denominator == 0:
        flags.append(flag)
        return 0.0
    return float(numerator) / float(denominator)


def _f1(precision: float, recall: float, flag: str, flags: List[str]) -> float:
    return _ratio(2.0 * precision * recall, precision + recall, flag, flags)


def _per_class(cm: ConfusionMatrix, flags: List[str]) -> List[ClassMetrics]:
    counts = cm.counts.astype(np.float64)
    predicted = counts.sum(axis=0)
    actual = counts.sum(axis=1)
    result = []
    for c, name in enumerate(cm.class_names):
        tp = counts[c, c]
        precision = _ratio(tp, predicted[c], f"precision[{name}]", flags)
        recall = _ratio(tp, actual[c], f"recall[{name}]", flags)
        f1 = _f1(precision, recall, f"f1[{name}]", flags)
        result.append(ClassMetrics(name, precision, recall, f1, int(actual[c])))
    return result


def binary_metrics(cm: ConfusionMatrix, model: str = "CNN-BiLSTM") -> MetricsReport:
    """
    Accuracy, recall, precision and F1 with attack (index 1) as the positive class

    Args:
        cm (ConfusionMatrix): 2x2 matrix
        model (str, optional): Row label. Defaults to "CNN-BiLSTM"

    Raises:
        ConfigError: Matrix is not 2x2

    Returns:
        MetricsReport: Binary report
    """
    if cm.num_classes != 2:
        raise ConfigError(f"binary metrics need a 2x2 matrix, got {cm.num_classes} classes")

    flags: List[str] = []
    tn, fp = (float(v) for v in cm.counts[0])
    fn, tp = (float(v) for v in cm.counts[1])

    accuracy = _ratio(tp + tn, tp + tn + fp + fn, "accuracy", flags)
    recall = _ratio(tp, tp + fn, "recall", flags)
    precision = _ratio(tp, tp + fp, "precision", flags)
    f1 = _f1(precision, recall, "f1", flags)

    per_class = _per_class(cm, [])
    macro = {
        "precision": float(np.mean([c.precision for c in per_class])),
        "recall": float(np.mean([c.recall for c in per_class])),
        "f1": float(np.mean([c.f1 for c in per_class])),
    }
    return MetricsReport(
        model, "binary", accuracy, precision, recall, f1, per_class, macro, flags, confusion=cm
    )


def multiclass_metrics(cm: ConfusionMatrix, model: str = "CNN-BiLSTM") -> MetricsReport:
    """
    Per-class one-vs-rest metrics with macro and support-weighted averages;
    the headline precision/recall/F1 are the weighted ones

    Args:
        cm (ConfusionMatrix): C x C matrix, C >= 2
        model (str, optional): Row label. Defaults to "CNN-BiLSTM"

    Returns:
        MetricsReport: Multiclass report
    """
    flags: List[str] = []
    per_class = _per_class(cm, flags)
    total = cm.total
    accuracy = _ratio(float(np.trace(cm.counts)), total, "accuracy", flags)

    support = np.array([c.support for c in per_class], dtype=np.float64)
    weights = support / total if total else np.zeros_like(support)

    def weighted(attr: str) -> float:
        return float(sum(w * getattr(c, attr) for w, c in zip(weights, per_class)))

    def mean(attr: str) -> float:
        return float(np.mean([getattr(c, attr) for c in per_class]))

    macro = {"precision": mean("precision"), "recall": mean("recall"), "f1": mean("f1")}
    return MetricsReport(
        model,
        "multiclass",
        accuracy,
        weighted("precision"),
        weighted("recall"),
        weighted("f1"),
        per_class,
        macro,
        flags,
        confusion=cm,
    )


def _pct(value: float) -> str:
    return f"{value * 100:.2f}%"


def _seconds(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.1f}"


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> List[str]:
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    lines = [" | ".join(str(h).ljust(w) for h, w in zip(header, widths))]
    lines.append("-+-".join("-" * w for w in widths))
    for row in rows:
        lines.append(" | ".join(str(v).ljust(w) for v, w in zip(row, widths)))
    return lines


def _summary_row(report: MetricsReport) -> List[str]:
    if report.head == "binary":
        return [
            report.model,
            _pct(report.accuracy),
            _pct(report.recall),
            _pct(report.precision),
            _pct(report.f1),
            _seconds(report.train_s),
            _seconds(report.predict_s),
            _seconds(report.total_s),
        ]
    return [
        report.model,
        _pct(report.accuracy),
        _pct(report.precision),
        _pct(report.recall),
        _pct(report.f1),
        _seconds(report.train_s),
        _seconds(report.predict_s),
    ]


def _render_text(reports: Sequence[MetricsReport]) -> str:
    lines: List[str] = []
    for head in ("binary", "multiclass"):
        group = [r for r in reports if r.head == head]
        if not group:
            continue
        columns = BINARY_COLUMNS if head == "binary" else MULTICLASS_COLUMNS
        lines.append(f"{head.capitalize()} classification")
        lines.extend(_table(["Model", *columns], [_summary_row(r) for r in group]))
        lines.append("")

    for report in reports:
        lines.append(f"{report.model} ({report.head}) per class")
        lines.extend(
            _table(
                ["Class", "Precision", "Recall", "F1-Score", "Support"],
                [
                    [c.name, _pct(c.precision), _pct(c.recall), _pct(c.f1), str(c.support)]
                    for c in report.per_class
                ],
            )
        )
        if report.macro:
            lines.append(
                f"macro: precision {_pct(report.macro['precision'])}, "
                f"recall {_pct(report.macro['recall'])}, f1 {_pct(report.macro['f1'])}"
            )
        if report.flags:
            lines.append(f"zero denominators (reported as 0): {', '.join(report.flags)}")

        if report.confusion is not None:
            cm = report.confusion
            lines.append(f"Confusion matrix (rows actual, columns predicted), total {cm.total}")
            lines.extend(
                _table(
                    ["", *cm.class_names],
                    [[name, *map(str, row)] for name, row in zip(cm.class_names, cm.counts)],
                )
            )
        lines.append("")

    return "\n".join(lines).rstrip() + "\n"


def render_report(reports: Sequence[MetricsReport], fmt: str = "text") -> str:
    """
    Render one or more reports as a comparison table or a stable JSON document

    Args:
        reports (Sequence[MetricsReport]): Reports, at least one
        fmt (str, optional): "text" or "json". Defaults to "text"

    Raises:
        ConfigError: Empty list or unknown format

    Returns:
        str: Rendered document
    """
    if not reports:
        raise ConfigError("render_report needs at least one report")
    if fmt not in FORMATS:
        raise ConfigError(f"unknown report format {fmt!r} (use text or json)")

    if fmt == "json":
        return json.dumps({"reports": [r.to_json() for r in reports]}, indent=2, sort_keys=True)
    return _render_text(reports)


def reports_from_json(document: Union[str, Dict[str, Any]]) -> List[MetricsReport]:
    """
    Rebuild reports from render_report(..., "json") output

    Args:
        document (Union[str, Dict[str, Any]]): JSON text or parsed dictionary

    Raises:
        ConfigError: Not a report document

    Returns:
        List[MetricsReport]: Reports in document order
    """
    try:
        data = json.loads(document) if isinstance(document, str) else document
        return [MetricsReport.from_json(item) for item in data["reports"]]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"not a metrics report document: {exc}") from exc
