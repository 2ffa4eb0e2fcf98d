"""
Main module for the lightweight CNN-BiLSTM intrusion detection engine
Wires data preparation, training, evaluation, prediction and model inspection
"""

import argparse
import json
import os
import sys
import time
from typing import Any, Dict, List, Optional, Sequence, Tuple

import dotenv
import numpy as np
import pandas as pd

import model_format
from baselines import compare_baselines
from errors import ConfigError, IdsError, SchemaMismatchError
from ids_model import TrainedModel, build, fit, labels_from_proba, predict_proba
from logger import Logger, LogLevel
from losses import inverse_frequency_weights
from metrics_report import (
    MetricsReport,
    binary_metrics,
    confusion_matrix,
    multiclass_metrics,
    render_report,
)
from models import Head, RunConfig, SplitPolicy, TrainConfig, Weighting
from unsw_dataset import (
    EncodedDataset,
    FeatureSchema,
    RawRecords,
    class_distribution,
    concat_records,
    fit_encoders,
    load_cache,
    load_csv,
    save_cache,
    stratified_indices,
    subsample_fraction,
    transform,
    transform_features,
)

# Load dotenv once at module level
ENV_FILE_PATH = dotenv.find_dotenv(usecwd=True)
dotenv.load_dotenv(ENV_FILE_PATH)

MODEL_NAME = "CNN-BiLSTM"
MODEL_FILE = "model.lids"
TRAIN_CACHE = "train.lids-data"
TEST_CACHE = "test.lids-data"


def _add_data_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--train-csv", dest="train_csv", help="Official training CSV")
    sub.add_argument("--test-csv", dest="test_csv", help="Official testing CSV")
    sub.add_argument("--prepared", dest="prepared_dir", help="Folder written by 'prepare'")
    sub.add_argument("--split", help="official | random:F | subsample:F")
    sub.add_argument(
        "--subsample", type=float, help="Shorthand for --split subsample:F"
    )


def _add_shared_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON run configuration; flags override it")
    sub.add_argument("--seed", type=int, help="Seed for every random choice")
    sub.add_argument("--threads", type=int, help="Worker cap (default IDS_THREADS or 1)")
    sub.add_argument(
        "--deterministic",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="Reduce parallel gradients in a fixed order",
    )
    sub.add_argument("--head", choices=[h.value for h in Head], help="Output head")
    sub.add_argument(
        "--weighting", choices=[w.value for w in Weighting], help="Loss weighting"
    )
    sub.add_argument("--out", help="Output folder (default 'out')")


def build_parser() -> argparse.ArgumentParser:
    """
    Command-line parser with one subcommand per pipeline stage

    Returns:
        argparse.ArgumentParser: Parser
    """
    parser = argparse.ArgumentParser(description="Lightweight CNN-BiLSTM intrusion detection")
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="Increase verbosity level (-v for INFO, -vv for DEBUG)",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    prepare = commands.add_parser("prepare", help="Encode the CSV files into caches")
    prepare.add_argument("--train-csv", dest="train_csv", required=True)
    prepare.add_argument("--test-csv", dest="test_csv", required=True)
    prepare.add_argument("--out", default="prepared", help="Cache folder (default 'prepared')")

    train = commands.add_parser("train", help="Train a model and evaluate it")
    _add_shared_flags(train)
    _add_data_flags(train)
    train.add_argument("--epochs", type=int)
    train.add_argument("--batch-size", dest="batch_size", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument(
        "--baselines", action="store_true", default=None, help="Add LR and KNN rows"
    )
    train.add_argument("--format", choices=["text", "json"], default="text")

    evaluate = commands.add_parser("evaluate", help="Score a model file")
    evaluate.add_argument("model", help="Model file")
    _add_shared_flags(evaluate)
    _add_data_flags(evaluate)
    evaluate.add_argument("--threshold", type=float)
    evaluate.add_argument("--format", choices=["text", "json"], default="text")

    predict = commands.add_parser("predict", help="Label the records of a CSV file")
    predict.add_argument("model", help="Model file")
    predict.add_argument("--input", required=True, help="CSV with the feature columns")
    predict.add_argument("--threads", type=int)
    predict.add_argument("--threshold", type=float)
    predict.add_argument("--out", help="Output folder (default 'out')")

    inspect = commands.add_parser("inspect", help="Summarize a model file")
    inspect.add_argument("model", help="Model file")
    inspect.add_argument("--format", choices=["text", "json"], default="text")

    return parser


parser = build_parser()


def get_logger(verbose: int) -> Logger:
    """
    Create the process logger with a console level matching the verbosity flags

    Args:
        verbose (int): Number of -v flags

    Returns:
        Logger: Logger instance for the main component
    """
    verbosity_map = {
        0: LogLevel.WARNING,
        1: LogLevel.INFO,
        2: LogLevel.DEBUG,
    }
    log_level = verbosity_map.get(verbose, LogLevel.DEBUG)
    logs_path = os.getenv("LOGS_PATH") or "logs"
    return Logger("Main", logs_path=logs_path, print_log_level=log_level)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def _read_config_file(path: str) -> Dict[str, Any]:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: the configuration must be a JSON object")
    return data


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """
    Merge the --config file with command-line flags; flags win

    Args:
        args (argparse.Namespace): Parsed arguments

    Raises:
        ConfigError: Unknown key, invalid value or missing input path

    Returns:
        RunConfig: Validated run configuration
    """
    data = _read_config_file(args.config) if getattr(args, "config", None) else {}
    cfg = RunConfig.parse(data)

    head = getattr(args, "head", None)
    if head is not None:
        cfg.model.head = Head(head)
    if "train" not in data and Head(cfg.model.head) == Head.MULTICLASS:
        cfg.train = TrainConfig.defaults_for(Head.MULTICLASS)

    env_threads = os.getenv("IDS_THREADS")
    if env_threads and "threads" not in data:
        try:
            cfg.threads = int(env_threads)
        except ValueError as exc:
            raise ConfigError(f"IDS_THREADS must be an integer, got {env_threads!r}") from exc

    overrides = {
        "seed": "seed",
        "threads": "threads",
        "deterministic": "deterministic",
        "out": "out",
        "train_csv": "train_csv",
        "test_csv": "test_csv",
        "prepared_dir": "prepared_dir",
        "split": "split",
        "baselines": "baselines",
        "threshold": "threshold",
    }
    for flag, key in overrides.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, key, value)

    if getattr(args, "subsample", None) is not None:
        cfg.split = f"subsample:{args.subsample}"

    train_overrides = {
        "weighting": "weighting",
        "epochs": "epochs",
        "batch_size": "batch_size",
        "lr": "learning_rate",
    }
    for flag, key in train_overrides.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg.train, key, value)

    # One user-visible seed drives every random choice
    cfg.train.seed = cfg.seed
    cfg.train.deterministic = cfg.deterministic

    cfg.validate()
    for key in ("train_csv", "test_csv"):
        path = getattr(cfg, key)
        if path and not os.path.isfile(path):
            raise ConfigError(f"{key} not found: {path}")
    if cfg.prepared_dir and not os.path.isdir(cfg.prepared_dir):
        raise ConfigError(f"prepared folder not found: {cfg.prepared_dir}")
    return cfg


# ---------------------------------------------------------------------------
# Data resolution
# ---------------------------------------------------------------------------


def _require_csvs(cfg: RunConfig, what: str) -> Tuple[str, str]:
    if not cfg.train_csv or not cfg.test_csv:
        raise ConfigError(f"{what} needs --train-csv and --test-csv")
    return cfg.train_csv, cfg.test_csv


def _random_split_records(cfg: RunConfig, policy: SplitPolicy) -> Tuple[RawRecords, RawRecords]:
    train_csv, test_csv = _require_csvs(cfg, f"split {policy}")
    union = concat_records([load_csv(train_csv), load_csv(test_csv)], "official-union")
    train_idx, test_idx = stratified_indices(union.multiclass_labels(), policy.fraction, cfg.seed)
    return (
        union.take(train_idx, f"derived:random-train({union.source})"),
        union.take(test_idx, f"derived:random-test({union.source})"),
    )


def load_training_data(cfg: RunConfig) -> Tuple[EncodedDataset, EncodedDataset]:
    """
    Training and evaluation datasets for a run, encoders fitted on the training side only.
    subsample:F keeps the whole training file and subsamples the test file

    Args:
        cfg (RunConfig): Run configuration

    Raises:
        ConfigError: Inputs do not support the requested split

    Returns:
        Tuple[EncodedDataset, EncodedDataset]: Train and test datasets
    """
    policy = cfg.split_policy

    if policy.kind == "random":
        train_raw, test_raw = _random_split_records(cfg, policy)
        state = fit_encoders(train_raw)
        return (
            transform(train_raw, state, train_raw.source),
            transform(test_raw, state, test_raw.source),
        )

    if cfg.prepared_dir:
        train = load_cache(os.path.join(cfg.prepared_dir, TRAIN_CACHE))
        test = load_cache(os.path.join(cfg.prepared_dir, TEST_CACHE))
    else:
        train_csv, test_csv = _require_csvs(cfg, "training without --prepared")
        train_raw = load_csv(train_csv)
        state = fit_encoders(train_raw)
        train = transform(train_raw, state, "official-train")
        test = transform(load_csv(test_csv), state, "official-test")

    if policy.kind == "subsample":
        test = subsample_fraction(test, policy.fraction, cfg.seed)
    return train, test


def _check_schema(model: TrainedModel, schema: FeatureSchema) -> None:
    if model.encoder is None:
        raise ConfigError("model file carries no encoder state")
    if model.encoder.schema != schema:
        raise SchemaMismatchError(model.encoder.schema.signature(), schema.signature())


def load_evaluation_data(cfg: RunConfig, model: TrainedModel) -> EncodedDataset:
    """
    Evaluation dataset encoded with the model's own encoder state

    Args:
        cfg (RunConfig): Run configuration
        model (TrainedModel): Model being evaluated

    Raises:
        SchemaMismatchError: Data and model schemas differ

    Returns:
        EncodedDataset: Dataset to score
    """
    logger = Logger("Main")
    policy = cfg.split_policy
    if model.encoder is None:
        raise ConfigError("model file carries no encoder state")

    if policy.kind == "random":
        _, test_raw = _random_split_records(cfg, policy)
        _check_schema(model, FeatureSchema.default())
        return transform(test_raw, model.encoder, test_raw.source)

    if cfg.prepared_dir:
        test = load_cache(os.path.join(cfg.prepared_dir, TEST_CACHE))
        if test.encoder is not None:
            _check_schema(model, test.encoder.schema)
            if test.encoder != model.encoder:
                logger.log_warning(
                    "prepared cache was encoded with a different encoder state than the model"
                )
    elif cfg.test_csv:
        _check_schema(model, FeatureSchema.default())
        test = transform(load_csv(cfg.test_csv), model.encoder, "official-test")
    else:
        raise ConfigError("evaluation needs --test-csv or --prepared")

    if policy.kind == "subsample":
        test = subsample_fraction(test, policy.fraction, cfg.seed)
    return test


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def score(
    model: TrainedModel, test: EncodedDataset, threads: int, threshold: float
) -> MetricsReport:
    """
    Predict a dataset and derive the head's metrics, timing the full prediction pass

    Args:
        model (TrainedModel): Trained model
        test (EncodedDataset): Dataset to score
        threads (int): Inference workers
        threshold (float): Binary decision threshold

    Returns:
        MetricsReport: Report with predict_s set
    """
    started = time.perf_counter()
    predicted = labels_from_proba(predict_proba(model, test.features, threads), threshold)
    predict_s = time.perf_counter() - started

    cm = confusion_matrix(test.labels(model.head), predicted, list(model.class_names))
    report = binary_metrics(cm) if model.head == Head.BINARY else multiclass_metrics(cm)
    return report.with_timing(None, predict_s, MODEL_NAME)


def _write_text(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def _write_reports(out: str, reports: List[MetricsReport]) -> None:
    _write_text(os.path.join(out, "report.txt"), render_report(reports, "text"))
    _write_text(os.path.join(out, "report.json"), render_report(reports, "json") + "\n")


def _dataset_summary(dataset: EncodedDataset) -> Dict[str, Any]:
    binary = class_distribution(dataset, Head.BINARY)
    multi = class_distribution(dataset, Head.MULTICLASS)
    return {
        "records": len(dataset),
        "provenance": dataset.provenance,
        "binary": dict(zip(("normal", "attack"), binary.tolist())),
        "categories": dict(zip(dataset.encoder.schema.categories, multi.tolist()))
        if dataset.encoder
        else multi.tolist(),
    }


def cmd_prepare(args: argparse.Namespace, logger: Logger) -> int:
    """
    Encode both official files with encoders fitted on the training file

    Args:
        args (argparse.Namespace): Parsed arguments
        logger (Logger): Logger

    Returns:
        int: Exit code
    """
    train_raw = load_csv(args.train_csv)
    test_raw = load_csv(args.test_csv)
    state = fit_encoders(train_raw)
    train = transform(train_raw, state, "official-train")
    test = transform(test_raw, state, "official-test")

    save_cache(train, os.path.join(args.out, TRAIN_CACHE))
    save_cache(test, os.path.join(args.out, TEST_CACHE))

    summary = {"train": _dataset_summary(train), "test": _dataset_summary(test)}
    _write_text(
        os.path.join(args.out, "summary.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )

    print(f"train: {len(train)} rows, test: {len(test)} rows")
    for name in ("train", "test"):
        counts = ", ".join(f"{k}={v}" for k, v in summary[name]["categories"].items())
        print(f"{name} classes: {counts}")
    logger.log_success(f"Prepared caches written to {args.out}")
    return 0


def cmd_train(args: argparse.Namespace, logger: Logger) -> int:
    """
    Train a model, save it with its history and write the evaluation report

    Args:
        args (argparse.Namespace): Parsed arguments
        logger (Logger): Logger

    Returns:
        int: Exit code
    """
    cfg = resolve_config(args)
    head = Head(cfg.model.head)
    train, test = load_training_data(cfg)
    logger.log_info(
        f"Split {cfg.split_policy}: {len(train)} training / {len(test)} evaluation records"
    )

    network = build(cfg.model, cfg.seed)
    started = time.perf_counter()
    model, history = fit(network, train, cfg.train, cfg.threads)
    train_s = time.perf_counter() - started

    model_format.save(model, os.path.join(cfg.out, MODEL_FILE))
    _write_text(
        os.path.join(cfg.out, "history.json"),
        json.dumps(history.to_json(), indent=2, sort_keys=True) + "\n",
    )

    report = score(model, test, cfg.threads, cfg.threshold)
    report = report.with_timing(train_s, report.predict_s)

    reports: List[MetricsReport] = []
    if cfg.baselines:
        weights = None
        if Weighting(cfg.train.weighting) == Weighting.INVERSE_FREQUENCY:
            weights = inverse_frequency_weights(class_distribution(train, head))
        reports.extend(
            compare_baselines(
                train,
                test,
                head,
                cfg.knn_k,
                cfg.logreg_epochs,
                cfg.seed,
                cfg.threads,
                weights,
            )
        )
    reports.append(report)

    _write_reports(cfg.out, reports)
    print(render_report(reports, args.format))
    logger.log_success(f"Model written to {os.path.join(cfg.out, MODEL_FILE)}")
    return 0


def _adopt_training_seed(cfg: RunConfig, args: argparse.Namespace, model: TrainedModel) -> None:
    """
    Re-derive splits with the seed the model was trained with

    Args:
        cfg (RunConfig): Resolved configuration, updated in place
        args (argparse.Namespace): Parsed arguments
        model (TrainedModel): Model being evaluated

    Raises:
        ConfigError: An explicit seed disagrees with the model's for a random split
    """
    model_seed = model.metadata.get("seed")
    if model_seed is None:
        return

    explicit = args.seed is not None or (
        bool(args.config) and "seed" in _read_config_file(args.config)
    )
    if not explicit:
        cfg.seed = int(model_seed)
        cfg.train.seed = cfg.seed
    elif cfg.split_policy.kind == "random" and cfg.seed != int(model_seed):
        raise ConfigError(
            f"--seed {cfg.seed} differs from the training seed {model_seed}; "
            "the random split would overlap the training records"
        )


def cmd_evaluate(args: argparse.Namespace, logger: Logger) -> int:
    """
    Score a saved model on the requested split

    Args:
        args (argparse.Namespace): Parsed arguments
        logger (Logger): Logger

    Returns:
        int: Exit code
    """
    model = model_format.load(args.model)
    if args.head is not None and Head(args.head) != model.head:
        raise ConfigError(
            f"model head is {model.head.value} but --head {args.head} was requested"
        )
    args.head = model.head.value

    cfg = resolve_config(args)
    _adopt_training_seed(cfg, args, model)
    test = load_evaluation_data(cfg, model)
    report = score(model, test, cfg.threads, cfg.threshold)

    _write_reports(cfg.out, [report])
    print(render_report([report], args.format))
    logger.log_info(f"Evaluated {len(test)} records in {report.predict_s:.2f}s")
    return 0


def cmd_predict(args: argparse.Namespace, logger: Logger) -> int:
    """
    Write one prediction row per input record, in input order

    Args:
        args (argparse.Namespace): Parsed arguments
        logger (Logger): Logger

    Returns:
        int: Exit code
    """
    model = model_format.load(args.model)
    if model.encoder is None:
        raise ConfigError("model file carries no encoder state")
    _check_schema(model, FeatureSchema.default())

    threads = args.threads or int(os.getenv("IDS_THREADS") or 1)
    threshold = 0.5 if args.threshold is None else args.threshold
    records = load_csv(args.input, require_labels=False)

    proba = predict_proba(model, transform_features(records, model.encoder), threads)
    labels = labels_from_proba(proba, threshold)

    columns: Dict[str, Any] = {
        "row": np.arange(len(records)),
        "label": [model.class_names[i] for i in labels],
        "label_index": labels,
    }
    if model.head == Head.BINARY:
        columns["prob_attack"] = proba[:, 0]
    else:
        for i, name in enumerate(model.class_names):
            columns[f"prob_{name}"] = proba[:, i]

    out = args.out or "out"
    path = os.path.join(out, "predictions.csv")
    os.makedirs(out, exist_ok=True)
    pd.DataFrame(columns).to_csv(path, index=False, float_format="%.8g")

    print(f"{len(records)} predictions written to {path}")
    logger.log_success(f"Predicted {len(records)} records from {args.input}")
    return 0


def _format_inspect(summary: Dict[str, Any]) -> str:
    lines = [
        f"head: {summary['head']}",
        f"parameters: {summary['parameters']}",
        f"classes: {', '.join(summary['classes'])}",
    ]
    if summary["schema"]:
        lines.append(f"schema: {summary['schema']}")
    lines.append("layers:")
    for layer in summary["layers"]:
        shapes = ", ".join(f"{k} {v}" for k, v in layer["shapes"].items()) or "no parameters"
        lines.append(f"  {layer['layer']:<7} {layer['kind']:<15} {layer['parameters']:>6}  {shapes}")
    lines.append("metadata:")
    for key, value in sorted(summary["metadata"].items()):
        lines.append(f"  {key}: {value}")
    return "\n".join(lines)


def cmd_inspect(args: argparse.Namespace, logger: Logger) -> int:
    """
    Print the layer stack, parameter count and training metadata of a model file

    Args:
        args (argparse.Namespace): Parsed arguments
        logger (Logger): Logger

    Returns:
        int: Exit code
    """
    summary = model_format.describe(model_format.load(args.model))
    if args.format == "json":
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        print(_format_inspect(summary))
    logger.log_debug(f"Inspected {args.model}")
    return 0


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "inspect": cmd_inspect,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one command and map engine errors to exit codes
    0 success, 2 configuration, 3 data or model file, 4 training abort

    Args:
        argv (Optional[Sequence[str]]): Arguments; sys.argv when omitted

    Returns:
        int: Exit code
    """
    args = parser.parse_args(argv)
    logger = get_logger(args.verbose)

    try:
        return COMMANDS[args.command](args, logger)
    except IdsError as exc:
        logger.log_error(str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
