"""Shared pytest fixtures: synthetic UNSW-NB15 style CSV files and an isolated log folder"""

import csv
import os
from typing import Callable, List, Optional, Sequence

import numpy as np
import pytest

from logger import Logger, LogLevel
from unsw_dataset import (
    ATTACK_CATEGORIES,
    CATEGORICAL_FEATURES,
    FEATURE_NAMES,
    fit_encoders,
    load_csv,
    transform,
)

PROTOS = ("tcp", "udp", "arp", "ospf")
SERVICES = ("-", "http", "dns", "ftp")
STATES = ("FIN", "INT", "CON", "REQ")


@pytest.fixture(autouse=True)
def isolated_logger(tmp_path, monkeypatch):
    """Route every log line of a test into its own temporary folder"""
    Logger.reset_logger()
    logs_path = str(tmp_path / "logs")
    monkeypatch.setenv("LOGS_PATH", logs_path)
    monkeypatch.delenv("IDS_THREADS", raising=False)
    Logger(logs_path=logs_path, file_log_level=LogLevel.DEBUG, print_log_level=LogLevel.NONE)
    yield
    Logger.reset_logger()


def synthetic_rows(
    n: int,
    seed: int = 0,
    categories: Sequence[str] = ATTACK_CATEGORIES,
    separable: bool = True,
) -> List[dict]:
    """
    Records whose class shifts the numeric features, so a classifier can learn them

    Args:
        n (int): Number of records
        seed (int, optional): Random seed. Defaults to 0
        categories (Sequence[str], optional): Categories cycled through. Defaults to all ten
        separable (bool, optional): Shift attack records upward. Defaults to True

    Returns:
        List[dict]: Rows keyed by CSV column
    """
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        category = categories[i % len(categories)]
        label = 0 if category == "Normal" else 1
        shift = 0.0 if not separable else (0.0 if label == 0 else 5.0)
        row = {"id": i + 1}
        for name in FEATURE_NAMES:
            if name in CATEGORICAL_FEATURES:
                pool = {"proto": PROTOS, "service": SERVICES, "state": STATES}[name]
                row[name] = pool[(i + label) % len(pool)]
            else:
                row[name] = f"{rng.uniform(0.0, 1.0) + shift:.6f}"
        row["attack_cat"] = "" if category == "Normal" and i % 2 else category
        row["label"] = label
        rows.append(row)
    return rows


def write_csv(path: str, rows: List[dict], columns: Optional[Sequence[str]] = None) -> str:
    """
    Write rows to a CSV file with the official column order unless told otherwise

    Args:
        path (str): Output file
        rows (List[dict]): Rows
        columns (Optional[Sequence[str]]): Column order

    Returns:
        str: The path
    """
    columns = list(columns or ["id", *FEATURE_NAMES, "attack_cat", "label"])
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)
    return path


@pytest.fixture
def csv_factory(tmp_path) -> Callable[..., str]:
    """Create synthetic CSV files inside the test's temporary folder"""

    def factory(name: str, n: int = 60, seed: int = 0, **kwargs) -> str:
        columns = kwargs.pop("columns", None)
        return write_csv(
            os.path.join(tmp_path, name), synthetic_rows(n, seed, **kwargs), columns
        )

    return factory


@pytest.fixture
def official_csvs(csv_factory):
    """A small training/testing pair covering every category"""
    return csv_factory("train.csv", 120, seed=1), csv_factory("test.csv", 60, seed=2)


@pytest.fixture
def encoded_factory(csv_factory):
    """Encode a synthetic CSV with encoders fitted on itself"""

    def factory(n: int = 60, seed: int = 0, **kwargs):
        records = load_csv(csv_factory(f"encoded_{n}_{seed}.csv", n, seed, **kwargs))
        return transform(records, fit_encoders(records), "official-train")

    return factory
