"""
UNSW-NB15 dataset module
Loads the official CSV files, fits encoders on training data only, turns records into
fixed-length [N, 42, 1] sequences and derives stratified splits and subsamples
"""

import json
import os
import struct
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import ConfigError, DataError
from logger import Logger
from models import Head

NORMAL = "Normal"

# Class index order: Normal first, then the remaining categories
ATTACK_CATEGORIES: Tuple[str, ...] = (
    NORMAL,
    "Analysis",
    "Backdoor",
    "DoS",
    "Exploits",
    "Fuzzers",
    "Generic",
    "Reconnaissance",
    "Shellcode",
    "Worms",
)
CATEGORY_ALIASES = {"Backdoors": "Backdoor"}

BINARY_CLASSES: Tuple[str, ...] = ("normal", "attack")

CATEGORICAL_FEATURES = ("proto", "service", "state")

FEATURE_NAMES: Tuple[str, ...] = (
    "proto",
    "rate",
    "dur",
    "service",
    "state",
    "spkts",
    "dpkts",
    "sbytes",
    "dbytes",
    "sttl",
    "dttl",
    "sload",
    "dload",
    "sloss",
    "dloss",
    "swin",
    "dwin",
    "stcpb",
    "dtcpb",
    "smean",
    "dmean",
    "trans_depth",
    "response_body_len",
    "sinpkt",
    "dinpkt",
    "sjit",
    "djit",
    "tcprtt",
    "synack",
    "ackdat",
    "ct_srv_src",
    "ct_srv_dst",
    "ct_src_ltm",
    "ct_dst_ltm",
    "ct_dst_src_ltm",
    "ct_src_dport_ltm",
    "ct_dst_sport_ltm",
    "ct_state_ttl",
    "is_ftp_login",
    "ct_ftp_cmd",
    "ct_flw_http_mthd",
    "is_sm_ips_ports",
)
FEATURE_ALIASES = {"smeansz": "smean", "dmeansz": "dmean"}

LABEL_COLUMNS = ("attack_cat", "label")

# A non-negative feature is log1p-compressed when max / max(median, 1) exceeds this
LOG_RATIO = 1000.0

CACHE_FORMAT = "lids-data"
CACHE_VERSION = 1


class FeatureKind(str, Enum):
    """
    Kind of an input feature
    """

    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FeatureSchema:
    """
    Ordered model-input features and the class names of the label space
    """

    features: Tuple[Tuple[str, FeatureKind], ...]
    categories: Tuple[str, ...] = ATTACK_CATEGORIES

    @staticmethod
    def default() -> "FeatureSchema":
        """
        The 42-feature UNSW-NB15 schema

        Returns:
            FeatureSchema: Default schema
        """
        return FeatureSchema(
            tuple(
                (
                    name,
                    FeatureKind.CATEGORICAL
                    if name in CATEGORICAL_FEATURES
                    else FeatureKind.NUMERIC,
                )
                for name in FEATURE_NAMES
            )
        )

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self.features]

    def __len__(self) -> int:
        return len(self.features)

    def to_json(self) -> Dict[str, Any]:
        return {
            "features": [[name, kind.value] for name, kind in self.features],
            "categories": list(self.categories),
        }

    @staticmethod
    def from_json(data: Dict[str, Any]) -> "FeatureSchema":
        return FeatureSchema(
            tuple((str(name), FeatureKind(kind)) for name, kind in data["features"]),
            tuple(data["categories"]),
        )

    def signature(self) -> str:
        """
        Compact description used in mismatch messages

        Returns:
            str: Feature count with first and last names
        """
        names = self.names
        head = ",".join(names[:3])
        return f"{len(names)} features [{head},...,{names[-1]}] / {len(self.categories)} classes"


@dataclass
class RawRecords:
    """
    Parsed CSV rows in canonical feature order, plus labels when present
    """

    frame: pd.DataFrame
    source: str
    has_labels: bool = True

    def __len__(self) -> int:
        return len(self.frame)

    def take(self, indices: np.ndarray, source: Optional[str] = None) -> "RawRecords":
        """
        Select rows by position

        Args:
            indices (np.ndarray): Row positions
            source (Optional[str]): Provenance of the selection

        Returns:
            RawRecords: Selected rows
        """
        return RawRecords(
            self.frame.iloc[np.asarray(indices)].reset_index(drop=True),
            source or self.source,
            self.has_labels,
        )

    def multiclass_labels(self) -> np.ndarray:
        if not self.has_labels:
            raise DataError("records carry no labels", self.source)
        index = {name: i for i, name in enumerate(ATTACK_CATEGORIES)}
        return self.frame["attack_cat"].map(index).to_numpy(dtype=np.int64)

    def binary_labels(self) -> np.ndarray:
        if not self.has_labels:
            raise DataError("records carry no labels", self.source)
        return self.frame["label"].to_numpy(dtype=np.int64)


@dataclass(frozen=True)
class NumericScale:
    """
    Training statistics of one numeric feature, taken after the optional log1p
    """

    minimum: float
    maximum: float
    log: bool


@dataclass(frozen=True)
class EncoderState:
    """
    Fitted categorical vocabularies and numeric ranges; immutable after fitting
    """

    schema: FeatureSchema
    vocabularies: Dict[str, Dict[str, int]]
    scales: Dict[str, NumericScale]

    def to_json(self) -> Dict[str, Any]:
        return {
            "schema": self.schema.to_json(),
            "vocabularies": {k: dict(v) for k, v in self.vocabularies.items()},
            "scales": {
                k: {"min": s.minimum, "max": s.maximum, "log": s.log}
                for k, s in self.scales.items()
            },
        }

    @staticmethod
    def from_json(data: Dict[str, Any]) -> "EncoderState":
        return EncoderState(
            FeatureSchema.from_json(data["schema"]),
            {k: {str(a): int(b) for a, b in v.items()} for k, v in data["vocabularies"].items()},
            {
                k: NumericScale(float(s["min"]), float(s["max"]), bool(s["log"]))
                for k, s in data["scales"].items()
            },
        )


@dataclass
class EncodedDataset:
    """
    Encoded records: features [N, 42, 1] float32 with binary and multiclass labels
    """

    features: np.ndarray
    binary_labels: np.ndarray
    multiclass_labels: np.ndarray
    provenance: str
    encoder: Optional[EncoderState] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        n = self.features.shape[0]
        if n == 0:
            raise DataError(f"empty dataset ({self.provenance})")
        if self.binary_labels.shape[0] != n or self.multiclass_labels.shape[0] != n:
            raise DataError(
                f"label arrays disagree with {n} feature rows ({self.provenance})"
            )

    def __len__(self) -> int:
        return int(self.features.shape[0])

    def labels(self, head: Head) -> np.ndarray:
        """
        Label view matching an output head

        Args:
            head (Head): Output head

        Returns:
            np.ndarray: Binary or multiclass labels
        """
        return self.binary_labels if Head(head) == Head.BINARY else self.multiclass_labels

    def subset(self, indices: np.ndarray, provenance: str) -> "EncodedDataset":
        """
        Select records by position

        Args:
            indices (np.ndarray): Record positions
            provenance (str): Provenance tag of the selection

        Returns:
            EncodedDataset: Selected records
        """
        idx = np.asarray(indices, dtype=np.int64)
        return EncodedDataset(
            self.features[idx],
            self.binary_labels[idx],
            self.multiclass_labels[idx],
            provenance,
            self.encoder,
        )


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _file_rows(positions: Sequence[int]) -> List[int]:
    # Header is line 1, first record is line 2
    return [int(p) + 2 for p in positions]


def load_csv(path: str, require_labels: bool = True) -> RawRecords:
    """
    Load an official UNSW-NB15 CSV file; columns are mapped by header name

    Args:
        path (str): CSV file path
        require_labels (bool, optional): Require attack_cat and label columns. Defaults to True

    Raises:
        ConfigError: File does not exist
        DataError: Missing columns or malformed rows, with file row numbers

    Returns:
        RawRecords: Records with the 42 features in canonical order
    """
    logger = Logger("Dataset")

    if not os.path.isfile(path):
        raise ConfigError(f"dataset file not found: {path}")

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"unreadable CSV ({exc})", path) from exc

    frame.columns = [FEATURE_ALIASES.get(c.strip(), c.strip()) for c in frame.columns]
    if "id" in frame.columns:
        frame = frame.drop(columns=["id"])

    has_labels = all(c in frame.columns for c in LABEL_COLUMNS)
    wanted = list(FEATURE_NAMES) + (list(LABEL_COLUMNS) if require_labels or has_labels else [])
    missing = [c for c in wanted if c not in frame.columns]
    if missing:
        raise DataError(f"missing columns {missing}", path)

    extra = [c for c in frame.columns if c not in wanted]
    if extra:
        logger.log_warning(f"{path}: ignoring extra columns {extra}")

    parsed: Dict[str, pd.Series] = {}
    bad_rows: set = set()

    for name in FEATURE_NAMES:
        column = frame[name].str.strip()
        if name in CATEGORICAL_FEATURES:
            parsed[name] = column
            continue
        values = pd.to_numeric(column, errors="coerce")
        invalid = values.isna() | np.isinf(values.to_numpy(dtype=np.float64))
        bad_rows.update(np.flatnonzero(invalid.to_numpy()).tolist())
        parsed[name] = values.astype(np.float64)

    if has_labels:
        labels = pd.to_numeric(frame["label"].str.strip(), errors="coerce")
        invalid = ~labels.isin([0, 1])
        bad_rows.update(np.flatnonzero(invalid.to_numpy()).tolist())

        categories = frame["attack_cat"].str.strip().replace(CATEGORY_ALIASES)
        categories = categories.where(
            (categories != "") | (labels != 0), NORMAL
        )
        invalid = ~categories.isin(ATTACK_CATEGORIES)
        bad_rows.update(np.flatnonzero(invalid.to_numpy()).tolist())

        # label must agree with the category: Normal is 0, every attack category is 1
        normal = categories == NORMAL
        conflicting = (normal & (labels == 1)) | (~normal & ~invalid & (labels == 0))
        bad_rows.update(np.flatnonzero(conflicting.to_numpy()).tolist())

        parsed["attack_cat"] = categories
        parsed["label"] = labels

    if bad_rows:
        raise DataError("malformed values", path, _file_rows(sorted(bad_rows)))

    result = pd.DataFrame(parsed)
    if has_labels:
        result["label"] = result["label"].astype(np.int64)

    logger.log_info(f"Loaded {len(result)} records from {path}")
    return RawRecords(result, os.path.basename(path), has_labels)


def concat_records(records: Sequence[RawRecords], source: str) -> RawRecords:
    """
    Stack record tables in order

    Args:
        records (Sequence[RawRecords]): Tables to stack
        source (str): Provenance of the union

    Returns:
        RawRecords: Concatenated records
    """
    frame = pd.concat([r.frame for r in records], ignore_index=True)
    return RawRecords(frame, source, all(r.has_labels for r in records))


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def fit_encoders(records: RawRecords, schema: Optional[FeatureSchema] = None) -> EncoderState:
    """
    Fit vocabularies and numeric ranges on training records only

    Args:
        records (RawRecords): Training records
        schema (Optional[FeatureSchema]): Feature schema. Defaults to the UNSW-NB15 schema

    Raises:
        DataError: No records

    Returns:
        EncoderState: Fitted encoder state
    """
    logger = Logger("Dataset")
    schema = schema or FeatureSchema.default()
    if len(records) == 0:
        raise DataError("cannot fit encoders on an empty training set", records.source)

    vocabularies: Dict[str, Dict[str, int]] = {}
    scales: Dict[str, NumericScale] = {}

    for name, kind in schema.features:
        column = records.frame[name]
        if kind == FeatureKind.CATEGORICAL:
            counts = Counter(column.tolist())
            ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
            vocabularies[name] = {value: rank + 1 for rank, (value, _) in enumerate(ranked)}
            continue

        values = column.to_numpy(dtype=np.float64)
        minimum, maximum = float(values.min()), float(values.max())
        use_log = minimum >= 0 and maximum / max(float(np.median(values)), 1.0) > LOG_RATIO
        if use_log:
            values = np.log1p(values)
            minimum, maximum = float(values.min()), float(values.max())
        if maximum == minimum:
            logger.log_warning(f"Feature '{name}' is constant on training data")
        scales[name] = NumericScale(minimum, maximum, bool(use_log))

    logged = [n for n, s in scales.items() if s.log]
    logger.log_debug(f"log1p applied to {len(logged)} features: {logged}")
    return EncoderState(schema, vocabularies, scales)


def transform_features(records: RawRecords, state: EncoderState) -> np.ndarray:
    """
    Encode feature columns into a [N, 42, 1] float32 tensor.
    Categorical index k of a vocabulary V becomes k/|V|: min-max over [0, |V|], so unseen
    values give 0 and the rarest training value gives 1

    Args:
        records (RawRecords): Records to encode
        state (EncoderState): Fitted encoder state

    Returns:
        np.ndarray: Features scaled into [0, 1]
    """
    n = len(records)
    matrix = np.zeros((n, len(state.schema)), dtype=np.float64)

    for j, (name, kind) in enumerate(state.schema.features):
        column = records.frame[name]
        if kind == FeatureKind.CATEGORICAL:
            vocab = state.vocabularies[name]
            # Unknown categories map to index 0
            index = column.map(vocab).fillna(0).to_numpy(dtype=np.float64)
            matrix[:, j] = index / len(vocab) if vocab else 0.0
            continue

        scale = state.scales[name]
        values = column.to_numpy(dtype=np.float64)
        if scale.log:
            values = np.log1p(np.maximum(values, 0.0))
        if scale.maximum > scale.minimum:
            matrix[:, j] = (values - scale.minimum) / (scale.maximum - scale.minimum)

    np.clip(matrix, 0.0, 1.0, out=matrix)
    return matrix.astype(np.float32).reshape(n, len(state.schema), 1)


def transform(records: RawRecords, state: EncoderState, provenance: str) -> EncodedDataset:
    """
    Encode labelled records with a fitted encoder state

    Args:
        records (RawRecords): Labelled records
        state (EncoderState): Fitted encoder state
        provenance (str): Provenance tag, e.g. "official-train"

    Returns:
        EncodedDataset: Encoded dataset
    """
    return EncodedDataset(
        transform_features(records, state),
        records.binary_labels(),
        records.multiclass_labels(),
        provenance,
        state,
    )


def concatenate(datasets: Sequence[EncodedDataset], provenance: str) -> EncodedDataset:
    """
    Stack encoded datasets in order

    Args:
        datasets (Sequence[EncodedDataset]): Datasets to stack
        provenance (str): Provenance tag of the union

    Returns:
        EncodedDataset: Concatenated dataset
    """
    return EncodedDataset(
        np.concatenate([d.features for d in datasets]),
        np.concatenate([d.binary_labels for d in datasets]),
        np.concatenate([d.multiclass_labels for d in datasets]),
        provenance,
        datasets[0].encoder,
    )


# ---------------------------------------------------------------------------
# Splits and statistics
# ---------------------------------------------------------------------------


def _round_half_up(value: float) -> int:
    return int(np.floor(value + 0.5))


def stratified_indices(
    labels: np.ndarray, test_fraction: float, seed: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-class random partition of positions

    Args:
        labels (np.ndarray): Class label per record
        test_fraction (float): Fraction of each class sent to the test side, in (0, 1)
        seed (int): Random seed

    Raises:
        ConfigError: Fraction outside (0, 1)
        DataError: A class with fewer than 2 records

    Returns:
        Tuple[np.ndarray, np.ndarray]: Sorted train and test positions
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test fraction must be in (0, 1), got {test_fraction}")

    rng = np.random.default_rng(seed)
    train_parts: List[np.ndarray] = []
    test_parts: List[np.ndarray] = []

    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        if members.size < 2:
            raise DataError(f"class {int(label)} has fewer than 2 records; cannot stratify")
        shuffled = rng.permutation(members)
        n_test = min(max(_round_half_up(members.size * test_fraction), 0), members.size - 1)
        test_parts.append(shuffled[:n_test])
        train_parts.append(shuffled[n_test:])

    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(test_parts))


def split_random_stratified(
    dataset: EncodedDataset, test_fraction: float, seed: int
) -> Tuple[EncodedDataset, EncodedDataset]:
    """
    Disjoint, exhaustive stratified split preserving the multiclass mix

    Args:
        dataset (EncodedDataset): Dataset to split
        test_fraction (float): Test share per class, in (0, 1)
        seed (int): Random seed

    Returns:
        Tuple[EncodedDataset, EncodedDataset]: Train and test datasets
    """
    train_idx, test_idx = stratified_indices(dataset.multiclass_labels, test_fraction, seed)
    return (
        dataset.subset(train_idx, f"derived:random-train({dataset.provenance})"),
        dataset.subset(test_idx, f"derived:random-test({dataset.provenance})"),
    )


def subsample_fraction(
    dataset: EncodedDataset, fraction: float, seed: int, stratified: bool = True
) -> EncodedDataset:
    """
    Reproducible random subsample

    Args:
        dataset (EncodedDataset): Source dataset
        fraction (float): Kept fraction, in (0, 1]
        seed (int): Random seed
        stratified (bool, optional): Keep the class mix within ±1 per class. Defaults to True

    Raises:
        ConfigError: Fraction outside (0, 1]

    Returns:
        EncodedDataset: Subsample, or the dataset itself for fraction 1
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"subsample fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return dataset

    rng = np.random.default_rng(seed)
    if stratified:
        parts = []
        for label in np.unique(dataset.multiclass_labels):
            members = np.flatnonzero(dataset.multiclass_labels == label)
            keep = _round_half_up(members.size * fraction)
            parts.append(rng.permutation(members)[:keep])
        indices = np.sort(np.concatenate(parts))
    else:
        size = _round_half_up(len(dataset) * fraction)
        indices = np.sort(rng.choice(len(dataset), size=size, replace=False))

    if indices.size == 0:
        raise DataError(f"subsample of {len(dataset)} records at {fraction} is empty")

    return dataset.subset(indices, f"derived:subsample-{fraction:g}({dataset.provenance})")


def class_distribution(dataset: EncodedDataset, head: Head = Head.MULTICLASS) -> np.ndarray:
    """
    Record count per class

    Args:
        dataset (EncodedDataset): Dataset
        head (Head, optional): Label view. Defaults to the 10 categories

    Returns:
        np.ndarray: Counts in class-index order, summing to N
    """
    width = 2 if Head(head) == Head.BINARY else len(ATTACK_CATEGORIES)
    return np.bincount(dataset.labels(head), minlength=width).astype(np.int64)


def class_names(head: Head) -> List[str]:
    """
    Class names in index order for a head

    Args:
        head (Head): Output head

    Returns:
        List[str]: Class names
    """
    return list(BINARY_CLASSES) if Head(head) == Head.BINARY else list(ATTACK_CATEGORIES)


# ---------------------------------------------------------------------------
# Cache file
# ---------------------------------------------------------------------------


def save_cache(dataset: EncodedDataset, path: str) -> None:
    """
    Write an encoded dataset: u32 LE header length, JSON header, then little-endian float32
    features, binary labels and multiclass labels

    Args:
        dataset (EncodedDataset): Dataset with its encoder state
        path (str): Output path
    """
    if dataset.encoder is None:
        raise DataError("cannot cache a dataset without its encoder state")

    header = json.dumps(
        {
            "format": CACHE_FORMAT,
            "version": CACHE_VERSION,
            "provenance": dataset.provenance,
            "records": len(dataset),
            "encoder": dataset.encoder.to_json(),
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(dataset.features.astype("<f4").tobytes())
        f.write(dataset.binary_labels.astype("<f4").tobytes())
        f.write(dataset.multiclass_labels.astype("<f4").tobytes())


def load_cache(path: str) -> EncodedDataset:
    """
    Read an encoded dataset written by save_cache

    Args:
        path (str): Cache path

    Raises:
        ConfigError: File does not exist
        DataError: Corrupted or inconsistent cache

    Returns:
        EncodedDataset: Bit-exact dataset
    """
    if not os.path.isfile(path):
        raise ConfigError(f"dataset cache not found: {path}")

    with open(path, "rb") as f:
        blob = f.read()

    try:
        (header_len,) = struct.unpack_from("<I", blob, 0)
        header = json.loads(blob[4 : 4 + header_len].decode("utf-8"))
        if header.get("format") != CACHE_FORMAT or header.get("version") != CACHE_VERSION:
            raise DataError("not a dataset cache of a supported version", path)
        encoder = EncoderState.from_json(header["encoder"])
        n = int(header["records"])
    except (struct.error, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"corrupted cache header ({exc})", path) from exc

    width = len(encoder.schema)
    try:
        payload = np.frombuffer(blob, dtype="<f4", offset=4 + header_len)
    except ValueError as exc:
        raise DataError(f"cache payload is not a float32 array ({exc})", path) from exc
    if payload.size != n * (width + 2):
        raise DataError(f"cache payload has {payload.size} values, expected {n * (width + 2)}", path)

    features = payload[: n * width].astype(np.float32).reshape(n, width, 1)
    binary = payload[n * width : n * (width + 1)].astype(np.int64)
    multiclass = payload[n * (width + 1) :].astype(np.int64)

    return EncodedDataset(features, binary, multiclass, header["provenance"], encoder)
