"""
Configuration and bookkeeping models for the intrusion detection engine
Defines the declarative model/training/run descriptions and their JSON mapping
"""

from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Any, ClassVar, Dict, List, Optional, Type, TypeVar

from errors import ConfigError

E = TypeVar("E", bound="JsonEntity")


class Head(str, Enum):
    """
    Output head of the classifier
    """

    BINARY = "binary"
    MULTICLASS = "multiclass"

    @property
    def width(self) -> int:
        return 1 if self == Head.BINARY else 10


class Weighting(str, Enum):
    """
    Loss weighting scheme
    """

    UNIFORM = "uniform"
    INVERSE_FREQUENCY = "inverse-frequency"


def _parse_enum(enum_cls: Type[Enum], value: Any, key: str) -> Any:
    try:
        return enum_cls(value)
    except ValueError as exc:
        allowed = ", ".join(str(e.value) for e in enum_cls)  # type: ignore[attr-defined]
        raise ConfigError(f"invalid value {value!r} for '{key}' (allowed: {allowed})") from exc


@dataclass
class JsonEntity:
    """
    Base class for dataclass models with strict JSON (de)serialization
    """

    _nested: ClassVar[Dict[str, Type["JsonEntity"]]] = {}
    _enums: ClassVar[Dict[str, Type[Enum]]] = {}

    def to_json(self) -> Dict[str, Any]:
        """
        Convert the entity to a JSON-serializable dictionary

        Returns:
            Dict[str, Any]: JSON representation of the entity
        """
        result: Dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, JsonEntity):
                value = value.to_json()
            elif isinstance(value, Enum):
                value = value.value
            elif isinstance(value, list):
                value = list(value)
            result[f.name] = value
        return result

    def from_json(self, data: Dict[str, Any]) -> None:
        """
        Populate the entity's attributes from a JSON dictionary

        Args:
            data (Dict[str, Any]): JSON dictionary containing entity data

        Raises:
            ConfigError: Unknown key or invalid enum value
        """
        if not isinstance(data, dict):
            raise ConfigError(f"{self.__class__.__name__} expects a JSON object")

        names = {f.name for f in fields(self)}
        for key, value in data.items():
            if key not in names:
                raise ConfigError(f"Invalid attribute '{key}' for {self.__class__.__name__}")

            if key in self._nested:
                nested = getattr(self, key)
                nested.from_json(value)
            elif key in self._enums:
                setattr(self, key, _parse_enum(self._enums[key], value, key))
            else:
                setattr(self, key, value)

    @classmethod
    def parse(cls: Type[E], data: Dict[str, Any]) -> E:
        """
        Build an entity with defaults overridden by a JSON dictionary

        Args:
            data (Dict[str, Any]): JSON dictionary

        Returns:
            E: New entity
        """
        instance = cls()
        instance.from_json(data)
        return instance


@dataclass
class ModelConfig(JsonEntity):
    """
    Layer stack description: Conv1D(F, K) → MaxPool(pool) → BiLSTM(H) → Dense(head)
    """

    _enums: ClassVar[Dict[str, Type[Enum]]] = {"head": Head}

    filters: int = 32
    kernel: int = 3
    padding: str = "same"
    pool: int = 2
    hidden: int = 16
    head: Head = Head.BINARY
    dropout: float = 0.0
    sequence_length: int = 42
    channels: int = 1

    def validate(self) -> None:
        """
        Check extents and options

        Raises:
            ConfigError: Any invalid field
        """
        self.head = _parse_enum(Head, self.head, "model.head")
        for name in ("filters", "kernel", "pool", "hidden", "sequence_length", "channels"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"model.{name} must be a positive integer, got {value!r}")
        if self.padding not in ("same", "valid"):
            raise ConfigError(f"model.padding must be 'same' or 'valid', got {self.padding!r}")
        if not 0.0 <= float(self.dropout) < 1.0:
            raise ConfigError(f"model.dropout must be in [0, 1), got {self.dropout}")

        conv_len = self.sequence_length - (self.kernel - 1 if self.padding == "valid" else 0)
        if conv_len < 1:
            raise ConfigError(
                f"model.kernel {self.kernel} is longer than the sequence {self.sequence_length}"
            )
        if self.pool > conv_len:
            raise ConfigError(f"model.pool {self.pool} exceeds the convolved length {conv_len}")

    @property
    def head_width(self) -> int:
        return Head(self.head).width


@dataclass
class TrainConfig(JsonEntity):
    """
    Optimization run description
    """

    _enums: ClassVar[Dict[str, Type[Enum]]] = {"weighting": Weighting}

    epochs: int = 15
    batch_size: int = 256
    learning_rate: float = 1e-3
    seed: int = 0
    weighting: Weighting = Weighting.UNIFORM
    deterministic: bool = True
    validation_fraction: float = 0.0

    @staticmethod
    def defaults_for(head: Head) -> "TrainConfig":
        """
        Default training schedule per head

        Args:
            head (Head): Output head

        Returns:
            TrainConfig: Binary: 15 epochs, uniform weights. Multiclass: 30 epochs, inverse-frequency
        """
        if Head(head) == Head.MULTICLASS:
            return TrainConfig(epochs=30, weighting=Weighting.INVERSE_FREQUENCY)
        return TrainConfig()

    def validate(self) -> None:
        """
        Check schedule values

        Raises:
            ConfigError: Any invalid field
        """
        self.weighting = _parse_enum(Weighting, self.weighting, "train.weighting")
        if not isinstance(self.epochs, int) or self.epochs < 1:
            raise ConfigError(f"train.epochs must be >= 1, got {self.epochs!r}")
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size!r}")
        if not float(self.learning_rate) > 0:
            raise ConfigError(f"train.learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= float(self.validation_fraction) < 1.0:
            raise ConfigError(
                f"train.validation_fraction must be in [0, 1), got {self.validation_fraction}"
            )


@dataclass
class TrainingHistory(JsonEntity):
    """
    Per-epoch training curves and wall-clock time
    """

    train_loss: List[float] = field(default_factory=list)
    val_loss: List[Optional[float]] = field(default_factory=list)
    val_accuracy: List[Optional[float]] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)

    def record(
        self,
        train_loss: float,
        val_loss: Optional[float],
        val_accuracy: Optional[float],
        seconds: float,
    ) -> None:
        """
        Append one epoch

        Args:
            train_loss (float): Mean training loss of the epoch
            val_loss (Optional[float]): Validation loss, None without a validation split
            val_accuracy (Optional[float]): Validation accuracy, None without a validation split
            seconds (float): Wall-clock duration of the epoch
        """
        self.train_loss.append(float(train_loss))
        self.val_loss.append(None if val_loss is None else float(val_loss))
        self.val_accuracy.append(None if val_accuracy is None else float(val_accuracy))
        self.seconds.append(float(seconds))

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    @property
    def total_seconds(self) -> float:
        return float(sum(self.seconds))


@dataclass(frozen=True)
class SplitPolicy:
    """
    How train and evaluation data are derived: official | random:F | subsample:F
    """

    kind: str = "official"
    fraction: float = 1.0

    @staticmethod
    def parse(text: str) -> "SplitPolicy":
        """
        Parse a split policy string

        Args:
            text (str): "official", "random:F" or "subsample:F"

        Raises:
            ConfigError: Unknown kind or fraction outside its range

        Returns:
            SplitPolicy: Parsed policy
        """
        kind, _, value = str(text).partition(":")
        if kind == "official" and not value:
            return SplitPolicy()
        if kind not in ("random", "subsample") or not value:
            raise ConfigError(f"invalid split {text!r} (use official, random:F or subsample:F)")
        try:
            fraction = float(value)
        except ValueError as exc:
            raise ConfigError(f"invalid split fraction in {text!r}") from exc
        upper_ok = fraction < 1.0 if kind == "random" else fraction <= 1.0
        if not (fraction > 0.0 and upper_ok):
            raise ConfigError(f"split fraction out of range in {text!r}")
        return SplitPolicy(kind, fraction)

    def __str__(self) -> str:
        return self.kind if self.kind == "official" else f"{self.kind}:{self.fraction:g}"


@dataclass
class RunConfig(JsonEntity):
    """
    Experiment manifest: model, training schedule, data paths, split and outputs
    """

    _nested: ClassVar[Dict[str, Type[JsonEntity]]] = {
        "model": ModelConfig,
        "train": TrainConfig,
    }

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    train_csv: Optional[str] = None
    test_csv: Optional[str] = None
    prepared_dir: Optional[str] = None
    split: str = "official"
    seed: int = 0
    threads: int = 1
    deterministic: bool = True
    out: str = "out"
    baselines: bool = False
    knn_k: int = 5
    logreg_epochs: int = 20
    threshold: float = 0.5

    @property
    def split_policy(self) -> SplitPolicy:
        return SplitPolicy.parse(self.split)

    def validate(self) -> None:
        """
        Validate every section of the run

        Raises:
            ConfigError: Any invalid field
        """
        self.model.validate()
        self.train.validate()
        _ = self.split_policy
        if not isinstance(self.threads, int) or self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads!r}")
        if not isinstance(self.knn_k, int) or self.knn_k < 1:
            raise ConfigError(f"knn_k must be >= 1, got {self.knn_k!r}")
        if not 0.0 <= float(self.threshold) <= 1.0:
            raise ConfigError(f"threshold must be in [0, 1], got {self.threshold}")
