"""
Error hierarchy for the intrusion detection engine
Every error carries the process exit code the CLI reports for it
"""

from typing import Iterable, Optional, Sequence


class IdsError(Exception):
    """
    Base class for all engine errors
    """

    exit_code: int = 1


class ConfigError(IdsError, ValueError):
    """
    Invalid configuration key, flag value, extent or missing input path
    """

    exit_code = 2


class ShapeError(ConfigError):
    """
    Tensor shape disagreement on a named axis
    """

    def __init__(self, axis: str, expected: object, actual: object, where: str = "") -> None:
        self.axis = axis
        self.expected = expected
        self.actual = actual
        prefix = f"{where}: " if where else ""
        super().__init__(
            f"{prefix}shape mismatch on axis '{axis}': expected {expected}, got {actual}"
        )


class DataError(IdsError):
    """
    Malformed dataset input, optionally pointing at file rows
    """

    exit_code = 3

    def __init__(
        self, message: str, path: Optional[str] = None, rows: Optional[Iterable[int]] = None
    ) -> None:
        self.path = path
        self.rows: Sequence[int] = list(rows) if rows is not None else []
        text = f"{path}: {message}" if path else message
        if self.rows:
            shown = ", ".join(str(r) for r in self.rows[:10])
            more = f" (+{len(self.rows) - 10} more)" if len(self.rows) > 10 else ""
            text += f" at rows {shown}{more}"
        super().__init__(text)


class SchemaMismatchError(DataError):
    """
    The schema a model was trained with differs from the data it is given
    """

    def __init__(self, model_schema: object, data_schema: object) -> None:
        self.model_schema = model_schema
        self.data_schema = data_schema
        super().__init__(
            f"schema mismatch: model expects {model_schema}, data provides {data_schema}"
        )


class ModelFileError(IdsError):
    """
    Unreadable model file
    """

    exit_code = 3


class BadMagicError(ModelFileError):
    """Model file does not start with the expected magic bytes"""


class UnsupportedVersionError(ModelFileError):
    """Model file format version is not understood by this build"""


class ChecksumError(ModelFileError):
    """Model file is truncated or its CRC32 does not match"""


class HeaderParseError(ModelFileError):
    """Model file header is not valid UTF-8 JSON or lacks required keys"""


class TrainingAbortedError(IdsError):
    """
    Training stopped on a non-finite loss
    """

    exit_code = 4

    def __init__(self, epoch: int, batch: int, loss: float) -> None:
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(
            f"training aborted: non-finite loss {loss} at epoch {epoch}, batch {batch}"
        )
