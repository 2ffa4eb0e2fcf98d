"""
Binary model file
Layout: magic "LIDS" | u16 LE version | u32 LE header length | UTF-8 JSON header |
little-endian float32 weights in manifest order | u32 LE CRC32 of everything before it
"""

import json
import os
import struct
import zlib
from typing import Any, Dict, List

import numpy as np

from errors import (
    BadMagicError,
    ChecksumError,
    ConfigError,
    HeaderParseError,
    ShapeError,
    UnsupportedVersionError,
)
from ids_model import TrainedModel, build
from logger import Logger
from models import ModelConfig
from unsw_dataset import EncoderState

MAGIC = b"LIDS"
FORMAT_VERSION = 1

_PREAMBLE = struct.Struct("<4sHI")
_CRC = struct.Struct("<I")
_SCALAR = np.dtype("<f4")


def _manifest(model: TrainedModel) -> List[Dict[str, Any]]:
    entries = []
    offset = 0
    for name, array in model.network.param_arrays().items():
        size = int(array.size)
        entries.append(
            {"name": name, "shape": list(array.shape), "offset": offset, "size": size}
        )
        offset += size * _SCALAR.itemsize
    return entries


def encode_model(model: TrainedModel) -> bytes:
    """
    Serialize a trained model to bytes

    Args:
        model (TrainedModel): Model to serialize

    Returns:
        bytes: Complete file contents, CRC trailer included
    """
    manifest = _manifest(model)
    header = {
        "config": model.config.to_json(),
        "encoder": None if model.encoder is None else model.encoder.to_json(),
        "classes": list(model.class_names),
        "metadata": model.metadata,
        "manifest": manifest,
        "param_count": model.param_count(),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    payload = b"".join(
        np.ascontiguousarray(array, dtype=_SCALAR).tobytes()
        for array in model.network.param_arrays().values()
    )
    body = _PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header_bytes)) + header_bytes + payload
    return body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


def save(model: TrainedModel, path: str) -> None:
    """
    Write a model file

    Args:
        model (TrainedModel): Model to save
        path (str): Output path; parent folders are created
    """
    data = encode_model(model)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    with open(path, "wb") as f:
        f.write(data)
    Logger("Format").log_info(
        f"Saved model ({model.param_count()} parameters, {len(data)} bytes) to {path}"
    )


def read_header(data: bytes) -> Dict[str, Any]:
    """
    Validate the framing of a model file and return its parsed header

    Args:
        data (bytes): File contents

    Raises:
        BadMagicError: Wrong magic bytes
        UnsupportedVersionError: Unknown format version
        ChecksumError: Truncated file or CRC mismatch
        HeaderParseError: Header is not valid JSON

    Returns:
        Dict[str, Any]: Header with the payload bytes under "_payload"
    """
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"not a model file (magic {data[:4]!r}, expected {MAGIC!r})")
    if len(data) < _PREAMBLE.size + _CRC.size:
        raise ChecksumError(f"model file truncated at {len(data)} bytes")

    _, version, header_len = _PREAMBLE.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"model format version {version} is not supported (expected {FORMAT_VERSION})"
        )

    header_end = _PREAMBLE.size + header_len
    if header_end > len(data) - _CRC.size:
        raise ChecksumError(
            f"model file truncated: header of {header_len} bytes does not fit in {len(data)} bytes"
        )

    try:
        header = json.loads(data[_PREAMBLE.size : header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderParseError(f"model header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise HeaderParseError("model header is not a JSON object")
    missing = [k for k in ("config", "classes", "manifest", "metadata") if k not in header]
    if missing:
        raise HeaderParseError(f"model header lacks {missing}")

    body = data[: -_CRC.size]
    (stored,) = _CRC.unpack_from(data, len(data) - _CRC.size)
    actual = zlib.crc32(body) & 0xFFFFFFFF
    if stored != actual:
        raise ChecksumError(f"model file CRC32 mismatch: stored {stored:08x}, computed {actual:08x}")

    header["_payload"] = body[header_end:]
    return header


def decode_model(data: bytes) -> TrainedModel:
    """
    Rebuild a trained model from file contents

    Args:
        data (bytes): File contents

    Raises:
        ModelFileError: Any framing, header or payload problem

    Returns:
        TrainedModel: Model with bitwise-identical weights
    """
    header = read_header(data)
    payload: bytes = header.pop("_payload")

    try:
        config = ModelConfig.parse(header["config"])
        network = build(config, seed=0)
        encoder = None if header.get("encoder") is None else EncoderState.from_json(header["encoder"])
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        raise HeaderParseError(f"model header describes an invalid model: {exc}") from exc

    manifest = header["manifest"]
    try:
        expected_size = sum(int(entry["size"]) for entry in manifest) * _SCALAR.itemsize
    except (KeyError, TypeError, ValueError) as exc:
        raise HeaderParseError(f"malformed layer manifest: {exc}") from exc
    if len(payload) != expected_size:
        raise ChecksumError(
            f"model payload has {len(payload)} bytes, manifest expects {expected_size}"
        )

    arrays = {}
    try:
        for entry in manifest:
            start = int(entry["offset"])
            count = int(entry["size"])
            values = np.frombuffer(payload, dtype=_SCALAR, count=count, offset=start)
            arrays[entry["name"]] = values.reshape(entry["shape"]).astype(np.float32)
    except (KeyError, TypeError, ValueError) as exc:
        raise HeaderParseError(f"malformed layer manifest: {exc}") from exc

    try:
        network.load_arrays(arrays)
    except ShapeError as exc:
        raise HeaderParseError(f"manifest does not match the configured layers: {exc}") from exc

    return TrainedModel(network, encoder, tuple(header["classes"]), dict(header["metadata"]))


def load(path: str) -> TrainedModel:
    """
    Read a model file

    Args:
        path (str): Model path

    Raises:
        ConfigError: File does not exist
        ModelFileError: Corrupted or unsupported file

    Returns:
        TrainedModel: Loaded model
    """
    if not os.path.isfile(path):
        raise ConfigError(f"model file not found: {path}")
    with open(path, "rb") as f:
        data = f.read()
    model = decode_model(data)
    Logger("Format").log_debug(f"Loaded model from {path} ({model.param_count()} parameters)")
    return model


def describe(model: TrainedModel) -> Dict[str, Any]:
    """
    Human-oriented summary used by inspect

    Args:
        model (TrainedModel): Model to describe

    Returns:
        Dict[str, Any]: Config, layers with shapes and counts, parameter total and metadata
    """
    return {
        "head": model.head.value,
        "config": model.config.to_json(),
        "layers": [layer.describe() for layer in model.network.layers],
        "parameters": model.param_count(),
        "classes": list(model.class_names),
        "schema": None if model.encoder is None else model.encoder.schema.signature(),
        "metadata": model.metadata,
    }
