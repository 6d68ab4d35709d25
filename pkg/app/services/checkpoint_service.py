"""Binary checkpoint format.

Layout (little-endian)::

    magic        8 bytes  b"VITCKPT\\0"
    version      u32
    config_len   u32, then that many bytes of ViTConfig JSON
    count        u32
    count records:
        name_len u16, name (utf-8)
        ndim     u8, dims u32 * ndim
        data     float64 * prod(dims)
    sha256       32 bytes over everything above
"""
from __future__ import annotations

import hashlib
import json
import logging
import struct
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from app.core.config import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from app.core.errors import CheckpointError, ShapeError
from app.schemas.vit import ViTConfig
from app.services.vit_service import ViTParams
from app.tensor.tensor import Tensor
from app.utils.storage import atomic_write_bytes

logger = logging.getLogger(__name__)

DIGEST_SIZE = hashlib.sha256().digest_size


def encode_checkpoint(params: ViTParams, config: ViTConfig | None = None) -> bytes:
    config = config or params.config
    config_bytes = json.dumps(config.model_dump(), sort_keys=True).encode("utf-8")
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<II", CHECKPOINT_VERSION, len(config_bytes)),
        config_bytes,
        struct.pack("<I", len(params)),
    ]
    for name, tensor in params.items():
        encoded_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded_name)) + encoded_name)
        parts.append(struct.pack(f"<B{tensor.ndim}I", tensor.ndim, *tensor.shape))
        parts.append(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError("checkpoint ends before its declared contents")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(data: bytes) -> tuple[ViTParams, ViTConfig]:
    if len(data) < len(CHECKPOINT_MAGIC) + DIGEST_SIZE or not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic)")
    body, digest = data[:-DIGEST_SIZE], data[-DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checksum mismatch: file is corrupt or truncated")

    reader = _Reader(body)
    reader.take(len(CHECKPOINT_MAGIC))
    version, config_len = reader.unpack("<II")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    try:
        config = ViTConfig.model_validate(json.loads(reader.take(config_len).decode("utf-8")))
    except (ValueError, ValidationError) as exc:
        raise CheckpointError(f"invalid config block: {exc}")

    (count,) = reader.unpack("<I")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        dims = reader.unpack(f"<{ndim}I")
        size = int(np.prod(dims, dtype=np.int64))
        arrays[name] = np.frombuffer(reader.take(8 * size), dtype="<f8").reshape(dims).astype(np.float64)
    if reader.offset != len(body):
        raise CheckpointError("trailing bytes after the last record")

    try:
        params = ViTParams(config, {name: Tensor(array, requires_grad=True) for name, array in arrays.items()})
    except ShapeError as exc:
        raise CheckpointError(f"checkpoint does not match its config: {exc}")
    return params, config


def save_checkpoint(params: ViTParams, config: ViTConfig | None, path: str | Path) -> Path:
    path = atomic_write_bytes(path, encode_checkpoint(params, config))
    logger.debug("Saved checkpoint %s", path)
    return path


def load_checkpoint(path: str | Path) -> tuple[ViTParams, ViTConfig]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: {exc.strerror}")
    try:
        return decode_checkpoint(data)
    except CheckpointError as exc:
        raise CheckpointError(f"{path}: {exc}")
