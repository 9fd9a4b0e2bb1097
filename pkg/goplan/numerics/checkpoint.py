from __future__ import annotations

import logging
import struct
from pathlib import Path

import numpy as np

from goplan.errors import CheckpointFormatError

CHECKPOINT_MAGIC = b"GOPLAN01"

_log = logging.getLogger("goplan.numerics.checkpoint")


def encode_checkpoint(tensors: dict[str, np.ndarray]) -> bytes:
    chunks = [CHECKPOINT_MAGIC]
    for name, values in tensors.items():
        encoded_name = name.encode("utf-8")
        values = np.asarray(values)
        chunks.append(struct.pack("<I", len(encoded_name)))
        chunks.append(encoded_name)
        chunks.append(struct.pack("<I", values.ndim))
        chunks.append(struct.pack(f"<{values.ndim}I", *values.shape))
        chunks.append(np.ascontiguousarray(values, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_checkpoint(payload: bytes) -> dict[str, np.ndarray]:
    if payload[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("checkpoint magic mismatch")

    tensors: dict[str, np.ndarray] = {}
    offset = len(CHECKPOINT_MAGIC)

    def take(count: int) -> bytes:
        nonlocal offset
        if offset + count > len(payload):
            raise CheckpointFormatError(
                f"checkpoint truncated at byte {offset} (needed {count} more)"
            )
        chunk = payload[offset : offset + count]
        offset += count
        return chunk

    while offset < len(payload):
        (name_length,) = struct.unpack("<I", take(4))
        name = take(name_length).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape)
        if name in tensors:
            raise CheckpointFormatError(f"duplicate tensor {name!r}")
        tensors[name] = values.astype(np.float32)
    return tensors


def save_checkpoint(path: Path | str, tensors: dict[str, np.ndarray]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(tensors))
    _log.debug(f"wrote {len(tensors)} tensors to {path}")


def load_checkpoint(path: Path | str) -> dict[str, np.ndarray]:
    path = Path(path)
    tensors = decode_checkpoint(path.read_bytes())
    _log.debug(f"read {len(tensors)} tensors from {path}")
    return tensors
