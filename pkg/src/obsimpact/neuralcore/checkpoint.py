"""Little-endian binary checkpoints.

Layout::

    b"OBSW1"
    u32 config length, UTF-8 ``key=value`` lines
    u32 tensor count
    per tensor: u16 name length, name, u8 ndim, u32 dims..., f64 data (row-major)
"""

from __future__ import annotations

import ast
import struct

import numpy as np

from .model import ModelConfig, ModelWeights

MAGIC = b"OBSW1"


class CheckpointError(ValueError):
    pass


def _config_text(config: ModelConfig) -> str:
    return "\n".join(f"{k}={v!r}" for k, v in config.to_dict().items())


def _parse_config(text: str) -> ModelConfig:
    values = {}
    for line in text.splitlines():
        key, _, raw = line.partition("=")
        values[key] = ast.literal_eval(raw)
    try:
        return ModelConfig(**values)
    except TypeError as exc:
        raise CheckpointError(f"bad config block: {exc}") from None


def save_checkpoint(path, weights: ModelWeights, extra: dict = None) -> None:
    """Write ``weights`` plus optional extra named arrays (e.g. normalisation stats)."""
    tensors = {**weights.params, **{f"extra.{k}": np.asarray(v, dtype=float) for k, v in (extra or {}).items()}}
    cfg = _config_text(weights.config).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(cfg)), cfg, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path):
    """Return ``(weights, extra)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not an OBSW1 checkpoint")
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"{path}: truncated at byte {pos}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    (cfg_len,) = struct.unpack("<I", take(4))
    try:
        config = _parse_config(take(cfg_len).decode("utf-8"))
    except (ValueError, SyntaxError) as exc:
        raise CheckpointError(f"{path}: bad config block ({exc})") from None
    (count,) = struct.unpack("<I", take(4))
    params, extra = {}, {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
        if name.startswith("extra."):
            extra[name[6:]] = arr
        else:
            params[name] = arr
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")
    _check_shapes(params, config, path)
    return ModelWeights(params, config), extra


def _check_shapes(params, config, path):
    d = config.d
    for name, arr in params.items():
        group = name.split(".")[0]
        if group == "gcn" and arr.shape != (d, d):
            raise CheckpointError(f"{path}: {name} has shape {arr.shape}, config says ({d}, {d})")
        if group == "proj" and name.endswith(".W") and arr.shape[1] != d:
            raise CheckpointError(f"{path}: {name} has shape {arr.shape}, config says d={d}")
