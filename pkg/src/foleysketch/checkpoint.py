"""Checkpoint file format.

Layout: magic "CFLY" | uint32 format version | uint32 header length |
header JSON (UTF-8) | raw little-endian float32 parameter blobs.

The header carries the model topology (parameter manifest with shapes
and byte offsets into the blob region), dataset normalization stats and
a config echo.  Writing is bit-exact across platforms: fixed byte order,
fixed manifest order, sorted JSON keys.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .denoiser import param_specs

MAGIC = b"CFLY"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    cfg: ModelConfig
    params: dict[str, np.ndarray]
    norm_mean: float
    norm_std: float
    meta: dict
    checkpoint_id: str = ""


def checkpoint_bytes(cfg: ModelConfig, params: dict[str, np.ndarray],
                     norm_mean: float, norm_std: float, meta: dict | None = None) -> bytes:
    manifest = []
    blobs = []
    offset = 0
    for name, shape in param_specs(cfg):
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        if arr.shape != shape:
            raise ValueError(f"parameter {name} has shape {arr.shape}, expected {shape}")
        manifest.append({"name": name, "shape": list(shape), "offset": offset,
                         "dtype": "<f4"})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "config": cfg.to_dict(),
        "normalization": {"mean": norm_mean, "std": norm_std},
        "manifest": manifest,
        "meta": meta or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    return b"".join([MAGIC, struct.pack("<I", FORMAT_VERSION),
                     struct.pack("<I", len(header_bytes)), header_bytes, *blobs])


def save_checkpoint(path, cfg: ModelConfig, params: dict[str, np.ndarray],
                    norm_mean: float, norm_std: float, meta: dict | None = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(cfg, params, norm_mean, norm_std, meta))


def load_checkpoint_bytes(data: bytes) -> Checkpoint:
    if data[:4] != MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    version, = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    header_len, = struct.unpack_from("<I", data, 8)
    header = json.loads(data[12:12 + header_len].decode("utf-8"))
    blob = data[12 + header_len:]
    cfg = ModelConfig.from_dict(header["config"])
    params: dict[str, np.ndarray] = {}
    for entry in header["manifest"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype=entry["dtype"], count=count,
                            offset=entry["offset"])
        params[entry["name"]] = arr.reshape(shape).astype(np.float64)
    norm = header["normalization"]
    return Checkpoint(cfg=cfg, params=params, norm_mean=float(norm["mean"]),
                      norm_std=float(norm["std"]), meta=header.get("meta", {}),
                      checkpoint_id=hashlib.sha256(data).hexdigest()[:12])


def load_checkpoint(path) -> Checkpoint:
    return load_checkpoint_bytes(Path(path).read_bytes())
