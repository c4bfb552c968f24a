"""Checkpoint persistence.

Layout: magic ``SPSMVG``, version byte 1, u32 little-endian JSON header
length, JSON header (hyper, training-config echo, epoch, RNG state, per-
tensor shape manifest), then the tensors as little-endian float32 in header
order. Values are stored at single precision; loads round-trip bit-exactly
at that precision.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ConfigurationError
from .model import Hyper, ModelParams, expected_shapes
from .numerics import ParamTensor
from collections import OrderedDict

__all__ = ["Checkpoint", "save_checkpoint", "load_checkpoint", "params_from_checkpoint"]

MAGIC = b"SPSMVG"
VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    hyper: Hyper
    train_config: dict
    epoch: int
    rng_state: int
    tensors: dict[str, np.ndarray]  # float32


def _hyper_to_dict(hyper: Hyper) -> dict:
    d = dataclasses.asdict(hyper)
    d["view_dims"] = [[name, dim] for name, dim in hyper.view_dims]
    return d


def _hyper_from_dict(d: dict) -> Hyper:
    d = dict(d)
    d["view_dims"] = tuple((str(n), int(dim)) for n, dim in d["view_dims"])
    return Hyper(**d)


def save_checkpoint(
    params: ModelParams,
    train_config: dict,
    epoch: int,
    rng_state: int,
    path: str | Path,
) -> None:
    names = params.names()
    header = {
        "hyper": _hyper_to_dict(params.hyper),
        "train_config": train_config,
        "epoch": int(epoch),
        "rng_state": int(rng_state),
        "tensors": [
            {"name": n, "shape": list(params[n].value.shape)} for n in names
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(params[n].value.astype("<f4").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint: {exc}") from exc
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    pos = len(MAGIC)
    if pos >= len(data) or data[pos] != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version")
    pos += 1
    if pos + 4 > len(data):
        raise CheckpointError(f"{path}: truncated header length")
    (hlen,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if pos + hlen > len(data):
        raise CheckpointError(f"{path}: corrupted header length field")
    try:
        header = json.loads(data[pos : pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed JSON header: {exc}") from exc
    pos += hlen
    try:
        hyper = _hyper_from_dict(header["hyper"])
        manifest = header["tensors"]
        epoch = int(header["epoch"])
        rng_state = int(header["rng_state"])
        train_config = dict(header["train_config"])
    except (KeyError, TypeError, ValueError, ConfigurationError) as exc:
        raise CheckpointError(f"{path}: invalid header contents: {exc}") from exc
    expected = sum(int(np.prod(t["shape"])) for t in manifest) * 4
    if len(data) - pos != expected:
        raise CheckpointError(
            f"{path}: tensor payload is {len(data) - pos} bytes, expected {expected}"
        )
    tensors: dict[str, np.ndarray] = {}
    for t in manifest:
        shape = tuple(int(s) for s in t["shape"])
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(shape)
        tensors[t["name"]] = arr.copy()
        pos += count * 4
    return Checkpoint(hyper, train_config, epoch, rng_state, tensors)


def params_from_checkpoint(ckpt: Checkpoint, hyper: Hyper | None = None) -> ModelParams:
    """Rebuild ModelParams (float64) from stored float32 tensors."""
    hyper = ckpt.hyper if hyper is None else hyper
    shapes = expected_shapes(hyper)
    tensors: OrderedDict[str, ParamTensor] = OrderedDict()
    for name, shape in shapes.items():
        if name not in ckpt.tensors:
            raise ConfigurationError(f"checkpoint is missing tensor {name}")
        arr = ckpt.tensors[name]
        if arr.shape != shape:
            raise ConfigurationError(
                f"checkpoint tensor {name} has shape {arr.shape}, hyper expects {shape}"
            )
        tensors[name] = ParamTensor(arr.astype(np.float64))
    return ModelParams(hyper, tensors)
