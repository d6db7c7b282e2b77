"""Self-describing binary checkpoint.

Layout::

    b"DRFTCKPT" | u32 version | u64 header length | JSON header | payload

The JSON header carries the full ``ModelConfig``, its padding ledger, and for
every array a (name, dtype, shape, offset, nbytes) record.  Payloads are raw
little-endian scalars concatenated in header order, so loading reproduces the
saved arrays bit for bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DataError
from ..numerics import Tensor
from .config import ModelConfig
from .network import Model, ParamLeaf, parameter_shapes

MAGIC = b"DRFTCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


@dataclass
class Checkpoint:
    model: Model
    step: int = 0
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def _le(array: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(array, dtype=array.dtype.newbyteorder("<"))


def save_checkpoint(path, model: Model, step: int = 0,
                    optimizer: dict[str, np.ndarray] | None = None, meta: dict | None = None) -> None:
    """Write parameters (plus optional optimizer state) to ``path``."""
    arrays = [("param", name, leaf.tensor.data) for name, leaf in model.params.items()]
    arrays += [("optim", name, np.asarray(a)) for name, a in (optimizer or {}).items()]
    records, chunks, offset = [], [], 0
    for kind, name, data in arrays:
        raw = _le(data).tobytes()
        records.append({"kind": kind, "name": name, "dtype": _le(data).dtype.str,
                        "shape": list(data.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "config": model.config.to_dict(),
        "padding": model.config.padding_ledger(),
        "dtype": np.dtype(model.dtype).name,
        "step": int(step),
        "frozen": [n for n, leaf in model.params.items() if not leaf.trainable],
        "meta": meta or {},
        "arrays": records,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(blob)))
        fh.write(blob)
        for raw in chunks:
            fh.write(raw)


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh)


def _read_header(fh) -> dict:
    prefix = fh.read(_PREFIX.size)
    if len(prefix) != _PREFIX.size:
        raise DataError("file too short to be a checkpoint")
    magic, version, size = _PREFIX.unpack(prefix)
    if magic != MAGIC:
        raise DataError("not a checkpoint file (bad magic)")
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}, expected {VERSION}")
    try:
        header = json.loads(fh.read(size))
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt checkpoint header: {exc}") from exc
    return header


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        header = _read_header(fh)
        payload = fh.read()
    config = ModelConfig.from_dict(header["config"])
    if config.padding_ledger() != header["padding"]:
        raise ConfigError("checkpoint padding ledger disagrees with its config")
    expected = parameter_shapes(config)
    frozen = set(header.get("frozen", []))
    params: dict[str, ParamLeaf] = {}
    optimizer: dict[str, np.ndarray] = {}
    for rec in header["arrays"]:
        end = rec["offset"] + rec["nbytes"]
        if end > len(payload):
            raise DataError(f"checkpoint truncated inside {rec['name']!r}")
        data = np.frombuffer(payload[rec["offset"]: end], dtype=np.dtype(rec["dtype"]))
        data = data.reshape(rec["shape"]).astype(np.dtype(rec["dtype"]).newbyteorder("="))
        if rec["kind"] == "param":
            params[rec["name"]] = ParamLeaf(rec["name"], Tensor(data), rec["name"] not in frozen)
        else:
            optimizer[rec["name"]] = data
    shapes = {n: leaf.tensor.shape for n, leaf in params.items()}
    if shapes != expected:
        missing = sorted(set(expected) - set(shapes))
        extra = sorted(set(shapes) - set(expected))
        wrong = sorted(n for n in set(shapes) & set(expected) if shapes[n] != expected[n])
        raise DataError(f"checkpoint parameters do not match config "
                        f"(missing {missing}, extra {extra}, misshapen {wrong})")
    ordered = {n: params[n] for n in expected}
    return Checkpoint(Model(config, ordered), header["step"], optimizer, header.get("meta", {}))
