"""Checkpoint container: AVCK files.

Layout: ``<4sHQ`` prefix (magic ``AVCK``, format version, header length),
a canonical-JSON header (sorted keys, no whitespace), then raw ``<f8``
tensor payloads packed back to back in parameter-tree order.

The header echoes the full model config, the init seed, a provenance list
(caller-supplied strings; keep them deterministic, no timestamps), the
sha256 of the parent checkpoint file if any, and a per-tensor table of
name/group/trainable/shape/offset. Loading rebuilds the model from the
echoed config and overwrites every value, so a load-save round trip is
byte-identical when provenance and parent hash are carried over.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from avasr.errors import ConfigError, DataError
from avasr.model import Model, ModelConfig, build_model

MAGIC = b"AVCK"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sHQ")


def _canonical_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")


def file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_checkpoint(path: str | Path, model: Model,
                    provenance: Iterable[str] = (),
                    parent_hash: str | None = None) -> None:
    tensors = []
    offset = 0
    for name, t in model.tree.items():
        nbytes = t.data.size * 8
        tensors.append({
            "name": name,
            "group": model.tree.group_of(name),
            "trainable": bool(t.requires_grad),
            "shape": list(t.data.shape),
            "dtype": "<f8",
            "offset": offset,
            "nbytes": nbytes,
        })
        offset += nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": model.cfg.to_dict(),
        "init_seed": model.init_seed,
        "provenance": list(provenance),
        "parent_hash": parent_hash,
        "tensors": tensors,
    }
    blob = _canonical_header(header)
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(blob)))
        f.write(blob)
        for _, t in model.tree.items():
            f.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse header and tensor values without building a model."""
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise DataError(f"{path}: too short to be a checkpoint "
                        f"({len(raw)} bytes)")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: format version {version} unsupported "
                        f"(expected {FORMAT_VERSION})")
    if len(raw) < _PREFIX.size + hlen:
        raise DataError(f"{path}: truncated header")
    header = json.loads(raw[_PREFIX.size:_PREFIX.size + hlen])
    payload = raw[_PREFIX.size + hlen:]
    expected = sum(e["nbytes"] for e in header["tensors"])
    if len(payload) != expected:
        raise DataError(f"{path}: payload is {len(payload)} bytes, header "
                        f"promises {expected}")
    values = {}
    for e in header["tensors"]:
        if e["dtype"] != "<f8":
            raise DataError(f"{path}: tensor {e['name']!r} has dtype "
                            f"{e['dtype']!r}, only <f8 supported")
        n = e["nbytes"] // 8
        arr = np.frombuffer(payload, dtype="<f8", count=n,
                            offset=e["offset"])
        values[e["name"]] = arr.reshape(e["shape"]).copy()
    return header, values


def load_checkpoint(path: str | Path) -> tuple[Model, dict]:
    """Rebuild the model from the echoed config and restore all values."""
    header, values = read_checkpoint(path)
    cfg = ModelConfig.from_dict(header["model_config"])
    model = build_model(cfg, header["init_seed"])
    extra = sorted(set(values) - set(model.tree.names()))
    if extra:
        raise ConfigError(f"{path}: checkpoint has parameter {extra[0]!r} "
                          f"not present in the rebuilt model")
    model.tree.load_values(values)
    for e in header["tensors"]:
        t = model.tree[e["name"]]
        if e["trainable"]:
            t.unfreeze()
        else:
            t.freeze()
    return model, header


def require_config(header: dict, expected: ModelConfig) -> None:
    """Fail naming the first differing config key (sorted order)."""
    got = header["model_config"]
    want = expected.to_dict()
    for key in sorted(set(got) | set(want)):
        if got.get(key) != want.get(key):
            raise ConfigError(
                f"checkpoint config mismatch at {key!r}: checkpoint has "
                f"{got.get(key)!r}, expected {want.get(key)!r}")
