"""Versioned checkpoint container for named tensors plus metadata.

Layout (integers little-endian):

    bytes 0..3   magic "VTCK"
    bytes 4..7   version uint32 (currently 1)
    bytes 8..11  metadata length uint32, then canonical JSON utf-8
    then         entry count uint32
    per entry    name length uint16, name utf-8,
                 blob length uint64, tensor blob in .vten layout

Float64 tensors round-trip bit-exactly, which makes reloaded parameter
sets and optimizer state indistinguishable from the saved ones.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import VtenFormatError, VtenMagicError, VtenTruncatedError
from .nn import Adam, ParamSet
from .video import canonical_json, tensor_from_bytes, tensor_to_bytes

VTCK_MAGIC = b"VTCK"
VTCK_VERSION = 1


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    meta_blob = canonical_json(meta).encode("utf-8")
    parts = [VTCK_MAGIC, struct.pack("<I", VTCK_VERSION),
             struct.pack("<I", len(meta_blob)), meta_blob,
             struct.pack("<I", len(tensors))]
    for name, array in tensors.items():
        name_blob = name.encode("utf-8")
        if len(name_blob) > 0xFFFF:
            raise VtenFormatError("tensor name too long: %r" % name)
        blob = tensor_to_bytes(np.asarray(array))
        parts.append(struct.pack("<H", len(name_blob)))
        parts.append(name_blob)
        parts.append(struct.pack("<Q", len(blob)))
        parts.append(blob)
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    blob = Path(path).read_bytes()
    name = str(path)
    if len(blob) < 4 or blob[:4] != VTCK_MAGIC:
        raise VtenMagicError("%s: bad checkpoint magic %r" % (name, blob[:4]))
    if len(blob) < 12:
        raise VtenTruncatedError("%s: header truncated" % name)
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VTCK_VERSION:
        raise VtenFormatError("%s: unsupported checkpoint version %d" % (name, version))
    (meta_len,) = struct.unpack_from("<I", blob, 8)
    off = 12
    if len(blob) < off + meta_len + 4:
        raise VtenTruncatedError("%s: metadata truncated" % name)
    meta = json.loads(blob[off:off + meta_len].decode("utf-8"))
    off += meta_len
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        if len(blob) < off + 2:
            raise VtenTruncatedError("%s: entry truncated" % name)
        (name_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        if len(blob) < off + name_len + 8:
            raise VtenTruncatedError("%s: entry truncated" % name)
        entry_name = blob[off:off + name_len].decode("utf-8")
        off += name_len
        (blob_len,) = struct.unpack_from("<Q", blob, off)
        off += 8
        if len(blob) < off + blob_len:
            raise VtenTruncatedError("%s: tensor %r truncated" % (name, entry_name))
        tensors[entry_name] = tensor_from_bytes(blob[off:off + blob_len], entry_name)
        off += blob_len
    if off != len(blob):
        raise VtenFormatError("%s: %d trailing bytes" % (name, len(blob) - off))
    return tensors, meta


# -- parameter-set and optimizer bridging --------------------------------


def params_to_entries(params: ParamSet, prefix: str = "param.") -> dict[str, np.ndarray]:
    return {prefix + name: params[name].data for name in params.names()}


def entries_to_params(params: ParamSet, tensors: dict[str, np.ndarray],
                      prefix: str = "param.") -> None:
    """Load matching entries into an already-constructed ParamSet."""
    for name in params.names():
        key = prefix + name
        if key not in tensors:
            raise VtenFormatError("checkpoint missing tensor %r" % key)
        params[name].data = np.array(tensors[key], dtype=params[name].data.dtype)


def adam_to_entries(opt: Adam, prefix: str = "adam.") -> dict[str, np.ndarray]:
    state = opt.state_dict()
    out = {prefix + "t": np.array([float(state["t"])])}
    for name, m in state["m"].items():
        out[prefix + "m." + name] = m
    for name, v in state["v"].items():
        out[prefix + "v." + name] = v
    return out


def entries_to_adam(opt: Adam, tensors: dict[str, np.ndarray],
                    prefix: str = "adam.") -> None:
    key_t = prefix + "t"
    if key_t not in tensors:
        raise VtenFormatError("checkpoint missing tensor %r" % key_t)
    state = opt.state_dict()
    state["t"] = int(tensors[key_t][0])
    for name in list(state["m"]):
        km, kv = prefix + "m." + name, prefix + "v." + name
        if km not in tensors or kv not in tensors:
            raise VtenFormatError("checkpoint missing optimizer slot for %r" % name)
        state["m"][name] = tensors[km]
        state["v"][name] = tensors[kv]
    opt.load_state_dict(state)
