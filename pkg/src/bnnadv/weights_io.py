"""Weight-vector serialization.

Binary container (".brwv"), all integers little-endian:

    offset  size  field
    0       4     magic "BRWV"
    4       2     format version (u16), currently 1
    6       4     input_dim (u32)
    10      4     num_classes (u32)
    14      2     number of hidden layers (u16)
    16      4*H   hidden sizes (u32 each)
    ..      1     activation enum (u8, index into nets.ACTIVATIONS)
    ..      8     leaky_relu slope (f64)
    ..      8     value count (u64), must equal the arch's param count
    ..      8*P   parameter payload (f64, little-endian)

A JSON text alternative is provided for debugging; it round-trips exactly
because values are serialized with repr-level precision.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ShapeMismatchError
from .nets import ACTIVATIONS, NetworkArch

MAGIC = b"BRWV"
VERSION = 1


class BrwvFormatError(ValueError):
    """Malformed .brwv container."""


def dump_weights(arch: NetworkArch, w: np.ndarray, path) -> None:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (arch.param_count,):
        raise ShapeMismatchError(f"weight shape {w.shape} != ({arch.param_count},)")
    hidden = arch.hidden_sizes
    header = MAGIC + struct.pack("<H", VERSION)
    header += struct.pack("<IIH", arch.input_dim, arch.num_classes, len(hidden))
    header += struct.pack(f"<{len(hidden)}I", *hidden)
    header += struct.pack("<Bd", ACTIVATIONS.index(arch.activation), arch.leaky_slope)
    header += struct.pack("<Q", w.size)
    with open(path, "wb") as f:
        f.write(header)
        f.write(w.astype("<f8").tobytes())


def load_weights(path) -> tuple[NetworkArch, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise BrwvFormatError(f"bad magic {blob[:4]!r} at offset 0, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != VERSION:
        raise BrwvFormatError(f"unsupported version {version} at offset 4")
    input_dim, num_classes, n_hidden = struct.unpack_from("<IIH", blob, 6)
    off = 16
    hidden = struct.unpack_from(f"<{n_hidden}I", blob, off)
    off += 4 * n_hidden
    act_idx, slope = struct.unpack_from("<Bd", blob, off)
    off += 9
    if act_idx >= len(ACTIVATIONS):
        raise BrwvFormatError(f"unknown activation enum {act_idx} at offset {off - 9}")
    (count,) = struct.unpack_from("<Q", blob, off)
    off += 8
    arch = NetworkArch(input_dim, tuple(hidden), num_classes, ACTIVATIONS[act_idx], slope)
    if count != arch.param_count:
        raise BrwvFormatError(
            f"payload declares {count} values at offset {off - 8}, arch needs {arch.param_count}"
        )
    expected = off + 8 * count
    if len(blob) != expected:
        raise BrwvFormatError(f"file is {len(blob)} bytes, expected {expected}")
    w = np.frombuffer(blob, dtype="<f8", count=count, offset=off).astype(np.float64)
    return arch, w


def arch_to_dict(arch: NetworkArch) -> dict:
    return {
        "input_dim": arch.input_dim,
        "hidden_sizes": list(arch.hidden_sizes),
        "num_classes": arch.num_classes,
        "activation": arch.activation,
        "leaky_slope": arch.leaky_slope,
    }


def arch_from_dict(d: dict) -> NetworkArch:
    return NetworkArch(
        int(d["input_dim"]),
        tuple(int(h) for h in d["hidden_sizes"]),
        int(d["num_classes"]),
        str(d["activation"]),
        float(d.get("leaky_slope", 0.01)),
    )


def dump_weights_json(arch: NetworkArch, w: np.ndarray, path) -> None:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (arch.param_count,):
        raise ShapeMismatchError(f"weight shape {w.shape} != ({arch.param_count},)")
    doc = {"arch": arch_to_dict(arch), "values": [repr(v) for v in w.tolist()]}
    with open(path, "w") as f:
        json.dump(doc, f)


def load_weights_json(path) -> tuple[NetworkArch, np.ndarray]:
    with open(path) as f:
        doc = json.load(f)
    arch = arch_from_dict(doc["arch"])
    w = np.array([float(v) for v in doc["values"]], dtype=np.float64)
    if w.shape != (arch.param_count,):
        raise BrwvFormatError(f"JSON payload has {w.size} values, arch needs {arch.param_count}")
    return arch, w
