"""Binary container for tensor trains.

Layout (all integers little-endian)::

    8 bytes   magic  b"SLIMTT\\x00\\x01"
    4 bytes   uint32 length H of the JSON header
    H bytes   UTF-8 JSON: kind, d, modes, ranks, cyclic, meta
    ...       cores in order, each as '<f8' entries raveled in Fortran order

Fortran order is the little-endian multi-index over the core's axes, so a
core ``(r, n, r')`` stores its first rank index fastest.  Doubles are written
verbatim, which makes the round trip bit-exact.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .tt import TtOperator, TtTensor

MAGIC = b"SLIMTT\x00\x01"


def _jsonable(meta):
    return json.loads(json.dumps(meta, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))


def dumps(t: TtTensor | TtOperator) -> bytes:
    kind = "operator" if isinstance(t, TtOperator) else "tensor"
    header = {
        "kind": kind,
        "d": t.d,
        "modes": list(t.modes),
        "ranks": list(t.ranks),
        "cyclic": bool(t.cyclic),
        "meta": _jsonable(t.meta),
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(raw)), raw]
    for core in t.cores:
        parts.append(np.asarray(core, dtype="<f8").ravel(order="F").tobytes())
    return b"".join(parts)


def read_header(blob: bytes) -> tuple[dict, int]:
    if blob[: len(MAGIC)] != MAGIC:
        raise ValueError("not a slimtt container (bad magic)")
    (hlen,) = struct.unpack("<I", blob[len(MAGIC) : len(MAGIC) + 4])
    start = len(MAGIC) + 4
    header = json.loads(blob[start : start + hlen].decode("utf-8"))
    return header, start + hlen


def loads(blob: bytes) -> TtTensor | TtOperator:
    header, offset = read_header(blob)
    modes, ranks = header["modes"], header["ranks"]
    operator = header["kind"] == "operator"
    cores = []
    for i, n in enumerate(modes):
        shape = (ranks[i], n, n, ranks[i + 1]) if operator else (ranks[i], n, ranks[i + 1])
        count = int(np.prod(shape))
        flat = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        offset += 8 * count
        cores.append(flat.reshape(shape, order="F").astype(np.float64))
    if offset != len(blob):
        raise ValueError(f"container has {len(blob) - offset} trailing bytes")
    cls = TtOperator if operator else TtTensor
    return cls(tuple(cores), bool(header["cyclic"]), header.get("meta", {}))


def save(path, t: TtTensor | TtOperator) -> Path:
    path = Path(path)
    path.write_bytes(dumps(t))
    return path


def load(path) -> TtTensor | TtOperator:
    return loads(Path(path).read_bytes())


def info(path) -> dict:
    header, _ = read_header(Path(path).read_bytes())
    return header
