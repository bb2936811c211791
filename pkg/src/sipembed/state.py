"""Binary state file for a fitted method.

Layout::

    b"SIPSTATE" | 0x01 | uint32 LE header length | JSON header | arrays

The JSON header is written with sorted keys and no whitespace.  Arrays
follow in header order as raw little-endian float64, row-major.
"""

from __future__ import annotations

import fcntl
import json
import os
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .projection import MethodBasis
from .targets import TargetSpec

__all__ = ["MAGIC", "VERSION", "StateError", "SavedState", "dumps", "loads", "save", "load"]

MAGIC = b"SIPSTATE"
VERSION = 1


class StateError(ValueError):
    pass


class SavedState:
    """A basis plus the context needed to resume the stream it came from."""

    def __init__(self, basis: MethodBasis, spec: TargetSpec, sigma: tuple[float, float],
                 meta: dict | None = None):
        self.basis = basis
        self.spec = spec
        self.sigma = (float(sigma[0]), float(sigma[1]))
        self.meta = dict(meta or {})

    def __eq__(self, other) -> bool:
        if not isinstance(other, SavedState):
            return NotImplemented
        return dumps(self) == dumps(other)


def _header(st: SavedState) -> tuple[dict, list[np.ndarray]]:
    b = st.basis
    arrays, desc = [], []
    for name in b.array_order():
        a = np.asarray(b.arrays[name], dtype="<f8")
        rows = a.shape[0]
        cols = a.shape[1] if a.ndim == 2 else 1
        desc.append({"name": name, "rows": rows, "cols": cols, "ndim": a.ndim})
        arrays.append(a)
    head = {
        "method": b.method,
        "n": b.n,
        "d": b.d,
        "spec": st.spec.params(),
        "sigma1": st.sigma[0],
        "sigma2": st.sigma[1],
        "scalars": b.scalars,
        "arrays": desc,
        "meta": st.meta,
    }
    return head, arrays


def dumps(st: SavedState) -> bytes:
    head, arrays = _header(st)
    raw = json.dumps(head, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
    parts = [MAGIC, bytes([VERSION]), struct.pack("<I", len(raw)), raw]
    parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays]
    return b"".join(parts)


def loads(data: bytes) -> SavedState:
    if data[:8] != MAGIC:
        raise StateError("not a state file (bad magic)")
    if len(data) < 13:
        raise StateError("truncated header")
    if data[8] != VERSION:
        raise StateError(f"unsupported state version {data[8]}")
    (hlen,) = struct.unpack("<I", data[9:13])
    if 13 + hlen > len(data):
        raise StateError("header length exceeds file size")
    try:
        head = json.loads(data[13:13 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StateError(f"corrupt header: {exc}") from None
    pos = 13 + hlen
    arrays = {}
    for dsc in head["arrays"]:
        count = dsc["rows"] * dsc["cols"]
        end = pos + 8 * count
        if end > len(data):
            raise StateError(f"array {dsc['name']!r} truncated")
        a = np.frombuffer(data[pos:end], dtype="<f8").astype(np.float64)
        arrays[dsc["name"]] = a.reshape(dsc["rows"], dsc["cols"]) if dsc["ndim"] == 2 else a
        pos = end
    if pos != len(data):
        raise StateError(f"{len(data) - pos} trailing bytes after arrays")
    basis = MethodBasis(head["method"], head["n"], head["d"], arrays, head["scalars"])
    spec = TargetSpec.from_params(head["spec"])
    return SavedState(basis, spec, (head["sigma1"], head["sigma2"]), head.get("meta", {}))


@contextmanager
def _locked(path: Path, exclusive: bool):
    mode = "a+b" if exclusive else "rb"
    with open(path, mode) as fh:
        fcntl.flock(fh.fileno(), fcntl.LOCK_EX if exclusive else fcntl.LOCK_SH)
        try:
            yield fh
        finally:
            fcntl.flock(fh.fileno(), fcntl.LOCK_UN)


def save(st: SavedState, path) -> None:
    """Write atomically (temp file + rename) under an advisory lock."""
    path = Path(path)
    data = dumps(st)
    with _locked(path, exclusive=True):
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def load(path) -> SavedState:
    path = Path(path)
    if not path.is_file():
        raise StateError(f"state file not found: {path}")
    with _locked(path, exclusive=False) as fh:
        return loads(fh.read())
