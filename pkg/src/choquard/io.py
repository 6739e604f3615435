"""Field files, JSON reports, and CSV trace export.

Field format (little-endian): 8-byte magic "CHQFLD01", u64 grid size n,
f64 half-width L, then n^3 (re, im) f64 pairs in x-fastest order.  Round
trips are bit exact.
"""

from __future__ import annotations

import hashlib
import json
import struct
from datetime import datetime, timezone

import numpy as np

from .grid import ComplexField, SpectralGrid, make_grid

MAGIC = b"CHQFLD01"


class FieldFormatError(ValueError):
    """Corrupt or mismatched field file."""


def write_field(path, field: ComplexField) -> None:
    n = field.grid.n
    header = MAGIC + struct.pack("<Q", n) + struct.pack("<d", field.grid.half_width)
    # in-memory layout is [ix, iy, iz]; the file stores x varying fastest
    data = np.ascontiguousarray(field.data.transpose(2, 1, 0))
    interleaved = np.empty(data.size * 2, dtype="<f8")
    interleaved[0::2] = data.real.ravel()
    interleaved[1::2] = data.imag.ravel()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(interleaved.tobytes())


def read_field(path, grid: SpectralGrid | None = None) -> ComplexField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 16:
        raise FieldFormatError(f"{path}: truncated header")
    if raw[: len(MAGIC)] != MAGIC:
        raise FieldFormatError(
            f"{path}: bad magic {raw[:len(MAGIC)]!r}, expected {MAGIC!r}"
        )
    off = len(MAGIC)
    (n,) = struct.unpack_from("<Q", raw, off)
    off += 8
    (L,) = struct.unpack_from("<d", raw, off)
    off += 8
    if n < 8 or (n & (n - 1)) != 0:
        raise FieldFormatError(f"{path}: grid size {n} is not a power of two >= 8")
    expected = off + 16 * n**3
    if len(raw) != expected:
        raise FieldFormatError(
            f"{path}: payload holds {len(raw) - off} bytes, expected {16 * n**3}"
        )
    flat = np.frombuffer(raw, dtype="<f8", offset=off)
    data = (flat[0::2] + 1j * flat[1::2]).reshape(n, n, n).transpose(2, 1, 0)
    if grid is None:
        grid = make_grid(int(n), float(L))
    elif grid.n != n or grid.half_width != L:
        raise FieldFormatError(
            f"{path}: file grid ({n}, L={L}) does not match the provided grid"
        )
    return ComplexField(grid, data.copy())


def config_hash(config_dict: dict) -> str:
    canon = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def write_report(results: dict, path, config_dict: dict | None = None) -> None:
    """Deterministically ordered JSON with config hash and code version."""
    from . import __version__

    payload = dict(results)
    payload["code_version"] = __version__
    if config_dict is not None:
        payload["config"] = config_dict
        payload["config_hash"] = config_hash(config_dict)
    payload["timestamp"] = datetime.now(timezone.utc).isoformat()
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, default=_jsonify)
        fh.write("\n")


def _jsonify(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "as_dict"):
        return obj.as_dict()
    raise TypeError(f"cannot serialize {type(obj)}")


def write_trace_csv(trace, path) -> None:
    cols = trace.CSV_COLUMNS
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in trace.rows():
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
