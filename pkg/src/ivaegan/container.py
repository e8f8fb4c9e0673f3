"""Binary container shared by datasets and checkpoints.

Layout::

    IVGN1\\n
    {"kind": ..., "meta": {...}, "matrices": [{"name": ..., "rows": r, "cols": c}, ...]}\\n
    <little-endian float64 payload, matrices in header order, row-major>
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"IVGN1"
_LE_F64 = np.dtype("<f8")


class ContainerError(ValueError):
    """Malformed or inconsistent container file."""


def write_container(path, kind: str, matrices: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = []
    blobs = []
    for name, m in matrices.items():
        m = np.asarray(m, dtype=np.float64)
        if m.ndim == 1:
            m = m.reshape(-1, 1)
        if m.ndim != 2:
            raise ContainerError(f"matrix {name!r} must be 2-D, got shape {m.shape}")
        entries.append({"name": name, "rows": int(m.shape[0]), "cols": int(m.shape[1])})
        blobs.append(np.ascontiguousarray(m, dtype=_LE_F64).tobytes())
    header = {"kind": kind, "meta": meta or {}, "matrices": entries}
    line = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\n")
        fh.write(line + b"\n")
        for b in blobs:
            fh.write(b)


def read_container(path, kind: str | None = None) -> tuple[dict[str, np.ndarray], dict]:
    """Return ``(matrices, meta)``; raises :class:`ContainerError` with a diagnostic."""
    raw = Path(path).read_bytes()
    first = raw.find(b"\n")
    if first < 0 or raw[:first] != MAGIC:
        raise ContainerError(f"{path}: bad magic, expected {MAGIC.decode()!r}")
    second = raw.find(b"\n", first + 1)
    if second < 0:
        raise ContainerError(f"{path}: malformed header (no terminating newline)")
    try:
        header = json.loads(raw[first + 1:second])
        entries = header["matrices"]
        shapes = [(e["name"], int(e["rows"]), int(e["cols"])) for e in entries]
    except (ValueError, KeyError, TypeError) as exc:
        raise ContainerError(f"{path}: malformed header: {exc}") from None
    if kind is not None and header.get("kind") != kind:
        raise ContainerError(f"{path}: expected a {kind!r} container, found {header.get('kind')!r}")
    if any(r < 0 or c < 0 for _, r, c in shapes):
        raise ContainerError(f"{path}: malformed header: negative matrix dimension")

    payload = memoryview(raw)[second + 1:]
    expected = 8 * sum(r * c for _, r, c in shapes)
    if len(payload) != expected:
        what = "truncated payload" if len(payload) < expected else "trailing bytes after payload"
        raise ContainerError(f"{path}: {what}: header declares {expected} bytes, found {len(payload)}")
    out = {}
    offset = 0
    for name, r, c in shapes:
        nbytes = 8 * r * c
        arr = np.frombuffer(payload[offset:offset + nbytes], dtype=_LE_F64).astype(np.float64)
        out[name] = arr.reshape(r, c)
        offset += nbytes
    return out, header.get("meta", {})
