"""Binary containers: concept-graph matrices, region features, checkpoints.

All three share one layout rule: an 8-byte ASCII magic, little-endian u32
header fields, then little-endian float32 payloads in row-major order.
Each binary file has a JSON sidecar at ``<path>.json``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataIntegrityError, ParseError, ShapeError

MATRIX_MAGIC = b"CVSEMAT1"
FEATURE_MAGIC = b"CVSEFEAT"
CHECKPOINT_MAGIC = b"CVSECKPT"
_F32 = np.dtype("<f4")


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim == 1:
        return a[None, :]
    if a.ndim != 2:
        raise ShapeError(f"only 1-D or 2-D arrays can be stored, got shape {a.shape}")
    return a


def _read_exact(fh, n, path):
    buf = fh.read(n)
    if len(buf) != n:
        raise ParseError(f"{path}: truncated file")
    return buf


def _check_magic(fh, magic, path):
    if fh.read(8) != magic:
        raise ParseError(f"{path}: bad magic, expected {magic.decode()}")


# ----------------------------------------------------------- matrix store


def write_matrix(path, matrix, stage: str, params: Mapping | None = None) -> None:
    m = _as_2d(matrix)
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<II", *m.shape))
        fh.write(np.ascontiguousarray(m, dtype=_F32).tobytes())
    write_json(sidecar_path(path), {"stage": stage, "rows": m.shape[0], "cols": m.shape[1],
                                    "params": dict(params or {})})


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        _check_magic(fh, MATRIX_MAGIC, path)
        rows, cols = struct.unpack("<II", _read_exact(fh, 8, path))
        data = _read_exact(fh, 4 * rows * cols, path)
    return np.frombuffer(data, dtype=_F32).reshape(rows, cols).astype(np.float64)


# ---------------------------------------------------------- region features


def write_features(path, features, image_ids: Sequence[str]) -> None:
    """Store an (n, M, F) stack; the sidecar maps image id -> record index."""
    f = np.asarray(features)
    if f.ndim != 3 or f.shape[0] != len(image_ids):
        raise ShapeError(f"features must be (n, M, F) with n == {len(image_ids)}, got {f.shape}")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<III", *f.shape))
        fh.write(np.ascontiguousarray(f, dtype=_F32).tobytes())
    write_json(sidecar_path(path), {"index": {iid: i for i, iid in enumerate(image_ids)}})


def read_features(path) -> tuple[np.ndarray, dict[str, int]]:
    with open(path, "rb") as fh:
        _check_magic(fh, FEATURE_MAGIC, path)
        n, M, F = struct.unpack("<III", _read_exact(fh, 12, path))
        data = _read_exact(fh, 4 * n * M * F, path)
    feats = np.frombuffer(data, dtype=_F32).reshape(n, M, F).astype(np.float64)
    index = read_json(sidecar_path(path))["index"]
    if sorted(index.values()) != list(range(n)):
        raise DataIntegrityError(f"{path}: sidecar index does not cover records 0..{n - 1}")
    return feats, index


# ------------------------------------------------------------- checkpoints


def write_checkpoint(path, sections: Mapping[str, np.ndarray], meta: Mapping) -> None:
    """Named float32 sections in insertion order, then the JSON sidecar."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        for name, arr in sections.items():
            m = _as_2d(arr)
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<II", *m.shape))
            fh.write(np.ascontiguousarray(m, dtype=_F32).tobytes())
    write_json(sidecar_path(path), dict(meta))


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    sections = {}
    with open(path, "rb") as fh:
        _check_magic(fh, CHECKPOINT_MAGIC, path)
        while True:
            head = fh.read(4)
            if not head:
                break
            if len(head) != 4:
                raise ParseError(f"{path}: truncated section header")
            (n,) = struct.unpack("<I", head)
            name = _read_exact(fh, n, path).decode("utf-8")
            rows, cols = struct.unpack("<II", _read_exact(fh, 8, path))
            data = _read_exact(fh, 4 * rows * cols, path)
            sections[name] = np.frombuffer(data, dtype=_F32).reshape(rows, cols).astype(np.float64)
    return sections, read_json(sidecar_path(path))


def config_hash(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()
