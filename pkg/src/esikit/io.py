"""Shared on-disk formats.

Two interchangeable matrix containers are used everywhere:

MAT-CSV
    Text. First line ``"rows cols"``, then one line per row of
    comma-separated floats. Floats are written with ``repr`` so a
    load/save cycle reproduces values exactly.

MAT-BIN
    Binary. Magic ``b"ESIM"``, one version byte (currently 1), then rows
    and cols as little-endian u64, then row-major little-endian float64
    payload. Round-trips bit-exactly.

VEC
    A single-column MAT in either container.

Manifests are flat ``key = value`` text files with keys written in sorted
order. Sensor metadata is one ``name x y z`` line per sensor.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, ParseError, ShapeError

_MAGIC = b"ESIM"
_VERSION = 1
_HEADER = struct.Struct("<4sBQQ")


def _fmt(x: float) -> str:
    return repr(float(x))


def save_matrix(path, mat, fmt=None):
    """Write a 2-d array as MAT-CSV or MAT-BIN.

    ``fmt`` is ``"csv"`` or ``"bin"``; default is inferred from the suffix
    (``.bin`` means binary, anything else text).
    """
    path = Path(path)
    mat = np.ascontiguousarray(np.asarray(mat, dtype=np.float64))
    if mat.ndim != 2:
        raise ShapeError(f"save_matrix: expected 2-d array, got {mat.ndim}-d")
    if fmt is None:
        fmt = "bin" if path.suffix == ".bin" else "csv"
    rows, cols = mat.shape
    if fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, _VERSION, rows, cols))
            fh.write(mat.astype("<f8").tobytes(order="C"))
    elif fmt == "csv":
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(f"{rows} {cols}\n")
            for row in mat:
                fh.write(",".join(_fmt(v) for v in row))
                fh.write("\n")
    else:
        raise ValueError(f"unknown matrix format {fmt!r}")
    return path


def load_matrix(path):
    """Read a MAT-CSV or MAT-BIN file (detected by magic bytes)."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == _MAGIC:
        return _load_matrix_bin(path)
    return _load_matrix_csv(path)


def _load_matrix_bin(path):
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ParseError(f"{path}: truncated MAT-BIN header")
        magic, version, rows, cols = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported MAT-BIN version {version}")
        payload = fh.read()
    expected = rows * cols * 8
    if len(payload) != expected:
        raise ParseError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()


def _load_matrix_csv(path):
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = lines[0].split()
    if len(header) != 2:
        raise ParseError(f"{path}: expected 'rows cols' header", line=1)
    try:
        rows, cols = int(header[0]), int(header[1])
    except ValueError:
        raise ParseError(f"{path}: non-integer header {lines[0]!r}", line=1) from None
    if len(lines) - 1 < rows:
        raise ParseError(f"{path}: expected {rows} data rows, found {len(lines) - 1}")
    out = np.empty((rows, cols), dtype=np.float64)
    for i in range(rows):
        parts = lines[1 + i].split(",")
        if len(parts) != cols:
            raise ParseError(
                f"{path}: expected {cols} values, found {len(parts)}", line=2 + i
            )
        try:
            out[i] = [float(p) for p in parts]
        except ValueError:
            raise ParseError(f"{path}: malformed float", line=2 + i) from None
    return out


def save_vector(path, vec, fmt=None):
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1:
        raise ShapeError(f"save_vector: expected 1-d array, got {vec.ndim}-d")
    return save_matrix(path, vec.reshape(-1, 1), fmt=fmt)


def load_vector(path):
    mat = load_matrix(path)
    if mat.shape[1] != 1:
        raise ShapeError(f"{path}: expected single-column VEC, got {mat.shape[1]} columns")
    return mat[:, 0].copy()


def write_manifest(path, entries):
    """Write a ``key = value`` manifest, keys sorted for stable output."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(entries):
            fh.write(f"{key} = {entries[key]}\n")
    return path


def read_manifest(path):
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"{path}: expected 'key = value'", line=lineno)
            key, value = line.split("=", 1)
            entries[key.strip()] = value.strip()
    return entries


def save_sensor_meta(path, names, positions):
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape != (len(names), 3):
        raise ShapeError("sensor metadata: names and positions disagree")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, pos in zip(names, positions):
            fh.write(f"{name} {_fmt(pos[0])} {_fmt(pos[1])} {_fmt(pos[2])}\n")
    return Path(path)


def load_sensor_meta(path):
    """Read ``name x y z`` lines; returns (names, (M, 3) positions)."""
    names, rows = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ParseError(
                    f"{path}: expected 'name x y z', got {len(parts)} fields",
                    line=lineno,
                )
            try:
                rows.append([float(p) for p in parts[1:]])
            except ValueError:
                raise ParseError(f"{path}: malformed coordinate", line=lineno) from None
            names.append(parts[0])
    return names, np.asarray(rows, dtype=np.float64).reshape(len(names), 3)
