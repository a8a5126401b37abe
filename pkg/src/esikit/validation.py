"""Input validation helpers.

Small, explicit checks used at the public entry points of every module so
that shape and value errors surface with consistent exception types.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateError, LinAlgError, ShapeError


def as_float_array(x, name="array", ndim=None):
    """Coerce to a float64 ndarray and reject non-finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeError(f"{name}: expected {ndim}-d array, got {arr.ndim}-d")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name}: contains non-finite values")
    return arr


def as_vector(x, name="vector", length=None):
    """Coerce to a finite 1-d float64 vector, optionally of fixed length."""
    vec = as_float_array(x, name=name, ndim=1)
    if length is not None and vec.shape[0] != length:
        raise ShapeError(f"{name}: expected length {length}, got {vec.shape[0]}")
    return vec


def as_matrix(x, name="matrix", shape=None):
    """Coerce to a finite 2-d float64 matrix, optionally of fixed shape."""
    mat = as_float_array(x, name=name, ndim=2)
    if shape is not None:
        want = tuple(shape)
        got = mat.shape
        if any(w is not None and w != g for w, g in zip(want, got)):
            raise ShapeError(f"{name}: expected shape {want}, got {got}")
    return mat


def check_square(mat, name="matrix"):
    mat = as_matrix(mat, name=name)
    if mat.shape[0] != mat.shape[1]:
        raise ShapeError(f"{name}: expected square matrix, got {mat.shape}")
    return mat


def check_symmetric(mat, name="matrix", tol=1e-10):
    mat = check_square(mat, name=name)
    scale = max(np.abs(mat).max(), 1.0)
    if np.abs(mat - mat.T).max() > tol * scale:
        raise LinAlgError(f"{name}: not symmetric")
    return mat


def check_spd_eigh(mat, name="matrix"):
    """Eigendecompose a symmetric matrix, requiring strictly positive spectrum.

    Returns (eigenvalues, eigenvectors) ascending.
    """
    mat = check_symmetric(mat, name=name)
    vals, vecs = np.linalg.eigh(mat)
    if vals[0] <= 0.0:
        raise LinAlgError(
            f"{name}: not positive definite (smallest eigenvalue {vals[0]:.3e})"
        )
    return vals, vecs


def check_nonzero(vec, name="vector"):
    vec = np.asarray(vec)
    if not np.any(vec != 0.0):
        raise DegenerateError(f"{name}: all entries are zero")
    return vec


def check_index(idx, size, name="index"):
    idx = int(idx)
    if not 0 <= idx < size:
        raise IndexError(f"{name} {idx} out of range [0, {size})")
    return idx
