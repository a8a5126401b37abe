"""Real spherical harmonics on unit directions.

Orthonormal real-valued convention without the Condon-Shortley phase:

    Y(l, 0)  = Nlm * P(l, 0)(cos t)
    Y(l, m)  = sqrt(2) * Nlm * P(l, m)(cos t) * cos(m p),  m > 0
    Y(l, -m) = sqrt(2) * Nlm * P(l, m)(cos t) * sin(m p),  m > 0

so that the functions integrate to one over the sphere and
Y(0, 0) = 1 / sqrt(4 pi). The normalized associated Legendre values are
built by ascending recurrence, which stays finite far beyond the degrees
used here.
"""

from __future__ import annotations

import numpy as np

from .errors import GeometryError, ShapeError


def sph_harm_count(max_degree: int) -> int:
    return (max_degree + 1) ** 2


def sph_harm_orders(max_degree: int):
    """(l, m) pairs in column order: l ascending, m from -l to l."""
    return [(l, m) for l in range(max_degree + 1) for m in range(-l, l + 1)]


def _normalized_legendre(max_degree, x):
    """P[l][m] = Nlm * assoc Legendre, no CS phase; x = cos(theta), (n,)."""
    n = x.shape[0]
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    p = [[None] * (l + 1) for l in range(max_degree + 1)]
    p[0][0] = np.full(n, 0.5 / np.sqrt(np.pi))
    for m in range(1, max_degree + 1):
        p[m][m] = np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * sin_t * p[m - 1][m - 1]
    for m in range(max_degree):
        p[m + 1][m] = np.sqrt(2.0 * m + 3.0) * x * p[m][m]
    for m in range(max_degree + 1):
        for l in range(m + 2, max_degree + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            p[l][m] = a * (x * p[l - 1][m] - b * p[l - 2][m])
    return p


def real_sph_harm_table(directions, max_degree: int):
    """Evaluate all real harmonics up to ``max_degree`` at unit directions.

    Parameters
    ----------
    directions : (n, 3) array
        Unit vectors (checked to 1e-6).
    max_degree : int
        Highest degree l.

    Returns
    -------
    (n, (max_degree + 1)**2) array, columns ordered by
    :func:`sph_harm_orders`.
    """
    dirs = np.asarray(directions, dtype=np.float64)
    if dirs.ndim != 2 or dirs.shape[1] != 3:
        raise ShapeError(f"directions: expected (n, 3), got {dirs.shape}")
    norms = np.linalg.norm(dirs, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise GeometryError("directions must be unit vectors")
    if max_degree < 0:
        raise ShapeError("max_degree must be non-negative")

    cos_t = np.clip(dirs[:, 2], -1.0, 1.0)
    phi = np.arctan2(dirs[:, 1], dirs[:, 0])
    p = _normalized_legendre(max_degree, cos_t)

    n = dirs.shape[0]
    out = np.empty((n, sph_harm_count(max_degree)), dtype=np.float64)
    sqrt2 = np.sqrt(2.0)
    col = 0
    for l in range(max_degree + 1):
        for m in range(-l, l + 1):
            if m == 0:
                out[:, col] = p[l][0]
            elif m > 0:
                out[:, col] = sqrt2 * p[l][m] * np.cos(m * phi)
            else:
                out[:, col] = sqrt2 * p[l][-m] * np.sin(-m * phi)
            col += 1
    return out
