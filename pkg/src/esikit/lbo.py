"""Discrete Laplace-Beltrami operator on a triangle mesh.

The surface Laplacian is discretized with the standard linear finite
elements: cotangent stiffness matrix and lumped barycentric mass matrix.
``eigenmodes`` solves the generalized symmetric problem

    stiffness @ psi = lam * mass @ psi

for the smallest eigenvalues; the eigenvectors are returned
mass-orthonormal (psi.T @ M @ psi = I), which is the normalization the
basis and solver layers assume. Eigenvalue units are 1/mm^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import eigh, solve_triangular
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh

from .errors import ConvergenceError, DimensionError, NumericalError

MAX_COTANGENT = 1e8
DENSE_SOLVER_MAX_VERTICES = 2000
SPARSE_SHIFT = -1e-8
SPARSE_MAX_ITER = 5000
_SPARSE_MODE_BUFFER = 8  # extra Lanczos modes guard degenerate clusters


@dataclass(frozen=True)
class DiscreteLBO:
    """Cotangent stiffness and lumped vertex areas of a mesh.

    ``stiffness`` is sparse symmetric positive semidefinite with zero row
    sums (constants span its kernel); ``mass`` holds the strictly positive
    diagonal of the lumped mass matrix (one third of incident triangle
    area per vertex, mm^2).
    """

    stiffness: sparse.csr_matrix
    mass: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.mass.shape[0]

    def mass_matrix(self) -> sparse.dia_matrix:
        return sparse.diags(self.mass)


@dataclass(frozen=True)
class EigenmodeResult:
    """Smallest generalized eigenpairs of a :class:`DiscreteLBO`.

    ``eigenvalues`` ascending, non-negative, length S; ``eigenvectors``
    is (N, S) with columns mass-orthonormal. The sign convention makes
    each column's largest-magnitude entry positive.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    mass_orthonormal: bool = True

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.shape[0]


def assemble_lbo(mesh) -> DiscreteLBO:
    """Build cotangent stiffness and lumped mass for a validated TriMesh.

    The weight of edge (i, j) is (cot a + cot b) / 2 over the one or two
    triangles containing the edge; off-diagonal stiffness entries are the
    negated weights and the diagonal makes row sums zero.
    """
    verts = mesh.vertices
    faces = mesh.faces
    n = mesh.n_vertices

    # Corner cotangents: for the corner at vertex c of a face, the cot of
    # the interior angle, contributed to the opposite edge.
    i, j, k = faces[:, 0], faces[:, 1], faces[:, 2]
    cots = np.empty((faces.shape[0], 3), dtype=np.float64)
    for corner, (a, b, c) in enumerate(((i, j, k), (j, k, i), (k, i, j))):
        u = verts[b] - verts[a]
        v = verts[c] - verts[a]
        cross = np.linalg.norm(np.cross(u, v), axis=1)
        cots[:, corner] = np.einsum("ij,ij->i", u, v) / cross
    if np.any(np.abs(cots) > MAX_COTANGENT):
        raise NumericalError(
            "near-degenerate triangle: cotangent magnitude exceeds "
            f"{MAX_COTANGENT:.0e}"
        )

    # Corner at column 0 (vertex i) is opposite edge (j, k), etc.
    rows = np.concatenate([j, k, i])
    cols = np.concatenate([k, i, j])
    w = 0.5 * np.concatenate([cots[:, 0], cots[:, 1], cots[:, 2]])
    off = sparse.coo_matrix((w, (rows, cols)), shape=(n, n))
    off = (off + off.T).tocsr()  # symmetric accumulation over shared edges
    diag = np.asarray(off.sum(axis=1)).ravel()
    stiffness = sparse.diags(diag) - off

    areas = mesh.face_areas
    mass = np.zeros(n, dtype=np.float64)
    for c in range(3):
        np.add.at(mass, faces[:, c], areas / 3.0)
    return DiscreteLBO(stiffness=stiffness.tocsr(), mass=mass)


def eigenmodes(lbo: DiscreteLBO, count: int) -> EigenmodeResult:
    """Solve for the ``count`` smallest eigenpairs of the discrete operator.

    Dense symmetric solver up to ``DENSE_SOLVER_MAX_VERTICES`` vertices,
    shift-invert Lanczos beyond. Raises DimensionError when ``count`` is
    outside [1, N] and ConvergenceError when the iterative solver fails.
    """
    n = lbo.n_vertices
    if not 1 <= count <= n:
        raise DimensionError(f"requested {count} modes on {n} vertices")
    # ARPACK needs count + buffer < n; near-full spectra go dense regardless
    if n <= DENSE_SOLVER_MAX_VERTICES or count >= n - _SPARSE_MODE_BUFFER - 1:
        vals, vecs = _dense_modes(lbo, count)
    else:
        vals, vecs = _sparse_modes(lbo, count)

    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    vals = np.maximum(vals, 0.0)  # clamp roundoff negatives in the kernel
    vecs = _mass_orthonormalize(vecs, lbo.mass)
    vecs = _fix_signs(vecs)
    return EigenmodeResult(eigenvalues=vals, eigenvectors=vecs)


def _dense_modes(lbo, count):
    # Whiten by the diagonal mass: B = M^-1/2 S M^-1/2 is an ordinary
    # symmetric problem; modes map back as psi = M^-1/2 u.
    inv_sqrt_m = 1.0 / np.sqrt(lbo.mass)
    b = lbo.stiffness.toarray() * inv_sqrt_m[:, None] * inv_sqrt_m[None, :]
    b = 0.5 * (b + b.T)
    vals, u = eigh(b, subset_by_index=(0, count - 1))
    return vals, u * inv_sqrt_m[:, None]


def _sparse_modes(lbo, count):
    # shift-invert Lanczos at machine tolerance; a tol as loose as the
    # nominal 1e-9 lets ARPACK deflate inside near-degenerate clusters and
    # skip members, so we solve tighter and with a few buffer modes, then
    # truncate after sorting
    n = lbo.n_vertices
    k = min(count + _SPARSE_MODE_BUFFER, n - 1)
    mass_mat = sparse.diags(lbo.mass).tocsc()
    try:
        vals, vecs = eigsh(
            lbo.stiffness.tocsc(),
            k=k,
            M=mass_mat,
            sigma=SPARSE_SHIFT,
            which="LM",
            tol=0,
            maxiter=SPARSE_MAX_ITER,
        )
    except ArpackNoConvergence as exc:
        raise ConvergenceError(
            f"eigensolver converged only {len(exc.eigenvalues)}/{k} modes",
            residual=float(len(exc.eigenvalues)),
        ) from exc
    except ArpackError as exc:
        raise ConvergenceError(f"eigensolver failed: {exc}") from exc
    order = np.argsort(vals, kind="stable")[:count]
    return vals[order], vecs[:, order]


def _mass_orthonormalize(vecs, mass):
    # vecs are already near-orthonormal in the mass inner product; a
    # Cholesky correction pins the invariant down to roundoff.
    gram = vecs.T @ (vecs * mass[:, None])
    chol = np.linalg.cholesky(gram)
    return solve_triangular(chol, vecs.T, lower=True).T


def _fix_signs(vecs):
    peak = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[peak, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs

def rayleigh_quotients(lbo: DiscreteLBO, vecs: np.ndarray) -> np.ndarray:
    """Per-column psi' S psi / psi' M psi, for verification."""
    num = np.einsum("ns,ns->s", vecs, lbo.stiffness @ vecs)
    den = np.einsum("ns,ns->s", vecs, vecs * lbo.mass[:, None])
    return num / den
