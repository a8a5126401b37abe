"""Spatial basis families over a source space.

Three constructors produce the same :class:`BasisSet` container:

* ``gbf_basis`` - surface eigenmodes of the mesh Laplacian, weighted by
  their eigenvalues; the geometry-informed family.
* ``harmonic_basis`` - real spherical harmonics evaluated on
  sphere-projected vertices, weighted by the analytic sphere eigenvalues
  l(l+1) so the same eigenvalue-to-prior mapping applies.
* ``msp_basis`` - right singular vectors of the noise-whitened lead
  field.

Multi-component meshes are handled per component by default: each
hemisphere gets its own modes, zero-padded off-component, and columns are
re-sorted by ascending weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lbo as _lbo
from .errors import DimensionError, GeometryError, ShapeError
from .harmonics import real_sph_harm_table, sph_harm_count
from .validation import check_spd_eigh

_FAMILIES = ("GBF", "Harmonic", "MSP", "custom")


@dataclass(frozen=True)
class BasisSet:
    """N x S matrix of spatial basis functions plus per-column weights.

    ``weights`` feed the coefficient prior (eigenvalues for GBF, l(l+1)
    for Harmonic, singular-value-derived or uniform for MSP) and are
    sorted ascending for the eigen-families. ``mesh_fingerprint`` ties the
    basis to the mesh it was computed on ("" when there is no mesh, e.g.
    MSP from a bare lead field).
    """

    A: np.ndarray
    weights: np.ndarray
    family: str
    mesh_fingerprint: str = ""

    def __post_init__(self):
        a = np.ascontiguousarray(np.asarray(self.A, dtype=np.float64))
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64))
        if a.ndim != 2:
            raise ShapeError(f"basis matrix: expected 2-d, got {a.ndim}-d")
        n, s = a.shape
        if s > n:
            raise DimensionError(f"basis has more columns ({s}) than rows ({n})")
        if w.shape != (s,):
            raise ShapeError(f"weights: expected length {s}, got {w.shape}")
        if np.any(w < 0):
            raise ShapeError("weights must be non-negative")
        if self.family not in _FAMILIES:
            raise ShapeError(f"unknown basis family {self.family!r}")
        zero_cols = ~np.any(a != 0.0, axis=0)
        if np.any(zero_cols):
            raise ShapeError(f"basis column {int(np.flatnonzero(zero_cols)[0])} is all zero")
        if self.family in ("GBF", "Harmonic") and np.any(np.diff(w) < 0):
            raise ShapeError(f"{self.family} weights must be sorted ascending")
        a.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "weights", w)

    @property
    def n_sources(self) -> int:
        return self.A.shape[0]

    @property
    def n_functions(self) -> int:
        return self.A.shape[1]


def _sort_by_weight(a, w):
    order = np.argsort(w, kind="stable")
    return a[:, order], w[order]


def gbf_basis(mesh, count, per_hemisphere=True) -> BasisSet:
    """Surface eigenmode basis; ``count`` modes per component when
    ``per_hemisphere`` and the mesh has several components, else
    ``count`` joint modes."""
    comp = mesh.component_labels
    n_comp = mesh.n_components
    if per_hemisphere and n_comp > 1:
        blocks, weights = [], []
        for c in range(n_comp):
            idx = np.flatnonzero(comp == c)
            if count > idx.size:
                raise DimensionError(
                    f"{count} modes requested on component {c} with {idx.size} vertices"
                )
            sub = _submesh(mesh, idx)
            modes = _lbo.eigenmodes(_lbo.assemble_lbo(sub), count)
            block = np.zeros((mesh.n_vertices, count))
            block[idx] = modes.eigenvectors
            blocks.append(block)
            weights.append(modes.eigenvalues)
        a = np.hstack(blocks)
        w = np.concatenate(weights)
    else:
        modes = _lbo.eigenmodes(_lbo.assemble_lbo(mesh), count)
        a, w = modes.eigenvectors, modes.eigenvalues
    a, w = _sort_by_weight(a, w)
    return BasisSet(A=a, weights=w, family="GBF", mesh_fingerprint=mesh.fingerprint())


def _submesh(mesh, vertex_idx):
    from .mesh import TriMesh

    remap = -np.ones(mesh.n_vertices, dtype=np.int64)
    remap[vertex_idx] = np.arange(vertex_idx.size)
    keep = np.all(np.isin(mesh.faces, vertex_idx), axis=1)
    return TriMesh(mesh.vertices[vertex_idx], remap[mesh.faces[keep]])


def harmonic_basis(mesh, max_degree, per_hemisphere=True) -> BasisSet:
    """Spherical-harmonic basis on sphere-projected vertices.

    Each component (or the joint mesh) is centered on its vertex centroid
    and vertices are radially projected to the unit sphere;
    (max_degree + 1)**2 columns per component, weights l(l + 1).
    """
    if max_degree < 0:
        raise ShapeError("max_degree must be non-negative")
    comp = mesh.component_labels
    groups = (
        [np.flatnonzero(comp == c) for c in range(mesh.n_components)]
        if per_hemisphere and mesh.n_components > 1
        else [np.arange(mesh.n_vertices)]
    )
    per_comp = sph_harm_count(max_degree)
    degrees = np.array(
        [l for l in range(max_degree + 1) for _ in range(-l, l + 1)], dtype=np.float64
    )
    blocks, weights = [], []
    for idx in groups:
        pts = mesh.vertices[idx]
        offset = pts - pts.mean(axis=0)
        norms = np.linalg.norm(offset, axis=1)
        if np.any(norms < 1e-12):
            raise GeometryError("a vertex coincides with the projection centroid")
        table = real_sph_harm_table(offset / norms[:, None], max_degree)
        block = np.zeros((mesh.n_vertices, per_comp))
        block[idx] = table
        blocks.append(block)
        weights.append(degrees * (degrees + 1.0))
    a = np.hstack(blocks)
    w = np.concatenate(weights)
    if a.shape[1] > mesh.n_vertices:
        raise DimensionError(
            f"harmonic basis has {a.shape[1]} columns for {mesh.n_vertices} vertices; "
            "reduce max_degree"
        )
    a, w = _sort_by_weight(a, w)
    return BasisSet(A=a, weights=w, family="Harmonic", mesh_fingerprint=mesh.fingerprint())


def msp_basis(leadfield, noise_cov, count, weight_mode="uniform") -> BasisSet:
    """Basis from the SVD of the whitened lead field.

    The lead field K is whitened as C^-1/2 K with the symmetric inverse
    square root of ``noise_cov``; the first ``count`` right singular
    vectors (descending singular value) become the basis columns.

    ``weight_mode`` picks the prior weights: ``"uniform"`` (all-ones,
    identity prior up to scale, the default) or ``"inverse-sv-squared"``
    (1 / sigma_i^2 scaled so the smallest weight is 1).
    """
    k = np.asarray(getattr(leadfield, "K", leadfield), dtype=np.float64)
    if k.ndim != 2:
        raise ShapeError("lead field must be a 2-d matrix")
    m, n = k.shape
    if not 1 <= count <= min(m, n):
        raise DimensionError(
            f"count {count} outside [1, min(M, N)] = [1, {min(m, n)}]"
        )
    vals, vecs = check_spd_eigh(noise_cov, name="noise_cov")
    if vals.shape[0] != m:
        raise ShapeError(f"noise_cov is {vals.shape[0]}x{vals.shape[0]}, lead field has {m} rows")
    whitener = (vecs / np.sqrt(vals)) @ vecs.T
    _, sv, vt = np.linalg.svd(whitener @ k, full_matrices=False)
    a = vt[:count].T.copy()
    # deterministic sign: largest-magnitude entry of each column positive
    peak = np.argmax(np.abs(a), axis=0)
    signs = np.sign(a[peak, np.arange(count)])
    signs[signs == 0] = 1.0
    a *= signs
    if weight_mode == "uniform":
        w = np.ones(count)
    elif weight_mode == "inverse-sv-squared":
        w = (sv[0] / sv[:count]) ** 2
    else:
        raise ShapeError(f"unknown weight_mode {weight_mode!r}")
    fingerprint = getattr(leadfield, "fingerprint", lambda: "")()
    return BasisSet(A=a, weights=w, family="MSP", mesh_fingerprint=fingerprint)


def identity_basis(n) -> BasisSet:
    """Trivial source-per-column basis; turns the MAP solver into ridge."""
    return BasisSet(A=np.eye(n), weights=np.ones(n), family="custom")
