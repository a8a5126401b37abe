"""Lead fields: file ingestion, a built-in analytic dipole model, projection.

The analytic model places one current dipole per mesh vertex, oriented
along the vertex normal, in an infinite homogeneous conductor:

    K[m, i] = p_i . (r_m - r_i) / (4 pi sigma |r_m - r_i|^3)

It is a desk-scale stand-in for a realistic volume-conduction model; all
solvers in the benchmark see the same K, so comparisons remain fair.
Users with realistic lead fields load them from file instead.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ShapeError
from .io import load_matrix, load_sensor_meta
from .validation import as_matrix, as_vector

DEFAULT_CONDUCTIVITY_S_PER_MM = 3.3e-4


@dataclass(frozen=True)
class ForwardModel:
    """Lead-field matrix with sensor and source geometry.

    ``K`` maps N source amplitudes to M sensor readings. A row of zeros
    (dead sensor) or column of zeros (invisible source) triggers a
    warning, not an error. ``source_positions`` may be None for lead
    fields loaded without a paired mesh.
    """

    K: np.ndarray
    sensor_positions: np.ndarray
    source_positions: np.ndarray | None = None
    sensor_names: tuple = ()
    orientation_mode: str = "fixed-normal"

    def __post_init__(self):
        k = as_matrix(self.K, name="lead field")
        sens = as_matrix(self.sensor_positions, name="sensor_positions", shape=(k.shape[0], 3))
        if not np.any(k != 0.0, axis=1).all():
            warnings.warn("lead field has an all-zero row (dead sensor)", stacklevel=3)
        if not np.any(k != 0.0, axis=0).all():
            warnings.warn("lead field has an all-zero column (invisible source)", stacklevel=3)
        k.setflags(write=False)
        sens.setflags(write=False)
        object.__setattr__(self, "K", k)
        object.__setattr__(self, "sensor_positions", sens)
        if self.source_positions is not None:
            src = as_matrix(self.source_positions, name="source_positions", shape=(k.shape[1], 3))
            src.setflags(write=False)
            object.__setattr__(self, "source_positions", src)

    @property
    def n_sensors(self) -> int:
        return self.K.shape[0]

    @property
    def n_sources(self) -> int:
        return self.K.shape[1]


def load_leadfield(path, sensor_meta_path, mesh=None) -> ForwardModel:
    """Read a lead-field matrix plus ``name x y z`` sensor metadata.

    The matrix is taken verbatim (no rescaling). Row count must match the
    sensor metadata; column count must match ``mesh`` when one is given.
    """
    k = load_matrix(path)
    names, positions = load_sensor_meta(sensor_meta_path)
    if k.shape[0] != len(names):
        raise ShapeError(
            f"lead field has {k.shape[0]} rows but sensor metadata lists {len(names)}"
        )
    source_positions = None
    if mesh is not None:
        if mesh.n_vertices != k.shape[1]:
            raise ShapeError(
                f"lead field has {k.shape[1]} columns but mesh has {mesh.n_vertices} vertices"
            )
        source_positions = mesh.vertices
    return ForwardModel(
        K=k,
        sensor_positions=positions,
        source_positions=source_positions,
        sensor_names=tuple(names),
    )


def analytic_leadfield(mesh, sensors, conductivity=DEFAULT_CONDUCTIVITY_S_PER_MM) -> ForwardModel:
    """Fixed-normal dipole lead field in an infinite homogeneous medium.

    ``sensors`` is an (M, 3) array of positions strictly outside the mesh
    bounding sphere; ``conductivity`` is in S/mm and only scales K.
    """
    sensors = as_matrix(sensors, name="sensors")
    if sensors.shape[1] != 3:
        raise ShapeError("sensors: expected (M, 3) positions")
    if conductivity <= 0:
        raise GeometryError("conductivity must be positive")
    center = mesh.centroid()
    radius = mesh.bounding_radius()
    dist_to_center = np.linalg.norm(sensors - center, axis=1)
    if np.any(dist_to_center <= radius):
        worst = int(np.argmin(dist_to_center))
        raise GeometryError(
            f"sensor {worst} lies inside the mesh bounding sphere "
            f"({dist_to_center[worst]:.3f} <= {radius:.3f} mm)"
        )
    normals = mesh.vertex_normals
    diff = sensors[:, None, :] - mesh.vertices[None, :, :]  # (M, N, 3)
    dist = np.linalg.norm(diff, axis=2)
    if np.any(dist < 1e-6):
        raise GeometryError("a sensor coincides with a source position")
    k = np.einsum("mnc,nc->mn", diff, normals) / (4.0 * np.pi * conductivity * dist**3)
    return ForwardModel(K=k, sensor_positions=sensors, source_positions=mesh.vertices)


def project(fm: ForwardModel, x) -> np.ndarray:
    """Noiseless forward projection ``K @ x``; accepts SourceEstimate or array."""
    values = getattr(x, "values", x)
    values = as_vector(values, name="source amplitudes", length=fm.n_sources)
    return fm.K @ values


def fibonacci_sensors(count, radius, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Near-uniform sensor layout on a sphere (golden-angle spiral)."""
    if count < 1:
        raise ShapeError("sensor count must be >= 1")
    i = np.arange(count, dtype=np.float64)
    golden = np.pi * (3.0 - np.sqrt(5.0))
    z = 1.0 - 2.0 * (i + 0.5) / count
    r = np.sqrt(1.0 - z * z)
    theta = golden * i
    pts = np.column_stack([r * np.cos(theta), r * np.sin(theta), z])
    return pts * radius + np.asarray(center, dtype=np.float64)
