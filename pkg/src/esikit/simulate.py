"""Synthetic trial generation: sources, noise, SNR-exact mixing.

A trial is a pure function of (forward model, source, noise spec): the
spec's 64-bit seed determines every random draw, and the noise is
rescaled so the achieved SNR matches the requested one to floating-point
accuracy. Power is the mean squared amplitude across sensors at the
single simulated time instant.

Noise comes in two kinds: ``gaussian-iid`` (independent standard normal
per channel) and ``realistic-covariance`` (samples shaped by the
eigendecomposition of a normalized covariance matrix). Because mixing
rescales the noise to the target power anyway, covariance normalization
only affects the correlation structure, never the final noise power.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateError, LinAlgError, ShapeError
from .forward import project
from .io import load_matrix, load_vector, read_manifest, save_matrix, save_vector, write_manifest
from .mesh import geodesic_distances
from .validation import as_vector, check_index, check_symmetric

NOISE_KINDS = ("gaussian-iid", "realistic-covariance")
NORMALIZATIONS = ("correlation", "trace-one", "none")
DEFAULT_KERNEL_SCALE_MM = 40.0


@dataclass(frozen=True)
class SourceEstimate:
    """Per-vertex source amplitudes with provenance.

    ``provenance`` records where the map came from: ``"patch-synthetic"``,
    ``"file-import"``, or ``"solver:<method>"``.
    """

    values: np.ndarray
    provenance: str = "patch-synthetic"

    def __post_init__(self):
        vals = as_vector(self.values, name="source values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_sources(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class NoiseSpec:
    """Noise recipe for one trial; ``seed`` fixes all randomness."""

    kind: str
    snr_db: float
    seed: int
    covariance: np.ndarray | None = None
    normalization: str = "correlation"

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ShapeError(f"unknown noise kind {self.kind!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ShapeError(f"unknown normalization {self.normalization!r}")
        if not np.isfinite(self.snr_db):
            raise ShapeError("snr_db must be finite")
        if self.kind == "realistic-covariance" and self.covariance is None:
            raise ShapeError("realistic-covariance noise requires a covariance matrix")


@dataclass(frozen=True)
class TrialRecord:
    """One synthetic trial: ground truth, clean and noisy sensor data."""

    true_source: SourceEstimate
    clean_sensors: np.ndarray
    noisy_sensors: np.ndarray
    noise_spec: NoiseSpec
    achieved_snr_db: float


def patch_source(mesh, center_vertex, fwhm_mm, amplitude=1.0) -> SourceEstimate:
    """Geodesic Gaussian patch: amplitude * exp(-4 ln2 d^2 / fwhm^2).

    The value is ``amplitude`` at the center and half of it at geodesic
    distance fwhm/2; vertices unreachable from the center get zero.
    """
    if fwhm_mm <= 0:
        raise ShapeError("fwhm_mm must be positive")
    center_vertex = check_index(center_vertex, mesh.n_vertices, name="center_vertex")
    d = geodesic_distances(mesh, center_vertex)
    values = np.zeros(mesh.n_vertices)
    reachable = np.isfinite(d)
    values[reachable] = amplitude * np.exp(
        -4.0 * np.log(2.0) * d[reachable] ** 2 / fwhm_mm**2
    )
    return SourceEstimate(values=values, provenance="patch-synthetic")


def import_source_map(path, mesh) -> SourceEstimate:
    """Read a per-vertex VEC map produced elsewhere; no rescaling."""
    values = load_vector(path)
    if values.shape[0] != mesh.n_vertices:
        raise ShapeError(
            f"{path}: {values.shape[0]} values for {mesh.n_vertices} vertices"
        )
    return SourceEstimate(values=values, provenance="file-import")


def export_source_map(path, source: SourceEstimate):
    return save_vector(path, source.values)


def gaussian_noise(m, seed, n_samples=None):
    """Standard normal channel noise, deterministic for a fixed seed.

    Returns shape (m,) or (m, n_samples)."""
    if m < 1:
        raise ShapeError("sensor count must be >= 1")
    rng = np.random.default_rng(seed)
    if n_samples is None:
        return rng.standard_normal(m)
    return rng.standard_normal((m, n_samples))


def normalize_covariance(cov, normalization="correlation"):
    """Apply the configured covariance normalization."""
    cov = check_symmetric(cov, name="covariance")
    if normalization == "correlation":
        d = np.sqrt(np.diag(cov))
        if np.any(d <= 0):
            raise LinAlgError("covariance has a non-positive diagonal entry")
        return cov / np.outer(d, d)
    if normalization == "trace-one":
        tr = np.trace(cov)
        if tr <= 0:
            raise LinAlgError("covariance has non-positive trace")
        return cov / tr
    if normalization == "none":
        return cov
    raise ShapeError(f"unknown normalization {normalization!r}")


def realistic_noise(cov, seed, n_samples=None, normalization="correlation"):
    """Covariance-shaped noise from the spectral factor of the normalized
    covariance: samples are E @ (sqrt(V) * R) with R standard normal, so
    their covariance equals the normalized input in expectation.

    Eigenvalues below -1e-10 * trace raise LinAlgError; small negative
    roundoff is clipped to zero.
    """
    norm_cov = normalize_covariance(cov, normalization)
    vals, vecs = np.linalg.eigh(norm_cov)
    floor = -1e-10 * max(np.trace(norm_cov), 1.0)
    if vals[0] < floor:
        raise LinAlgError(f"covariance not PSD (eigenvalue {vals[0]:.3e})")
    vals = np.maximum(vals, 0.0)
    m = vals.shape[0]
    r = gaussian_noise(m, seed, n_samples=None if n_samples is None else n_samples)
    if n_samples is None:
        return vecs @ (np.sqrt(vals) * r)
    return vecs @ (np.sqrt(vals)[:, None] * r)


def structured_covariance(sensor_positions, scale_mm=DEFAULT_KERNEL_SCALE_MM):
    """Synthetic spatially correlated covariance over sensor positions:
    C[i, j] = exp(-|s_i - s_j|^2 / (2 scale^2)). SPD up to roundoff."""
    pos = np.asarray(sensor_positions, dtype=np.float64)
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise ShapeError("sensor_positions: expected (M, 3)")
    if scale_mm <= 0:
        raise ShapeError("scale_mm must be positive")
    sq = np.sum((pos[:, None, :] - pos[None, :, :]) ** 2, axis=2)
    return np.exp(-sq / (2.0 * scale_mm**2))


def mix_at_snr(clean, noise, snr_db):
    """Rescale ``noise`` so the mixture hits ``snr_db`` exactly.

    Returns (clean + alpha * noise, achieved_snr_db); power is the mean
    squared amplitude over sensors.
    """
    clean = as_vector(clean, name="clean signal")
    noise = as_vector(noise, name="noise", length=clean.shape[0])
    p_clean = float(np.mean(clean**2))
    p_noise = float(np.mean(noise**2))
    if p_clean == 0.0:
        raise DegenerateError("clean signal is identically zero")
    if p_noise == 0.0:
        raise DegenerateError("noise is identically zero")
    alpha = np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    noisy = clean + alpha * noise
    achieved = 10.0 * np.log10(p_clean / (alpha**2 * p_noise))
    return noisy, float(achieved)


def make_trial(fm, source: SourceEstimate, spec: NoiseSpec) -> TrialRecord:
    """Forward-project a source and mix in seeded noise at the spec's SNR."""
    clean = project(fm, source)
    if spec.kind == "gaussian-iid":
        noise = gaussian_noise(fm.n_sensors, spec.seed)
    else:
        noise = realistic_noise(
            spec.covariance, spec.seed, normalization=spec.normalization
        )
        if noise.shape[0] != fm.n_sensors:
            raise ShapeError(
                f"covariance is {noise.shape[0]}x{noise.shape[0]} but forward model "
                f"has {fm.n_sensors} sensors"
            )
    noisy, achieved = mix_at_snr(clean, noise, spec.snr_db)
    return TrialRecord(
        true_source=source,
        clean_sensors=clean,
        noisy_sensors=noisy,
        noise_spec=spec,
        achieved_snr_db=achieved,
    )


def save_trial(directory, trial: TrialRecord):
    """Write a trial archive: VEC files plus a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_vector(directory / "true_source.vec", trial.true_source.values)
    save_vector(directory / "clean_sensors.vec", trial.clean_sensors)
    save_vector(directory / "noisy_sensors.vec", trial.noisy_sensors)
    if trial.noise_spec.covariance is not None:
        save_matrix(directory / "noise_covariance.mat", trial.noise_spec.covariance)
    write_manifest(
        directory / "manifest.txt",
        {
            "kind": trial.noise_spec.kind,
            "snr_db": repr(trial.noise_spec.snr_db),
            "achieved_snr_db": repr(trial.achieved_snr_db),
            "seed": trial.noise_spec.seed,
            "normalization": trial.noise_spec.normalization,
            "source_provenance": trial.true_source.provenance,
        },
    )
    return directory


def load_trial(directory) -> TrialRecord:
    directory = Path(directory)
    manifest = read_manifest(directory / "manifest.txt")
    cov_path = directory / "noise_covariance.mat"
    spec = NoiseSpec(
        kind=manifest["kind"],
        snr_db=float(manifest["snr_db"]),
        seed=int(manifest["seed"]),
        covariance=load_matrix(cov_path) if cov_path.exists() else None,
        normalization=manifest.get("normalization", "correlation"),
    )
    return TrialRecord(
        true_source=SourceEstimate(
            values=load_vector(directory / "true_source.vec"),
            provenance=manifest.get("source_provenance", "file-import"),
        ),
        clean_sensors=load_vector(directory / "clean_sensors.vec"),
        noisy_sensors=load_vector(directory / "noisy_sensors.vec"),
        noise_spec=spec,
        achieved_snr_db=float(manifest["achieved_snr_db"]),
    )
