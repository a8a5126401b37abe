"""Reconstruction quality metrics.

Four complementary measures, all invariant under positive rescaling of
either map:

* shape error - total-variation distance between the L1-normalized
  absolute maps, in [0, 1];
* correlation - Pearson coefficient between the raw maps (averaging over
  trials is the harness's job);
* localization error - geodesic distance between the absolute-amplitude
  peaks, mm;
* source divergence - mean geodesic distance from each estimated active
  vertex to the nearest truly active vertex, with activity thresholded at
  a fraction of each map's absolute maximum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError
from .mesh import geodesic_distances, nearest_set_distances
from .validation import as_vector

DEFAULT_THRESHOLD_FRAC = 0.5


@dataclass(frozen=True)
class EvaluationReport:
    se: float
    mcc: float
    le_mm: float
    sd_mm: float
    threshold_frac: float


def _paired(est, truth):
    est_v = as_vector(getattr(est, "values", est), name="estimate")
    truth_v = as_vector(getattr(truth, "values", truth), name="truth", length=est_v.shape[0])
    if not np.any(est_v != 0.0):
        raise DegenerateError("estimate map is all zero")
    if not np.any(truth_v != 0.0):
        raise DegenerateError("truth map is all zero")
    return est_v, truth_v


def shape_error(est, truth) -> float:
    """Total-variation distance of the L1-normalized absolute maps."""
    est_v, truth_v = _paired(est, truth)
    p = np.abs(est_v)
    q = np.abs(truth_v)
    return float(0.5 * np.sum(np.abs(p / p.sum() - q / q.sum())))


def mean_corr(est, truth) -> float:
    """Pearson correlation over vertices."""
    est_v, truth_v = _paired(est, truth)
    ec = est_v - est_v.mean()
    tc = truth_v - truth_v.mean()
    denom = np.linalg.norm(ec) * np.linalg.norm(tc)
    if denom == 0.0:
        raise DegenerateError("a map has zero variance; correlation undefined")
    return float(np.dot(ec, tc) / denom)


def localization_error(est, truth, mesh) -> float:
    """Geodesic distance between absolute peaks (ties: lowest index)."""
    est_v, truth_v = _paired(est, truth)
    peak_est = int(np.argmax(np.abs(est_v)))
    peak_truth = int(np.argmax(np.abs(truth_v)))
    if peak_est == peak_truth:
        return 0.0
    return float(geodesic_distances(mesh, peak_truth)[peak_est])


def source_divergence(est, truth, mesh, threshold_frac=DEFAULT_THRESHOLD_FRAC) -> float:
    """Mean distance from estimated active vertices to the truth active set.

    Active means |value| >= threshold_frac * max|value| for each map
    separately; the result is 0 when the estimated set sits inside the
    true one.
    """
    if not 0 < threshold_frac <= 1:
        raise DegenerateError("threshold_frac must be in (0, 1]")
    est_v, truth_v = _paired(est, truth)
    est_active = np.flatnonzero(np.abs(est_v) >= threshold_frac * np.abs(est_v).max())
    truth_active = np.flatnonzero(np.abs(truth_v) >= threshold_frac * np.abs(truth_v).max())
    dist = nearest_set_distances(mesh, truth_active)
    return float(np.mean(dist[est_active]))


def evaluate(est, truth, mesh, threshold_frac=DEFAULT_THRESHOLD_FRAC) -> EvaluationReport:
    """All four metrics in one pass."""
    return EvaluationReport(
        se=shape_error(est, truth),
        mcc=mean_corr(est, truth),
        le_mm=localization_error(est, truth, mesh),
        sd_mm=source_divergence(est, truth, mesh, threshold_frac=threshold_frac),
        threshold_frac=float(threshold_frac),
    )
