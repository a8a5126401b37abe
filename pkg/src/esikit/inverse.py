"""Inverse solvers: basis-coefficient MAP estimation plus classical baselines.

Solvers follow the scikit-learn estimator protocol: hyperparameters in
``__init__`` (``get_params``/``set_params``/``clone`` work), ``fit``
binds a forward model and precomputes a spectral factorization, and
``predict`` maps a sensor vector to source amplitudes. ``solve`` returns
the full :class:`InverseSolution` record and is pure: a fitted solver can
serve many concurrent solves.

The basis-coefficient estimator solves

    theta = (L' L + beta * inv(Sigma))^-1 L' y,      L = K A

for a basis A with diagonal coefficient prior Sigma, then maps back as
x = A theta. Sigma comes from the basis weights via
``1 / (w + epsilon_frac * mean(w))``, so heavily weighted (high spatial
frequency) columns are shrunk hardest. Working in the S-dimensional
coefficient space is the computational point of the method: S is a few
hundred where N is tens of thousands.

``beta`` may be a positive float or ``"auto"``, which picks the value
whose residual power matches a known noise power (discrepancy principle,
bisection on log beta over [1e-8, 1e8] * scale with
scale = trace(L'L) / S).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from threadpoolctl import threadpool_limits

from .basis import BasisSet
from .errors import ConvergenceError, DegenerateError, LinAlgError, ShapeError
from .simulate import SourceEstimate
from .validation import as_matrix, as_vector, check_spd_eigh

MAX_CONDITION = 1e14
BETA_BRACKET = (1e-8, 1e8)
DISCREPANCY_REL_TOL = 0.01
_BISECT_MAX_ITER = 200


@dataclass(frozen=True)
class PriorSpec:
    """Diagonal Gaussian prior on basis coefficients.

    ``sigma_diag[i] = 1 / (weights[i] + epsilon_frac * lambda_bar)`` with
    ``lambda_bar`` the mean weight; the ``epsilon_frac`` floor keeps the
    variance finite for zero-weight (constant) columns.
    """

    sigma_diag: np.ndarray
    epsilon_frac: float
    lambda_bar: float

    def __post_init__(self):
        sd = as_vector(self.sigma_diag, name="sigma_diag")
        if np.any(sd <= 0):
            raise DegenerateError("prior variances must be strictly positive")
        sd.setflags(write=False)
        object.__setattr__(self, "sigma_diag", sd)

    @property
    def n_functions(self) -> int:
        return self.sigma_diag.shape[0]


def build_prior(weights, epsilon_frac=0.1) -> PriorSpec:
    """Map basis weights to prior variances; accepts a BasisSet or array."""
    if isinstance(weights, BasisSet):
        weights = weights.weights
    w = as_vector(weights, name="weights")
    if np.any(w < 0):
        raise ShapeError("weights must be non-negative")
    lambda_bar = float(np.mean(w))
    denom = w + epsilon_frac * lambda_bar
    if np.any(denom <= 0):
        raise DegenerateError(
            "all weights are zero and epsilon_frac gives no floor; prior undefined"
        )
    return PriorSpec(
        sigma_diag=1.0 / denom, epsilon_frac=float(epsilon_frac), lambda_bar=lambda_bar
    )


@dataclass(frozen=True)
class InverseSolution:
    """Result of one solve: source map plus solver bookkeeping."""

    method: str
    source: SourceEstimate
    beta_used: float
    residual_norm: float
    coefficients: np.ndarray | None = None
    beta_at_boundary: bool = False

    @property
    def values(self) -> np.ndarray:
        return self.source.values


def _bisect_discrepancy(resid_sq, target_sq, scale):
    """Smallest-bracket bisection of the monotone residual-power curve.

    Returns (beta, at_boundary). When the target is unreachable inside the
    bracket the nearest boundary is returned and a warning is emitted.
    """
    lo = BETA_BRACKET[0] * scale
    hi = BETA_BRACKET[1] * scale

    def close(r2):
        return abs(r2 - target_sq) <= DISCREPANCY_REL_TOL * target_sq

    r_lo = resid_sq(lo)
    if close(r_lo):
        return lo, False
    if r_lo > target_sq:
        warnings.warn(
            "discrepancy target below the residual floor; returning the lower "
            "beta boundary",
            stacklevel=3,
        )
        return lo, True
    r_hi = resid_sq(hi)
    if close(r_hi):
        return hi, False
    if r_hi < target_sq:
        warnings.warn(
            "discrepancy target above the reachable residual; returning the upper "
            "beta boundary",
            stacklevel=3,
        )
        return hi, True
    log_lo, log_hi = np.log(lo), np.log(hi)
    for _ in range(_BISECT_MAX_ITER):
        mid = np.exp(0.5 * (log_lo + log_hi))
        r_mid = resid_sq(mid)
        if close(r_mid):
            return float(mid), False
        if r_mid < target_sq:
            log_lo = np.log(mid)
        else:
            log_hi = np.log(mid)
    return float(np.exp(0.5 * (log_lo + log_hi))), False


class BaseInverseSolver(BaseEstimator):
    """Shared fit/predict plumbing for all source-imaging solvers."""

    def _require_fitted(self):
        if not hasattr(self, "K_"):
            raise NotFittedError(
                f"{type(self).__name__} must be fitted with a forward model first"
            )

    def _extract_leadfield(self, forward):
        k = getattr(forward, "K", forward)
        return as_matrix(k, name="lead field")

    def _validate_beta(self):
        beta = self.beta
        if beta == "auto":
            return
        if not (np.isscalar(beta) and float(beta) > 0):
            raise ShapeError("beta must be a positive float or 'auto'")

    def _noise_chol_inv_sqrt(self, m):
        """C^-1/2 for the configured noise covariance (identity if absent)."""
        if self.noise_cov is None:
            return None
        vals, vecs = check_spd_eigh(self.noise_cov, name="noise_cov")
        if vals.shape[0] != m:
            raise ShapeError(
                f"noise_cov is {vals.shape[0]}x{vals.shape[0]} for {m} sensors"
            )
        return (vecs / np.sqrt(vals)) @ vecs.T

    def _resolve_beta(self, resid_sq, noise_power):
        if self.beta == "auto":
            if noise_power is None:
                raise ValueError(
                    "beta='auto' requires noise_power (per-sensor mean square)"
                )
            if noise_power <= 0:
                raise DegenerateError("noise_power must be positive")
            target = self.M_ * float(noise_power)
            return _bisect_discrepancy(resid_sq, target, self.gram_scale_)
        return float(self.beta), False

    def select_beta(self, y, noise_power):
        """Discrepancy-principle beta for this solver and data; pure."""
        self._require_fitted()
        y = as_vector(y, name="sensor data", length=self.M_)
        if noise_power is None or noise_power <= 0:
            raise DegenerateError("noise_power must be positive")
        beta, _ = _bisect_discrepancy(
            self._residual_sq_curve(y), self.M_ * float(noise_power), self.gram_scale_
        )
        return beta

    def predict(self, y, noise_power=None):
        """Source amplitudes for one sensor vector; see :meth:`solve`."""
        return self.solve(y, noise_power=noise_power).values

    # subclasses: fit(forward), solve(y, noise_power), _residual_sq_curve(y)


class BasisMAP(BaseInverseSolver):
    """MAP estimate of basis coefficients under an eigen-weighted prior.

    Parameters
    ----------
    basis : BasisSet or (N, S) array
        Spatial basis. Arrays get a uniform-weight prior unless ``prior``
        is given; the method tag then is ``"Basis-MAP"``.
    beta : positive float or "auto"
        Regularization weight; "auto" applies the discrepancy principle
        and needs ``noise_power`` at solve time.
    epsilon_frac : float
        Stabilizing fraction of the mean weight in the prior.
    prior : PriorSpec or length-S array, optional
        Overrides the weight-derived prior (array = variances directly).
    noise_cov : (M, M) array, optional
        Sensor noise covariance; used only when ``prewhiten`` is set.
    prewhiten : bool
        Apply C^-1/2 to both the data and the projected basis before
        solving.
    """

    def __init__(self, basis=None, beta="auto", epsilon_frac=0.1, prior=None,
                 noise_cov=None, prewhiten=False):
        self.basis = basis
        self.beta = beta
        self.epsilon_frac = epsilon_frac
        self.prior = prior
        self.noise_cov = noise_cov
        self.prewhiten = prewhiten

    @property
    def method_(self) -> str:
        family = getattr(self.basis, "family", "custom")
        return {"GBF": "GBF-MAP", "Harmonic": "Harmonic-MAP", "MSP": "MSP-MAP"}.get(
            family, "Basis-MAP"
        )

    def fit(self, forward, y=None):
        self._validate_beta()
        if self.basis is None:
            raise ShapeError("BasisMAP requires a basis")
        k = self._extract_leadfield(forward)
        a = np.asarray(getattr(self.basis, "A", self.basis), dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != k.shape[1]:
            raise ShapeError(
                f"basis is {a.shape} but lead field has {k.shape[1]} sources"
            )
        if self.prior is None:
            weights = getattr(self.basis, "weights", None)
            if weights is None:
                weights = np.ones(a.shape[1])
            prior = build_prior(weights, epsilon_frac=self.epsilon_frac)
        elif isinstance(self.prior, PriorSpec):
            prior = self.prior
        else:
            prior = PriorSpec(
                sigma_diag=self.prior, epsilon_frac=self.epsilon_frac, lambda_bar=np.nan
            )
        if prior.n_functions != a.shape[1]:
            raise ShapeError(
                f"prior has {prior.n_functions} variances for {a.shape[1]} basis columns"
            )

        ell = k @ a
        whitener = self._noise_chol_inv_sqrt(k.shape[0]) if self.prewhiten else None
        if whitener is not None:
            ell = whitener @ ell
        sqrt_sigma = np.sqrt(prior.sigma_diag)
        scaled = ell * sqrt_sigma[None, :]
        gram = scaled.T @ scaled
        d, q = np.linalg.eigh(0.5 * (gram + gram.T))
        self.K_ = k
        self.A_ = a
        self.prior_ = prior
        self.M_, self.S_ = ell.shape
        self.L_ = ell
        self.whitener_ = whitener
        self._sqrt_sigma = sqrt_sigma
        self._d = np.maximum(d, 0.0)
        self._q = q
        self.gram_scale_ = float(np.einsum("ms,ms->", ell, ell)) / self.S_
        return self

    def _projections(self, y):
        y = as_vector(y, name="sensor data", length=self.M_)
        y_used = self.whitener_ @ y if self.whitener_ is not None else y
        b = self.L_.T @ y_used
        z = self._q.T @ (self._sqrt_sigma * b)
        return y_used, z

    def _residual_sq_curve(self, y):
        y_used, z = self._projections(y)
        y_sq = float(y_used @ y_used)
        d = self._d

        def resid_sq(beta):
            return y_sq - float(np.sum(z * z * (d + 2.0 * beta) / (d + beta) ** 2))

        return resid_sq

    def solve(self, y, noise_power=None) -> InverseSolution:
        """Solve for one sensor vector; pure given the fitted state."""
        self._require_fitted()
        y_used, z = self._projections(y)
        beta, at_boundary = self._resolve_beta(self._residual_sq_curve(y), noise_power)
        d = self._d
        cond = (d[-1] + beta) / (d[0] + beta)
        if cond > MAX_CONDITION:
            raise LinAlgError(
                f"regularized system numerically singular (condition {cond:.3e})"
            )
        theta = self._sqrt_sigma * (self._q @ (z / (d + beta)))
        values = self.A_ @ theta
        residual = float(np.linalg.norm(y_used - self.L_ @ theta))
        return InverseSolution(
            method=self.method_,
            source=SourceEstimate(values=values, provenance=f"solver:{self.method_}"),
            beta_used=beta,
            residual_norm=residual,
            coefficients=theta,
            beta_at_boundary=at_boundary,
        )


class _SensorSpaceSolver(BaseInverseSolver):
    """Shared spectral machinery for the minimum-norm family.

    Fitting eigendecomposes the (noise-whitened) sensor Gram K K', after
    which any beta costs O(M^2): the kernel is
    W = K' (K K' + beta C)^-1 applied through the cached factors.
    """

    method_ = "MNE"

    def __init__(self, beta="auto", noise_cov=None):
        self.beta = beta
        self.noise_cov = noise_cov

    def fit(self, forward, y=None):
        self._validate_beta()
        k = self._extract_leadfield(forward)
        m = k.shape[0]
        whitener = self._noise_chol_inv_sqrt(m)
        k_w = k if whitener is None else whitener @ k
        gram = k_w @ k_w.T
        d, u = np.linalg.eigh(0.5 * (gram + gram.T))
        self.K_ = k
        self.M_, self.N_ = k.shape
        self._whitener = whitener
        self._d = np.maximum(d, 0.0)
        self._u = u
        # B[i, m] = (K' C^-1/2 U)[i, m]; rows of the kernel in the eigenbasis
        self._b = (k_w.T @ u) if whitener is None else (k.T @ whitener @ u)
        if self.noise_cov is None:
            self._h = None  # identity
        else:
            self._h = u.T @ as_matrix(self.noise_cov) @ u
        self.gram_scale_ = float(np.mean(self._d))
        return self

    def _whitened(self, y):
        y = as_vector(y, name="sensor data", length=self.M_)
        y_w = y if self._whitener is None else self._whitener @ y
        return y, self._u.T @ y_w

    def _residual_sq_curve(self, y):
        _, y_t = self._whitened(y)
        d, h = self._d, self._h

        def resid_sq(beta):
            v = y_t / (d + beta)
            if h is None:
                return float(beta**2 * np.sum(v * v))
            return float(beta**2 * (v @ h @ v))

        return resid_sq

    def _check_condition(self, beta):
        cond = (self._d[-1] + beta) / (self._d[0] + beta)
        if cond > MAX_CONDITION:
            raise LinAlgError(
                f"regularized sensor Gram numerically singular (condition {cond:.3e})"
            )

    def _mne_values(self, y_t, beta):
        return self._b @ (y_t / (self._d + beta))

    def _normalize(self, values, beta):
        """Subclass hook: per-vertex rescaling of the minimum-norm map."""
        return values

    def solve(self, y, noise_power=None) -> InverseSolution:
        self._require_fitted()
        y_raw, y_t = self._whitened(y)
        beta, at_boundary = self._resolve_beta(self._residual_sq_curve(y), noise_power)
        self._check_condition(beta)
        mne = self._mne_values(y_t, beta)
        values = self._normalize(mne, beta)
        residual = float(np.linalg.norm(y_raw - self.K_ @ mne))
        return InverseSolution(
            method=self.method_,
            source=SourceEstimate(values=values, provenance=f"solver:{self.method_}"),
            beta_used=beta,
            residual_norm=residual,
            coefficients=None,
            beta_at_boundary=at_boundary,
        )


class MinimumNorm(_SensorSpaceSolver):
    """Classical L2 minimum-norm estimate x = K'(K K' + beta C)^-1 y."""


class DSPM(_SensorSpaceSolver):
    """Noise-normalized minimum norm: each vertex of the MNE map is divided
    by its projected noise standard deviation sqrt(diag(W C W'))."""

    method_ = "dSPM"

    def _normalize(self, values, beta):
        scale = (self._d + beta) ** 2
        if self._h is None:
            var = np.sum(self._b**2 / scale[None, :], axis=1)
        else:
            t = self._b / scale[None, :]
            var = np.einsum("im,mn,in->i", t, self._h, self._b)
        if np.any(var <= 1e-300):
            raise DegenerateError(
                "dSPM normalization degenerate: a source row projects to zero noise"
            )
        return values / np.sqrt(var)


class SLORETA(_SensorSpaceSolver):
    """Resolution-normalized minimum norm: the MNE map divided by
    sqrt(diag(W K)), which gives exact peak localization for noiseless
    single dipoles."""

    method_ = "sLORETA"

    def _normalize(self, values, beta):
        diag_r = np.sum(self._b**2 / (self._d + beta)[None, :], axis=1)
        if np.any(diag_r <= 0):
            raise DegenerateError(
                "sLORETA normalization degenerate: resolution diagonal not positive"
            )
        return values / np.sqrt(diag_r)


class ELORETA(BaseInverseSolver):
    """Iterative exact low-resolution tomography with scalar source weights.

    The weight fixed point ``w_i = sqrt(k_i' (K W^-1 K' + beta C)^-1 k_i)``
    runs to ``tol`` relative change (ConvergenceError past ``max_iter``),
    then the weighted minimum-norm kernel produces the estimate.
    """

    method_ = "eLORETA"

    def __init__(self, beta="auto", noise_cov=None, tol=1e-8, max_iter=100):
        self.beta = beta
        self.noise_cov = noise_cov
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, forward, y=None):
        self._validate_beta()
        if self.tol <= 0:
            raise ShapeError("tol must be positive")
        k = self._extract_leadfield(forward)
        self.K_ = k
        self.M_, self.N_ = k.shape
        self.C_ = np.eye(self.M_) if self.noise_cov is None else as_matrix(
            self.noise_cov, name="noise_cov", shape=(self.M_, self.M_)
        )
        whitener = self._noise_chol_inv_sqrt(self.M_)
        k_w = k if whitener is None else whitener @ k
        self.gram_scale_ = float(np.einsum("mn,mn->", k_w, k_w)) / self.M_
        return self

    def weights_fixed_point(self, beta, start=None, tol=None):
        """Run the weight iteration; returns (weights, n_iter, last_change)."""
        self._require_fitted()
        tol = self.tol if tol is None else tol
        k, c = self.K_, self.C_
        omega = np.ones(self.N_) if start is None else np.asarray(start, float).copy()
        last_change = np.inf
        # single-threaded BLAS: the loop is many small calls where thread
        # handoff costs more than the arithmetic
        with threadpool_limits(limits=1):
            for it in range(1, int(self.max_iter) + 1):
                gram = (k / omega[None, :]) @ k.T + beta * c
                try:
                    factor = cho_factor(gram)
                except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
                    raise LinAlgError(f"weighted sensor Gram not SPD: {exc}") from exc
                x = cho_solve(factor, k)
                quad = np.einsum("mi,mi->i", k, x)
                if np.any(quad <= 0):
                    raise LinAlgError(
                        "a source column has non-positive projected power; cannot "
                        "take the weight square root"
                    )
                new = np.sqrt(quad)
                last_change = float(np.max(np.abs(new - omega) / omega))
                omega = new
                if last_change < tol:
                    return omega, it, last_change
        raise ConvergenceError(
            f"weight fixed point not converged in {self.max_iter} iterations",
            residual=last_change,
        )

    def _kernel_apply(self, omega, beta, y):
        gram = (self.K_ / omega[None, :]) @ self.K_.T + beta * self.C_
        factor = cho_factor(gram)
        ty = cho_solve(factor, y)
        return (self.K_.T @ ty) / omega, ty

    def _make_residual_curve(self, y, state, tol=None):
        y = as_vector(y, name="sensor data", length=self.M_)

        def resid_sq(beta):
            omega, _, _ = self.weights_fixed_point(beta, start=state["omega"], tol=tol)
            state["omega"] = omega  # warm start across bisection steps
            _, ty = self._kernel_apply(omega, beta, y)
            r = beta * (self.C_ @ ty)
            return float(r @ r)

        return resid_sq

    def _residual_sq_curve(self, y):
        return self._make_residual_curve(y, {"omega": None})

    def solve(self, y, noise_power=None) -> InverseSolution:
        self._require_fitted()
        y = as_vector(y, name="sensor data", length=self.M_)
        # bisection runs the fixed point at a loosened tolerance; the final
        # beta gets a full-tolerance, warm-started pass
        state = {"omega": None}
        curve = self._make_residual_curve(y, state, tol=max(self.tol, 1e-5))
        beta, at_boundary = self._resolve_beta(curve, noise_power)
        omega, _, _ = self.weights_fixed_point(beta, start=state["omega"])
        values, ty = self._kernel_apply(omega, beta, y)
        residual = float(np.linalg.norm(y - self.K_ @ values))
        return InverseSolution(
            method=self.method_,
            source=SourceEstimate(values=values, provenance=f"solver:{self.method_}"),
            beta_used=beta,
            residual_norm=residual,
            coefficients=None,
            beta_at_boundary=at_boundary,
        )


METHOD_CHOICES = ("GBF-MAP", "Harmonic-MAP", "MSP-MAP", "MNE", "dSPM", "sLORETA", "eLORETA")


def make_solver(method, basis=None, beta="auto", noise_cov=None, epsilon_frac=0.1,
                prewhiten=False, tol=1e-8, max_iter=100):
    """Construct the solver for a canonical method name (case-insensitive)."""
    canon = {name.lower(): name for name in METHOD_CHOICES}.get(str(method).lower())
    if canon is None:
        raise ShapeError(
            f"unknown method {method!r}; valid methods: {', '.join(METHOD_CHOICES)}"
        )
    if canon.endswith("-MAP"):
        if basis is None:
            raise ShapeError(f"{canon} requires a basis")
        want_family = canon[: -len("-MAP")]
        family = getattr(basis, "family", None)
        if family != want_family:
            raise ShapeError(f"{canon} needs a {want_family} basis, got {family!r}")
        return BasisMAP(basis=basis, beta=beta, epsilon_frac=epsilon_frac,
                        noise_cov=noise_cov, prewhiten=prewhiten)
    cls = {"MNE": MinimumNorm, "dSPM": DSPM, "sLORETA": SLORETA}.get(canon)
    if cls is not None:
        return cls(beta=beta, noise_cov=noise_cov)
    return ELORETA(beta=beta, noise_cov=noise_cov, tol=tol, max_iter=max_iter)
