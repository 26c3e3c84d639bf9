"""Gaussian approximation and empirical-Bayes inference for latent Gaussian problems.

A problem couples a proper (jittered) sparse prior precision with a
per-observation likelihood through a sparse loading matrix.  The posterior is
approximated by the Gaussian matched at the joint mode (Newton with step
halving); intrinsic-block constraints are enforced by a conditioning
correction after each solve.  Hyperparameters are selected by maximizing the
Laplace evidence over log precisions with a direct search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.special import gammaln

from .chol import CholeskyFactor, cholesky_matrix
from .errors import (
    DegenerateProblemError,
    InvalidInputError,
    NoConvergenceError,
    UnsupportedSizeError,
)
from .structures import PrecisionStructure

POISSON_LOG_LINK = "poisson_log_link"
GAUSSIAN_IDENTITY = "gaussian_identity"

MAX_NEWTON_ITERS = 100
MAX_HALVINGS = 30
GRADIENT_TOL = 1e-8
STEP_TOL = 1e-10  # stationarity at float resolution: |step| <= STEP_TOL * (1 + |x|)
MAX_MARGINAL_DIM = 5000
_ETA_CAP = 700.0  # exp() overflow guard on the linear predictor


@dataclass(frozen=True)
class LatentGaussianProblem:
    """Sparse Gaussian prior plus conditionally independent observations.

    ``design`` has one row per observation; row i holds the loadings of
    observation i's linear predictor on the latent vector, and ``offset[i]``
    is added on top.  Missing observations (NaN) contribute nothing to the
    likelihood but keep their row for prediction.
    """

    prior_precision: PrecisionStructure
    prior_mean: np.ndarray
    design: sp.csr_matrix
    offset: np.ndarray
    likelihood: str
    observations: np.ndarray
    noise_precision: float = 1.0
    prior_log_det: float | None = None
    prior_constraint_log_det: float | None = None

    def __post_init__(self):
        dim = self.prior_precision.dim
        a = sp.csr_matrix(self.design)
        if a.shape[1] != dim:
            raise InvalidInputError(f"design has {a.shape[1]} columns, latent dim is {dim}")
        y = np.asarray(self.observations, dtype=float)
        off = np.asarray(self.offset, dtype=float)
        if off.shape != y.shape or y.shape != (a.shape[0],):
            raise InvalidInputError("observations/offset length must match design rows")
        if self.likelihood not in (POISSON_LOG_LINK, GAUSSIAN_IDENTITY):
            raise InvalidInputError(f"unknown likelihood {self.likelihood!r}")
        if self.likelihood == GAUSSIAN_IDENTITY and self.noise_precision <= 0:
            raise InvalidInputError("gaussian likelihood needs a positive noise precision")
        object.__setattr__(self, "design", a)
        object.__setattr__(self, "observations", y)
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "prior_mean", np.asarray(self.prior_mean, dtype=float))

    @property
    def dim(self) -> int:
        return self.prior_precision.dim

    def observed_mask(self) -> np.ndarray:
        return np.isfinite(self.observations)


@dataclass(frozen=True)
class GaussianApprox:
    """Gaussian matched at the joint mode: mean, curvature factor, marginal sds."""

    mode: np.ndarray
    precision_factor: CholeskyFactor
    marginal_sds: np.ndarray
    _correction: tuple[np.ndarray, np.ndarray] | None = None


def _loglik_terms(likelihood: str, y: np.ndarray, eta: np.ndarray, noise_precision: float):
    """Per-observation log likelihood, first and second derivative in eta."""
    if likelihood == POISSON_LOG_LINK:
        eta = np.minimum(eta, _ETA_CAP)
        lam = np.exp(eta)
        ll = y * eta - lam - gammaln(y + 1.0)
        return ll, y - lam, -lam
    tau = noise_precision
    r = y - eta
    ll = -0.5 * tau * r * r + 0.5 * math.log(tau / (2.0 * math.pi))
    return ll, tau * r, np.full_like(eta, -tau)


def log_joint_and_gradient(problem: LatentGaussianProblem, x: np.ndarray):
    """Unnormalized log joint (quadratic prior part plus likelihood) and its gradient."""
    x = np.asarray(x, dtype=float)
    q = problem.prior_precision.entries
    dx = x - problem.prior_mean
    qdx = q @ dx
    mask = problem.observed_mask()
    a_obs = problem.design[mask]
    eta = a_obs @ x + problem.offset[mask]
    ll, d1, _ = _loglik_terms(problem.likelihood, problem.observations[mask], eta,
                              problem.noise_precision)
    value = -0.5 * float(dx @ qdx) + float(np.sum(ll))
    grad = -qdx + a_obs.T @ d1
    return value, grad


class _ConstraintOps:
    """Shared pieces for conditioning on Ax = 0 (rows of A dense, few)."""

    def __init__(self, constraints: np.ndarray):
        self.C = constraints
        self.k = constraints.shape[0]
        if self.k:
            gram = constraints @ constraints.T
            self._gram_inv = np.linalg.inv(gram)

    def orth_project(self, v: np.ndarray) -> np.ndarray:
        """Orthogonal projection of v onto the feasible subspace {Cx = 0}."""
        if not self.k:
            return v
        return v - self.C.T @ (self._gram_inv @ (self.C @ v))

    def kriging_pieces(self, factor: CholeskyFactor):
        """V = Q^{-1} C' and S = C V for the conditioning correction."""
        V = factor.solve(self.C.T)
        if V.ndim == 1:
            V = V[:, None]
        S = self.C @ V
        return V, S

    def krige_step(self, step: np.ndarray, V: np.ndarray, S: np.ndarray) -> np.ndarray:
        """Correct a Newton step so a feasible point stays feasible."""
        if not self.k:
            return step
        return step - V @ np.linalg.solve(S, self.C @ step)


def _newton_mode(problem: LatentGaussianProblem, x0: np.ndarray | None = None,
                 trace: list | None = None):
    """Find the joint mode; returns (mode, curvature factor, (V, S), log joint, n_iters).

    ``trace``, when given, collects the objective value after every accepted
    step (diagnostics and the monotone-improvement property test).
    """
    mask = problem.observed_mask()
    if not mask.any():
        raise DegenerateProblemError("all observations are missing")
    y = problem.observations[mask]
    a_obs = problem.design[mask].tocsr()
    off = problem.offset[mask]
    q = problem.prior_precision.entries.tocsr()
    m = problem.prior_mean
    cons = _ConstraintOps(problem.prior_precision.constraints)

    x = np.array(m if x0 is None else x0, dtype=float)
    x = cons.orth_project(x)

    def objective(xv: np.ndarray):
        dx = xv - m
        eta = a_obs @ xv + off
        ll, d1, d2 = _loglik_terms(problem.likelihood, y, eta, problem.noise_precision)
        value = -0.5 * float(dx @ (q @ dx)) + float(np.sum(ll))
        return value, dx, d1, d2

    f_x, dx, d1, d2 = objective(x)
    if trace is not None:
        trace.append(f_x)
    g0_norm = None
    last_vs = (None, None)
    grad_norm = math.inf
    stagnant = False
    for it in range(MAX_NEWTON_ITERS):
        grad = -(q @ dx) + a_obs.T @ d1
        w = -d2
        curvature = (q + (a_obs.T @ sp.diags(w) @ a_obs)).tocsc()
        factor = cholesky_matrix(curvature)
        V, S = (None, None)
        if cons.k:
            V, S = cons.kriging_pieces(factor)
        grad_norm = float(np.linalg.norm(cons.orth_project(grad)))
        if g0_norm is None:
            g0_norm = grad_norm
        last_vs = (V, S)
        if grad_norm <= GRADIENT_TOL * (1.0 + g0_norm) or stagnant:
            return x, factor, last_vs, f_x, it
        step = factor.solve(grad)
        if cons.k:
            step = cons.krige_step(step, V, S)
        # warm starts can put the gradient tolerance below the float64 noise
        # floor; a negligible Newton step means stationarity at resolution
        if np.linalg.norm(step) <= STEP_TOL * (1.0 + np.linalg.norm(x)):
            return x, factor, last_vs, f_x, it
        alpha = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            cand = x + alpha * step
            f_c, dx_c, d1_c, d2_c = objective(cand)
            if math.isfinite(f_c) and f_c >= f_x:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # ascent direction under a concave likelihood: failure to improve
            # means the objective is flat at float resolution
            return x, factor, last_vs, f_x, it
        # negligible accepted gain means the solve-precision floor for this
        # conditioning: take the step, rebuild the curvature there, and stop
        stagnant = (f_c - f_x) <= 1e-13 * (1.0 + abs(f_x))
        x, f_x, dx, d1, d2 = cand, f_c, dx_c, d1_c, d2_c
        if trace is not None:
            trace.append(f_x)
    raise NoConvergenceError(
        f"no convergence in {MAX_NEWTON_ITERS} Newton iterations", gradient_norm=grad_norm
    )


def _inverse_diagonal(factor: CholeskyFactor, correction, chunk: int = 512) -> np.ndarray:
    """Diagonal of the (constraint-corrected) inverse by batched unit solves."""
    n = factor.dim
    diag = np.empty(n)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        e = np.zeros((n, stop - start))
        e[np.arange(start, stop), np.arange(stop - start)] = 1.0
        xcols = factor.solve(e)
        diag[start:stop] = xcols[np.arange(start, stop), np.arange(stop - start)]
    if correction is not None:
        V, S = correction
        diag = diag - np.einsum("ij,ij->i", V @ np.linalg.inv(S), V)
    return diag


def gaussian_approximation(
    problem: LatentGaussianProblem,
    x0: np.ndarray | None = None,
    max_marginal_dim: int = MAX_MARGINAL_DIM,
) -> GaussianApprox:
    """Newton-based Gaussian approximation at the joint mode.

    Marginal standard deviations come from column-by-column solves against the
    curvature factor, corrected for any linear constraints; this dense sweep is
    guarded at desk scale.
    """
    if problem.dim > max_marginal_dim:
        raise UnsupportedSizeError(
            f"marginal sds need {problem.dim} solves; guard is {max_marginal_dim}"
        )
    mode, factor, (V, S), _, _ = _newton_mode(problem, x0=x0)
    correction = (V, S) if V is not None else None
    variances = _inverse_diagonal(factor, correction)
    sds = np.sqrt(np.maximum(variances, 0.0))
    return GaussianApprox(mode=mode, precision_factor=factor, marginal_sds=sds,
                          _correction=correction)


def predictor_variances(approx: GaussianApprox, design: sp.spmatrix, chunk: int = 1024) -> np.ndarray:
    """Posterior variance of each row of ``design @ x`` under the approximation."""
    a = sp.csr_matrix(design)
    factor = approx.precision_factor
    n_obs = a.shape[0]
    out = np.empty(n_obs)
    s_inv = None
    if approx._correction is not None:
        V, S = approx._correction
        s_inv = np.linalg.inv(S)
    for start in range(0, n_obs, chunk):
        stop = min(start + chunk, n_obs)
        block = a[start:stop]
        x = factor.solve(np.asarray(block.T.todense(), dtype=float))
        base = np.einsum("ij,ji->i", block.toarray(), x)
        if s_inv is not None:
            mvec = block @ V
            base = base - np.einsum("ij,ij->i", mvec @ s_inv, mvec)
        out[start:stop] = base
    return out


def _prior_log_det(problem: LatentGaussianProblem) -> float:
    if problem.prior_log_det is not None:
        return problem.prior_log_det
    return cholesky_matrix(problem.prior_precision.entries.tocsc()).log_det


def _prior_constraint_log_det(problem: LatentGaussianProblem) -> float:
    """log det of C Q_prior^{-1} C' for the problem's constraint rows."""
    if problem.prior_constraint_log_det is not None:
        return problem.prior_constraint_log_det
    cons = problem.prior_precision.constraints
    factor = cholesky_matrix(problem.prior_precision.entries.tocsc())
    v = factor.solve(cons.T)
    if v.ndim == 1:
        v = v[:, None]
    sign, log_det = np.linalg.slogdet(cons @ v)
    if sign <= 0:
        raise InvalidInputError("constraint rows are linearly dependent under the prior")
    return float(log_det)


def _evidence_value(problem: LatentGaussianProblem, factor: CholeskyFactor,
                    vs, f_at_mode: float) -> float:
    """Laplace evidence at fixed hyperparameters.

    The 2*pi factors of the prior and the matched Gaussian cancel; conditioning
    on Ax = 0 contributes the normalization of the constraint margin under the
    prior and under the curvature at the mode (exact in the Gaussian case).
    """
    value = 0.5 * _prior_log_det(problem) + f_at_mode - 0.5 * factor.log_det
    _, s = vs
    if s is not None:
        sign, log_det_s = np.linalg.slogdet(s)
        if sign <= 0:
            raise NoConvergenceError("constraint system is singular at the mode")
        value += 0.5 * _prior_constraint_log_det(problem) - 0.5 * log_det_s
    return value


def gamma_precision_hyperprior(shape: float = 1.0, rate: float = 5e-5) -> Callable:
    """Log prior over log-precision vectors: independent Gamma(shape, rate) on each
    precision, including the change-of-variables term for the log scale."""
    if shape <= 0 or rate <= 0:
        raise InvalidInputError("hyperprior shape and rate must be positive")

    def log_prior(psi: np.ndarray) -> float:
        psi = np.atleast_1d(np.asarray(psi, dtype=float))
        tau = np.exp(psi)
        return float(np.sum(shape * math.log(rate) - gammaln(shape) + shape * psi - rate * tau))

    return log_prior


def log_hyper_posterior(
    problem_builder: Callable[[np.ndarray], LatentGaussianProblem],
    psi: np.ndarray,
    log_hyperprior: Callable[[np.ndarray], float] | None = None,
    x0: np.ndarray | None = None,
) -> float:
    """Laplace evidence proxy at fixed hyperparameters plus the log hyperprior.

    Computed as the log joint at the Gaussian-approximation mode minus that
    Gaussian's log density at its own mode; the 2*pi factors cancel, leaving
    half the prior/curvature log-determinant difference plus the maximized
    quadratic-plus-likelihood value.
    """
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    problem = problem_builder(psi)
    _, factor, vs, f_at_mode, _ = _newton_mode(problem, x0=x0)
    value = _evidence_value(problem, factor, vs, f_at_mode)
    if log_hyperprior is not None:
        value += log_hyperprior(psi)
    return value


def eb_optimize(
    problem_builder: Callable[[np.ndarray], LatentGaussianProblem],
    init_psi: np.ndarray,
    log_hyperprior: Callable[[np.ndarray], float] | None = None,
    max_evals: int = 500,
    xatol: float = 1e-4,
    simplex_spread: float = 1.0,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, GaussianApprox]:
    """Maximize the hyperparameter posterior by Nelder-Mead direct search.

    Convergence is on the simplex diameter in log-precision space; exhausting
    the evaluation cap raises, carrying the best point found.  Returns the
    mode and the Gaussian approximation refit there.  ``x0`` seeds the inner
    Newton solver; later evaluations warm-start from the previous mode.
    """
    init = np.atleast_1d(np.asarray(init_psi, dtype=float))
    npar = init.size
    warm: dict[str, np.ndarray | None] = {"x": x0}

    def negated(psi: np.ndarray) -> float:
        problem = problem_builder(psi)
        mode, factor, vs, f_at_mode, _ = _newton_mode(problem, x0=warm["x"])
        warm["x"] = mode
        value = _evidence_value(problem, factor, vs, f_at_mode)
        if log_hyperprior is not None:
            value += log_hyperprior(psi)
        return -value

    simplex = np.vstack([init] + [init + simplex_spread * np.eye(npar)[i] for i in range(npar)])
    result = minimize(
        negated,
        init,
        method="Nelder-Mead",
        options=dict(
            maxfev=max_evals,
            xatol=xatol,
            fatol=np.inf,
            initial_simplex=simplex,
            adaptive=npar >= 4,
        ),
    )
    if not result.success:
        raise NoConvergenceError(
            f"direct search exhausted {max_evals} evaluations", best=(result.x, -result.fun)
        )
    psi_mode = np.asarray(result.x, dtype=float)
    fit = gaussian_approximation(problem_builder(psi_mode), x0=warm["x"])
    return psi_mode, fit
