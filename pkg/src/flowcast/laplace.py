"""Scalar Laplace machinery: mode finding and Gaussian integral surrogates.

A one-dimensional log density is summarized by the Gaussian matched at its
mode (mean = mode, variance = -1 / curvature).  Interval masses follow from
the height at the mode times the matched Gaussian's normal CDF increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import (
    InvalidInputError,
    NoConvergenceError,
    NoInteriorModeError,
    NotAMaximumError,
)

MAX_NEWTON_ITERS = 100
MAX_HALVINGS = 30
STEP_TOL = 1e-10
# Base relative step for the five-point difference stencils.  1e-3 balances
# truncation against cancellation for smooth log densities; smaller steps make
# the curvature estimate noise-dominated.
DERIV_STEP = 1e-3


@dataclass(frozen=True)
class ScalarTarget:
    """A one-dimensional log density on an open interval."""

    log_density: Callable[[float], float]
    support: tuple[float, float] = (-math.inf, math.inf)

    def contains(self, x: float) -> bool:
        lo, hi = self.support
        return lo < x < hi


@dataclass(frozen=True)
class LaplaceFit:
    mode: float
    variance: float


def _derivatives(f: Callable[[float], float], x: float) -> tuple[float, float]:
    """First and second derivative via five-point central stencils."""
    h = DERIV_STEP * max(1.0, abs(x))
    fm2, fm1, f0, fp1, fp2 = (f(x - 2 * h), f(x - h), f(x), f(x + h), f(x + 2 * h))
    d1 = (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * h)
    d2 = (-fm2 + 16 * fm1 - 30 * f0 + 16 * fp1 - fp2) / (12 * h * h)
    return d1, d2


def gamma_laplace(a: float, b: float) -> LaplaceFit:
    """Gaussian matched to a Gamma(a, b) density at its mode.

    The mode is (a-1)/b and the matched variance (a-1)/b^2; both require an
    interior mode, hence a > 1.
    """
    if b <= 0:
        raise InvalidInputError(f"rate must be positive, got {b}")
    if a <= 1:
        raise NoInteriorModeError(f"shape {a} <= 1: the density has no interior mode")
    return LaplaceFit(mode=(a - 1) / b, variance=(a - 1) / (b * b))


def scalar_laplace(target: ScalarTarget, init: float) -> LaplaceFit:
    """Locate the mode by damped Newton and match a Gaussian there."""
    if not target.contains(init):
        raise InvalidInputError(f"init {init} outside support {target.support}")
    f = target.log_density
    x = float(init)
    fx = f(x)
    if not math.isfinite(fx):
        raise InvalidInputError(f"log density not finite at init {init}")

    for _ in range(MAX_NEWTON_ITERS):
        d1, d2 = _derivatives(f, x)
        if d2 >= 0.0:
            # wrong curvature: chase the stationary point undamped so the
            # not-a-maximum check below can fire at convergence
            if d1 == 0.0:
                raise NotAMaximumError(f"second derivative {d2:.3e} >= 0 at stationary point {x}")
            step = -d1 / d2
            x_new = x + step
            if not target.contains(x_new):
                raise NotAMaximumError(
                    f"non-concave target pushed the iterate out of support near {x}"
                )
            if abs(step) <= STEP_TOL * (1.0 + abs(x)):
                raise NotAMaximumError(f"second derivative {d2:.3e} >= 0 at converged point {x}")
            x, fx = x_new, f(x_new)
            continue
        step = -d1 / d2
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            x_new = x + step
            if target.contains(x_new):
                fx_new = f(x_new)
                if fx_new >= fx:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            # no uphill movement possible: treat as converged at x
            step = 0.0
            x_new, fx_new = x, fx
        converged = abs(step) <= STEP_TOL * (1.0 + abs(x))
        x, fx = x_new, fx_new
        if converged:
            _, d2 = _derivatives(f, x)
            if d2 >= 0.0:
                raise NotAMaximumError(f"second derivative {d2:.3e} >= 0 at converged point {x}")
            return LaplaceFit(mode=x, variance=-1.0 / d2)
    raise NoConvergenceError(f"no convergence in {MAX_NEWTON_ITERS} Newton iterations", best=x)


def _normal_cdf(x: float, mean: float, var: float) -> float:
    if math.isinf(x):
        return 1.0 if x > 0 else 0.0
    return 0.5 * (1.0 + math.erf((x - mean) / math.sqrt(2.0 * var)))


def laplace_interval_integral(target: ScalarTarget, alpha: float, beta: float) -> float:
    """Approximate the integral of exp(log_density) over (alpha, beta)."""
    if not alpha < beta:
        raise InvalidInputError(f"need alpha < beta, got ({alpha}, {beta})")
    lo = max(alpha, target.support[0])
    hi = min(beta, target.support[1])
    if not lo < hi:
        raise InvalidInputError(f"interval ({alpha}, {beta}) misses support {target.support}")
    if math.isfinite(lo) and math.isfinite(hi):
        init = 0.5 * (lo + hi)
    elif math.isfinite(lo):
        init = lo + 1.0
    elif math.isfinite(hi):
        init = hi - 1.0
    else:
        init = 0.0
    fit = scalar_laplace(target, init)
    height = math.exp(target.log_density(fit.mode))
    mass = _normal_cdf(beta, fit.mode, fit.variance) - _normal_cdf(alpha, fit.mode, fit.variance)
    return height * math.sqrt(2.0 * math.pi * fit.variance) * mass
