"""Maximum-likelihood estimation of OU parameters from a uniformly sampled path.

The exact Gaussian transition density gives the log-likelihood

    L = -(n/2) log(sigma^2 / (2 alpha)) - (n/2) log(1 - exp(-2 alpha dt))
        - (alpha / sigma^2) * sum(r_i^2) / (1 - exp(-2 alpha dt)),
    r_i = Z_i - mu - (Z_{i-1} - mu) exp(-alpha dt),

with ``n`` the number of increments. Estimation minimises ``-L`` directly in
all three coordinates with L-BFGS-B under the box ``alpha >= 0.05``,
``sigma >= 0.05``, using the analytic gradient.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import EstimationError, InsufficientDataError, ParameterDomainError
from .sde import OUParams, StatePath

log = logging.getLogger(__name__)

ALPHA_FLOOR = 0.05
SIGMA_FLOOR = 0.05

# above this alpha*dt, log(1 - e^{-2 alpha dt}) is evaluated as -e^{-2 alpha dt}
SERIES_SWITCH = 35.0


@dataclass(frozen=True)
class EstimationConfig:
    """Settings for :func:`estimate_parameters`.

    ``lower_bounds`` holds one entry per coordinate ``(mu, alpha, sigma)``;
    ``None`` leaves that coordinate unbounded.
    """

    initial_guess: OUParams
    lower_bounds: tuple = (None, ALPHA_FLOOR, SIGMA_FLOOR)
    max_iterations: int = 15000
    convergence_tolerance: float = 1e-12

    def __post_init__(self):
        if len(self.lower_bounds) != 3:
            raise ParameterDomainError("lower_bounds needs one entry per parameter")
        if self.max_iterations < 1:
            raise ParameterDomainError("max_iterations must be positive")
        for b in self.lower_bounds[1:]:
            if b is None or b <= 0:
                raise ParameterDomainError("alpha and sigma need positive lower bounds")


@dataclass(frozen=True)
class OUFit:
    params: OUParams
    loglik: float
    initial_loglik: float
    iterations: int
    message: str


def _log_one_minus_exp(x: float) -> float:
    """``log(1 - exp(-x))`` for ``x > 0``."""
    if x > 2 * SERIES_SWITCH:
        return -math.exp(-x)
    return math.log(-math.expm1(-x))


def negative_loglikelihood(theta, z: np.ndarray, dt: float) -> tuple[float, np.ndarray]:
    """``-L`` and its gradient at ``theta = (mu, alpha, sigma)``.

    Parameters
    ----------
    theta : sequence of float
        Parameter vector; ``alpha`` and ``sigma`` must be positive.
    z : ndarray
        Observed path, at least two points.
    dt : float
        Constant sampling interval.
    """
    mu, a, s = float(theta[0]), float(theta[1]), float(theta[2])
    prev = z[:-1] - mu
    n = prev.size
    decay = math.exp(-a * dt)
    denom = -math.expm1(-2 * a * dt)
    r = (z[1:] - mu) - prev * decay
    ssr = float(r @ r)
    s2 = s * s

    loglik = (
        -0.5 * n * math.log(s2 / (2 * a))
        - 0.5 * n * _log_one_minus_exp(2 * a * dt)
        - a * ssr / (s2 * denom)
    )

    d_denom = 2 * dt * decay * decay
    d_ssr = 2 * dt * decay * float(r @ prev)
    g_mu = 2 * a * (1 - decay) * float(r.sum()) / (s2 * denom)
    g_alpha = (
        0.5 * n / a
        - 0.5 * n * d_denom / denom
        - (ssr / denom + a * d_ssr / denom - a * ssr * d_denom / denom**2) / s2
    )
    g_sigma = -n / s + 2 * a * ssr / (s2 * s * denom)
    return -loglik, -np.array([g_mu, g_alpha, g_sigma])


def _check_path(data: StatePath, minimum: int) -> np.ndarray:
    z = np.asarray(data.values, dtype=float)
    if z.size < minimum:
        raise InsufficientDataError(f"need at least {minimum} observations, got {z.size}")
    if not np.all(np.isfinite(z)):
        raise ParameterDomainError("observations must be finite")
    return z


def loglikelihood(params: OUParams, data: StatePath) -> float:
    """Exact-transition log-likelihood of ``data`` under ``params``."""
    if params.alpha <= 0 or params.sigma <= 0:
        raise ParameterDomainError("alpha and sigma must be positive")
    z = _check_path(data, 2)
    value, _ = negative_loglikelihood(params.as_tuple(), z, data.dt)
    return -value


def fit_ou(config: EstimationConfig, data: StatePath) -> OUFit:
    """Bounded direct maximisation of the log-likelihood.

    Raises
    ------
    EstimationError
        If the iteration limit is hit or the optimiser returns a non-finite
        point; ``best`` carries the last iterate as an :class:`OUParams`.
    """
    z = _check_path(data, 3)
    return _fit_array(z, data.dt, config.initial_guess.as_tuple(), config)


def _fit_array(z: np.ndarray, dt: float, guess, config: EstimationConfig) -> OUFit:
    bounds = [(b, None) for b in config.lower_bounds]
    x0 = np.array(guess, dtype=float)
    for k, (lo, _) in enumerate(bounds):
        if lo is not None and x0[k] < lo:
            x0[k] = lo
    f0, _ = negative_loglikelihood(x0, z, dt)

    result = minimize(
        negative_loglikelihood,
        x0,
        args=(z, dt),
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={
            "maxiter": config.max_iterations,
            "ftol": config.convergence_tolerance,
            "gtol": 1e-10,
        },
    )
    x = result.x
    finite = np.all(np.isfinite(x)) and math.isfinite(result.fun)
    if not finite or result.status == 1:
        best = None
        if finite:
            best = OUParams(*x)
        raise EstimationError(f"OU likelihood maximisation failed: {result.message}", best=best)
    if result.status != 0:
        # line-search stall at machine precision; the iterate is still usable
        log.debug("L-BFGS-B stopped early: %s", result.message)

    fun = float(result.fun)
    if fun > f0:
        x, fun = x0, f0
    return OUFit(
        params=OUParams(*x),
        loglik=-fun,
        initial_loglik=-f0,
        iterations=int(result.nit),
        message=str(result.message),
    )


def estimate_parameters(config: EstimationConfig, data: StatePath) -> OUParams:
    """Estimate ``(mu, alpha, sigma)`` from ``data``; see :func:`fit_ou`."""
    return fit_ou(config, data).params
