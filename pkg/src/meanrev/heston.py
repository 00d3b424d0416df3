"""Method-of-moments fitting of a daily Heston model and price reconstruction.

With one trading day per step the model is discretised as

    Q_{t+1} = S_{t+1} / S_t = 1 + mu + sqrt(V_t) (rho Z1 + sqrt(1 - rho^2) Z2)
    V_{t+1} = V_t + alpha (theta - V_t) + xi sqrt(V_t) Z1

Two families of closed-form moments of ``Q`` are provided:

``moment4_closed_form`` / ``moment5_closed_form``
    The reference fourth and fifth moment polynomials of the estimator,
    transcribed term for term, with the undefined ``sigma`` in the fifth
    read as ``xi``. :func:`solve_mom` inverts these.

``moment4_exact`` / ``moment5_exact``
    The moments obtained by expanding ``E[(c + sqrt(V) Z)^j]`` with
    ``c = 1 + mu``, ``E[V] = theta`` and ``E[V^2]`` from
    :func:`variance_second_moment`. These agree with simulation of a
    non-negative variance process; the reference polynomials do not.

The exact moments depend on ``(alpha, xi)`` only through
``xi^2 / (alpha (2 - alpha))``, so they cannot identify the pair on their
own. ``rho`` enters none of the moments and is chosen afterwards by a grid
search on reconstruction error.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from os import PathLike

import numpy as np
from scipy.optimize import root

from .errors import (
    EstimationError,
    InsufficientDataError,
    ParameterDomainError,
    SingularityError,
    SingularJacobianError,
)
from .sde import STREAM_RECONSTRUCTION, StatePath, path_generator

RHO_STEP = 0.001
RHO_POINTS = 2000


@dataclass(frozen=True)
class MomentSet:
    m1: float
    m2: float
    m4: float
    m5: float


def sample_moments(q) -> MomentSet:
    """Raw sample moments of orders 1, 2, 4 and 5."""
    q = np.asarray(q, dtype=float)
    if q.size == 0:
        raise InsufficientDataError("need at least one ratio")
    return MomentSet(
        m1=float(np.mean(q)),
        m2=float(np.mean(q**2)),
        m4=float(np.mean(q**4)),
        m5=float(np.mean(q**5)),
    )


def mom_mu_theta(m: MomentSet) -> tuple[float, float]:
    """Invert ``m1 = 1 + mu`` and ``m2 = (1 + mu)^2 + theta``."""
    mu = m.m1 - 1.0
    return mu, m.m2 - m.m1**2


def _check_alpha(alpha: float) -> None:
    if alpha == 0.0 or alpha == 2.0:
        raise SingularityError(f"moment formulas have a pole at alpha={alpha}")


def variance_second_moment(theta: float, alpha: float, xi: float) -> float:
    """Stationary ``E[V^2] = (-alpha^2 theta^2 + 2 alpha theta^2 + xi^2 theta) / (2 alpha - alpha^2)``."""
    _check_alpha(alpha)
    return (-alpha**2 * theta**2 + 2 * alpha * theta**2 + xi**2 * theta) / (2 * alpha - alpha**2)


def moment4_closed_form(mu: float, theta: float, alpha: float, xi: float) -> float:
    """Reference fourth-moment polynomial, term for term."""
    _check_alpha(alpha)
    k, m, t, x = alpha, mu, theta, xi
    body = (
        k**2 * m**4 + 4 * k**2 * m**3 - 2 * k * m**4 - 8 * k * m**3
        + 6 * k**2 * m**2 * t - 12 * k * m**2 * t
        + 6 * k**2 * m**2 - 12 * k * m**2 + 12 * k**2 * m * t - 24 * k * m * t
        + 4 * k**2 * m - 8 * k * m
        + 3 * k**2 * t**2 - 6 * k * t**2 - 3 * x**2 * t + k**2 - 12 * k * t - 2 * k
    )
    return body / (k * (k - 2))


def moment5_closed_form(mu: float, theta: float, alpha: float, xi: float) -> float:
    """Reference fifth-moment polynomial, with its stray ``sigma`` read as ``xi``."""
    _check_alpha(alpha)
    k, m, t, x = alpha, mu, theta, xi
    body = (
        k**2 * m**5 + 5 * k**2 * m**4 + 10 * k**2 * m**3 * t - 2 * k * m**5
        + 10 * k**2 * m**3 + 30 * k**2 * m**2 * t + 15 * k**2 * m * t**2
        - 10 * k * m**4 - 20 * k * m**3 * t + 10 * k * m**2 * t**2 + 30 * k * m * t
        + 15 * k**2 * t**2 - 20 * k * m**3 - 60 * k * m**2 * t - 30 * k * m * t**2
        - 15 * x**2 * t + 5 * k**2 * m + 10 * k**2 * t - 20 * k * m**2 - 60 * k * m * t
        - 30 * k * t**2 - 15 * x**2 * t + k**2 - 10 * k * m - 20 * k * t - 2 * k
    )
    return body / (k * (k - 2))


def moment4_exact(mu: float, theta: float, alpha: float, xi: float) -> float:
    """``E[Q^4] = c^4 + 6 c^2 theta + 3 E[V^2]``."""
    c = 1.0 + mu
    return c**4 + 6 * c**2 * theta + 3 * variance_second_moment(theta, alpha, xi)


def moment5_exact(mu: float, theta: float, alpha: float, xi: float) -> float:
    """``E[Q^5] = c^5 + 10 c^3 theta + 15 c E[V^2]``."""
    c = 1.0 + mu
    return c**5 + 10 * c**3 * theta + 15 * c * variance_second_moment(theta, alpha, xi)


@dataclass(frozen=True)
class MomSolution:
    """Method-of-moments estimate.

    Out-of-range values are kept and flagged rather than rejected:
    ``alpha_in_range`` requires ``0 < alpha < 2`` (positive ``E[V^2]``
    denominator) and ``theta_nonnegative`` requires ``theta >= 0``.
    """

    mu: float
    theta: float
    alpha: float
    xi: float
    residuals: tuple[float, float] = (0.0, 0.0)

    @property
    def alpha_in_range(self) -> bool:
        return 0.0 < self.alpha < 2.0

    @property
    def theta_nonnegative(self) -> bool:
        return self.theta >= 0.0

    @property
    def valid(self) -> bool:
        return self.alpha_in_range and self.theta_nonnegative

    @property
    def max_residual(self) -> float:
        return max(abs(r) for r in self.residuals)

    def to_csv(self, target: str | PathLike | io.TextIOBase) -> None:
        def emit(fh):
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["mu", "theta", "alpha", "xi", "max_residual", "alpha_in_range", "theta_nonnegative"])
            writer.writerow(
                [format(v, ".17g") for v in (self.mu, self.theta, self.alpha, self.xi, self.max_residual)]
                + [str(self.alpha_in_range).lower(), str(self.theta_nonnegative).lower()]
            )

        if isinstance(target, io.TextIOBase):
            emit(target)
        else:
            with open(target, "w", newline="", encoding="utf-8") as fh:
                emit(fh)


def solve_mom(
    m: MomentSet,
    initial: tuple[float, float] | None = None,
    *,
    tol: float = 1e-9,
) -> MomSolution:
    """Estimate ``(mu, theta, alpha, xi)`` from sample moments.

    ``mu`` and ``theta`` come from the first two moments. ``(alpha, xi)``
    solve ``moment4_closed_form = m4`` and ``moment5_closed_form = m5`` by
    a hybrid Powell root find started at ``initial``, which defaults to
    ``(mu, theta)``.

    Raises
    ------
    SingularJacobianError
        The root finder stopped where the Jacobian is numerically singular.
    EstimationError
        No root with residuals below ``tol`` was found; ``residuals`` holds
        the final values.
    """
    mu, theta = mom_mu_theta(m)
    start = (mu, theta) if initial is None else tuple(float(v) for v in initial)

    def equations(p):
        a, x = p
        if a == 0.0 or a == 2.0:
            return [np.inf, np.inf]
        return [moment4_closed_form(mu, theta, a, x) - m.m4, moment5_closed_form(mu, theta, a, x) - m.m5]

    with np.errstate(all="ignore"):
        result = root(equations, start, method="hybr", options={"xtol": 1e-14})
    alpha, xi = (float(v) for v in result.x)
    residuals = tuple(float(r) for r in equations((alpha, xi)))
    if all(math.isfinite(r) for r in residuals) and max(abs(r) for r in residuals) < tol:
        return MomSolution(mu, theta, alpha, xi, residuals)

    best = MomSolution(mu, theta, alpha, xi, residuals)
    if _numerically_singular(equations, (alpha, xi)):
        raise SingularJacobianError(
            f"moment equations have a singular Jacobian near alpha={alpha:g}, xi={xi:g}",
            best=best,
            residuals=residuals,
        )
    raise EstimationError(f"moment equations did not converge: {result.message}", best=best, residuals=residuals)


def _numerically_singular(equations, point, rcond: float = 1e-12) -> bool:
    a, x = point
    h = 1e-7 * max(1.0, abs(a)), 1e-7 * max(1.0, abs(x))
    cols = []
    for k in range(2):
        up, dn = [a, x], [a, x]
        up[k] += h[k]
        dn[k] -= h[k]
        f_up, f_dn = np.asarray(equations(up)), np.asarray(equations(dn))
        if not (np.all(np.isfinite(f_up)) and np.all(np.isfinite(f_dn))):
            return True
        cols.append((f_up - f_dn) / (2 * h[k]))
    J = np.column_stack(cols)
    s = np.linalg.svd(J, compute_uv=False)
    return s[0] == 0.0 or s[-1] / s[0] < rcond


# -- reconstruction -----------------------------------------------------------


def _variance_path(sol: MomSolution, z1: np.ndarray) -> np.ndarray:
    v = np.empty(z1.size + 1)
    v[0] = 0.0
    for t in range(1, v.size):
        prev = v[t - 1]
        v[t] = prev + sol.alpha * (sol.theta - prev) + sol.xi * math.sqrt(abs(prev)) * z1[t - 1]
    return v


def _reconstruction_noise(seed: int, n: int, index: int = 0) -> np.ndarray:
    return path_generator(seed, STREAM_RECONSTRUCTION, index).standard_normal((max(n - 1, 0), 2))


def _prices_from_noise(sol: MomSolution, rhos: np.ndarray, s0: float, z: np.ndarray) -> np.ndarray:
    """Price paths for each ``rho`` sharing one variance path; shape ``(len(rhos), n)``."""
    z1, z2 = z[:, 0], z[:, 1]
    root_v = np.sqrt(np.abs(_variance_path(sol, z1)[:-1]))
    rhos = np.asarray(rhos, dtype=float)[:, None]
    perp = np.sqrt(1.0 - rhos * rhos)
    factors = 1.0 + sol.mu + root_v * (rhos * z1 + perp * z2)
    steps = np.concatenate([np.full((rhos.shape[0], 1), float(s0)), factors], axis=1)
    return np.cumprod(steps, axis=1)


def _check_rho(rho: float) -> float:
    rho = float(rho)
    if not abs(rho) <= 1.0:
        raise ParameterDomainError(f"|rho| must be <= 1, got {rho}")
    return rho


def reconstruct_prices(sol: MomSolution, rho: float, s0: float, n: int, seed: int) -> StatePath:
    """One reconstructed price path of ``n`` days starting at ``s0``.

    The variance starts at zero and ``|V|`` is used under the square root.
    ``Z1`` drives both the variance and the correlated part of the price
    shock.
    """
    rho = _check_rho(rho)
    if s0 <= 0:
        raise ParameterDomainError("s0 must be > 0")
    if n < 1:
        raise ParameterDomainError("n must be >= 1")
    z = _reconstruction_noise(seed, n)
    return StatePath(_prices_from_noise(sol, np.array([rho]), s0, z)[0], 1.0)


def rho_grid() -> np.ndarray:
    """``-1, -0.999, ..., 0.999``: 2000 points, upper end excluded."""
    return -1.0 + RHO_STEP * np.arange(RHO_POINTS)


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    rho_star: float
    sae: float
    reconstructed: StatePath
    rhos: np.ndarray
    saes: np.ndarray

    @property
    def mean_abs_error(self) -> float:
        return self.sae / len(self.reconstructed)

    def to_csv(self, target: str | PathLike) -> None:
        with open(target, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["rho_star", "sae", "mean_abs_error"])
            writer.writerow([format(v, ".17g") for v in (self.rho_star, self.sae, self.mean_abs_error)])

    def curve_to_csv(self, target: str | PathLike) -> None:
        with open(target, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["rho", "sae"])
            for r, e in zip(self.rhos, self.saes):
                writer.writerow([format(r, ".17g"), format(e, ".17g")])


def rho_grid_search(
    sol: MomSolution,
    true_prices,
    seed: int,
    s0: float | None = None,
    redraw: bool = False,
) -> ReconstructionResult:
    """Pick ``rho`` minimising the sum of absolute reconstruction errors.

    One noise draw is shared by every candidate unless ``redraw`` is set,
    in which case candidate ``k`` uses its own substream. The first
    (lowest) ``rho`` attaining the minimum wins.
    """
    truth = np.asarray(true_prices, dtype=float)
    if truth.size == 0:
        raise InsufficientDataError("need at least one true price")
    s0 = float(truth[0]) if s0 is None else float(s0)
    if s0 <= 0:
        raise ParameterDomainError("s0 must be > 0")
    n = truth.size
    rhos = rho_grid()
    if redraw:
        paths = np.vstack(
            [_prices_from_noise(sol, rhos[k:k + 1], s0, _reconstruction_noise(seed, n, k + 1)) for k in range(rhos.size)]
        )
    else:
        paths = _prices_from_noise(sol, rhos, s0, _reconstruction_noise(seed, n))
    saes = np.array([np.sum(np.abs(truth - row)) for row in paths])
    best = int(np.argmin(saes))
    return ReconstructionResult(
        rho_star=float(rhos[best]),
        sae=float(saes[best]),
        reconstructed=StatePath(paths[best], 1.0),
        rhos=rhos,
        saes=saes,
    )
