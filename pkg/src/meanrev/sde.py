"""Path simulation for the Ornstein-Uhlenbeck and Heston models.

Randomness
----------
Every stochastic routine takes an unsigned 64-bit ``seed``. Draws come from
``numpy``'s PCG64 generator seeded with ``SeedSequence(seed, spawn_key=(stream,
path_index))``, so path ``k`` of an ensemble is the same no matter how many
paths are requested or in what order they are produced. ``stream`` separates
the OU simulator, the observation-noise generator and the Heston simulator so
that reusing one seed across them does not correlate their draws.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from os import PathLike
from typing import Literal

import numpy as np

from .errors import ParameterDomainError, ValidationError

SEED_LIMIT = 2**64

STREAM_OU = 0
STREAM_OBSERVATION = 1
STREAM_HESTON = 2
STREAM_RECONSTRUCTION = 3

# paths per vectorised block; bounds peak memory of ensemble draws
_CHUNK = 8192


def validate_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ParameterDomainError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed < SEED_LIMIT:
        raise ParameterDomainError(f"seed must lie in [0, 2**64), got {seed}")
    return seed


def path_generator(seed: int, stream: int, path_index: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, stream, path) triple."""
    sequence = np.random.SeedSequence(validate_seed(seed), spawn_key=(stream, path_index))
    return np.random.Generator(np.random.PCG64(sequence))


def _block_normals(seed: int, stream: int, first: int, count: int, shape: tuple) -> np.ndarray:
    out = np.empty((count, *shape))
    for k in range(count):
        out[k] = path_generator(seed, stream, first + k).standard_normal(shape)
    return out


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ParameterDomainError(f"{name} must be finite, got {value}")
    return value


@dataclass(frozen=True)
class OUParams:
    """Parameters of ``dX = alpha (mu - X) dt + sigma dW``.

    Parameters
    ----------
    mu : float
        Long-run mean, in price units.
    alpha : float
        Mean-reversion speed (1/time), strictly positive.
    sigma : float
        Diffusion coefficient, strictly positive.
    """

    mu: float
    alpha: float
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "mu", _finite("mu", self.mu))
        object.__setattr__(self, "alpha", _finite("alpha", self.alpha))
        object.__setattr__(self, "sigma", _finite("sigma", self.sigma))
        if self.alpha <= 0:
            raise ParameterDomainError(f"alpha must be > 0, got {self.alpha}")
        if self.sigma <= 0:
            raise ParameterDomainError(f"sigma must be > 0, got {self.sigma}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.mu, self.alpha, self.sigma)


@dataclass(frozen=True)
class SimGrid:
    """Uniform grid ``t0, t0 + dt, ..., t0 + horizon`` with ``n_steps`` steps."""

    horizon: float
    n_steps: int
    t0: float = 0.0

    def __post_init__(self):
        if isinstance(self.n_steps, bool) or int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ParameterDomainError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        horizon = _finite("horizon", self.horizon)
        if horizon <= 0:
            raise ParameterDomainError(f"horizon must be > 0, got {horizon}")
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "t0", _finite("t0", self.t0))

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def n_points(self) -> int:
        return self.n_steps + 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_points)


@dataclass(frozen=True, eq=False)
class StatePath:
    """A scalar series on a uniform time grid.

    Only ``t0`` and ``dt`` are stored; ``times`` is derived on demand.
    """

    values: np.ndarray
    dt: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValidationError("StatePath values must be one-dimensional")
        object.__setattr__(self, "values", values)
        dt = _finite("dt", self.dt)
        if dt <= 0:
            raise ParameterDomainError(f"dt must be > 0, got {dt}")
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "t0", _finite("t0", self.t0))

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, StatePath):
            return NotImplemented
        return (
            self.dt == other.dt
            and self.t0 == other.t0
            and np.array_equal(self.values, other.values)
        )

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    def with_values(self, values) -> "StatePath":
        return StatePath(values, self.dt, self.t0)

    def to_csv(self, target: str | PathLike | io.TextIOBase) -> None:
        """Write ``t,value`` rows at 17 significant digits."""
        rows = zip(self.times, self.values)
        if isinstance(target, io.TextIOBase):
            _write_rows(target, ("t", "value"), rows)
        else:
            with open(target, "w", newline="", encoding="utf-8") as fh:
                _write_rows(fh, ("t", "value"), rows)

    @classmethod
    def from_csv(cls, source: str | PathLike) -> "StatePath":
        with open(source, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["t", "value"]:
                raise ValidationError(f"expected header 't,value', got {header}")
            t, v = [], []
            for row in reader:
                t.append(float(row[0]))
                v.append(float(row[1]))
        return cls.from_samples(np.array(t), np.array(v))

    @classmethod
    def from_samples(cls, times, values) -> "StatePath":
        """Build a path from explicit sample times, which must be uniform."""
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.shape != values.shape:
            raise ValidationError("times and values differ in length")
        if times.size < 2:
            return cls(values, 1.0, float(times[0]) if times.size else 0.0)
        steps = np.diff(times)
        dt = float((times[-1] - times[0]) / (times.size - 1))
        if dt <= 0 or np.any(np.abs(steps - dt) > 1e-12 * max(1.0, abs(dt), np.abs(times).max())):
            raise ValidationError("sample times are not a uniform ascending grid")
        return cls(values, dt, float(times[0]))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_rows(fh, header, rows) -> None:
    fh.write(",".join(header) + "\n")
    for row in rows:
        fh.write(",".join(_fmt(x) for x in row) + "\n")


# -- Ornstein-Uhlenbeck ----------------------------------------------------


def ou_mean(params: OUParams, x0: float, t: float) -> float:
    """Conditional mean ``mu + (x0 - mu) exp(-alpha t)``."""
    if t < 0:
        raise ParameterDomainError("t must be >= 0")
    if math.isinf(t):
        return params.mu
    return params.mu + (x0 - params.mu) * math.exp(-params.alpha * t)


def ou_covariance(params: OUParams, s: float, t: float) -> float:
    """Covariance of ``X_s`` and ``X_t`` for a deterministic start at time 0."""
    if s < 0 or t < 0:
        raise ParameterDomainError("s and t must be >= 0")
    a = params.alpha
    scale = params.sigma**2 / (2 * a)
    return scale * (math.exp(-a * abs(t - s)) - math.exp(-a * (s + t)))


def ou_variance(params: OUParams, t: float) -> float:
    return ou_covariance(params, t, t)


def ou_transition_std(params: OUParams, dt: float) -> float:
    """Standard deviation of the exact one-step transition over ``dt``."""
    return math.sqrt(params.sigma**2 / (2 * params.alpha) * -math.expm1(-2 * params.alpha * dt))


def ou_paths(
    params: OUParams,
    x0: float,
    grid: SimGrid,
    n_paths: int,
    seed: int,
    scheme: Literal["exact", "em"] = "exact",
    terminal_only: bool = False,
) -> np.ndarray:
    """Simulate an ensemble of OU paths.

    Returns an array of shape ``(n_paths, grid.n_points)``, or
    ``(n_paths,)`` terminal values when ``terminal_only`` is set.
    """
    seed = validate_seed(seed)
    if n_paths < 1:
        raise ParameterDomainError("n_paths must be >= 1")
    if scheme not in ("exact", "em"):
        raise ParameterDomainError(f"unknown scheme {scheme!r}")
    x0 = _finite("x0", x0)
    mu, a, sigma = params.as_tuple()
    dt, n = grid.dt, grid.n_steps
    if scheme == "exact":
        decay = math.exp(-a * dt)
        scale = ou_transition_std(params, dt)
    else:
        scale = sigma * math.sqrt(dt)

    out = np.empty(n_paths) if terminal_only else np.empty((n_paths, n + 1))
    for first in range(0, n_paths, _CHUNK):
        count = min(_CHUNK, n_paths - first)
        z = _block_normals(seed, STREAM_OU, first, count, (n,))
        x = np.full(count, x0)
        if not terminal_only:
            out[first:first + count, 0] = x
        for i in range(n):
            if scheme == "exact":
                x = mu + (x - mu) * decay + scale * z[:, i]
            else:
                x = x + a * (mu - x) * dt + scale * z[:, i]
            if not terminal_only:
                out[first:first + count, i + 1] = x
        if terminal_only:
            out[first:first + count] = x
    return out


def simulate_ou_em(params: OUParams, x0: float, grid: SimGrid, seed: int) -> StatePath:
    """One Euler-Maruyama path; identical to path 0 of :func:`ou_paths`."""
    values = ou_paths(params, x0, grid, 1, seed, scheme="em")[0]
    return StatePath(values, grid.dt, grid.t0)


def simulate_ou_exact(params: OUParams, x0: float, grid: SimGrid, seed: int) -> StatePath:
    """One path sampled from the exact Gaussian transition law."""
    values = ou_paths(params, x0, grid, 1, seed, scheme="exact")[0]
    return StatePath(values, grid.dt, grid.t0)


def add_observation_noise(path: StatePath, sigma_o: float, seed: int) -> StatePath:
    """Add i.i.d. ``N(0, sigma_o^2)`` noise to every point except the first."""
    sigma_o = _finite("sigma_o", sigma_o)
    if sigma_o < 0:
        raise ParameterDomainError("sigma_o must be >= 0")
    eps = path_generator(seed, STREAM_OBSERVATION).standard_normal(len(path))
    eps[0] = 0.0
    return path.with_values(path.values + sigma_o * eps)


# -- Heston ------------------------------------------------------------------


@dataclass(frozen=True)
class HestonParams:
    """Heston model parameters.

    ``alpha`` is the variance mean-reversion speed (the same quantity is
    often written kappa). ``rho`` correlates the price and variance shocks.
    """

    mu: float
    theta: float
    alpha: float
    xi: float
    rho: float = 0.0

    def __post_init__(self):
        for name in ("mu", "theta", "alpha", "xi", "rho"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        if abs(self.rho) > 1:
            raise ParameterDomainError(f"|rho| must be <= 1, got {self.rho}")


def heston_paths(
    params: HestonParams,
    s0: float,
    v0: float,
    grid: SimGrid,
    n_paths: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Log-Euler price and full-truncation Euler variance ensemble.

    Per step the price shock ``dWS`` is drawn first and the variance shock is
    ``rho dWS + sqrt(1 - rho^2) dW_perp``. Negative variance is replaced by
    ``max(V, 0)`` wherever it enters a drift or a square root.

    Returns
    -------
    prices, variances : ndarray
        Arrays of shape ``(n_paths, grid.n_points)``.
    """
    seed = validate_seed(seed)
    s0, v0 = _finite("s0", s0), _finite("v0", v0)
    if s0 <= 0:
        raise ParameterDomainError("s0 must be > 0")
    if v0 < 0:
        raise ParameterDomainError("v0 must be >= 0")
    if params.theta < 0:
        raise ParameterDomainError("theta must be >= 0 for simulation")
    if params.xi < 0:
        raise ParameterDomainError("xi must be >= 0 for simulation")
    if n_paths < 1:
        raise ParameterDomainError("n_paths must be >= 1")

    dt, n = grid.dt, grid.n_steps
    sqdt = math.sqrt(dt)
    rho = params.rho
    rho_perp = math.sqrt(1.0 - rho * rho)
    prices = np.empty((n_paths, n + 1))
    variances = np.empty((n_paths, n + 1))
    for first in range(0, n_paths, _CHUNK):
        count = min(_CHUNK, n_paths - first)
        z = _block_normals(seed, STREAM_HESTON, first, count, (n, 2))
        s = np.full(count, s0)
        v = np.full(count, v0)
        rows = slice(first, first + count)
        prices[rows, 0] = s
        variances[rows, 0] = v
        for i in range(n):
            vp = np.maximum(v, 0.0)
            root = np.sqrt(vp)
            dws = sqdt * z[:, i, 0]
            dwv = rho * dws + rho_perp * sqdt * z[:, i, 1]
            s = s * np.exp((params.mu - 0.5 * vp) * dt + root * dws)
            v = v + params.alpha * (params.theta - vp) * dt + params.xi * root * dwv
            prices[rows, i + 1] = s
            variances[rows, i + 1] = v
    return prices, variances


def simulate_heston(
    params: HestonParams,
    s0: float,
    v0: float,
    grid: SimGrid,
    n_paths: int,
    seed: int,
) -> list[tuple[StatePath, StatePath]]:
    """Simulate ``n_paths`` (price, variance) path pairs."""
    prices, variances = heston_paths(params, s0, v0, grid, n_paths, seed)
    return [
        (StatePath(p, grid.dt, grid.t0), StatePath(v, grid.dt, grid.t0))
        for p, v in zip(prices, variances)
    ]
