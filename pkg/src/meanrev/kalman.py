"""Kalman filtering of a price series under an OU mean-reversion model.

The scalar OU step ``X_{k+1} = A + B X_k + sigma_p eps`` is written as a
linear map on the augmented state ``z = [1, X]``::

    z_{k+1} = F z_k + noise,    F = [[1, 0], [A, B]],
    A = mu (1 - e^{-alpha dt}),  B = e^{-alpha dt},
    sigma_p^2 = sigma^2 / (2 alpha) (1 - e^{-2 alpha dt}).

Observations are ``[1, price]`` with ``H = I``. Both noise covariances are
isotropic, ``Q = sigma_p^2 I`` and ``R = sigma_o^2 I``, including on the
constant component. ``sigma_o`` plays the role of model confidence: the
larger it is, the more the filter trusts the OU prediction over the price.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from os import PathLike

import numpy as np

from .errors import (
    AlignmentError,
    EstimationError,
    FilterError,
    InsufficientDataError,
    ParameterDomainError,
)
from .estimate import EstimationConfig, _fit_array
from .sde import OUParams, StatePath, _fmt

_I2 = np.eye(2)


class EstimationWarning(UserWarning):
    """A windowed refit failed and the previous OU parameters were kept."""


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    F: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    H: np.ndarray
    A: float
    B: float
    sigma_p: float
    sigma_o: float

    @classmethod
    def from_coefficients(cls, A: float, B: float, sigma_p: float, sigma_o: float) -> "StateSpaceModel":
        if sigma_p < 0 or sigma_o < 0:
            raise ParameterDomainError("noise standard deviations must be >= 0")
        F = np.array([[1.0, 0.0], [A, B]])
        return cls(
            F=F,
            Q=_I2 * sigma_p**2,
            R=_I2 * sigma_o**2,
            H=_I2.copy(),
            A=float(A),
            B=float(B),
            sigma_p=float(sigma_p),
            sigma_o=float(sigma_o),
        )


def build_state_space(params: OUParams, dt: float, sigma_o: float) -> StateSpaceModel:
    """Map OU parameters sampled at ``dt`` onto the augmented linear model."""
    if params.alpha <= 0 or params.sigma <= 0:
        raise ParameterDomainError("alpha and sigma must be positive")
    if not dt > 0:
        raise ParameterDomainError("dt must be positive")
    if not sigma_o >= 0 or not math.isfinite(sigma_o):
        raise ParameterDomainError("sigma_o must be finite and >= 0")
    decay = math.exp(-params.alpha * dt)
    A = params.mu * -math.expm1(-params.alpha * dt)
    sigma_p = math.sqrt(params.sigma**2 / (2 * params.alpha) * -math.expm1(-2 * params.alpha * dt))
    return StateSpaceModel.from_coefficients(A, decay, sigma_p, sigma_o)


@dataclass(frozen=True, eq=False)
class KalmanState:
    z: np.ndarray
    P: np.ndarray


@dataclass(frozen=True, eq=False)
class StepDiagnostics:
    residual: np.ndarray
    residual_cov: np.ndarray
    gain: np.ndarray


def predict(state: KalmanState, model: StateSpaceModel) -> KalmanState:
    F = model.F
    return KalmanState(F @ state.z, F @ state.P @ F.T + model.Q)


def update(
    prior: KalmanState,
    observation: np.ndarray,
    model: StateSpaceModel,
    previous: KalmanState | None = None,
) -> tuple[KalmanState, StepDiagnostics]:
    """Measurement update of ``prior`` with the observation ``[1, price]``.

    When ``previous`` is given the gain correction is added to the previous
    posterior mean rather than to ``prior.z``; this reproduces an older
    formulation of the recursion and is kept only for regression comparisons.
    """
    H, P = model.H, prior.P
    residual = observation - H @ prior.z
    S = H @ P @ H.T + model.R
    if model.sigma_o == 0.0:
        # R = 0 and H = I give K = I exactly; the posterior is the observation
        K = _I2.copy()
        z = observation.copy() if previous is None else previous.z + residual
        return KalmanState(z, np.zeros((2, 2))), StepDiagnostics(residual, S, K)
    try:
        K = np.linalg.solve(S.T, (P @ H.T).T).T
    except np.linalg.LinAlgError as exc:
        raise FilterError("residual covariance is singular") from exc
    base = prior.z if previous is None else previous.z
    z = base + K @ residual
    return KalmanState(z, (_I2 - K @ H) @ P), StepDiagnostics(residual, S, K)


@dataclass(eq=False)
class FilterRun:
    """Output of a filter pass.

    Attributes
    ----------
    observations, filtered : StatePath
        Input prices and posterior means ``x_{k|k}``, same grid.
    predicted : ndarray
        A-priori means ``x_{k|k-1}``; NaN where no prediction was made.
    params : ndarray or None
        For recursive runs, the ``(mu, alpha, sigma)`` row used to predict
        each index (NaN during warm-up).
    residuals, residual_covs, gains : ndarray or None
        Per-step diagnostics when requested (row 0 / warm-up rows are NaN).
    warnings : list of str
        Refit failures absorbed during the run.
    """

    observations: StatePath
    filtered: StatePath
    predicted: np.ndarray
    params: np.ndarray | None = None
    residuals: np.ndarray | None = None
    residual_covs: np.ndarray | None = None
    gains: np.ndarray | None = None
    warnings: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.filtered)

    def to_csv(self, target: str | PathLike | io.TextIOBase, diagnostics: bool = False) -> None:
        header = ["t", "observation", "filtered"]
        cols = [self.observations.times, self.observations.values, self.filtered.values]
        if diagnostics:
            if self.residuals is None:
                raise ValueError("run was made without diagnostics")
            header += ["residual", "gain_11", "gain_22"]
            cols += [self.residuals[:, 1], self.gains[:, 0, 0], self.gains[:, 1, 1]]
        if isinstance(target, io.TextIOBase):
            _write(target, header, cols)
        else:
            with open(target, "w", newline="", encoding="utf-8") as fh:
                _write(fh, header, cols)


def _write(fh, header, cols) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    for row in zip(*cols):
        writer.writerow([_fmt(x) for x in row])


class _Recorder:
    def __init__(self, n: int, enabled: bool):
        self.enabled = enabled
        if enabled:
            self.residuals = np.full((n, 2), np.nan)
            self.covs = np.full((n, 2, 2), np.nan)
            self.gains = np.full((n, 2, 2), np.nan)

    def put(self, k: int, diag: StepDiagnostics) -> None:
        if self.enabled:
            self.residuals[k] = diag.residual
            self.covs[k] = diag.residual_cov
            self.gains[k] = diag.gain

    def fields(self) -> dict:
        if not self.enabled:
            return {}
        return {"residuals": self.residuals, "residual_covs": self.covs, "gains": self.gains}


def kalman_filter(
    observations: StatePath,
    model: StateSpaceModel,
    *,
    legacy_update: bool = False,
    diagnostics: bool = False,
    initial_cov: np.ndarray | None = None,
) -> FilterRun:
    """Run the filter with fixed matrices over the whole series.

    The first posterior is the first observation and the initial covariance
    defaults to ``sigma_p^2 I``.
    """
    x = np.asarray(observations.values, dtype=float)
    n = x.size
    if n < 1:
        raise InsufficientDataError("need at least one observation")
    filtered = np.empty(n)
    predicted = np.full(n, np.nan)
    rec = _Recorder(n, diagnostics)

    P0 = model.Q.copy() if initial_cov is None else np.asarray(initial_cov, dtype=float)
    state = KalmanState(np.array([1.0, x[0]]), P0)
    filtered[0] = x[0]
    for k in range(1, n):
        prior = predict(state, model)
        predicted[k] = prior.z[1]
        state, diag = update(prior, np.array([1.0, x[k]]), model, state if legacy_update else None)
        filtered[k] = state.z[1]
        rec.put(k, diag)
    return FilterRun(observations, observations.with_values(filtered), predicted, **rec.fields())


@dataclass(frozen=True)
class RecursiveConfig:
    """Settings for :func:`kalman_filter_recursive`.

    ``start_index`` points are used for the first estimate; after step
    ``lookback`` the OU parameters are refitted on the trailing ``lookback``
    observations at every step.
    """

    sigma_o: float
    start_index: int = 30
    lookback: int = 30
    initial_guess: OUParams = OUParams(170.0, 3.0, 0.1)
    estimation: EstimationConfig | None = None

    def __post_init__(self):
        if not (math.isfinite(self.sigma_o) and self.sigma_o >= 0):
            raise ParameterDomainError("sigma_o must be finite and >= 0")
        if int(self.start_index) != self.start_index or self.start_index < 3:
            raise ParameterDomainError("start_index must be an integer >= 3")
        if int(self.lookback) != self.lookback or self.lookback < 10:
            raise ParameterDomainError("lookback must be an integer >= 10")


def kalman_filter_recursive(
    observations: StatePath,
    config: RecursiveConfig,
    *,
    legacy_update: bool = False,
    diagnostics: bool = False,
) -> FilterRun:
    """Filter with OU parameters re-estimated over a trailing window.

    Step ``i -> i+1`` predicts and updates with the current model. Once
    ``i > lookback`` the parameters are refitted on the ``lookback`` most
    recent observations (through index ``i+1``), warm-started from the
    previous estimate, and the matrices are rebuilt for the next step. The
    covariance ``P`` carries over across refits. A failed refit keeps the
    previous parameters and emits :class:`EstimationWarning`.
    """
    x = np.asarray(observations.values, dtype=float)
    n = x.size
    start, tb = int(config.start_index), int(config.lookback)
    if n <= start:
        raise InsufficientDataError(f"need more than start_index={start} observations, got {n}")
    dt = observations.dt
    est = config.estimation or EstimationConfig(config.initial_guess)

    params = _fit_array(x[:start], dt, config.initial_guess.as_tuple(), est).params
    model = build_state_space(params, dt, config.sigma_o)

    filtered = x.copy()
    predicted = np.full(n, np.nan)
    history = np.full((n, 3), np.nan)
    rec = _Recorder(n, diagnostics)
    notes: list[str] = []

    state = KalmanState(np.array([1.0, x[start - 1]]), model.Q.copy())
    for i in range(start - 1, n - 1):
        prior = predict(state, model)
        predicted[i + 1] = prior.z[1]
        history[i + 1] = params.as_tuple()
        state, diag = update(prior, np.array([1.0, x[i + 1]]), model, state if legacy_update else None)
        filtered[i + 1] = state.z[1]
        rec.put(i + 1, diag)

        if i > tb:
            window = x[i + 2 - tb:i + 2]
            try:
                params = _fit_array(window, dt, params.as_tuple(), est).params
            except EstimationError as exc:
                msg = f"refit at index {i + 1} failed ({exc}); keeping {params}"
                notes.append(msg)
                warnings.warn(msg, EstimationWarning, stacklevel=2)
            model = build_state_space(params, dt, config.sigma_o)

    return FilterRun(
        observations,
        observations.with_values(filtered),
        predicted,
        params=history,
        warnings=notes,
        **rec.fields(),
    )


def check_alignment(run: FilterRun, n: int) -> None:
    if len(run) != n:
        raise AlignmentError(f"filter run has {len(run)} points, expected {n}")
