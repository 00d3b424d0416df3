"""Long/short day trading on Kalman predictions, and the parameter sweep.

Each traded day opens a 100-share position at the open and closes it at the
close. The position is long when the a-priori filter prediction for that
day exceeds the open (the model expects the price to rise back towards its
mean) and short otherwise, ties included. Transaction costs are zero.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from os import PathLike

import numpy as np

from .errors import AlignmentError, EstimationError, InsufficientDataError, ParameterDomainError
from .kalman import FilterRun, RecursiveConfig, kalman_filter_recursive
from .marketdata import DailyBarSeries
from .sde import OUParams, StatePath

log = logging.getLogger(__name__)

LOT = 100
SWEEP_GUESS = OUParams(50.0, 3.0, 0.1)


@dataclass(eq=False)
class BacktestReport:
    """Outcome of :func:`run_strategy`.

    Attributes
    ----------
    dates : ndarray
        Traded days.
    positions : ndarray of int
        +1 for long, -1 for short, one per traded day.
    daily_pnl, profit_series : ndarray
        Per-day and cumulative profit in currency units.
    capital : float
        ``LOT`` times the open on the first day of the traded segment.
    net_return : float
        Final profit over ``capital``.
    benchmark_return : float
        Buy-and-hold return over the same segment.
    """

    dates: np.ndarray
    positions: np.ndarray
    daily_pnl: np.ndarray
    profit_series: np.ndarray
    capital: float
    net_return: float
    benchmark_return: float

    @property
    def trade_count(self) -> int:
        return int(self.positions.size)

    @property
    def final_profit(self) -> float:
        return float(self.profit_series[-1]) if self.profit_series.size else 0.0

    def to_csv(self, target: str | PathLike | io.TextIOBase) -> None:
        def emit(fh):
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["date", "position", "daily_pnl", "cumulative_pnl"])
            for d, s, p, c in zip(self.dates, self.positions, self.daily_pnl, self.profit_series):
                writer.writerow([str(d), int(s), format(p, ".17g"), format(c, ".17g")])

        if isinstance(target, io.TextIOBase):
            emit(target)
        else:
            with open(target, "w", newline="", encoding="utf-8") as fh:
                emit(fh)


def buy_hold_return(bars: DailyBarSeries) -> float:
    """``(last close - first open) / first open``."""
    if len(bars) < 1:
        raise InsufficientDataError("need at least one bar")
    return float((bars.close[-1] - bars.open[0]) / bars.open[0])


def run_strategy(bars: DailyBarSeries, predictions: FilterRun, start_index: int) -> BacktestReport:
    """Trade every day after ``start_index`` on the a-priori predictions.

    ``predictions`` must come from filtering ``bars.open`` so that index
    ``i`` of the run refers to bar ``i``. The capital base and benchmark use
    the open at ``start_index``.
    """
    n = len(bars)
    if len(predictions) != n:
        raise AlignmentError(f"{len(predictions)} predictions for {n} bars")
    if not 0 <= start_index < n:
        raise ParameterDomainError(f"start_index must lie in [0, {n}), got {start_index}")
    days = slice(start_index + 1, n)
    signal = predictions.predicted[days]
    if np.any(np.isnan(signal)):
        raise AlignmentError("missing prediction inside the traded segment")

    opens, closes = bars.open[days], bars.close[days]
    positions = np.where(signal > opens, 1, -1)
    daily = positions * LOT * (closes - opens)
    cumulative = np.empty_like(daily)
    total = 0.0
    for k, pnl in enumerate(daily):
        total += pnl
        cumulative[k] = total

    capital = LOT * float(bars.open[start_index])
    return BacktestReport(
        dates=bars.dates[days],
        positions=positions,
        daily_pnl=daily,
        profit_series=cumulative,
        capital=capital,
        net_return=total / capital,
        benchmark_return=buy_hold_return(bars[start_index:]),
    )


def run_recursive_backtest(
    bars: DailyBarSeries,
    sigma_o: float,
    lookback: int,
    start_index: int = 30,
    initial_guess: OUParams = SWEEP_GUESS,
    legacy_update: bool = False,
) -> tuple[FilterRun, BacktestReport]:
    """Filter the opens with windowed refits, then trade on the result."""
    config = RecursiveConfig(
        sigma_o=sigma_o,
        start_index=start_index,
        lookback=lookback,
        initial_guess=initial_guess,
    )
    run = kalman_filter_recursive(StatePath(bars.open, 1.0), config, legacy_update=legacy_update)
    return run, run_strategy(bars, run, start_index)


def default_sigma_o_values() -> np.ndarray:
    return np.logspace(-2, 2, 20)


def default_t_b_values() -> np.ndarray:
    return np.arange(20, 201, 30)


@dataclass(eq=False)
class SweepGrid:
    """Net returns over the (sigma_o, lookback) grid.

    ``profits[j, i]`` is the net return for ``t_b_values[j]`` and
    ``sigma_o_values[i]``; failed cells hold NaN.
    """

    sigma_o_values: np.ndarray
    t_b_values: np.ndarray
    profits: np.ndarray
    failures: list = field(default_factory=list)

    @property
    def argmax_index(self) -> tuple[int, int]:
        """(t_b row, sigma_o column) of the best cell; ties go to the
        smallest sigma_o, then the smallest t_b."""
        finite = np.where(np.isnan(self.profits), -np.inf, self.profits)
        best = finite.max()
        rows, cols = np.nonzero(finite == best)
        order = np.lexsort((rows, cols))
        k = order[0]
        return int(rows[k]), int(cols[k])

    @property
    def argmax(self) -> tuple[float, int]:
        j, i = self.argmax_index
        return float(self.sigma_o_values[i]), int(self.t_b_values[j])

    @property
    def best_return(self) -> float:
        j, i = self.argmax_index
        return float(self.profits[j, i])

    def to_csv(self, target: str | PathLike) -> None:
        with open(target, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t_b\\sigma_o"] + [format(s, ".17g") for s in self.sigma_o_values])
            for tb, row in zip(self.t_b_values, self.profits):
                writer.writerow([int(tb)] + [f"{100 * p:.6f}" for p in row])


def _cell(args) -> tuple[float, str | None]:
    bars, sigma_o, t_b, start_index, guess = args
    try:
        _, report = run_recursive_backtest(bars, sigma_o, t_b, start_index, guess)
    except EstimationError as exc:
        return float("nan"), f"sigma_o={sigma_o:g}, t_b={t_b}: {exc}"
    return report.net_return, None


def parameter_sweep(
    bars: DailyBarSeries,
    sigma_o_values=None,
    t_b_values=None,
    holdout_days: int = 252,
    start_index: int = 30,
    initial_guess: OUParams = SWEEP_GUESS,
    threads: int = 1,
) -> SweepGrid:
    """Backtest every (sigma_o, t_b) pair on all but the last ``holdout_days``.

    The holdout rows are dropped before any cell runs. Cells are independent
    and may be spread over ``threads`` worker processes; results do not
    depend on the worker count.
    """
    so = default_sigma_o_values() if sigma_o_values is None else np.asarray(sigma_o_values, dtype=float)
    tb = default_t_b_values() if t_b_values is None else np.asarray(t_b_values, dtype=int)
    if so.size == 0 or tb.size == 0:
        raise ParameterDomainError("grid axes must be non-empty")
    if holdout_days < 0:
        raise ParameterDomainError("holdout_days must be >= 0")
    need = holdout_days + int(tb.max()) + start_index
    if len(bars) <= need:
        raise InsufficientDataError(
            f"sweep needs more than {need} bars (holdout {holdout_days} + max t_b {int(tb.max())}"
            f" + start_index {start_index}), got {len(bars)}"
        )
    train = bars[: len(bars) - holdout_days]

    jobs = [(train, float(s), int(t), start_index, initial_guess) for t in tb for s in so]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_cell, jobs))
    else:
        results = [_cell(job) for job in jobs]

    profits = np.array([r[0] for r in results]).reshape(tb.size, so.size)
    failures = [r[1] for r in results if r[1] is not None]
    for msg in failures:
        log.warning("sweep cell failed: %s", msg)
    return SweepGrid(so, tb, profits, failures)


def evaluate_holdout(
    bars: DailyBarSeries,
    sigma_o: float,
    lookback: int,
    holdout_days: int = 252,
    start_index: int = 30,
    initial_guess: OUParams = SWEEP_GUESS,
) -> BacktestReport:
    """Run the strategy on the final ``holdout_days`` bars alone."""
    if holdout_days <= start_index:
        raise InsufficientDataError("holdout must be longer than the warm-up")
    _, report = run_recursive_backtest(bars[len(bars) - holdout_days:], sigma_o, lookback, start_index, initial_guess)
    return report
