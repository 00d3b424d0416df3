"""Generate the synthetic daily-bar fixture used by the regression tests.

The series is a geometric random walk with a slow mean-reverting component
in log price and an overnight gap between each close and the next open. It
is deterministic for a given seed.

    python scripts/make_fixture.py tests/data/aapl_fixture.csv
"""

import argparse

import numpy as np

from meanrev.marketdata import DailyBarSeries

SEED = 20200102
N_DAYS = 1008


def make_series(seed: int = SEED, n: int = N_DAYS, s0: float = 130.0) -> DailyBarSeries:
    rng = np.random.default_rng(seed)
    dates = np.busday_offset(np.datetime64("2020-01-02"), np.arange(n), roll="forward")
    trend = np.log(s0) + 0.0004 * np.arange(n)
    dev = np.zeros(n)
    for k in range(1, n):
        dev[k] = 0.97 * dev[k - 1] + 0.015 * rng.standard_normal()
    close = np.exp(trend + dev)
    gaps = 0.006 * rng.standard_normal(n)
    prev = np.concatenate([[s0], close[:-1]])
    opens = prev * np.exp(gaps)
    return DailyBarSeries(dates, np.round(opens, 2), np.round(close, 2))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out")
    parser.add_argument("--seed", type=int, default=SEED)
    args = parser.parse_args()
    make_series(args.seed).to_csv(args.out)


if __name__ == "__main__":
    main()
