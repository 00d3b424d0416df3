"""Command-line entry point.

Every subcommand reads its inputs, calls the library once, writes CSV (and
optionally SVG) results and prints a one-line summary on stdout. Options can
also come from a ``--config`` file of ``key = value`` lines; flags given on
the command line win.

Exit status is 0 on success, 1 when a computation fails and 2 for usage or
input validation errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import backtest as bt
from . import heston as hm
from .errors import EstimationError, FilterError, InsufficientDataError, ValidationError
from .estimate import EstimationConfig, fit_ou
from .kalman import RecursiveConfig, build_state_space, kalman_filter, kalman_filter_recursive
from .marketdata import load_csv, ratio_series
from .sde import (
    SEED_LIMIT,
    HestonParams,
    OUParams,
    SimGrid,
    StatePath,
    heston_paths,
    simulate_ou_em,
    simulate_ou_exact,
)

log = logging.getLogger("meanrev")


class UsageError(Exception):
    """Bad or missing options; maps to exit status 2."""


# -- config handling -----------------------------------------------------------


def read_config(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _apply_config(parser: argparse.ArgumentParser, values: dict[str, str]) -> None:
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            low = value.lower()
            if low not in _TRUE | _FALSE:
                raise UsageError(f"config key {key!r} expects a boolean, got {value!r}")
            defaults[key] = low in _TRUE
        else:
            # argparse runs the option's type over string defaults
            defaults[key] = value
    parser.set_defaults(**defaults)


def _require(args, *names: str) -> None:
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = int(np.random.SeedSequence().entropy % SEED_LIMIT)
    log.warning("no --seed given; using %d", seed)
    return seed


def _seed_type(text: str) -> int:
    value = int(text)
    if not 0 <= value < SEED_LIMIT:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return value


# -- input helpers -------------------------------------------------------------


def _read_series(path: str, column: str) -> tuple[StatePath, np.ndarray | None]:
    """A price column from a bar file, or a ``t,value`` path file."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
    if header == "t,value":
        return StatePath.from_csv(path), None
    bars = load_csv(path)
    return StatePath(bars.column(column), 1.0), bars.dates


def _ou_guess(args) -> OUParams:
    return OUParams(args.mu0, args.alpha0, args.sigma0)


# -- commands ------------------------------------------------------------------


def cmd_simulate_ou(args) -> str:
    _require(args, "mu", "alpha", "sigma", "x0", "out")
    params = OUParams(args.mu, args.alpha, args.sigma)
    grid = SimGrid(args.t, args.n)
    simulate = simulate_ou_exact if args.scheme == "exact" else simulate_ou_em
    path = simulate(params, args.x0, grid, _seed(args))
    path.to_csv(args.out)
    if args.plot:
        from .plotting import line_chart

        line_chart(args.plot, path.times, {"X": path.values}, title=f"OU path ({args.scheme})", xlabel="t")
    return f"wrote {len(path)} points to {args.out} (final value {path.values[-1]:.6g})"


def cmd_estimate_ou(args) -> str:
    _require(args, "input")
    path, _ = _read_series(args.input, args.column)
    config = EstimationConfig(_ou_guess(args))
    fit = fit_ou(config, path)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("mu,alpha,sigma,loglik,iterations\n")
            p = fit.params
            fh.write(",".join(format(v, ".17g") for v in (p.mu, p.alpha, p.sigma, fit.loglik)) + f",{fit.iterations}\n")
    p = fit.params
    return f"mu={p.mu:.6g} alpha={p.alpha:.6g} sigma={p.sigma:.6g} loglik={fit.loglik:.6g}"


def cmd_kalman(args) -> str:
    _require(args, "input", "sigma_o", "out")
    path, _ = _read_series(args.input, args.column)
    if args.recursive:
        config = RecursiveConfig(args.sigma_o, args.start_index, args.lookback, _ou_guess(args))
        run = kalman_filter_recursive(path, config, legacy_update=args.legacy_update, diagnostics=args.diagnostics)
        detail = f"recursive, lookback {args.lookback}"
    else:
        fixed = (args.mu, args.alpha, args.sigma)
        if all(v is not None for v in fixed):
            params = OUParams(*fixed)
        else:
            head = StatePath(path.values[: args.start_index], path.dt, path.t0)
            params = fit_ou(EstimationConfig(_ou_guess(args)), head).params
        model = build_state_space(params, path.dt, args.sigma_o)
        run = kalman_filter(path, model, legacy_update=args.legacy_update, diagnostics=args.diagnostics)
        detail = f"fixed mu={params.mu:.6g} alpha={params.alpha:.6g} sigma={params.sigma:.6g}"
    run.to_csv(args.out, diagnostics=args.diagnostics)
    if args.plot:
        from .plotting import line_chart

        line_chart(
            args.plot,
            path.times,
            {"observed": path.values, "filtered": run.filtered.values},
            title=f"Kalman filter, sigma_o={args.sigma_o:g}",
            xlabel="t",
        )
    gap = float(np.mean(np.abs(run.filtered.values - path.values)))
    return f"filtered {len(run)} points ({detail}); mean |filtered - observed| = {gap:.6g}"


def cmd_backtest(args) -> str:
    _require(args, "input", "sigma_o", "out")
    bars = load_csv(args.input)
    run, report = bt.run_recursive_backtest(
        bars, args.sigma_o, args.lookback, args.start_index, _ou_guess(args), args.legacy_update
    )
    report.to_csv(args.out)
    if args.plot:
        from .plotting import line_chart

        line_chart(args.plot, np.arange(report.trade_count), {"P_t": report.profit_series}, title="Cumulative profit", xlabel="trading day")
    return (
        f"net_return={100 * report.net_return:.4f}% benchmark_return={100 * report.benchmark_return:.4f}%"
        f" trades={report.trade_count} refit_warnings={len(run.warnings)}"
    )


def cmd_sweep(args) -> str:
    _require(args, "input", "out")
    bars = load_csv(args.input)
    grid = bt.parameter_sweep(
        bars,
        holdout_days=args.holdout,
        start_index=args.start_index,
        initial_guess=_ou_guess(args),
        threads=args.threads,
    )
    grid.to_csv(args.out)
    if args.plot:
        from .plotting import heatmap

        heatmap(args.plot, 100 * grid.profits, grid.sigma_o_values, grid.t_b_values, title="Net return (%)")
    sigma_o, t_b = grid.argmax
    line = f"argmax sigma_o={sigma_o:.6g} t_b={t_b} train_return={100 * grid.best_return:.4f}%"
    if args.holdout > args.start_index:
        report = bt.evaluate_holdout(bars, sigma_o, t_b, args.holdout, args.start_index, _ou_guess(args))
        line += f" holdout_return={100 * report.net_return:.4f}%"
    return line


def _mom_inputs(args) -> tuple[np.ndarray, hm.MomSolution]:
    _require(args, "input")
    prices, _ = _read_series(args.input, args.column)
    moments = hm.sample_moments(ratio_series(prices.values))
    initial = None
    if args.alpha0 is not None or args.xi0 is not None:
        _require(args, "alpha0", "xi0")
        initial = (args.alpha0, args.xi0)
    return prices.values, hm.solve_mom(moments, initial)


def cmd_heston_simulate(args) -> str:
    _require(args, "mu", "theta", "alpha", "xi", "out")
    params = HestonParams(args.mu, args.theta, args.alpha, args.xi, args.rho)
    grid = SimGrid(args.t, args.steps)
    prices, variances = heston_paths(params, args.s0, args.v0, grid, args.paths, _seed(args))
    times = grid.times
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("t,path,price,variance\n")
        for k in range(args.paths):
            for t, s, v in zip(times, prices[k], variances[k]):
                fh.write(f"{t:.17g},{k},{s:.17g},{v:.17g}\n")
    if args.plot:
        from .plotting import line_chart

        line_chart(args.plot, times, {f"path {k}": prices[k] for k in range(args.paths)}, title="Heston price paths", xlabel="t")
    return f"wrote {args.paths} path(s) of {grid.n_points} points to {args.out}; mean terminal price {prices[:, -1].mean():.6g}"


def cmd_heston_mom_fit(args) -> str:
    _, sol = _mom_inputs(args)
    if args.out:
        sol.to_csv(args.out)
    flag = "" if sol.valid else " (outside the admissible range)"
    return f"mu={sol.mu:.6g} theta={sol.theta:.6g} alpha={sol.alpha:.6g} xi={sol.xi:.6g}{flag}"


def cmd_heston_reconstruct(args) -> str:
    _require(args, "out")
    truth, sol = _mom_inputs(args)
    seed = _seed(args)
    if args.rho_search:
        result = hm.rho_grid_search(sol, truth, seed, redraw=args.redraw)
        if args.curve:
            result.curve_to_csv(args.curve)
        path = result.reconstructed
        rho = result.rho_star
        sae = result.sae
    else:
        _require(args, "rho")
        rho = args.rho
        path = hm.reconstruct_prices(sol, rho, float(truth[0]), truth.size, seed)
        sae = float(np.sum(np.abs(truth - path.values)))
    path.to_csv(args.out)
    if args.plot:
        from .plotting import line_chart

        line_chart(args.plot, path.times, {"observed": truth, "reconstructed": path.values}, title=f"Heston reconstruction, rho={rho:g}", xlabel="trading day")
    return f"rho_star={rho:.6g} sae={sae:.6g} mean_abs_error={sae / truth.size:.6g}"


# -- parser --------------------------------------------------------------------


def _add_ou_guess(p) -> None:
    p.add_argument("--mu0", type=float, default=170.0, help="initial guess for mu")
    p.add_argument("--alpha0", type=float, default=3.0, help="initial guess for alpha")
    p.add_argument("--sigma0", type=float, default=0.1, help="initial guess for sigma")


def _add_plot(p) -> None:
    p.add_argument("--plot", metavar="SVG", help="also write an SVG chart")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meanrev", description="Mean-reversion modelling and backtesting toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_text, parent=sub):
        p = parent.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", metavar="FILE", help="key = value option file; flags override it")
        p.set_defaults(func=func)
        return p

    p = command("simulate-ou", cmd_simulate_ou, "Simulate one OU path.")
    p.add_argument("--mu", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--x0", type=float)
    p.add_argument("--t", type=float, default=1.0, help="horizon")
    p.add_argument("--n", type=int, default=1000, help="number of steps")
    p.add_argument("--scheme", choices=("exact", "em"), default="exact")
    p.add_argument("--seed", type=_seed_type)
    p.add_argument("--out")
    _add_plot(p)

    p = command("estimate-ou", cmd_estimate_ou, "Fit OU parameters by maximum likelihood.")
    p.add_argument("--input")
    p.add_argument("--column", choices=("open", "close"), default="open")
    p.add_argument("--out")
    _add_ou_guess(p)

    p = command("kalman", cmd_kalman, "Filter a price series.")
    p.add_argument("--input")
    p.add_argument("--column", choices=("open", "close"), default="open")
    p.add_argument("--sigma-o", type=float)
    p.add_argument("--start-index", type=int, default=30)
    p.add_argument("--recursive", action="store_true")
    p.add_argument("--lookback", type=int, default=30)
    p.add_argument("--mu", type=float, help="fixed mu (skip estimation)")
    p.add_argument("--alpha", type=float, help="fixed alpha (skip estimation)")
    p.add_argument("--sigma", type=float, help="fixed sigma (skip estimation)")
    p.add_argument("--legacy-update", action="store_true", help="add the gain correction to the previous posterior")
    p.add_argument("--diagnostics", action="store_true", help="include residual and gain columns")
    p.add_argument("--out")
    _add_ou_guess(p)
    _add_plot(p)

    p = command("backtest", cmd_backtest, "Trade the recursive filter's opening-price predictions.")
    p.add_argument("--input")
    p.add_argument("--sigma-o", type=float)
    p.add_argument("--lookback", type=int, default=30)
    p.add_argument("--start-index", type=int, default=30)
    p.add_argument("--legacy-update", action="store_true")
    p.add_argument("--out")
    _add_ou_guess(p)
    _add_plot(p)

    p = command("sweep", cmd_sweep, "Grid search over sigma_o and lookback, then score the holdout.")
    p.add_argument("--input")
    p.add_argument("--holdout", type=int, default=252)
    p.add_argument("--start-index", type=int, default=30)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    _add_ou_guess(p)
    p.set_defaults(mu0=bt.SWEEP_GUESS.mu, alpha0=bt.SWEEP_GUESS.alpha, sigma0=bt.SWEEP_GUESS.sigma)
    _add_plot(p)

    heston = sub.add_parser("heston", help="Heston model tools.")
    hsub = heston.add_subparsers(dest="action", required=True)

    p = command("simulate", cmd_heston_simulate, "Simulate Heston price and variance paths.", hsub)
    p.add_argument("--s0", type=float, default=100.0)
    p.add_argument("--v0", type=float, default=0.0)
    p.add_argument("--mu", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--xi", type=float)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--t", type=float, default=1.0, help="horizon")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--seed", type=_seed_type)
    p.add_argument("--out")
    _add_plot(p)

    for name, func, text in (
        ("mom-fit", cmd_heston_mom_fit, "Method-of-moments fit on daily price ratios."),
        ("reconstruct", cmd_heston_reconstruct, "Rebuild a price path from a moment fit."),
    ):
        p = command(name, func, text, hsub)
        p.add_argument("--input")
        p.add_argument("--column", choices=("open", "close"), default="open")
        p.add_argument("--alpha0", type=float, help="root-finder start for alpha (default: fitted mu)")
        p.add_argument("--xi0", type=float, help="root-finder start for xi (default: fitted theta)")
        p.add_argument("--out")
        if name == "reconstruct":
            p.add_argument("--rho", type=float)
            p.add_argument("--rho-search", action="store_true")
            p.add_argument("--redraw", action="store_true", help="fresh noise for each rho candidate")
            p.add_argument("--curve", metavar="CSV", help="write the (rho, SAE) curve")
            p.add_argument("--seed", type=_seed_type)
            _add_plot(p)
    return parser


def _find_subparser(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.ArgumentParser:
    current = parser
    for token in argv:
        sub_actions = [a for a in current._actions if isinstance(a, argparse._SubParsersAction)]
        if not sub_actions:
            break
        choice = sub_actions[0].choices.get(token)
        if choice is not None:
            current = choice
    return current


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        if known.config:
            _apply_config(_find_subparser(parser, argv), read_config(known.config))
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"meanrev: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    except OSError as exc:
        print(f"meanrev: error: {exc}", file=sys.stderr)
        return 2

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        print(args.func(args))
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"meanrev: error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, InsufficientDataError, ValueError, OSError) as exc:
        print(f"meanrev: error: {exc}", file=sys.stderr)
        return 2
    except (EstimationError, FilterError, RuntimeError) as exc:
        print(f"meanrev: failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
