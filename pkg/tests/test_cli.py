import subprocess
import sys

import numpy as np
import pytest

from conftest import FIXTURE
from meanrev.backtest import run_recursive_backtest
from meanrev.cli import UsageError, main, read_config
from meanrev.heston import rho_grid_search, sample_moments, solve_mom
from meanrev.kalman import RecursiveConfig, kalman_filter_recursive
from meanrev.marketdata import load_csv, ratio_series
from meanrev.sde import HestonParams, OUParams, SimGrid, StatePath, heston_paths, simulate_ou_em, simulate_ou_exact

OU_FLAGS = ["--mu", "0.5", "--alpha", "3", "--sigma", "0.5", "--x0", "2", "--t", "1", "--n", "1000"]


def _run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestSimulateOU:
    def test_exact_thin_adapter(self, tmp_path, capsys):
        out = tmp_path / "path.csv"
        code, stdout, _ = _run(["simulate-ou", *OU_FLAGS, "--scheme", "exact", "--seed", "605", "--out", str(out)], capsys)
        assert code == 0
        assert len(stdout.strip().splitlines()) == 1
        ref = tmp_path / "ref.csv"
        simulate_ou_exact(OUParams(0.5, 3, 0.5), 2.0, SimGrid(1.0, 1000), 605).to_csv(ref)
        assert out.read_bytes() == ref.read_bytes()
        assert len(out.read_text().splitlines()) == 1002

    def test_em_scheme(self, tmp_path, capsys):
        out = tmp_path / "em.csv"
        assert _run(["simulate-ou", *OU_FLAGS, "--scheme", "em", "--seed", "306", "--out", str(out)], capsys)[0] == 0
        assert StatePath.from_csv(out) == simulate_ou_em(OUParams(0.5, 3, 0.5), 2.0, SimGrid(1.0, 1000), 306)

    def test_missing_sigma_is_usage_error(self, tmp_path, capsys):
        argv = ["simulate-ou", "--mu", "0.5", "--alpha", "3", "--x0", "2", "--out", str(tmp_path / "x.csv")]
        code, _, err = _run(argv, capsys)
        assert code == 2
        assert "usage" in err and "--sigma" in err

    def test_invalid_value_is_usage_error(self, tmp_path, capsys):
        argv = ["simulate-ou", "--mu", "0.5", "--alpha", "-3", "--sigma", "1", "--x0", "2", "--out", str(tmp_path / "x.csv")]
        assert _run(argv, capsys)[0] == 2

    def test_seeded_runs_identical(self, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for target in (a, b):
            _run(["simulate-ou", *OU_FLAGS, "--seed", "7", "--out", str(target), "--plot", str(target) + ".svg"], capsys)
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a.csv.svg").read_bytes() == (tmp_path / "b.csv.svg").read_bytes()


class TestConfig:
    def test_file_values_and_flag_precedence(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# base OU parameters\nmu = 0.5\nalpha = 3\nsigma = 0.9\nx0 = 2\nseed = 11\n")
        out = tmp_path / "p.csv"
        code, _, _ = _run(["simulate-ou", "--config", str(cfg), "--sigma", "0.5", "--out", str(out)], capsys)
        assert code == 0
        expected = simulate_ou_exact(OUParams(0.5, 3, 0.5), 2.0, SimGrid(1.0, 1000), 11)
        assert StatePath.from_csv(out) == expected

    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("colour = blue\n")
        assert _run(["simulate-ou", "--config", str(cfg)], capsys)[0] == 2

    def test_malformed_line(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("just words\n")
        with pytest.raises(UsageError):
            read_config(cfg)

    def test_boolean_key(self, tmp_path, capsys):
        cfg = tmp_path / "k.cfg"
        cfg.write_text("recursive = true\nsigma_o = 0\n")
        out = tmp_path / "k.csv"
        code, stdout, _ = _run(["kalman", "--config", str(cfg), "--input", str(FIXTURE), "--out", str(out)], capsys)
        assert code == 0 and "recursive" in stdout


class TestKalmanCommand:
    def test_zero_noise_copies_input(self, tmp_path, capsys):
        out = tmp_path / "k.csv"
        assert _run(["kalman", "--input", str(FIXTURE), "--sigma-o", "0", "--out", str(out)], capsys)[0] == 0
        rows = np.loadtxt(out, delimiter=",", skiprows=1)
        np.testing.assert_array_equal(rows[:, 1], rows[:, 2])

    def test_recursive_thin_adapter(self, tmp_path, capsys):
        out = tmp_path / "k.csv"
        argv = ["kalman", "--input", str(FIXTURE), "--sigma-o", "20", "--recursive", "--lookback", "30", "--diagnostics", "--out", str(out)]
        assert _run(argv, capsys)[0] == 0
        bars = load_csv(FIXTURE)
        run = kalman_filter_recursive(StatePath(bars.open), RecursiveConfig(20.0, 30, 30, OUParams(170, 3, 0.1)), diagnostics=True)
        ref = tmp_path / "ref.csv"
        run.to_csv(ref, diagnostics=True)
        assert out.read_bytes() == ref.read_bytes()

    def test_fixed_mode_and_plot(self, tmp_path, capsys):
        out, svg = tmp_path / "k.csv", tmp_path / "k.svg"
        argv = ["kalman", "--input", str(FIXTURE), "--sigma-o", "20", "--start-index", "30", "--out", str(out), "--plot", str(svg)]
        code, stdout, _ = _run(argv, capsys)
        assert code == 0 and "fixed" in stdout
        assert svg.read_text().lstrip().startswith("<?xml")

    def test_missing_file(self, tmp_path, capsys):
        assert _run(["kalman", "--input", str(tmp_path / "nope.csv"), "--sigma-o", "1", "--out", str(tmp_path / "o")], capsys)[0] == 2


class TestBacktestCommands:
    def test_backtest_thin_adapter(self, tmp_path, capsys):
        out = tmp_path / "b.csv"
        code, stdout, _ = _run(["backtest", "--input", str(FIXTURE), "--sigma-o", "20", "--lookback", "30", "--out", str(out)], capsys)
        assert code == 0 and "net_return" in stdout and "benchmark_return" in stdout
        _, report = run_recursive_backtest(load_csv(FIXTURE), 20.0, 30, 30, OUParams(170, 3, 0.1))
        ref = tmp_path / "ref.csv"
        report.to_csv(ref)
        assert out.read_bytes() == ref.read_bytes()

    def test_sweep_too_short(self, tmp_path, capsys):
        short = tmp_path / "short.csv"
        short.write_text("\n".join(FIXTURE.read_text().splitlines()[:400]) + "\n")
        code, _, err = _run(["sweep", "--input", str(short), "--holdout", "252", "--out", str(tmp_path / "g.csv")], capsys)
        assert code == 2 and "needs more than" in err


class TestHestonCommands:
    def test_simulate(self, tmp_path, capsys):
        out = tmp_path / "h.csv"
        argv = [
            "heston", "simulate", "--s0", "100", "--mu", "0.05", "--alpha", "2", "--theta", "0.02", "--v0", "0.01",
            "--rho", "-0.7", "--xi", "0.1", "--steps", "500", "--paths", "5", "--seed", "42", "--out", str(out),
        ]
        assert _run(argv, capsys)[0] == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "t,path,price,variance" and len(lines) == 1 + 5 * 501
        prices, _ = heston_paths(HestonParams(0.05, 0.02, 2.0, 0.1, -0.7), 100.0, 0.01, SimGrid(1.0, 500), 5, 42)
        assert float(lines[-1].split(",")[2]) == prices[4, -1]

    def test_mom_fit_and_reconstruct(self, tmp_path, capsys):
        three = tmp_path / "aapl3y.csv"
        bars = load_csv(FIXTURE)
        bars[len(bars) - 756:].to_csv(three)
        out = tmp_path / "mom.csv"
        code, stdout, _ = _run(["heston", "mom-fit", "--input", str(three), "--column", "open", "--out", str(out)], capsys)
        assert code == 0 and stdout.startswith("mu=")
        assert out.read_text().splitlines()[0].startswith("mu,theta,alpha,xi")

        path, curve = tmp_path / "r.csv", tmp_path / "c.csv"
        argv = ["heston", "reconstruct", "--input", str(three), "--rho-search", "--seed", "42", "--out", str(path), "--curve", str(curve)]
        code, stdout, _ = _run(argv, capsys)
        assert code == 0
        opens = load_csv(three).open
        ref = rho_grid_search(solve_mom(sample_moments(ratio_series(opens))), opens, seed=42)
        assert stdout.strip() == f"rho_star={ref.rho_star:.6g} sae={ref.sae:.6g} mean_abs_error={ref.sae / opens.size:.6g}"
        assert len(curve.read_text().splitlines()) == 2001

    def test_failed_fit_exit_code(self, tmp_path, capsys):
        three = tmp_path / "aapl3y.csv"
        bars = load_csv(FIXTURE)
        bars[len(bars) - 756:].to_csv(three)
        code, _, err = _run(["heston", "mom-fit", "--input", str(three), "--column", "close"], capsys)
        assert code == 1 and "did not converge" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "meanrev", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "simulate-ou" in proc.stdout
