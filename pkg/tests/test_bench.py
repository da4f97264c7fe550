import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ucfem.bench import ConfigError, ExperimentConfig, fit_rate, run_experiment
from ucfem.bench.experiment import (CSV_HEADER, balance_log_ratio, coupling_gamma, export_solution,
                                    snap_nx, target_h)
from ucfem.bench.rates import loglog_slope


def test_fit_rate_exact():
    recs = [(N, 7.0 * N ** -0.4) for N in (100, 200, 400, 800)]
    slope, se = fit_rate(recs)
    assert abs(slope + 0.4) <= 1e-12
    assert se < 1e-10


def test_fit_rate_noisy_within_three_stderr():
    rng = np.random.default_rng(0)
    Ns = np.repeat(2 ** np.arange(6, 14), 4)
    recs = [(n, 3.0 * n ** -0.5 * (1 + 0.01 * rng.standard_normal())) for n in Ns]
    slope, se = fit_rate(recs)
    assert abs(slope + 0.5) <= 3 * se


def test_fit_rate_averages_replicates_in_log_space():
    recs = [(10, 1.0), (10, 4.0), (20, 1.0), (40, 0.5)]
    a = fit_rate(recs)[0]
    b = fit_rate([(10, 2.0), (20, 1.0), (40, 0.5)])[0]
    assert a == pytest.approx(b, rel=1e-12)


@pytest.mark.parametrize("recs", [[(10, 1.0), (20, 0.5)], [(10, 1.0), (10, 2.0), (20, 1.0)],
                                  [(10, 1.0), (20, 0.0), (40, 1.0)], [(10, 1.0), (20, -1.0), (40, 1.0)]])
def test_fit_rate_rejects(recs):
    with pytest.raises(ValueError):
        fit_rate(recs)


def test_loglog_slope():
    assert loglog_slope([1, 2, 4], [1, 4, 16]) == pytest.approx(2.0)


def test_config_defaults_and_roundtrip():
    cfg = ExperimentConfig()
    back = ExperimentConfig.from_text(cfg.to_text())
    assert back == cfg
    cfg2 = ExperimentConfig.from_text("N_schedule = 2^8, 2^9, 2^10\nbeta = 0  # comment\n")
    assert cfg2.N_schedule == [256, 512, 1024] and cfg2.beta == 0


@pytest.mark.parametrize("text,line", [
    ("alpha = 2\nbogus = 1\n", 2),
    ("alpha = 2\nalpha = 3\n", 2),
    ("\n\nsigma = abc\n", 3),
    ("just words\n", 1),
    ("omega = 0, 1, 0\n", 1),
    ("timing = maybe\n", 1),
])
def test_config_errors_carry_line(text, line):
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_text(text, path="x.cfg")
    assert exc.value.line == line
    assert str(exc.value).startswith(f"x.cfg:{line}: ")


@pytest.mark.parametrize("text", [
    "alpha = 1\n", "beta = 2\n", "N_schedule = 100, 50, 200\n", "replicates = 0\n",
    "coupling = fixed_h\n", "sigma = 0\n", "method = magic\n", "degree = 3\n", "truth_id = nope\n",
    "omega = 0.5, 0.25, 0, 1\n",
])
def test_config_validation(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text(text)


def test_zero_sigma_needs_coupling_sigma():
    cfg = ExperimentConfig.from_text("sigma = 0\ncoupling_sigma = 0.1\n")
    assert cfg.effective_coupling_sigma == 0.1


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        ExperimentConfig.load("/nonexistent/cfg")


def test_snap_nx():
    assert snap_nx(1.0) == 4
    assert snap_nx(math.sqrt(2) / 8) == 8
    assert snap_nx(math.sqrt(2) / 8 * 0.999) == 16
    with pytest.raises(ConfigError):
        snap_nx(1e-3, nx_max=64)
    with pytest.raises(ConfigError):
        snap_nx(0.0)


def test_target_h_balanced_formula():
    cfg = ExperimentConfig(alpha=2.0, beta=1, sigma=0.1, c0=0.5)
    assert coupling_gamma(2.0, 1) == 2.0
    assert target_h(cfg, 1000) == pytest.approx(0.5 * (0.01 / 1000) ** (1 / 6))
    slack = ExperimentConfig(coupling="fixed_slack", sigma=0.1, alpha=2.0, beta=0)
    assert target_h(slack, 1000) == pytest.approx((0.01 * math.log(1000) / 1000) ** (1 / 4))
    assert target_h(ExperimentConfig(coupling="fixed_h", h=0.2), 10 ** 6) == 0.2


@given(st.floats(1.2, 4.0), st.sampled_from([0, 1]), st.floats(0.01, 1.0), st.floats(0.2, 3.0),
       st.integers(10, 10 ** 7))
def test_balanced_log_ratio_within_snapping_factor(alpha, beta, sigma, c0, N):
    cfg = ExperimentConfig(alpha=alpha, beta=beta, sigma=sigma, c0=c0, nx_max=2 ** 30)
    nx = snap_nx(target_h(cfg, N), nx_max=2 ** 30)
    lr = balance_log_ratio(cfg, N, math.sqrt(2) / nx)
    bound = (2 * coupling_gamma(alpha, beta) + 2) * math.log(2)
    if nx > 4:
        assert -1e-9 <= lr < bound + 1e-9
    else:
        # clamped at the coarsest mesh: h is below target, only the lower bound holds
        assert lr >= -1e-9


SMALL = dict(N_schedule=[100, 200, 400], replicates=2, nx_max=16, c0=2.0)


def test_run_records_and_sidecar(tmp_path):
    cfg = ExperimentConfig(**SMALL, method="both", timing=True)
    rep = run_experiment(cfg)
    assert len(rep.records) == 6 and len(rep.spectral_records) == 6
    assert all(r["seed"] == rep.records[r["replicate"]]["seed"] for r in rep.records)
    assert rep.passed
    paths = rep.write(tmp_path / "r.csv")
    assert [p.name for p in paths] == ["r.csv", "r_spectral.csv", "r.json"]
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == ",".join(CSV_HEADER)
    side = json.loads((tmp_path / "r.json").read_text())
    assert set(side["slopes"]) >= {"l2_B", "h1_B", "l2_omega"}
    assert {c["name"] for c in side["checks"]} == {"saddle_residual", "balanced_coupling_log_ratio"}
    assert side["config"]["N_schedule"] == [100, 200, 400]


def test_run_deterministic():
    cfg = ExperimentConfig(**SMALL)
    assert run_experiment(cfg).csv_text() == run_experiment(cfg).csv_text()
    other = run_experiment(cfg.replace(seed=1)).csv_text()
    assert other != run_experiment(cfg).csv_text()


def test_noise_free_errors_decrease():
    # without noise the error is pure bias, so the schedule is spaced to refine nx at every step
    cfg = ExperimentConfig(sigma=0.0, coupling_sigma=0.1, beta=0, N_schedule=[64, 1024, 16384],
                           trace=False)
    rep = run_experiment(cfg)
    assert [r["nx"] for r in rep.records] == [16, 32, 64]
    for key in ("l2_B", "h1_B"):
        _, means = rep.mean_errors(key)
        assert all(b < a for a, b in zip(means, means[1:]))


def test_nx_cap_is_config_error():
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig(N_schedule=[10 ** 6], nx_max=8, c0=0.1))


def test_solver_failure_gives_partial_report(monkeypatch):
    from ucfem import solve
    monkeypatch.setattr(solve, "RESIDUAL_RTOL", 1e-300)
    rep = run_experiment(ExperimentConfig(**SMALL))
    assert rep.partial and "SolverError" in rep.error and not rep.passed


def test_diagonal_noise_runs():
    rep = run_experiment(ExperimentConfig(**SMALL, noise="diagonal"))
    assert not rep.partial and all(r["expected_triple_norm"] > 0 for r in rep.records)


def test_export_solution(tmp_path):
    sol, errs = export_solution(ExperimentConfig(nx_max=16), 200, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "dof,x,y,value"
    assert len(lines) == sol.u.space.dof_count + 1
    assert errs["l2_B"] > 0
