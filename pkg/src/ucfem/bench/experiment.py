"""Sample-size sweeps: mesh/sample coupling, replicate solves, error measurement and reports."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import forms, solve
from ..mesh import Rect, build_structured_mesh
from ..observe import NoiseModel, derive_seed, observe
from ..space import error_norms, field_norms
from ..spectral import (HarmonicBasis, SpectralPrior, couple_dimension, degree_for_dimension,
                        solve_spectral_map)
from ..truth import builtin_truth
from .config import ConfigError, ExperimentConfig
from .rates import fit_rate

CSV_HEADER = ["N", "h", "nx", "dofs", "replicate", "seed", "l2_B", "h1_B", "l2_omega",
              "expected_triple_norm", "wall_time_s"]
DIM = 2


# ---------------------------------------------------------------------------
# coupling
# ---------------------------------------------------------------------------

def coupling_gamma(alpha: float, beta: int) -> float:
    """Exponent of the bias term ``h^(2 gamma)``, ``gamma = alpha - 1 + beta``."""
    return alpha - 1.0 + beta


def slack(N: int, schedule: str = "log", eps: float = 0.1) -> float:
    if schedule == "log":
        return 1.0 / math.log(N)
    return float(N) ** (-eps)


def target_h(config: ExperimentConfig, N: int) -> float:
    """Unsnapped mesh size for sample count ``N``."""
    if config.coupling == "fixed_h":
        return config.h
    g = coupling_gamma(config.alpha, config.beta)
    s2 = config.effective_coupling_sigma ** 2
    eff_N = N if config.coupling == "balanced" else N * slack(N, config.l_schedule, config.eps)
    return config.c0 * (s2 / eff_N) ** (1.0 / (2.0 * g + DIM))


def snap_nx(h_target: float, domain=(0.0, 1.0, 0.0, 1.0), nx_max: int = 256) -> int:
    """Smallest ``nx = 4 * 2^k`` whose cell diameter does not exceed ``h_target``."""
    if not h_target > 0:
        raise ConfigError(f"coupling produced a non-positive mesh size {h_target!r}")
    d = Rect.coerce(domain)
    diag = math.hypot(d.x1 - d.x0, d.y1 - d.y0)
    nx = 4
    while diag / nx > h_target * (1 + 1e-12):
        nx *= 2
        if nx > nx_max:
            raise ConfigError(f"coupling needs nx > nx_max={nx_max} (target h={h_target:.3g})")
    return nx


def balance_log_ratio(config: ExperimentConfig, N: int, h: float) -> float:
    """``log(sigma^2 / (N h^d)) - log(h^(2 gamma))`` shifted by the ``c0`` offset.

    For a snapped balanced mesh (not clamped at nx = 4) the value lies in
    ``[0, (2 gamma + d) log 2)``.
    """
    g = coupling_gamma(config.alpha, config.beta)
    s2 = config.effective_coupling_sigma ** 2
    eff_N = N if config.coupling == "balanced" else N * slack(N, config.l_schedule, config.eps)
    var = s2 / (eff_N * h ** DIM)
    bias = h ** (2 * g)
    return math.log(var / bias) + (2 * g + DIM) * math.log(config.c0)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class RateReport:
    config: dict
    records: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    spectral_records: list = field(default_factory=list)
    spectral_slopes: dict = field(default_factory=dict)
    partial: bool = False
    error: str | None = None
    total_time_s: float = 0.0

    def mean_errors(self, key: str, spectral: bool = False) -> tuple:
        recs = self.spectral_records if spectral else self.records
        Ns = sorted({r["N"] for r in recs})
        means = [float(np.mean([r[key] for r in recs if r["N"] == n])) for n in Ns]
        return Ns, means

    @property
    def passed(self) -> bool:
        return not self.partial and all(c["pass"] for c in self.checks)

    def csv_text(self, spectral: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in (self.spectral_records if spectral else self.records):
            w.writerow([_fmt(r[k]) for k in CSV_HEADER])
        return buf.getvalue()

    def sidecar(self) -> dict:
        out = {"config": self.config, "slopes": self.slopes, "checks": self.checks,
               "partial": self.partial, "error": self.error}
        if self.spectral_records:
            out["spectral_slopes"] = self.spectral_slopes
        if self.config.get("timing"):
            out["total_time_s"] = self.total_time_s
        return out

    def write(self, path) -> list:
        """Write CSV (+ spectral CSV when both methods ran) and the JSON sidecar; returns paths."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        written = []
        method = self.config.get("method", "fem")
        main_spectral = method == "spectral"
        path.write_text(self.csv_text(spectral=main_spectral))
        written.append(path)
        if method == "both":
            sp_path = path.with_name(path.stem + "_spectral" + path.suffix)
            sp_path.write_text(self.csv_text(spectral=True))
            written.append(sp_path)
        js = path.with_suffix(".json")
        js.write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")
        written.append(js)
        return written


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _slopes(records, keys):
    out = {}
    for key in keys:
        pts = [(r["N"], r[key]) for r in records if np.isfinite(r[key])]
        try:
            s, se = fit_rate(pts)
            out[key] = {"slope": s, "stderr": se}
        except ValueError:
            continue
    return out


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------

def make_noise(config: ExperimentConfig, N: int, seed: int) -> NoiseModel:
    if config.noise == "white":
        return NoiseModel(config.sigma)
    rng = np.random.default_rng(derive_seed(seed, 2))
    return NoiseModel(config.sigma, rng.uniform(0.5, 1.5, N), var_bounds=(0.5, 1.5))


def replicate_seed(config: ExperimentConfig, replicate: int) -> int:
    """Seed of one replicate, shared across the schedule.

    Locations and noise are drawn sequentially from streams derived from
    this seed, so the sample set at ``N`` is a prefix of the one at any
    larger ``N`` (common random numbers across the sweep).
    """
    return derive_seed(config.seed, replicate)


def build_mesh(config: ExperimentConfig, nx: int):
    return build_structured_mesh(nx, config.domain, omega=config.omega, b_region=config.b_region)


def fem_replicate(config, truth, mesh, V, W, N, seed, compute_trace=True):
    """One FEM solve; returns the solution, the system and the error record fields."""
    noise = make_noise(config, N, seed)
    obs = observe(truth.u, config.omega, N, noise, seed, truth_id=truth.id)
    data = forms.assemble_data_term(V, obs)
    system = solve.build_system(V, W, data, truth.f, config.alpha, config.beta)
    sol = solve.solve_map(system)
    l2_B, h1_B = error_norms(sol.u, truth.u, truth.grad, region="b")
    l2_om, _ = error_norms(sol.u, truth.u, None, region="omega")
    etn = solve.expected_triple_norm_error(system) if compute_trace else float("nan")
    return sol, system, {"l2_B": l2_B, "h1_B": h1_B, "l2_omega": l2_om, "expected_triple_norm": etn}


def spectral_replicate(config, truth, mesh, N, seed):
    noise = make_noise(config, N, seed)
    obs = observe(truth.u, config.omega, N, noise, seed, truth_id=truth.id)
    n = couple_dimension(max(N, 3), config.alpha, config.l_schedule, config.eps)
    basis = HarmonicBasis(degree_for_dimension(n), config.domain)
    coeffs = solve_spectral_map(basis, SpectralPrior(config.alpha), obs)
    u = basis.field(coeffs)

    def err(x, y):
        return u(x, y) - truth.u(x, y)

    def err_grad(x, y):
        gx, gy = basis.gradient(coeffs, np.ravel(x), np.ravel(y))
        tx, ty = truth.grad(x, y)
        return gx.reshape(np.shape(x)) - tx, gy.reshape(np.shape(x)) - ty

    l2_B, h1_B = field_norms(mesh, err, err_grad, region="b")
    l2_om, _ = field_norms(mesh, err, None, region="omega")
    return basis, coeffs, {"l2_B": l2_B, "h1_B": h1_B, "l2_omega": l2_om,
                           "expected_triple_norm": float("nan")}


def run_experiment(config: ExperimentConfig, progress=None) -> RateReport:
    """Sweep ``config.N_schedule`` with fresh samples and noise per replicate.

    A solver failure stops the sweep; the report is returned with
    ``partial=True`` and the error message.
    """
    t_start = time.perf_counter()
    truth = builtin_truth(config.truth_id, **config.truth_params)
    report = RateReport(config=config.as_dict())
    max_res = 0.0
    balance = []
    do_fem = config.method in ("fem", "both")
    do_spec = config.method in ("spectral", "both")
    try:
        for N in config.N_schedule:
            ht = target_h(config, N)
            nx = snap_nx(ht, config.domain, config.nx_max)
            mesh = build_mesh(config, nx)
            V, W = solve.make_spaces(mesh, config.degree)
            if config.coupling != "fixed_h":
                balance.append((N, nx, balance_log_ratio(config, N, mesh.h)))
            for r in range(config.replicates):
                seed = replicate_seed(config, r)
                if do_fem:
                    t0 = time.perf_counter()
                    sol, _, errs = fem_replicate(config, truth, mesh, V, W, N, seed, config.trace)
                    max_res = max(max_res, sol.residual_norm)
                    wall = time.perf_counter() - t0 if config.timing else 0.0
                    report.records.append(dict(N=N, h=mesh.h, nx=nx, dofs=V.dof_count + W.dof_count,
                                               replicate=r, seed=seed, wall_time_s=wall, **errs))
                if do_spec:
                    t0 = time.perf_counter()
                    basis, _, errs = spectral_replicate(config, truth, mesh, N, seed)
                    wall = time.perf_counter() - t0 if config.timing else 0.0
                    report.spectral_records.append(dict(N=N, h=float("nan"), nx=0, dofs=basis.dimension,
                                                        replicate=r, seed=seed, wall_time_s=wall, **errs))
                if progress is not None:
                    progress(N, r)
    except (solve.SolverError, np.linalg.LinAlgError) as exc:
        report.partial = True
        report.error = f"{type(exc).__name__}: {exc}"

    keys = ["l2_B", "h1_B", "l2_omega", "expected_triple_norm"]
    report.slopes = _slopes(report.records, keys)
    report.spectral_slopes = _slopes(report.spectral_records, keys[:3])
    if do_fem and report.records:
        report.checks.append({"name": "saddle_residual", "pass": bool(max_res <= solve.RESIDUAL_RTOL),
                              "value": max_res})
    if balance:
        g = coupling_gamma(config.alpha, config.beta)
        bound = (2 * g + DIM) * math.log(2.0)
        free = [lr for (_, nx, lr) in balance if nx > 4]
        ok = all(-1e-9 <= lr < bound + 1e-9 for lr in free)
        report.checks.append({"name": "balanced_coupling_log_ratio", "pass": bool(ok),
                              "value": max((abs(v) for v in free), default=0.0), "bound": bound})
    report.total_time_s = time.perf_counter() - t_start
    return report


def export_solution(config: ExperimentConfig, N: int, path, replicate: int = 0):
    """Single FEM solve at sample count ``N``; writes DOF coordinates and coefficients as CSV."""
    truth = builtin_truth(config.truth_id, **config.truth_params)
    nx = snap_nx(target_h(config, N), config.domain, config.nx_max)
    mesh = build_mesh(config, nx)
    V, W = solve.make_spaces(mesh, config.degree)
    sol, _, errs = fem_replicate(config, truth, mesh, V, W, N, replicate_seed(config, replicate),
                                 compute_trace=False)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dof", "x", "y", "value"])
        for i, ((x, y), v) in enumerate(zip(V.dof_coords, sol.u.coeffs)):
            w.writerow([i, repr(float(x)), repr(float(y)), repr(float(v))])
    return sol, errs
