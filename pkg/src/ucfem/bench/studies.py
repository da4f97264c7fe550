"""Built-in studies: interpolation rates and the invariant check suite."""
from __future__ import annotations

import csv
import io
import math

import numpy as np

from .. import forms, solve
from ..mesh import build_structured_mesh
from ..observe import NoiseModel, derive_seed, draw_observations, observe
from ..space import error_norms, lagrange_space, nodal_interpolate
from ..spectral import HarmonicBasis, SpectralPrior, check_galerkin_orthogonality, solve_spectral_map
from ..truth import builtin_truth
from .rates import loglog_slope

OMEGA = (0.25, 0.75, 0.25, 0.5)
B_REGION = (0.25, 0.75, 0.25, 0.75)

INTERP_HEADER = ["degree", "nx", "h", "l2_error", "h1_error", "l2_slope", "h1_slope"]


def interp_rates(truth_id="harmonic_exp", degrees=(1, 2), nxs=(4, 8, 16, 32, 64)):
    """Nodal interpolation errors on the whole domain under uniform refinement.

    Each row carries the slope against ``h`` from the previous level; the
    returned ``fits`` hold the least-squares slope over all levels.
    """
    truth = builtin_truth(truth_id)
    rows, fits = [], {}
    for k in degrees:
        hs, l2s, h1s = [], [], []
        for nx in nxs:
            mesh = build_structured_mesh(nx)
            fn = nodal_interpolate(lagrange_space(mesh, k), truth.u)
            l2, h1 = error_norms(fn, truth.u, truth.grad, quad_degree=2 * k + 4)
            hs.append(mesh.h)
            l2s.append(l2)
            h1s.append(h1)
            s2 = math.log(l2s[-2] / l2) / math.log(hs[-2] / mesh.h) if len(hs) > 1 else float("nan")
            s1 = math.log(h1s[-2] / h1) / math.log(hs[-2] / mesh.h) if len(hs) > 1 else float("nan")
            rows.append({"degree": k, "nx": nx, "h": mesh.h, "l2_error": l2, "h1_error": h1,
                         "l2_slope": s2, "h1_slope": s1})
        fits[k] = {"l2": loglog_slope(hs, l2s), "h1": loglog_slope(hs, h1s)}
    return rows, fits


def interp_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(INTERP_HEADER)
    for r in rows:
        w.writerow([r[k] if isinstance(r[k], int) else repr(float(r[k])) for k in INTERP_HEADER])
    return buf.getvalue()


def _small_system(nx=4, degree=1, N=200, sigma=0.1, alpha=2.0, beta=1, seed=0, truth_id="harmonic_exp"):
    truth = builtin_truth(truth_id)
    mesh = build_structured_mesh(nx, omega=OMEGA, b_region=B_REGION)
    V, W = solve.make_spaces(mesh, degree)
    obs = observe(truth.u, OMEGA, N, NoiseModel(sigma), seed)
    system = solve.build_system(V, W, forms.assemble_data_term(V, obs), truth.f, alpha, beta)
    return truth, system, obs


def trace_identity_mc(draws=500, nx=4, degree=1, N=200, sigma=0.1, alpha=2.0, beta=1, seed=0):
    """Monte-Carlo mean of ``|||u_h^y - u_beta|||^2`` against the trace formula.

    ``u_beta`` is the solution with noise-free data at the same design.
    Returns ``(trace_value, mc_mean, mc_stderr)``.
    """
    truth, system, obs = _small_system(nx, degree, N, sigma, alpha, beta, seed)
    clean = truth.u(obs.locations[:, 0], obs.locations[:, 1])
    u_beta = solve.solve_map(system.with_values(clean)).u.coeffs
    vals = np.empty(draws)
    for i in range(draws):
        y = draw_observations(truth.u, obs.locations, obs.noise, derive_seed(seed, 7, i)).values
        e = solve.solve_map(system.with_values(y)).u.coeffs - u_beta
        vals[i] = solve.triple_norm_sq(system, e)
    return solve.expected_triple_norm_error(system), float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(draws))


def run_checks(quick: bool = False):
    """Invariant suite; returns ``[(name, passed, detail)]``."""
    out = []

    draws = 150 if quick else 500
    tr, mean, se = trace_identity_mc(draws=draws)
    out.append(("trace_identity", abs(mean - tr) <= 3 * se,
                f"trace={tr:.4e} mc={mean:.4e} se={se:.1e}"))

    truth, system, _ = _small_system(nx=8, degree=2, N=300, seed=1, truth_id="poisson_bump")
    sol = solve.solve_map(system)
    rng = np.random.default_rng(3)
    ws = rng.standard_normal((system.n_w, 20))
    lhs = ws.T @ (system.parts["M_W"] @ sol.z.coeffs)
    rhs = ws.T @ (system.parts["C"] @ sol.u.coeffs - system.parts["F"])
    rel = float(np.abs(lhs - rhs).max() / max(np.abs(rhs).max(), 1e-300))
    out.append(("riesz_representation", rel <= 1e-10 and sol.residual_norm <= 1e-10,
                f"riesz={rel:.1e} saddle={sol.residual_norm:.1e}"))

    worst = 0.0
    prior = SpectralPrior(2.0)
    fine_basis = HarmonicBasis(6)
    for t in range(5):
        obs = observe(lambda x, y: np.exp(x) * np.cos(y), OMEGA, 200, NoiseModel(0.1), derive_seed(11, t))
        fine = solve_spectral_map(fine_basis, prior, obs)
        coarse = solve_spectral_map(fine_basis.prefix(3), prior, obs)
        viol = check_galerkin_orthogonality(fine, coarse, obs, prior, fine_basis)
        scale = np.abs(fine_basis.evaluate(obs.locations[:, 0], obs.locations[:, 1]).T @ obs.values).max()
        worst = max(worst, viol / scale)
    out.append(("galerkin_orthogonality", worst <= 1e-9, f"max relative violation {worst:.1e}"))

    mesh = build_structured_mesh(8, omega=OMEGA, b_region=B_REGION)
    V = lagrange_space(mesh, 1)
    n = int(math.ceil(50 * mesh.h ** -2))
    rep = solve.empirical_gram_check(V, OMEGA, n, 40 if quick else 200, seed=5)
    out.append(("empirical_gram", rep.failure_rate < 0.05,
                f"N={n} failure rate {rep.failure_rate:.3f}"))

    worst = 0.0
    for k in (1, 2):
        Vk = lagrange_space(build_structured_mesh(8), k)
        J = forms.assemble_jump(Vk)
        for p in range(k + 1):
            for q in range(k + 1 - p):
                c = nodal_interpolate(Vk, lambda x, y, p=p, q=q: x ** p * y ** q).coeffs
                worst = max(worst, abs(float(c @ (J @ c))))
    out.append(("stabilizer_exactness", worst <= 1e-12, f"max J_h(v, v) {worst:.1e}"))
    return out
