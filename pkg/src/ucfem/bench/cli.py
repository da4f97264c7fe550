"""Command-line entry point: ``ucfem run|check|interp-rates|export-solution``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .._accel import backend_name
from .config import ConfigError, ExperimentConfig
from .experiment import export_solution, run_experiment
from .studies import interp_csv, interp_rates, run_checks


def _parser():
    p = argparse.ArgumentParser(prog="ucfem", description="Stabilised FEM data assimilation experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a sample-size sweep and write the report")
    r.add_argument("--config", required=True, help="key = value config file")
    r.add_argument("--output", help="report CSV path (overrides the config)")

    c = sub.add_parser("check", help="run the built-in invariant suite")
    c.add_argument("--quick", action="store_true", help="fewer Monte-Carlo draws")

    i = sub.add_parser("interp-rates", help="interpolation convergence study")
    i.add_argument("--truth", default="harmonic_exp")
    i.add_argument("--output", help="CSV path (default: stdout)")

    e = sub.add_parser("export-solution", help="single solve; dump DOF coordinates and values")
    e.add_argument("--config", required=True)
    e.add_argument("--N", type=int, required=True, dest="n_samples")
    e.add_argument("--output", default="solution.csv")
    return p


def _cmd_run(args):
    cfg = ExperimentConfig.load(args.config)
    out = args.output or cfg.output
    base = Path(args.config).parent
    out_path = Path(out) if Path(out).is_absolute() or args.output else base / out
    report = run_experiment(cfg)
    paths = report.write(out_path)
    for name, s in report.slopes.items():
        print(f"slope {name}: {s['slope']:+.3f} +/- {s['stderr']:.3f}")
    for c in report.checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['name']}")
    print("wrote " + ", ".join(str(p) for p in paths))
    if report.partial:
        print(f"run aborted: {report.error}", file=sys.stderr)
        return 1
    return 0


def _cmd_check(args):
    print(f"kernel backend: {backend_name()}")
    ok = True
    for name, passed, detail in run_checks(quick=args.quick):
        ok &= bool(passed)
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    return 0 if ok else 1


def _cmd_interp(args):
    rows, fits = interp_rates(args.truth)
    text = interp_csv(rows)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    for k, f in fits.items():
        print(f"# P{k}: L2 slope {f['l2']:.3f}, H1 slope {f['h1']:.3f}", file=sys.stderr)
    return 0


def _cmd_export(args):
    cfg = ExperimentConfig.load(args.config)
    if args.n_samples < 1:
        raise ConfigError("--N must be positive")
    sol, errs = export_solution(cfg, args.n_samples, args.output)
    print(f"wrote {args.output} ({sol.u.space.dof_count} dofs, L2(B) error {errs['l2_B']:.3e})")
    return 0


COMMANDS = {"run": _cmd_run, "check": _cmd_check, "interp-rates": _cmd_interp,
            "export-solution": _cmd_export}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
