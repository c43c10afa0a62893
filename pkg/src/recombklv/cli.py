"""Command line entry point: ``recombklv {reduce,verify-cubature,run,convergence,cost}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from recombklv.cubature import load_formula, verify_cubature
from recombklv.driver import (
    RunConfig,
    convergence_study,
    cost_model,
    diagnostics_csv,
    run_recombining_klv,
)
from recombklv.errors import RecombError
from recombklv.measure import center_of_mass, read_particles_csv, write_particles_csv
from recombklv.polybasis import build_basis
from recombklv.recombine import reduce_measure


def _sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def cmd_reduce(args) -> int:
    mu = read_particles_csv(args.input)
    center = center_of_mass(mu) if args.center == "com" else np.zeros(mu.dim)
    scale = float(np.max(np.linalg.norm(mu.points - center, axis=1), initial=0.0)) or 1.0
    basis = build_basis(mu.dim, args.degree, center, scale)
    reduced, report = reduce_measure(mu, basis, algorithm=str(args.algorithm))
    out = Path(args.output)
    write_particles_csv(reduced, out)
    report_path = Path(args.report) if args.report else _sidecar(out, ".report.json")
    report_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(f"{report.input_support} -> {report.output_support} particles, "
          f"max moment error {report.max_moment_error:.3e}")
    return 0


def cmd_verify(args) -> int:
    formula = load_formula(args.formula, tol=args.tol)
    check = verify_cubature(formula, args.tol)
    print(json.dumps({
        "d": formula.d,
        "m": formula.m,
        "paths": len(formula),
        "max_abs_deviation": check.max_abs_deviation,
        "worst_word": list(check.worst_word) if check.worst_word is not None else None,
        "passed": check.passed,
    }))
    return 0 if check.passed else 1


def cmd_run(args) -> int:
    config = RunConfig.from_json(args.config)
    model, payoff, _ = config.build()
    estimate, diagnostics = run_recombining_klv(config)
    exact = model.exact_expectation(payoff, config.x0, config.T)
    csv_text = diagnostics_csv(diagnostics)
    if args.diagnostics:
        Path(args.diagnostics).write_text(csv_text, encoding="utf-8")
    else:
        sys.stdout.write(csv_text)
    summary = {
        "estimate": estimate,
        "exact": exact,
        "abs_error": None if exact is None else abs(estimate - exact),
        "steps": len(diagnostics),
        "max_particles": max((d.particles_after for d in diagnostics), default=1),
        "wall_ms": round(1000 * sum(d.wall_time for d in diagnostics), 3),
        "config": config.to_dict(),
    }
    text = json.dumps(summary, indent=2)
    if args.summary:
        Path(args.summary).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_convergence(args) -> int:
    config = RunConfig.from_json(args.config)
    ks = [int(k) for k in args.k.split(",") if k.strip()]
    table = convergence_study(config, ks, vanilla_limit=args.vanilla_limit)
    if args.output:
        Path(args.output).write_text(table.to_csv(), encoding="utf-8")
    else:
        sys.stdout.write(table.to_csv())
    print(json.dumps({"exact": table.exact, "slope_fit": table.slope_fit,
                      "vanilla_slope_fit": table.vanilla_slope_fit}))
    return 0


def cmd_cost(args) -> int:
    print(repr(cost_model(args.D, args.delta, args.N, args.r, args.nhat)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recombklv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reduce", help="reduce a particle CSV against a polynomial basis")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--center", choices=["com", "origin"], default="com")
    p.add_argument("--algorithm", type=int, choices=[1, 2], default=2)
    p.add_argument("--report", help="JSON report path (default: <output>.report.json)")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("verify-cubature", help="check a cubature formula file")
    p.add_argument("formula")
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("run", help="one recombining run")
    p.add_argument("--config", required=True)
    p.add_argument("--diagnostics", help="write the per-step CSV here instead of stdout")
    p.add_argument("--summary", help="also write the JSON summary here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("convergence", help="error against k")
    p.add_argument("--config", required=True)
    p.add_argument("--k", default="2,4,8,16,32")
    p.add_argument("--vanilla-limit", type=int, default=10**6)
    p.add_argument("--output")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("cost", help="evaluate the reduction cost model")
    p.add_argument("--D", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--nhat", type=int, required=True)
    p.set_defaults(func=cmd_cost)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RecombError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
