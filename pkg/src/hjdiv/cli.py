"""Command-line front end: ``hjdiv <command> [options]``.

Exit codes: 0 success, 2 verification failure, 3 usage or config error,
4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .acceptance import run_criteria
from .errors import (
    DegenerateLagrangianError,
    DomainError,
    HJDivError,
    NoConvergence,
    SingularShootingJacobian,
)
from .geometry import load_model, validate_model
from .lagrangian import DEFAULT_DT, LagrangianSpec, integrate, parse_lagrangian_selector
from .quantum import bloch_to_chart, normalize_bloch
from .recovery import compare_tensors, default_step, principal_two_point, recover_metric, recover_skewness
from .solver import ShootingOptions, principal_function, s_grid

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_SOLVER = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class UsageError(Exception):
    pass


def _positive(kind=float):
    def convert(text):
        try:
            val = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not (val > 0 and math.isfinite(val)):
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return val

    return convert


def _emit_json(doc: dict):
    print(json.dumps(doc, sort_keys=True, allow_nan=True))


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise UsageError(f"cannot parse coordinates {text!r}") from None


def parse_point(text: str, model) -> np.ndarray:
    """Model coordinates; the sphere-qubit model also takes Bloch triples ``x,y,z``."""
    vals = _floats(text)
    if model.name == "sphere-qubit" and len(vals) == 3:
        unit, far = normalize_bloch(vals)
        if far:
            print(f"warning: Bloch vector {text} normalized (norm {np.linalg.norm(vals):.6g})", file=sys.stderr)
        return bloch_to_chart(unit)
    if len(vals) != model.dim:
        raise UsageError(f"{text!r} has {len(vals)} coordinates, model {model.name} has dimension {model.dim}")
    return np.array(vals)


def parse_points(text: str, model) -> list[np.ndarray]:
    text = text.strip()
    if text.count(":") == 2 and model.dim == 1:
        lo, hi, n = text.split(":")
        try:
            return [np.array([v]) for v in np.linspace(float(lo), float(hi), int(n))]
        except ValueError:
            raise UsageError(f"bad range {text!r}; expected LO:HI:N") from None
    return [parse_point(p, model) for p in text.split(";") if p.strip()]


def _lagrangian(args, model) -> LagrangianSpec:
    if getattr(args, "lagrangian_file", None):
        if not args.unsafe_custom:
            raise UsageError("custom Lagrangians need --unsafe-custom (regularity cannot be checked in advance)")
        try:
            cfg = json.loads(Path(args.lagrangian_file).read_text(encoding="utf-8"))
            return LagrangianSpec.from_expressions(
                model, cfg["lagrangian"], cfg.get("momentum"), name=cfg.get("name", "custom")
            )
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot load Lagrangian file: {exc}") from None
    return parse_lagrangian_selector(args.lagrangian, model)


def _options(args) -> ShootingOptions:
    return ShootingOptions(
        residual_tol=args.tol, max_iters=args.max_iters, dt=args.dt, backend=args.backend
    )


# -- commands ---------------------------------------------------------------


def cmd_validate(args) -> int:
    model = load_model(args.model)
    report = validate_model(model, n=args.points)
    if args.format == "json":
        _emit_json({"command": "validate", **report.to_dict()})
    else:
        print(f"model {report.model}: {report.points_checked} points checked")
        for label, items in (
            ("symmetry", report.symmetry_violations),
            ("definiteness", report.definiteness_violations),
            ("skewness symmetry", report.skewness_violations),
            ("evaluation", report.evaluation_errors),
        ):
            print(f"  {label} violations: {len(items)}")
            for item in items[:5]:
                print(f"    {item}")
        print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_principal(args) -> int:
    model = load_model(args.model)
    spec = _lagrangian(args, model)
    a, b = parse_point(args.from_, model), parse_point(args.to, model)
    res = principal_function(spec, a, b, _options(args))
    if args.output:
        res.trajectory.to_csv(args.output, spec)
    if args.format == "json":
        _emit_json(
            {
                "command": "principal",
                "model": model.name,
                "lagrangian": spec.name,
                "from": a.tolist(),
                "to": b.tolist(),
                "S": res.value,
                "iterations": res.iterations,
                "endpoint_residual": res.endpoint_residual,
                "quadrature_error": res.quadrature_error,
                "initial_velocity": res.initial_velocity.tolist(),
            }
        )
    else:
        print(f"S = {res.value:.12g}")
        print(
            f"iterations {res.iterations}, endpoint residual {res.endpoint_residual:.3g}, "
            f"quadrature error {res.quadrature_error:.3g}"
        )
    return EXIT_OK


def cmd_geodesic(args) -> int:
    model = load_model(args.model)
    spec = _lagrangian(args, model)
    x0 = parse_point(args.from_, model)
    if args.velocity is not None:
        v0 = np.array(_floats(args.velocity))
        traj = integrate(spec, x0, v0, (0.0, args.t1), args.dt, args.backend)
        iters = 0
    else:
        res = principal_function(spec, x0, parse_point(args.to, model), _options(args))
        traj, iters = res.trajectory, res.iterations
    if args.output:
        traj.to_csv(args.output, spec)
    e = traj.energies(spec)
    drift = float(np.max(np.abs(e - e[0])))
    if args.format == "json":
        _emit_json(
            {
                "command": "geodesic",
                "model": model.name,
                "lagrangian": spec.name,
                "start": traj.start.tolist(),
                "end": traj.end.tolist(),
                "initial_velocity": traj.velocities[0].tolist(),
                "samples": len(traj),
                "iterations": iters,
                "energy_drift": drift,
                "output": args.output,
            }
        )
    else:
        print(f"end point {traj.end.tolist()} after {len(traj)} samples")
        print(f"initial velocity {traj.velocities[0].tolist()}, energy drift {drift:.3g}")
        if args.output:
            print(f"trajectory written to {args.output}")
    return EXIT_OK


def cmd_recover(args) -> int:
    model = load_model(args.model)
    x = parse_point(args.at, model)
    model.check(x)
    if args.divergence and args.lagrangian:
        raise UsageError("give either --divergence or --lagrangian, not both")
    if args.divergence:
        f = model.divergence(args.divergence)
        alpha = f.implied_alpha
        numeric = False
    else:
        spec = parse_lagrangian_selector(args.lagrangian or "alpha:0", model)
        if not spec.is_alpha:
            raise UsageError("recovery from S needs an alpha:<real> Lagrangian")
        f = principal_two_point(spec, _options(args))
        alpha = spec.alpha
        numeric = True
    if args.order == "metric":
        h = args.step or default_step(x)
        rec = recover_metric(f, x, h, args.stencil, args.richardson)
        ref = model.metric(x)
        tol = args.check_tol or (1e-3 if numeric else 1e-4)
        diagnostics = {}
    else:
        if alpha is None:
            raise UsageError(f"divergence {f.name!r} has no implied alpha; skewness reference unknown")
        h = args.step or default_step(x, 1e-2)
        rec, asym = recover_skewness(f, x, h, args.stencil, args.richardson, full_output=True)
        ref = 2.0 * alpha * model.skewness(x)
        tol = args.check_tol or 0.05 * max(1.0, float(np.max(np.abs(ref))))
        diagnostics = {"symmetry_residual": asym, "alpha": alpha}
    report = compare_tensors(rec, ref, tol, h, args.stencil)
    report.diagnostics.update(diagnostics)
    if args.output:
        report.to_json(args.output)
    if args.format == "json":
        _emit_json({"command": "recover", "source": f.name, "order": args.order, "at": x.tolist(), **report.to_dict()})
    else:
        print(f"source {f.name}, {args.order} at {x.tolist()} (h={h:g}, stencil order {args.stencil})")
        print(f"recovered {np.array2string(report.recovered, precision=10)}")
        print(f"reference {np.array2string(report.reference, precision=10)}")
        print(f"max error {report.max_abs_error:.3e} (tol {tol:.1e}) {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_grid(args) -> int:
    model = load_model(args.model)
    spec = _lagrangian(args, model)
    pts_in = parse_points(getattr(args, "in"), model)
    pts_fin = parse_points(args.fin, model) if args.fin else pts_in
    if not pts_in or not pts_fin:
        raise UsageError("empty grid")
    grid = s_grid(spec, pts_in, pts_fin, _options(args))
    grid.to_csv(args.output)
    n_ok = len(grid.cells) - len(grid.failures)
    if args.format == "json":
        _emit_json(
            {
                "command": "grid",
                "model": model.name,
                "lagrangian": spec.name,
                "shape": list(grid.shape),
                "cells": len(grid.cells),
                "succeeded": n_ok,
                "failed": [{"i": c.i, "j": c.j, "status": c.status} for c in grid.failures],
                "output": args.output,
            }
        )
    else:
        print(f"{n_ok}/{len(grid.cells)} cells solved; CSV written to {args.output}")
        for c in grid.failures:
            print(f"  cell ({c.i},{c.j}) {c.x_in.tolist()} -> {c.x_fin.tolist()}: {c.status}")
    return EXIT_OK if n_ok else EXIT_SOLVER


def cmd_verify(args) -> int:
    start = time.perf_counter()
    echo = None if args.format == "json" else print
    results = run_criteria(args.filter, backend=args.backend, echo=echo)
    seconds = time.perf_counter() - start
    passed = bool(results) and all(r.passed for r in results)
    if args.format == "json":
        _emit_json(
            {
                "command": "verify",
                "filter": args.filter,
                "backend": kernels.resolve(args.backend),
                "passed": passed,
                "seconds": seconds,
                "criteria": [r.to_dict() for r in results],
            }
        )
    else:
        if not results:
            print(f"no criteria match filter {args.filter!r}")
        print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed in {seconds:.1f}s")
    return EXIT_OK if passed else EXIT_FAIL


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("text", "json"), default="text", help="summary format on stdout")
    common.add_argument("--backend", choices=kernels.BACKENDS, default="auto", help="flow kernel")

    solve = _Parser(add_help=False)
    solve.add_argument("--dt", type=_positive(), default=DEFAULT_DT, help="RK4 step")
    solve.add_argument("--tol", type=_positive(), default=1e-12, help="shooting residual tolerance")
    solve.add_argument("--max-iters", type=_positive(int), default=50)

    lag = _Parser(add_help=False)
    lag.add_argument("--model", default="exponential", help="built-in name or JSON model file")
    lag.add_argument("--lagrangian", default="alpha:0", help="'alpha:<real>' or 'kl'")
    lag.add_argument("--lagrangian-file", help="JSON with 'lagrangian' (and optional 'momentum') expressions")
    lag.add_argument("--unsafe-custom", action="store_true", help="allow --lagrangian-file")

    parser = _Parser(prog="hjdiv", description="Divergences as Hamilton principal functions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", parents=[common], help="check metric/skewness fields at sample points")
    p.add_argument("--model", required=True)
    p.add_argument("--points", type=_positive(int), default=100)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("principal", parents=[common, lag, solve], help="evaluate S(from, to)")
    p.add_argument("--from", dest="from_", required=True)
    p.add_argument("--to", required=True)
    p.add_argument("--output", help="write the critical trajectory as CSV")
    p.set_defaults(func=cmd_principal)

    p = sub.add_parser("geodesic", parents=[common, lag, solve], help="integrate or shoot a trajectory")
    p.add_argument("--from", dest="from_", required=True)
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--to")
    target.add_argument("--velocity", help="initial velocity; integrates instead of shooting")
    p.add_argument("--t1", type=_positive(), default=1.0, help="end time with --velocity")
    p.add_argument("--output", help="trajectory CSV path")
    p.set_defaults(func=cmd_geodesic)

    p = sub.add_parser("recover", parents=[common, solve], help="recover g or 2 alpha T on the diagonal")
    p.add_argument("--model", default="exponential")
    p.add_argument("--divergence", help="closed-form divergence of the model")
    p.add_argument("--lagrangian", help="use the numerical S of this alpha Lagrangian")
    p.add_argument("--at", required=True)
    p.add_argument("--order", choices=("metric", "skewness"), default="metric")
    p.add_argument("--step", type=_positive(), help="finite-difference step h")
    p.add_argument("--stencil", type=int, choices=(2, 4), default=2)
    p.add_argument("--richardson", action="store_true")
    p.add_argument("--check-tol", type=_positive(), help="pass/fail tolerance on the max error")
    p.add_argument("--output", help="JSON report path")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("grid", parents=[common, lag, solve], help="S on a grid of endpoint pairs, as CSV")
    p.add_argument("--in", required=True, help="points 'a;b;c' (each 'x1,x2,..') or LO:HI:N in 1-D")
    p.add_argument("--fin", help="final points; defaults to --in")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("verify", parents=[common], help="run the acceptance criteria")
    p.add_argument("--filter", help="tag, name or number of the criteria to run")
    p.set_defaults(func=cmd_verify)
    return parser


_NEGATIVE = re.compile(r"^-[\d.]")
_FLAGS = {"--unsafe-custom", "--richardson", "--help", "-h", "--version"}


def _join_negative_values(argv: list[str]) -> list[str]:
    """Rewrite ``--opt -1,0,0`` as ``--opt=-1,0,0`` so argparse does not read a flag."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if (
            tok.startswith("--")
            and "=" not in tok
            and tok not in _FLAGS
            and i + 1 < len(argv)
            and _NEGATIVE.match(argv[i + 1])
        ):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_join_negative_values(argv))
    try:
        return args.func(args)
    except (NoConvergence, SingularShootingJacobian, DegenerateLagrangianError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except DomainError as exc:
        print(f"error: DomainError: {exc}", file=sys.stderr)
        # a trajectory leaving the domain mid-solve is a solver failure, a bad input point is not
        return EXIT_SOLVER if exc.time is not None else EXIT_USAGE
    except (HJDivError, UsageError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
