"""Compare the compiled and pure-Python flow kernels.

    python benchmarks/bench_kernels.py [--repeat N]

Times one RK4 integration over [0, 1] (dt = 1e-3) and one shooting solve
per case, reports the best of N runs and checks the two backends agree.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hjdiv import LagrangianSpec, ShootingOptions, builtin_model, integrate, kernels, principal_function


def _cases():
    exp = builtin_model("exponential")
    sphere = builtin_model("sphere-qubit")
    return [
        ("exponential alpha:0", LagrangianSpec.alpha_family(exp, 0.0), [1.0], [1.0], [2.0]),
        ("exponential alpha:1", LagrangianSpec.alpha_family(exp, 1.0), [1.0], [0.2], [1.2]),
        ("exponential kl", LagrangianSpec.kl(exp), [1.0], [1.0], [2.0]),
        ("sphere-qubit alpha:0", LagrangianSpec.alpha_family(sphere, 0.0), [1.2, 0.1], [0.3, 0.4], [1.6, 0.9]),
    ]


def _best(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if not kernels.NATIVE_AVAILABLE:
        print("compiled kernel not built; only the python backend is available")
        return 1
    header = f"{'case':<22} {'task':<10} {'python ms':>10} {'cython ms':>10} {'speedup':>8} {'max diff':>10}"
    print(header)
    print("-" * len(header))
    for name, spec, x0, v0, target in _cases():
        py = integrate(spec, x0, v0, backend="python")
        cy = integrate(spec, x0, v0, backend="cython")
        diff = float(np.max(np.abs(py.points - cy.points)))
        t_py = _best(lambda: integrate(spec, x0, v0, backend="python"), args.repeat)
        t_cy = _best(lambda: integrate(spec, x0, v0, backend="cython"), args.repeat)
        print(f"{name:<22} {'integrate':<10} {1e3 * t_py:>10.2f} {1e3 * t_cy:>10.2f} {t_py / t_cy:>8.1f} {diff:>10.1e}")

        opts = {b: ShootingOptions(backend=b) for b in ("python", "cython")}
        s_py = principal_function(spec, x0, target, opts["python"]).value
        s_cy = principal_function(spec, x0, target, opts["cython"]).value
        t_py = _best(lambda: principal_function(spec, x0, target, opts["python"]), args.repeat)
        t_cy = _best(lambda: principal_function(spec, x0, target, opts["cython"]), args.repeat)
        print(f"{'':<22} {'principal':<10} {1e3 * t_py:>10.2f} {1e3 * t_cy:>10.2f} {t_py / t_cy:>8.1f} {abs(s_py - s_cy):>10.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
