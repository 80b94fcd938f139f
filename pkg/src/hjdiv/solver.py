"""Two-point boundary problems on t in [0, 1] and the Hamilton principal function.

``shoot`` finds the initial velocity whose Euler-Lagrange trajectory hits
the target at t = 1 (damped Newton, forward-difference Jacobian).  The
action of that trajectory is the principal function ``S(x_in, x_fin)``.

The solver does not search globally: when several critical curves join
the endpoints (e.g. the two great-circle arcs on a sphere) it returns the
one its Newton basin leads to.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import simpson

from . import kernels
from .errors import (
    DegenerateLagrangianError,
    DomainError,
    HJDivError,
    NoConvergence,
    SingularShootingJacobian,
)
from .lagrangian import DEFAULT_DT, LagrangianSpec, Trajectory, lagrangian_eval, step_count

__all__ = [
    "ShootingOptions",
    "PrincipalFunctionResult",
    "shoot",
    "action",
    "principal_function",
    "geodesic_length",
    "s_grid",
    "SGrid",
    "GridCell",
]

# cond_1 of the shooting Jacobian above which endpoints are treated as conjugate
SINGULAR_JACOBIAN_COND = 1e6


@dataclass(frozen=True)
class ShootingOptions:
    residual_tol: float = 1e-10
    max_iters: int = 50
    dt: float = DEFAULT_DT
    initial_velocity: tuple | None = None
    backend: str | None = None
    jacobian_step: float = 1e-6
    max_halvings: int = 10

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass
class PrincipalFunctionResult:
    value: float
    trajectory: Trajectory
    iterations: int
    endpoint_residual: float
    initial_velocity: np.ndarray
    quadrature_error: float = 0.0


def _constant_trajectory(spec, x, opts) -> Trajectory:
    n, h = step_count((0.0, 1.0), opts.dt)
    times = h * np.arange(n + 1)
    times[-1] = 1.0
    pts = np.tile(x, (n + 1, 1))
    return Trajectory(times, pts, np.zeros_like(pts), spec)


class _Shooter:
    def __init__(self, spec: LagrangianSpec, x_in: np.ndarray, opts: ShootingOptions):
        self.spec = spec
        self.x_in = x_in
        self.opts = opts
        self.n, self.h = step_count((0.0, 1.0), opts.dt)

    def run(self, v):
        return kernels.integrate(self.spec, self.x_in, v, 0.0, self.h, self.n, self.opts.backend)

    def jacobian(self, v, end):
        d = len(v)
        jac = np.empty((d, d))
        for k in range(d):
            step = self.opts.jacobian_step * max(1.0, abs(v[k]))
            vk = v.copy()
            vk[k] += step
            try:
                xs, _ = self.run(vk)
            except (DomainError, DegenerateLagrangianError) as exc:
                raise SingularShootingJacobian(f"Jacobian probe failed: {exc}") from None
            jac[:, k] = (xs[-1] - end) / step
        return jac


def _check_jacobian(jac: np.ndarray):
    try:
        inv = np.linalg.inv(jac)
        cond = float(np.abs(jac).sum(axis=0).max() * np.abs(inv).sum(axis=0).max())
    except np.linalg.LinAlgError:
        cond = math.inf
    if not math.isfinite(cond) or cond > SINGULAR_JACOBIAN_COND:
        raise SingularShootingJacobian(
            f"shooting Jacobian singular (cond={cond:.3g}); endpoints are likely conjugate", condition=cond
        )


def _shoot(spec: LagrangianSpec, x_in, x_fin, opts: ShootingOptions):
    a = spec.model.check(x_in)
    b = spec.model.check(x_fin)
    if np.array_equal(a, b):
        return _constant_trajectory(spec, a, opts), 0, 0.0, np.zeros_like(a)
    sh = _Shooter(spec, a, opts)
    v = np.array(opts.initial_velocity if opts.initial_velocity is not None else b - a, dtype=float)
    if v.shape != a.shape:
        raise ValueError("initial_velocity has the wrong dimension")

    # shrink an initial guess whose trajectory leaves the domain
    for attempt in range(opts.max_halvings + 1):
        try:
            xs, vs = sh.run(v)
            break
        except (DomainError, DegenerateLagrangianError):
            if attempt == opts.max_halvings:
                raise
            v = 0.5 * v

    res = float(np.max(np.abs(xs[-1] - b)))
    iters = 0
    jac = None
    while res > opts.residual_tol:
        if iters >= opts.max_iters:
            raise NoConvergence(
                f"shooting did not converge in {opts.max_iters} iterations (residual {res:.3g})",
                residual=res,
                iterations=iters,
            )
        jac = sh.jacobian(v, xs[-1])
        _check_jacobian(jac)
        dv = np.linalg.solve(jac, b - xs[-1])
        lam = 1.0
        for _ in range(opts.max_halvings + 1):
            trial = v + lam * dv
            try:
                txs, tvs = sh.run(trial)
                tres = float(np.max(np.abs(txs[-1] - b)))
            except (DomainError, DegenerateLagrangianError):
                tres = math.inf
            if tres < res:
                v, xs, vs, res = trial, txs, tvs, tres
                break
            lam *= 0.5
        else:
            raise NoConvergence(
                f"damped Newton stalled at residual {res:.3g}", residual=res, iterations=iters
            )
        iters += 1
    if jac is None:
        _check_jacobian(sh.jacobian(v, xs[-1]))
    times = sh.h * np.arange(sh.n + 1)
    times[-1] = 1.0
    return Trajectory(times, xs, vs, spec), iters, res, v


def shoot(spec: LagrangianSpec, x_in, x_fin, opts: ShootingOptions | None = None) -> Trajectory:
    """Critical curve of the action joining ``x_in`` (t=0) to ``x_fin`` (t=1)."""
    return _shoot(spec, x_in, x_fin, opts or ShootingOptions())[0]


def _simpson(values: np.ndarray, times: np.ndarray) -> float:
    return float(simpson(values, x=times))


def action(spec: LagrangianSpec, traj: Trajectory) -> float:
    """Composite Simpson quadrature of L along the trajectory's step grid."""
    return _simpson(traj.lagrangian_values(spec), traj.times)


def _quadrature_error(values: np.ndarray, times: np.ndarray) -> float:
    n = len(times) - 1
    full = _simpson(values, times)
    if n % 4 == 0:
        coarse = _simpson(values[::2], times[::2])
        return abs(full - coarse) / 15.0
    return abs(full - float(np.trapezoid(values, times)))


def principal_function(
    spec: LagrangianSpec, x_in, x_fin, opts: ShootingOptions | None = None
) -> PrincipalFunctionResult:
    opts = opts or ShootingOptions()
    traj, iters, res, v0 = _shoot(spec, x_in, x_fin, opts)
    if iters == 0 and not np.any(v0):
        return PrincipalFunctionResult(0.0, traj, 0, 0.0, v0, 0.0)
    values = traj.lagrangian_values(spec)
    return PrincipalFunctionResult(
        value=_simpson(values, traj.times),
        trajectory=traj,
        iterations=iters,
        endpoint_residual=res,
        initial_velocity=v0,
        quadrature_error=_quadrature_error(values, traj.times),
    )


def geodesic_length(model, traj: Trajectory) -> float:
    """Riemannian length of a trajectory, Simpson quadrature of sqrt(g(v, v))."""
    speeds = np.array([math.sqrt(max(0.0, float(v @ model.metric(x) @ v))) for x, v in zip(traj.points, traj.velocities)])
    return _simpson(speeds, traj.times)


# -- grids ------------------------------------------------------------------


@dataclass
class GridCell:
    i: int
    j: int
    x_in: np.ndarray
    x_fin: np.ndarray
    value: float = math.nan
    iterations: int = 0
    residual: float = math.nan
    status: str = "ok"
    initial_velocity: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class SGrid:
    cells: list
    shape: tuple

    @property
    def values(self) -> np.ndarray:
        out = np.full(self.shape, np.nan)
        for c in self.cells:
            if c.ok:
                out[c.i, c.j] = c.value
        return out

    @property
    def failures(self) -> list:
        return [c for c in self.cells if not c.ok]

    def to_csv(self, path: str | Path | None = None) -> str:
        d = len(self.cells[0].x_in) if self.cells else 0
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(
            [f"x_in_{k + 1}" for k in range(d)]
            + [f"x_fin_{k + 1}" for k in range(d)]
            + ["S", "iterations", "residual", "status"]
        )
        for c in self.cells:
            w.writerow(
                [f"{val:.17g}" for val in (*c.x_in, *c.x_fin, c.value)]
                + [str(c.iterations), f"{c.residual:.17g}", c.status]
            )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def s_grid(
    spec: LagrangianSpec,
    pts_in: Sequence,
    pts_fin: Sequence,
    opts: ShootingOptions | None = None,
) -> SGrid:
    """Principal function on every (in, fin) pair, row-major over ``pts_in``.

    Each solve is warm-started from the converged initial velocity of the
    nearest (in concatenated coordinates) previously solved non-trivial cell,
    shifted by the difference in chart displacement.
    Failed cells keep NaN values and carry the error class as status.
    """
    opts = opts or ShootingOptions()
    pts_in = [np.atleast_1d(np.asarray(p, dtype=float)) for p in pts_in]
    pts_fin = [np.atleast_1d(np.asarray(p, dtype=float)) for p in pts_fin]
    cells = []
    solved: list[tuple[np.ndarray, np.ndarray]] = []
    for i, a in enumerate(pts_in):
        for j, b in enumerate(pts_fin):
            cell = GridCell(i, j, a, b)
            cells.append(cell)
            cell_opts = opts
            key = np.concatenate([a, b])
            if solved and opts.initial_velocity is None:
                dists = [float(np.sum((key - k) ** 2)) for k, _ in solved]
                near_key, near_v = solved[int(np.argmin(dists))]
                # shift the neighbour's velocity by the change in chart displacement
                d = len(a)
                guess = near_v + (b - a) - (near_key[d:] - near_key[:d])
                cell_opts = ShootingOptions(
                    residual_tol=opts.residual_tol,
                    max_iters=opts.max_iters,
                    dt=opts.dt,
                    initial_velocity=tuple(guess),
                    backend=opts.backend,
                    jacobian_step=opts.jacobian_step,
                    max_halvings=opts.max_halvings,
                )
            try:
                res = principal_function(spec, a, b, cell_opts)
            except HJDivError as exc:
                cell.status = type(exc).__name__
                cell.residual = getattr(exc, "residual", math.nan)
                cell.iterations = getattr(exc, "iterations", 0)
                continue
            except ValueError as exc:
                cell.status = f"ValueError: {exc}"
                continue
            cell.value = res.value
            cell.iterations = res.iterations
            cell.residual = res.endpoint_residual
            cell.initial_velocity = res.initial_velocity
            if res.iterations > 0 or np.any(res.initial_velocity):
                solved.append((key, res.initial_velocity))
    return SGrid(cells, (len(pts_in), len(pts_fin)))
