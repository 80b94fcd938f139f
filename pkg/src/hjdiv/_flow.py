"""Pure-Python Euler-Lagrange flow and fixed-step RK4.

This is the reference implementation of the hot loop.  ``_kernels.pyx``
mirrors it operation by operation over compiled expression programs;
anything changed here must be changed there too.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateLagrangianError, DomainError, EvalError

POSITION_STEP = 1e-5
VELOCITY_STEP = 1e-6
SECOND_DIFF_STEP = 1e-4
COND_LIMIT = 1e12
MARGIN = 1e-9


def inside(x, lo, hi) -> bool:
    for c, a, b in zip(x, lo, hi):
        if not (a + MARGIN < c < b - MARGIN):
            return False
    return True


def require_inside(x, lo, hi):
    if not inside(x, lo, hi):
        raise DomainError(f"point {np.asarray(x).tolist()} outside domain")


def solve_regular(h: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``h a = rhs`` refusing ill-conditioned velocity Hessians."""
    try:
        inv = np.linalg.inv(h)
    except np.linalg.LinAlgError:
        raise DegenerateLagrangianError("velocity Hessian is singular") from None
    cond = np.abs(h).sum(axis=0).max() * np.abs(inv).sum(axis=0).max()
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise DegenerateLagrangianError(f"velocity Hessian ill-conditioned (cond={cond:.3g})")
    return inv @ rhs


def _shifted(x, m, h):
    xp = x.copy()
    xm = x.copy()
    xp[m] += h
    xm[m] -= h
    return xp, xm


def alpha_acceleration(metric, skew, alpha, lo, hi, x, v):
    """Acceleration of ``g v v / 2 + alpha T v v v / 6``; ``skew=None`` means T = 0."""
    d = len(x)
    require_inside(x, lo, hi)
    use_t = alpha != 0.0 and skew is not None
    g = metric(x)
    dg = np.empty((d, d, d))
    dt = np.empty((d, d, d, d)) if use_t else None
    for m in range(d):
        h = POSITION_STEP * max(1.0, abs(x[m]))
        xp, xm = _shifted(x, m, h)
        require_inside(xp, lo, hi)
        require_inside(xm, lo, hi)
        dg[m] = (metric(xp) - metric(xm)) / (2 * h)
        if use_t:
            dt[m] = (skew(xp) - skew(xm)) / (2 * h)
    hess = g
    dldx = 0.5 * np.einsum("mkl,k,l->m", dg, v, v)
    dpdx_v = np.einsum("mjk,k,m->j", dg, v, v)
    if use_t:
        t = skew(x)
        hess = g + alpha * np.einsum("jkl,l->jk", t, v)
        dldx = dldx + alpha / 6 * np.einsum("mjkl,j,k,l->m", dt, v, v, v)
        dpdx_v = dpdx_v + alpha / 2 * np.einsum("mjkl,k,l,m->j", dt, v, v, v)
    return solve_regular(hess, dldx - dpdx_v)


def custom_hessian(lag, grad, x, v):
    d = len(x)
    hess = np.empty((d, d))
    if grad is not None:
        for k in range(d):
            h = VELOCITY_STEP * max(1.0, abs(v[k]))
            vp, vm = _shifted(v, k, h)
            hess[:, k] = (grad(x, vp) - grad(x, vm)) / (2 * h)
    else:
        l0 = lag(x, v)
        for j in range(d):
            sj = SECOND_DIFF_STEP * max(1.0, abs(v[j]))
            vp, vm = _shifted(v, j, sj)
            hess[j, j] = (lag(x, vp) - 2 * l0 + lag(x, vm)) / (sj * sj)
            for k in range(j + 1, d):
                sk = SECOND_DIFF_STEP * max(1.0, abs(v[k]))
                vpp, vpm = _shifted(vp, k, sk)
                vmp, vmm = _shifted(vm, k, sk)
                val = (lag(x, vpp) - lag(x, vpm) - lag(x, vmp) + lag(x, vmm)) / (4 * sj * sk)
                hess[j, k] = hess[k, j] = val
    return 0.5 * (hess + hess.T)


def custom_momentum(lag, grad, x, v):
    if grad is not None:
        return np.asarray(grad(x, v), dtype=float)
    d = len(x)
    p = np.empty(d)
    for k in range(d):
        h = VELOCITY_STEP * max(1.0, abs(v[k]))
        vp, vm = _shifted(v, k, h)
        p[k] = (lag(x, vp) - lag(x, vm)) / (2 * h)
    return p


def custom_acceleration(lag, grad, lo, hi, x, v):
    """Acceleration of an arbitrary Lagrangian ``lag(x, v)`` by central differences.

    With an analytic momentum ``grad(x, v) = dL/dv`` only first differences
    are needed; otherwise mixed second differences use a larger step.
    """
    d = len(x)
    require_inside(x, lo, hi)
    hess = custom_hessian(lag, grad, x, v)
    dldx = np.empty(d)
    dpdx = np.empty((d, d))
    for m in range(d):
        h = POSITION_STEP * max(1.0, abs(x[m]))
        xp, xm = _shifted(x, m, h)
        require_inside(xp, lo, hi)
        require_inside(xm, lo, hi)
        dldx[m] = (lag(xp, v) - lag(xm, v)) / (2 * h)
        if grad is not None:
            dpdx[:, m] = (grad(xp, v) - grad(xm, v)) / (2 * h)
    if grad is None:
        for m in range(d):
            hm = SECOND_DIFF_STEP * max(1.0, abs(x[m]))
            xp, xm = _shifted(x, m, hm)
            require_inside(xp, lo, hi)
            require_inside(xm, lo, hi)
            for j in range(d):
                sj = SECOND_DIFF_STEP * max(1.0, abs(v[j]))
                vp, vm = _shifted(v, j, sj)
                dpdx[j, m] = (lag(xp, vp) - lag(xp, vm) - lag(xm, vp) + lag(xm, vm)) / (4 * sj * hm)
    return solve_regular(hess, dldx - dpdx @ v)


def rk4(accel, x0, v0, t0, dt, n_steps, lo, hi):
    """Classical RK4 on ``(x, v)``; errors are re-raised with the failing time."""
    d = len(x0)
    xs = np.empty((n_steps + 1, d))
    vs = np.empty((n_steps + 1, d))
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    xs[0] = x
    vs[0] = v
    half = 0.5 * dt
    for i in range(n_steps):
        t = t0 + i * dt
        try:
            a1 = accel(x, v)
            x2, v2 = x + half * v, v + half * a1
            a2 = accel(x2, v2)
            x3, v3 = x + half * v2, v + half * a2
            a3 = accel(x3, v3)
            x4, v4 = x + dt * v3, v + dt * a3
            a4 = accel(x4, v4)
        except DomainError as exc:
            raise DomainError(str(exc), time=t) from None
        except EvalError as exc:
            raise DomainError(f"field evaluation failed: {exc}", time=t) from None
        except DegenerateLagrangianError as exc:
            raise DegenerateLagrangianError(str(exc), time=t) from None
        x = x + dt / 6 * (v + 2 * v2 + 2 * v3 + v4)
        v = v + dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        xs[i + 1] = x
        vs[i + 1] = v
    if not inside(x, lo, hi):
        raise DomainError(f"point {x.tolist()} outside domain", time=t0 + n_steps * dt)
    return xs, vs
