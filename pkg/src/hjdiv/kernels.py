"""Flow-kernel backend selection.

The compiled kernel (``hjdiv._kernels``) is used when it was built and the
Lagrangian is expression-defined; otherwise the pure-Python flow in
``hjdiv._flow`` runs.  Both integrate the same equations with the same
finite-difference steps.
"""

from __future__ import annotations

import numpy as np

from . import _flow
from .errors import DegenerateLagrangianError, DomainError

try:
    from . import _kernels as _native
except ImportError:  # extension not built
    _native = None

NATIVE_AVAILABLE = _native is not None
DEFAULT_BACKEND = "cython" if NATIVE_AVAILABLE else "python"
BACKENDS = ("auto", "cython", "python")

_DOMAIN, _DEGENERATE, _EVAL = 1, 2, 3


def resolve(backend: str | None) -> str:
    if backend in (None, "auto"):
        return DEFAULT_BACKEND
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    if backend == "cython" and not NATIVE_AVAILABLE:
        raise RuntimeError("compiled kernel not available; reinstall with a C compiler and Cython")
    return backend


def _handle(spec):
    flow = spec.native_flow
    if flow is None:
        return None
    program, kind, use_skew, has_grad = flow
    model = spec.model
    return _native._FlowHandle(program, kind, model.dim, float(spec.alpha), use_skew, has_grad, model.lo, model.hi)


def _use_native(spec, backend: str | None) -> bool:
    if resolve(backend) == "python":
        return False
    if spec.native_flow is None:
        # "auto" falls back quietly; an explicit "cython" request does not
        if backend == "cython":
            raise RuntimeError(f"Lagrangian {spec.name!r} is not expression-defined; the compiled kernel cannot run it")
        return False
    return True


def _raise(status: int, time: float | None, where: str):
    if status == _DEGENERATE:
        raise DegenerateLagrangianError(f"velocity Hessian singular or ill-conditioned {where}", time=time)
    if status == _EVAL:
        raise DomainError(f"field evaluation failed {where}", time=time)
    raise DomainError(f"trajectory left the domain {where}", time=time)


def acceleration(spec, x, v, backend: str | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if _use_native(spec, backend):
        a, status, _ = _handle(spec).acceleration(x, v)
        if status:
            _raise(status, None, f"at x={x.tolist()}")
        return a
    return spec.python_acceleration(x, v)


def integrate(spec, x0, v0, t0: float, dt: float, n_steps: int, backend: str | None = None):
    """Return ``(xs, vs)`` arrays of shape ``(n_steps + 1, dim)``."""
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if _use_native(spec, backend):
        xs, vs, status, failed = _handle(spec).integrate(x0, v0, float(t0), float(dt), int(n_steps))
        if status:
            _raise(status, t0 + failed * dt, "during integration")
        return xs, vs
    lo, hi = spec.model.lo, spec.model.hi
    return _flow.rk4(spec.python_acceleration, x0, v0, t0, dt, n_steps, lo, hi)
