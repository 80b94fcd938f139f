"""Lagrangians on the tangent bundle of a model and their Euler-Lagrange flow.

Two kinds are supported:

* the alpha family ``g_jk v^j v^k / 2 + alpha T_jkl v^j v^k v^l / 6`` built
  from a :class:`~hjdiv.geometry.StatisticalModel`;
* custom scalar functions ``L(x, v)``, optionally with an analytic momentum
  ``dL/dv``.  ``LagrangianSpec.kl()`` is the closed-form Lagrangian whose
  principal function on the exponential model is the KL divergence.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _flow, kernels
from .errors import ConfigError, DomainError, EvalError
from .expr import Expression, compile_programs, parse_expression
from .geometry import StatisticalModel, builtin_model

__all__ = [
    "LagrangianSpec",
    "Trajectory",
    "lagrangian_eval",
    "velocity_hessian",
    "velocity_hessian_asymmetry",
    "el_acceleration",
    "integrate",
    "energy",
    "DEFAULT_DT",
    "parse_lagrangian_selector",
]

DEFAULT_DT = 1e-3

KL_LAGRANGIAN = "exp(v1/x1) - v1/x1 - 1"
KL_MOMENTUM = ("(exp(v1/x1) - 1)/x1",)


@dataclass(frozen=True, eq=False)
class LagrangianSpec:
    """A Lagrangian on the tangent bundle of ``model``.

    Build instances with :meth:`alpha_family`, :meth:`custom`,
    :meth:`from_expressions` or :meth:`kl`.
    """

    kind: str
    model: StatisticalModel
    alpha: float = 0.0
    name: str = ""
    lagrangian: Callable | None = None
    momentum: Callable | None = None
    lagrangian_expr: Expression | None = None
    momentum_exprs: tuple | None = None

    @classmethod
    def alpha_family(cls, model: StatisticalModel, alpha: float) -> "LagrangianSpec":
        alpha = float(alpha)
        return cls(kind="alpha", model=model, alpha=alpha, name=f"alpha:{alpha:g}")

    @classmethod
    def custom(
        cls,
        model: StatisticalModel,
        lagrangian: Callable,
        momentum: Callable | None = None,
        name: str = "custom",
    ) -> "LagrangianSpec":
        """Wrap a Python callable ``L(x, v)``; runs on the pure-Python flow only."""
        return cls(kind="custom", model=model, name=name, lagrangian=lagrangian, momentum=momentum)

    @classmethod
    def from_expressions(
        cls,
        model: StatisticalModel,
        lagrangian: str | Expression,
        momentum: Sequence[str | Expression] | None = None,
        name: str = "custom",
    ) -> "LagrangianSpec":
        d = model.dim
        try:
            lag = lagrangian if isinstance(lagrangian, Expression) else parse_expression(lagrangian)
            lag.check_dim(d, allow_velocity=True)
            mom = None
            if momentum is not None:
                mom = tuple(m if isinstance(m, Expression) else parse_expression(m) for m in momentum)
                if len(mom) != d:
                    raise ConfigError(f"momentum needs {d} components, got {len(mom)}")
                for m in mom:
                    m.check_dim(d, allow_velocity=True)
        except EvalError as exc:
            raise ConfigError(str(exc)) from None
        lag_fn = lag.to_callable(d)

        def lagrangian_fn(x, v):
            return lag_fn((*x, *v))

        momentum_fn = None
        if mom is not None:
            mom_fns = [m.to_callable(d) for m in mom]

            def momentum_fn(x, v):
                z = (*x, *v)
                return np.array([f(z) for f in mom_fns])

        return cls(
            kind="custom",
            model=model,
            name=name,
            lagrangian=lagrangian_fn,
            momentum=momentum_fn,
            lagrangian_expr=lag,
            momentum_exprs=mom,
        )

    @classmethod
    def kl(cls, model: StatisticalModel | None = None) -> "LagrangianSpec":
        """``exp(v/xi) - v/xi - 1`` on the exponential model."""
        model = model or builtin_model("exponential")
        if model.dim != 1:
            raise ConfigError("the KL Lagrangian is defined on a one-dimensional model")
        return cls.from_expressions(model, KL_LAGRANGIAN, KL_MOMENTUM, name="kl")

    @property
    def is_alpha(self) -> bool:
        return self.kind == "alpha"

    @cached_property
    def native_flow(self):
        """``(program, kind, use_skew, has_grad)`` for the compiled kernel, or None."""
        d = self.model.dim
        if self.is_alpha:
            if not self.model.compilable:
                return None
            exprs = list(self.model.metric.flat_exprs())
            use_skew = self.alpha != 0.0 and not self.model.skewness.zero
            if use_skew:
                exprs += self.model.skewness.flat_exprs()
            return compile_programs(exprs, d), 0, use_skew, False
        if self.lagrangian_expr is None:
            return None
        exprs = [self.lagrangian_expr]
        if self.momentum_exprs is not None:
            exprs += list(self.momentum_exprs)
        return compile_programs(exprs, d), 1, False, self.momentum_exprs is not None

    @cached_property
    def python_acceleration(self) -> Callable:
        model = self.model
        lo, hi = model.lo, model.hi
        if self.is_alpha:
            metric = model.metric
            skew = None if model.skewness.zero else model.skewness
            alpha = self.alpha

            def accel(x, v):
                return _flow.alpha_acceleration(metric, skew, alpha, lo, hi, x, v)

        else:
            lag, mom = self.lagrangian, self.momentum

            def accel(x, v):
                return _flow.custom_acceleration(lag, mom, lo, hi, x, v)

        return accel


def _state(spec: LagrangianSpec, x, v):
    x = spec.model.check(x)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != x.shape:
        raise DomainError(f"velocity has {v.shape[0]} components, model dimension is {x.shape[0]}")
    return x, v


def lagrangian_eval(spec: LagrangianSpec, x, v) -> float:
    x, v = _state(spec, x, v)
    try:
        if spec.is_alpha:
            g = spec.model.metric(x)
            val = 0.5 * v @ g @ v
            if spec.alpha != 0.0:
                val += spec.alpha / 6 * np.einsum("jkl,j,k,l->", spec.model.skewness(x), v, v, v)
            return float(val)
        return float(spec.lagrangian(x, v))
    except EvalError as exc:
        raise DomainError(f"Lagrangian undefined at x={x.tolist()}, v={v.tolist()}: {exc}") from None


def velocity_hessian(spec: LagrangianSpec, x, v) -> np.ndarray:
    x, v = _state(spec, x, v)
    if spec.is_alpha:
        h = spec.model.metric(x)
        if spec.alpha != 0.0:
            h = h + spec.alpha * np.einsum("jkl,l->jk", spec.model.skewness(x), v)
        return h
    return _flow.custom_hessian(spec.lagrangian, spec.momentum, x, v)


def velocity_hessian_asymmetry(spec: LagrangianSpec, x, v) -> float:
    """Max |H - H^T| of the unsymmetrized finite-difference velocity Hessian."""
    x, v = _state(spec, x, v)
    if spec.is_alpha:
        h = velocity_hessian(spec, x, v)
        return float(np.max(np.abs(h - h.T)))
    d = len(x)
    raw = np.empty((d, d))
    if spec.momentum is not None:
        for k in range(d):
            step = _flow.VELOCITY_STEP * max(1.0, abs(v[k]))
            vp, vm = v.copy(), v.copy()
            vp[k] += step
            vm[k] -= step
            raw[:, k] = (spec.momentum(x, vp) - spec.momentum(x, vm)) / (2 * step)
        return float(np.max(np.abs(raw - raw.T)))
    # a mixed second difference of a scalar is symmetric by construction
    return 0.0


def el_acceleration(spec: LagrangianSpec, x, v, backend: str | None = "python") -> np.ndarray:
    """Solve the Euler-Lagrange equations for the acceleration at ``(x, v)``."""
    x, v = _state(spec, x, v)
    try:
        return kernels.acceleration(spec, x, v, backend)
    except EvalError as exc:
        raise DomainError(f"field evaluation failed at x={x.tolist()}: {exc}") from None


def energy(spec: LagrangianSpec, x, v) -> float:
    """Legendre energy ``v . dL/dv - L``."""
    x, v = _state(spec, x, v)
    if spec.is_alpha:
        g = spec.model.metric(x)
        val = 0.5 * v @ g @ v
        if spec.alpha != 0.0:
            val += spec.alpha / 3 * np.einsum("jkl,j,k,l->", spec.model.skewness(x), v, v, v)
        return float(val)
    p = _flow.custom_momentum(spec.lagrangian, spec.momentum, x, v)
    return float(v @ p - spec.lagrangian(x, v))


@dataclass
class Trajectory:
    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    spec: LagrangianSpec | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.times) < 2:
            raise ValueError("a trajectory needs at least two samples")
        if not (len(self.times) == len(self.points) == len(self.velocities)):
            raise ValueError("times, points and velocities must share length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def energies(self, spec: LagrangianSpec | None = None) -> np.ndarray:
        spec = spec or self.spec
        return np.array([energy(spec, x, v) for x, v in zip(self.points, self.velocities)])

    def lagrangian_values(self, spec: LagrangianSpec | None = None) -> np.ndarray:
        spec = spec or self.spec
        return np.array([lagrangian_eval(spec, x, v) for x, v in zip(self.points, self.velocities)])

    def to_csv(self, path: str | Path | None = None, spec: LagrangianSpec | None = None) -> str:
        """CSV with columns t, x1..xd, v1..vd, energy (17 significant digits)."""
        spec = spec or self.spec
        d = self.points.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(d)] + [f"v{i + 1}" for i in range(d)] + ["energy"])
        energies = self.energies(spec) if spec is not None else [math.nan] * len(self)
        for t, x, v, e in zip(self.times, self.points, self.velocities, energies):
            w.writerow([f"{val:.17g}" for val in (t, *x, *v, e)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def step_count(t_span: tuple[float, float], dt: float) -> tuple[int, float]:
    """Uniform grid with at most ``dt`` spacing that ends exactly at ``t_span[1]``."""
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not t1 > t0:
        raise ValueError("t_span must be increasing")
    n = max(1, math.ceil((t1 - t0) / dt - 1e-9))
    return n, (t1 - t0) / n


def integrate(
    spec: LagrangianSpec,
    x0,
    v0,
    t_span: tuple[float, float] = (0.0, 1.0),
    dt: float = DEFAULT_DT,
    backend: str | None = None,
) -> Trajectory:
    """Fixed-step RK4 integration of the Euler-Lagrange flow."""
    x0, v0 = _state(spec, x0, v0)
    n, h = step_count(t_span, dt)
    xs, vs = kernels.integrate(spec, x0, v0, t_span[0], h, n, backend)
    times = t_span[0] + h * np.arange(n + 1)
    times[-1] = t_span[1]
    return Trajectory(times, xs, vs, spec)


def parse_lagrangian_selector(selector: str, model: StatisticalModel) -> LagrangianSpec:
    """``"alpha:<real>"`` or ``"kl"``."""
    selector = selector.strip()
    if selector == "kl":
        if model.name != "exponential":
            raise ConfigError("the kl Lagrangian is only defined for the exponential model")
        return LagrangianSpec.kl(model)
    if selector.startswith("alpha:"):
        try:
            alpha = float(selector.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad alpha in selector {selector!r}") from None
        if not math.isfinite(alpha):
            raise ConfigError("alpha must be finite")
        return LagrangianSpec.alpha_family(model, alpha)
    raise ConfigError(f"unknown Lagrangian selector {selector!r}; use 'alpha:<real>' or 'kl'")
