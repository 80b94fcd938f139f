"""Statistical models: metric and skewness fields on a coordinate box.

A :class:`StatisticalModel` bundles a metric field ``g_jk(x)``, a totally
symmetric skewness field ``T_jkl(x)`` and any closed-form divergences known
for the model.  Fields defined through :mod:`hjdiv.expr` expressions can be
handed to the compiled flow kernel; plain Python callables are supported
too and run through the pure-Python path.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DefinitenessError,
    DomainError,
    EvalError,
    ParseError,
    SingularMetricError,
    UnknownModelError,
)
from .expr import Expression, parse_expression

__all__ = [
    "BOUNDARY_MARGIN",
    "MetricField",
    "SkewnessField",
    "TwoPointFunction",
    "StatisticalModel",
    "metric_at",
    "skewness_at",
    "christoffel_at",
    "geodesic_distance",
    "kl_divergence_exponential",
    "builtin_model",
    "BUILTIN_MODELS",
    "load_model",
    "model_from_config",
    "validate_model",
    "ValidationReport",
    "sample_points",
]

BOUNDARY_MARGIN = 1e-9
METRIC_STEP = 1e-5


def _as_expr(item) -> Expression:
    if isinstance(item, Expression):
        return item
    if isinstance(item, (int, float)):
        return parse_expression(repr(float(item)))
    return parse_expression(item)


class MetricField:
    """Map from chart points to symmetric ``dim x dim`` matrices."""

    def __init__(self, dim: int, evaluator: Callable | None = None, exprs=None):
        self.dim = dim
        self.exprs = None
        if exprs is not None:
            exprs = [[_as_expr(e) for e in row] for row in exprs]
            if len(exprs) != dim or any(len(row) != dim for row in exprs):
                raise ConfigError(f"metric must be a {dim}x{dim} array of expressions")
            for row in exprs:
                for e in row:
                    e.check_dim(dim)
            self.exprs = exprs
            fns = [[e.to_callable(dim) for e in row] for row in exprs]

            def evaluator(x, _fns=fns):
                return np.array([[f(x) for f in row] for row in _fns])

        if evaluator is None:
            raise ValueError("need an evaluator or expressions")
        self._evaluator = evaluator

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self._evaluator(x), dtype=float).reshape(self.dim, self.dim)

    def flat_exprs(self) -> list[Expression] | None:
        if self.exprs is None:
            return None
        return [e for row in self.exprs for e in row]


class SkewnessField:
    """Map from chart points to rank-3 arrays ``T_jkl``."""

    def __init__(self, dim: int, evaluator: Callable | None = None, exprs=None, zero=False):
        self.dim = dim
        self.zero = zero
        self.exprs = None
        if zero:
            shape = (dim,) * 3

            def evaluator(x, _shape=shape):
                return np.zeros(_shape)

            self.exprs = [[[parse_expression("0") for _ in range(dim)] for _ in range(dim)] for _ in range(dim)]
        elif exprs is not None:
            exprs = [[[_as_expr(e) for e in row] for row in plane] for plane in exprs]
            ok = len(exprs) == dim and all(
                len(plane) == dim and all(len(row) == dim for row in plane) for plane in exprs
            )
            if not ok:
                raise ConfigError(f"skewness must be a {dim}x{dim}x{dim} array of expressions")
            for plane in exprs:
                for row in plane:
                    for e in row:
                        e.check_dim(dim)
            self.exprs = exprs
            fns = [[[e.to_callable(dim) for e in row] for row in plane] for plane in exprs]

            def evaluator(x, _fns=fns):
                return np.array([[[f(x) for f in row] for row in plane] for plane in _fns])

        if evaluator is None:
            raise ValueError("need an evaluator, expressions or zero=True")
        self._evaluator = evaluator

    @classmethod
    def zeros(cls, dim: int) -> "SkewnessField":
        return cls(dim, zero=True)

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self._evaluator(x), dtype=float).reshape((self.dim,) * 3)

    def flat_exprs(self) -> list[Expression] | None:
        if self.exprs is None:
            return None
        return [e for plane in self.exprs for row in plane for e in row]


@dataclass(frozen=True)
class TwoPointFunction:
    """Any real function of an ordered pair of chart points.

    ``implied_alpha`` is a diagnostic label: the value of alpha for which the
    recovered skewness combination of this function equals ``2 alpha T``.
    """

    name: str
    evaluator: Callable
    lo: tuple
    hi: tuple
    implied_alpha: float | None = None

    @property
    def dim(self) -> int:
        return len(self.lo)

    def __call__(self, a, b) -> float:
        return float(self.evaluator(np.asarray(a, dtype=float), np.asarray(b, dtype=float)))

    def swapped(self) -> "TwoPointFunction":
        f = self.evaluator
        alpha = None if self.implied_alpha is None else -self.implied_alpha
        return TwoPointFunction(f"{self.name}~swapped", lambda a, b: f(b, a), self.lo, self.hi, alpha)


@dataclass(frozen=True)
class StatisticalModel:
    name: str
    dim: int
    lo: tuple
    hi: tuple
    metric: MetricField
    skewness: SkewnessField
    divergences: Mapping[str, TwoPointFunction] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if len(self.lo) != self.dim or len(self.hi) != self.dim:
            raise ConfigError("domain must have one interval per coordinate")
        for a, b in zip(self.lo, self.hi):
            if not a < b:
                raise ConfigError(f"empty domain interval ({a}, {b})")

    def contains(self, x, margin: float = BOUNDARY_MARGIN) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,) or not np.all(np.isfinite(x)):
            return False
        lo = np.asarray(self.lo) + margin
        hi = np.asarray(self.hi) - margin
        return bool(np.all(x > lo) and np.all(x < hi))

    def check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape != (self.dim,):
            raise DomainError(f"expected {self.dim} coordinates, got {x.shape[0]}")
        if not self.contains(x):
            raise DomainError(f"point {x.tolist()} outside domain of model {self.name!r}")
        return x

    def divergence(self, name: str) -> TwoPointFunction:
        try:
            return self.divergences[name]
        except KeyError:
            known = ", ".join(sorted(self.divergences)) or "none"
            raise UnknownModelError(f"model {self.name!r} has no divergence {name!r} (known: {known})") from None

    @property
    def compilable(self) -> bool:
        return self.metric.exprs is not None and self.skewness.exprs is not None


def metric_at(model: StatisticalModel, x) -> np.ndarray:
    x = model.check(x)
    try:
        g = model.metric(x)
    except EvalError as exc:
        raise DomainError(f"metric undefined at {x.tolist()}: {exc}") from None
    eig = np.linalg.eigvalsh(0.5 * (g + g.T))
    if not np.all(eig > 0):
        raise DefinitenessError(f"metric not positive-definite at {x.tolist()} (eigenvalues {eig.tolist()})")
    return g


def skewness_at(model: StatisticalModel, x) -> np.ndarray:
    x = model.check(x)
    try:
        return model.skewness(x)
    except EvalError as exc:
        raise DomainError(f"skewness undefined at {x.tolist()}: {exc}") from None


def christoffel_at(model: StatisticalModel, x) -> np.ndarray:
    """Levi-Civita symbols ``Gamma[i, j, k]`` from central differences of g."""
    x = model.check(x)
    d = model.dim
    g = model.metric(x)
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError:
        raise SingularMetricError(f"metric singular at {x.tolist()}") from None
    if not np.all(np.isfinite(ginv)) or np.linalg.cond(g) > 1e14:
        raise SingularMetricError(f"metric singular at {x.tolist()}")
    dg = np.empty((d, d, d))  # dg[m] = d g / d x^m
    for m in range(d):
        h = METRIC_STEP * max(1.0, abs(x[m]))
        e = np.zeros(d)
        e[m] = h
        dg[m] = (model.metric(model.check(x + e)) - model.metric(model.check(x - e))) / (2 * h)
    # first kind: [jk, m] = (d_j g_mk + d_k g_mj - d_m g_jk) / 2
    first = 0.5 * (
        np.einsum("jmk->mjk", dg) + np.einsum("kmj->mjk", dg) - dg
    )
    return np.einsum("im,mjk->ijk", ginv, first)


def kl_divergence_exponential(xi_in: float, xi_fin: float) -> float:
    """KL divergence between exponential densities with rates ``xi_in``, ``xi_fin``."""
    if not (xi_in > 0 and xi_fin > 0):
        raise DomainError(f"exponential rates must be positive, got ({xi_in}, {xi_fin})")
    return math.log(xi_in / xi_fin) + xi_fin / xi_in - 1.0


def geodesic_distance(model: StatisticalModel, x_in, x_fin, opts=None) -> float:
    """Riemannian distance: length of the shot metric geodesic joining the points."""
    from .lagrangian import LagrangianSpec
    from .solver import ShootingOptions, geodesic_length, shoot

    a = model.check(x_in)
    b = model.check(x_fin)
    if np.array_equal(a, b):
        return 0.0
    spec = LagrangianSpec.alpha_family(model, 0.0)
    traj = shoot(spec, a, b, opts or ShootingOptions())
    return geodesic_length(model, traj)


# -- built-in models --------------------------------------------------------


def _exponential() -> StatisticalModel:
    lo, hi = (0.0,), (math.inf,)

    def kl(a, b):
        return kl_divergence_exponential(float(a[0]), float(b[0]))

    return StatisticalModel(
        name="exponential",
        dim=1,
        lo=lo,
        hi=hi,
        metric=MetricField(1, exprs=[["1/x1^2"]]),
        skewness=SkewnessField(1, exprs=[[["-2/x1^3"]]]),
        divergences={
            "kl": TwoPointFunction("kl", kl, lo, hi, implied_alpha=-0.5),
            "reverse-kl": TwoPointFunction("reverse-kl", lambda a, b: kl(b, a), lo, hi, implied_alpha=0.5),
        },
    )


def _sphere_qubit() -> StatisticalModel:
    from .quantum import chart_to_bloch, fubini_divergence

    lo, hi = (0.0, -math.pi), (math.pi, math.pi)

    def fubini(a, b):
        return fubini_divergence(chart_to_bloch(a), chart_to_bloch(b))

    return StatisticalModel(
        name="sphere-qubit",
        dim=2,
        lo=lo,
        hi=hi,
        # twice the round metric so that half the squared distance is arccos^2
        metric=MetricField(2, exprs=[["2", "0"], ["0", "2*sin(x1)^2"]]),
        skewness=SkewnessField.zeros(2),
        divergences={"fubini": TwoPointFunction("fubini", fubini, lo, hi, implied_alpha=0.0)},
    )


def _euclidean(dim: int = 2) -> StatisticalModel:
    lo, hi = (-math.inf,) * dim, (math.inf,) * dim
    eye = [["1" if i == j else "0" for j in range(dim)] for i in range(dim)]

    def half_sq(a, b):
        return 0.5 * float(np.sum((np.asarray(a) - np.asarray(b)) ** 2))

    return StatisticalModel(
        name="euclidean",
        dim=dim,
        lo=lo,
        hi=hi,
        metric=MetricField(dim, exprs=eye),
        skewness=SkewnessField.zeros(dim),
        divergences={"half-sq-dist": TwoPointFunction("half-sq-dist", half_sq, lo, hi, implied_alpha=0.0)},
    )


BUILTIN_MODELS: dict[str, Callable[[], StatisticalModel]] = {
    "exponential": _exponential,
    "sphere-qubit": _sphere_qubit,
    "euclidean": _euclidean,
}


def builtin_model(name: str) -> StatisticalModel:
    try:
        factory = BUILTIN_MODELS[name]
    except KeyError:
        raise UnknownModelError(
            f"unknown model {name!r}; built-ins are {', '.join(sorted(BUILTIN_MODELS))}"
        ) from None
    return factory()


# -- config files -----------------------------------------------------------


def _bound(value, default):
    if value in ("-inf", "inf"):
        return float(value)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if value is None:
        return default
    raise ConfigError(f"bad domain bound {value!r}")


def model_from_config(cfg: Mapping) -> StatisticalModel:
    """Build a model from the JSON config schema (already decoded)."""
    try:
        name = str(cfg["name"])
        dim = int(cfg["dim"])
        domain = cfg["domain"]
        metric_src = cfg["metric"]
        skew_src = cfg.get("skewness", "zero")
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model config: {exc}") from None
    if dim < 1 or len(domain) != dim:
        raise ConfigError("domain needs exactly one interval per dimension")
    lo = tuple(_bound(iv.get("lo"), -math.inf) for iv in domain)
    hi = tuple(_bound(iv.get("hi"), math.inf) for iv in domain)
    try:
        metric = MetricField(dim, exprs=metric_src)
        if skew_src == "zero":
            skew = SkewnessField.zeros(dim)
        else:
            skew = SkewnessField(dim, exprs=skew_src)
    except ParseError as exc:
        raise ConfigError(f"expression error: {exc}") from None
    except EvalError as exc:
        raise ConfigError(str(exc)) from None
    return StatisticalModel(name=name, dim=dim, lo=lo, hi=hi, metric=metric, skewness=skew)


def load_model(ref: str | Path) -> StatisticalModel:
    """Resolve a built-in name or a path to a JSON model file."""
    if isinstance(ref, str) and ref in BUILTIN_MODELS:
        return builtin_model(ref)
    path = Path(ref)
    if not path.exists():
        raise ConfigError(f"no built-in model or file named {str(ref)!r}")
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return model_from_config(cfg)


# -- validation -------------------------------------------------------------


def sample_points(model: StatisticalModel, n: int = 100, seed: int = 0) -> np.ndarray:
    """Deterministic quasi-random interior points (Halton, mapped per interval)."""
    from scipy.stats import qmc

    u = qmc.Halton(d=model.dim, scramble=True, seed=seed).random(n)
    u = np.clip(u, 1e-3, 1 - 1e-3)
    pts = np.empty_like(u)
    for i, (a, b) in enumerate(zip(model.lo, model.hi)):
        if math.isfinite(a) and math.isfinite(b):
            pad = 1e-3 * (b - a)
            pts[:, i] = a + pad + (b - a - 2 * pad) * u[:, i]
        elif math.isfinite(a):
            pts[:, i] = a + u[:, i] / (1 - u[:, i])
        elif math.isfinite(b):
            pts[:, i] = b - u[:, i] / (1 - u[:, i])
        else:
            pts[:, i] = np.log(u[:, i] / (1 - u[:, i]))
    return pts


@dataclass
class ValidationReport:
    model: str
    points_checked: int
    symmetry_violations: list = field(default_factory=list)
    definiteness_violations: list = field(default_factory=list)
    skewness_violations: list = field(default_factory=list)
    evaluation_errors: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not (
            self.symmetry_violations
            or self.definiteness_violations
            or self.skewness_violations
            or self.evaluation_errors
        )

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "points_checked": self.points_checked,
            "passed": self.passed,
            "symmetry_violations": self.symmetry_violations,
            "definiteness_violations": self.definiteness_violations,
            "skewness_violations": self.skewness_violations,
            "evaluation_errors": self.evaluation_errors,
        }


def _rel_asym(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(a))))
    return float(np.max(np.abs(a - b))) / scale


def validate_model(
    model: StatisticalModel, points: Sequence | None = None, n: int = 100, rtol: float = 1e-12
) -> ValidationReport:
    """Check symmetry/definiteness of g and full symmetry of T at sample points."""
    pts = sample_points(model, n) if points is None else np.asarray(points, dtype=float).reshape(-1, model.dim)
    report = ValidationReport(model=model.name, points_checked=len(pts))
    perms = list(itertools.permutations(range(3)))
    for x in pts:
        xl = [float(c) for c in x]
        try:
            g = model.metric(x)
            t = model.skewness(x)
        except EvalError as exc:
            report.evaluation_errors.append({"point": xl, "error": str(exc)})
            continue
        asym = _rel_asym(g, g.T)
        if asym > rtol:
            report.symmetry_violations.append({"point": xl, "asymmetry": asym})
            continue
        eig = np.linalg.eigvalsh(g)
        if not np.all(eig > 0):
            report.definiteness_violations.append({"point": xl, "min_eigenvalue": float(eig.min())})
        worst = max(_rel_asym(t, np.transpose(t, p)) for p in perms)
        if worst > rtol:
            report.skewness_violations.append({"point": xl, "asymmetry": worst})
    return report
