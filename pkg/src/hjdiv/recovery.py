"""Recover metric and skewness from a two-point function on the diagonal.

For ``f(a, b)`` with ``a = x_in`` and ``b = x_fin``::

    g_jk      = -d2 f / db_j da_k                              at a = b = x
    2 alpha T = d3 f / da_l da_k db_j - d3 f / db_l db_k da_j   at a = b = x

Derivatives use tensor products of central-difference stencils on a
uniform step ``h``; node values are cached so shared nodes cost one call.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, HJDivError, NaNError, ShapeMismatch
from .geometry import BOUNDARY_MARGIN, TwoPointFunction
from .solver import ShootingOptions, principal_function

__all__ = [
    "TwoPointFunction",
    "principal_two_point",
    "mixed_partial",
    "recover_metric",
    "recover_skewness",
    "compare_tensors",
    "RecoveryReport",
    "default_step",
]

# (offsets, weights) per (derivative order, accuracy order)
_STENCILS = {
    (1, 2): ((-1, 1), (-0.5, 0.5)),
    (2, 2): ((-1, 0, 1), (1.0, -2.0, 1.0)),
    (3, 2): ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
    (1, 4): ((-2, -1, 1, 2), (1 / 12, -8 / 12, 8 / 12, -1 / 12)),
    (2, 4): ((-2, -1, 0, 1, 2), (-1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12)),
    (3, 4): ((-3, -2, -1, 1, 2, 3), (1 / 8, -1.0, 13 / 8, -13 / 8, 1.0, -1 / 8)),
}


def default_step(x, base: float = 1e-3) -> float:
    return base * max(1.0, float(np.max(np.abs(x))))


def principal_two_point(spec, opts: ShootingOptions | None = None) -> TwoPointFunction:
    """Numerically computed principal function of ``spec`` as a two-point function."""
    opts = opts or ShootingOptions()

    def evaluate(a, b):
        return principal_function(spec, a, b, opts).value

    return TwoPointFunction(f"S[{spec.name}]", evaluate, spec.model.lo, spec.model.hi)


class _NodeCache:
    def __init__(self, f: TwoPointFunction, x: np.ndarray, h: float):
        self.f = f
        self.x = x
        self.h = h
        self.values: dict[tuple, float] = {}

    def __call__(self, offsets: tuple) -> float:
        val = self.values.get(offsets)
        if val is None:
            d = len(self.x)
            shift = self.h * np.asarray(offsets, dtype=float)
            a = self.x + shift[:d]
            b = self.x + shift[d:]
            try:
                val = self.f(a, b)
            except HJDivError as exc:
                raise NaNError(f"{self.f.name} failed at a={a.tolist()}, b={b.tolist()}: {exc}") from None
            if not math.isfinite(val):
                raise NaNError(f"{self.f.name} returned {val} at a={a.tolist()}, b={b.tolist()}")
            self.values[offsets] = val
        return val


def _mixed(cache: _NodeCache, variables: tuple, order: int) -> float:
    counts: dict[int, int] = {}
    for var in variables:
        counts[var] = counts.get(var, 0) + 1
    axes = []
    for var, mult in sorted(counts.items()):
        offs, wts = _STENCILS[(mult, order)]
        axes.append([(var, o, w) for o, w in zip(offs, wts)])
    nvars = 2 * len(cache.x)
    total = 0.0
    for combo in itertools.product(*axes):
        node = [0] * nvars
        weight = 1.0
        for var, o, w in combo:
            node[var] = o
            weight *= w
        total += weight * cache(tuple(node))
    return total / cache.h ** len(variables)


def _check_margin(f: TwoPointFunction, x: np.ndarray, reach: float):
    lo = np.asarray(f.lo) + BOUNDARY_MARGIN
    hi = np.asarray(f.hi) - BOUNDARY_MARGIN
    if np.any(x - reach <= lo) or np.any(x + reach >= hi):
        raise DomainError(f"stencil of half-width {reach:g} around {x.tolist()} leaves the domain")


def _prepare(f: TwoPointFunction, x, h, reach_steps: int):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (f.dim,):
        raise DomainError(f"expected {f.dim} coordinates, got {x.shape[0]}")
    h = default_step(x) if h is None else float(h)
    if not h > 0:
        raise ValueError("step h must be positive")
    _check_margin(f, x, reach_steps * h)
    return x, h


def mixed_partial(f: TwoPointFunction, x, variables, h: float | None = None, order: int = 2) -> float:
    """Mixed partial of ``f`` at ``(x, x)``; variables index ``(a_1..a_d, b_1..b_d)``."""
    reach = 3 if order == 4 else 2
    x, h = _prepare(f, x, h, reach)
    return _mixed(_NodeCache(f, x, h), tuple(variables), order)


def _richardson(coarse, fine, order: int):
    factor = 2.0 ** order
    return (factor * fine - coarse) / (factor - 1.0)


def _metric_once(f, x, h, order):
    d = f.dim
    cache = _NodeCache(f, x, h)
    m = np.empty((d, d))
    for j in range(d):
        for k in range(d):
            m[j, k] = _mixed(cache, (d + j, k), order)
    return -0.5 * (m + m.T)


def recover_metric(
    f: TwoPointFunction, x, h: float | None = None, order: int = 2, richardson: bool = False
) -> np.ndarray:
    """``-d2 f / db_j da_k`` on the diagonal, symmetrized."""
    if order not in (2, 4):
        raise ValueError("stencil order must be 2 or 4")
    x, h = _prepare(f, x, h, 2)
    out = _metric_once(f, x, h, order)
    if richardson:
        out = _richardson(out, _metric_once(f, x, h / 2, order), order)
    return out


def _skew_once(f, x, h, order):
    d = f.dim
    cache = _NodeCache(f, x, h)
    raw = np.empty((d, d, d))
    for j, k, l in itertools.product(range(d), repeat=3):
        in_in_fin = _mixed(cache, (l, k, d + j), order)
        fin_fin_in = _mixed(cache, (d + l, d + k, j), order)
        raw[j, k, l] = in_in_fin - fin_fin_in
    return raw


def recover_skewness(
    f: TwoPointFunction,
    x,
    h: float | None = None,
    order: int = 2,
    richardson: bool = False,
    full_output: bool = False,
):
    """Third-derivative combination equal to ``2 alpha T_jkl``, symmetrized in (k, l).

    With ``full_output`` also returns the max |raw_jkl - raw_jlk| seen before
    symmetrization.
    """
    if order not in (2, 4):
        raise ValueError("stencil order must be 2 or 4")
    x, h = _prepare(f, x, h, 3)
    raw = _skew_once(f, x, h, order)
    if richardson:
        raw = _richardson(raw, _skew_once(f, x, h / 2, order), order)
    asym = float(np.max(np.abs(raw - np.swapaxes(raw, 1, 2))))
    out = 0.5 * (raw + np.swapaxes(raw, 1, 2))
    return (out, asym) if full_output else out


@dataclass
class RecoveryReport:
    recovered: np.ndarray
    reference: np.ndarray
    max_abs_error: float
    tol: float
    step_used: float | None = None
    stencil_order: int | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_abs_error <= self.tol

    def to_dict(self) -> dict:
        return {
            "recovered": np.asarray(self.recovered).tolist(),
            "reference": np.asarray(self.reference).tolist(),
            "max_abs_error": self.max_abs_error,
            "tol": self.tol,
            "passed": self.passed,
            "step": self.step_used,
            "stencil_order": self.stencil_order,
            "diagnostics": self.diagnostics,
        }

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text


def compare_tensors(recovered, reference, tol: float, step: float | None = None, order: int | None = None) -> RecoveryReport:
    rec = np.asarray(recovered, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if rec.shape != ref.shape:
        raise ShapeMismatch(f"shape {rec.shape} does not match reference {ref.shape}")
    err = float(np.max(np.abs(rec - ref))) if rec.size else 0.0
    return RecoveryReport(rec, ref, err, float(tol), step, order)
