"""Qubit pure states as 2x2 density matrices.

Chart-free counterpart of the ``sphere-qubit`` model: Bloch vectors,
unitary conjugation curves generated by commutators, the trace-form
Lagrangian on U(2), and the arccos^2 divergence.  Divergences and
Lagrangians follow the normalization in which half the squared Fubini-Study
distance between states at Bloch angle ``theta`` is ``theta**2``.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateEndpointsError, NonUnitaryError, NotPureError

__all__ = [
    "IDENTITY",
    "PAULI",
    "bloch_to_density",
    "density_to_bloch",
    "chart_to_bloch",
    "bloch_to_chart",
    "normalize_bloch",
    "commutator",
    "conjugation_unitary",
    "conjugation_geodesic",
    "commutator_generator",
    "fubini_divergence",
    "trace_lagrangian",
    "trace_form_action",
    "conjugation_action",
    "check_density",
]

IDENTITY = np.eye(2, dtype=complex)
PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

UNIT_TOL = 1e-12
HERMITIAN_TOL = 1e-12
PURITY_TOL = 1e-10
DEGENERATE_TOL = 1e-10
CLAMP_GUARD = 1e-12


def _unit(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (3,):
        raise NotPureError(f"Bloch vector needs 3 components, got {x.shape[0]}")
    if abs(float(np.dot(x, x)) - 1.0) > UNIT_TOL:
        raise NotPureError(f"Bloch vector not unit length (|x|^2 = {float(np.dot(x, x))!r})")
    return x


def normalize_bloch(x, warn_tol: float = 1e-6):
    """Return ``(unit_vector, was_far)``; ``was_far`` flags a norm off by > warn_tol."""
    x = np.asarray(x, dtype=float).reshape(-1)
    n = float(np.linalg.norm(x))
    if x.shape != (3,) or n == 0.0:
        raise NotPureError("Bloch vector must be a non-zero 3-vector")
    return x / n, abs(n - 1.0) > warn_tol


def check_density(rho, pure: bool = True) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise NotPureError(f"expected a 2x2 matrix, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
        raise NotPureError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > HERMITIAN_TOL:
        raise NotPureError(f"density matrix trace {np.trace(rho).real!r} != 1")
    if pure and np.max(np.abs(rho @ rho - rho)) > PURITY_TOL:
        raise NotPureError("density matrix is not a pure state")
    return rho


def bloch_to_density(x) -> np.ndarray:
    x = _unit(x)
    return 0.5 * (IDENTITY + np.einsum("j,jab->ab", x, PAULI))


def density_to_bloch(rho) -> np.ndarray:
    rho = check_density(rho)
    return np.real(np.einsum("ab,jba->j", rho, PAULI))


def chart_to_bloch(q) -> np.ndarray:
    """Polar chart ``(theta, phi)`` to a unit Bloch vector."""
    theta, phi = float(q[0]), float(q[1])
    s = math.sin(theta)
    return np.array([s * math.cos(phi), s * math.sin(phi), math.cos(theta)])


def bloch_to_chart(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    theta = math.acos(max(-1.0, min(1.0, float(x[2]) / float(np.linalg.norm(x)))))
    return np.array([theta, math.atan2(float(x[1]), float(x[0]))])


def commutator(a, b) -> np.ndarray:
    return a @ b - b @ a


def _hermitian_exp_i(h_mat: np.ndarray, s: float) -> np.ndarray:
    """``exp(i s H)`` for Hermitian 2x2 ``H`` via the Pauli closed form."""
    h0 = 0.5 * np.trace(h_mat).real
    h = 0.5 * np.real(np.einsum("ab,jba->j", h_mat, PAULI))
    r = float(np.linalg.norm(h))
    phase = np.exp(1j * h0 * s)
    if r == 0.0:
        return phase * IDENTITY
    n_sigma = np.einsum("j,jab->ab", h / r, PAULI)
    return phase * (math.cos(r * s) * IDENTITY + 1j * math.sin(r * s) * n_sigma)


def conjugation_unitary(generator, t: float) -> np.ndarray:
    """``exp(-K t)`` for anti-Hermitian ``K``."""
    k = np.asarray(generator, dtype=complex)
    # K = -iH with H = iK Hermitian, so exp(-K t) = exp(i t H)
    return _hermitian_exp_i(1j * k, t)


def conjugation_geodesic(rho0, rho_psi, a, t: float) -> np.ndarray:
    """State reached at time ``t`` along ``exp(-[rho_psi, A] t) rho0 exp([rho_psi, A] t)``."""
    rho0 = check_density(rho0)
    rho_psi = check_density(rho_psi)
    a = np.asarray(a, dtype=complex)
    if np.max(np.abs(a - a.conj().T)) > HERMITIAN_TOL:
        raise ValueError("generator parameter A must be Hermitian")
    if t == 0:
        return rho0.copy()
    u = conjugation_unitary(commutator(rho_psi, a), t)
    return u @ rho0 @ u.conj().T


def commutator_generator(rho0, rho1) -> np.ndarray:
    """Anti-Hermitian ``K`` whose conjugation flow carries ``rho0`` to ``rho1`` at t=1."""
    x0 = density_to_bloch(rho0)
    x1 = density_to_bloch(rho1)
    c = float(np.dot(x0, x1))
    if abs(abs(c) - 1.0) <= DEGENERATE_TOL:
        kind = "coincident" if c > 0 else "antipodal"
        raise DegenerateEndpointsError(f"{kind} endpoints have no unique connecting generator")
    c = min(1.0, max(-1.0, c))
    scale = math.acos(c) / math.sqrt(1.0 - c * c)
    return scale * commutator(np.asarray(rho0, dtype=complex), np.asarray(rho1, dtype=complex))


def fubini_divergence(x0, x1) -> float:
    """``arccos(x0 . x1)**2`` for unit Bloch vectors."""
    x0 = _unit(x0)
    x1 = _unit(x1)
    c = float(np.dot(x0, x1))
    if abs(c) > 1.0 + CLAMP_GUARD:
        raise NotPureError(f"inner product {c!r} out of range")
    return math.acos(min(1.0, max(-1.0, c))) ** 2


def trace_lagrangian(rho_psi, u, udot) -> float:
    """``Tr([rho_psi, U^-1 Udot]^2) / 2`` on the tangent bundle of U(2).

    ``[rho_psi, X]`` is Hermitian for anti-Hermitian ``X``, so the value is
    non-negative; it vanishes along the isotropy directions of ``rho_psi``.
    """
    u = np.asarray(u, dtype=complex)
    if np.max(np.abs(u.conj().T @ u - IDENTITY)) > PURITY_TOL:
        raise NonUnitaryError("U is not unitary")
    x = u.conj().T @ np.asarray(udot, dtype=complex)
    c = commutator(np.asarray(rho_psi, dtype=complex), x)
    return 0.5 * float(np.trace(c @ c).real)


def trace_form_action(rho_psi, a) -> tuple[float, float]:
    """Both trace expressions for the action of the curve generated by ``A``.

    Returns ``(Tr([rho_psi,[rho_psi,A]]^2)/2, Tr(rho_psi A [A, rho_psi]))``.
    In the U(2) normalization these equal a quarter of the Bloch angle
    squared, i.e. ``fubini_divergence / 4`` when the curve starts at
    ``rho_psi``.
    """
    rho_psi = np.asarray(rho_psi, dtype=complex)
    a = np.asarray(a, dtype=complex)
    inner = commutator(rho_psi, commutator(rho_psi, a))
    first = 0.5 * float(np.trace(inner @ inner).real)
    second = float(np.trace(rho_psi @ a @ commutator(a, rho_psi)).real)
    return first, second


def conjugation_action(rho0, rho_psi, a) -> float:
    """Action over t in [0, 1] of the conjugation curve, in the chart normalization.

    The Lagrangian ``g(x', x')/2`` with ``g`` twice the round metric equals
    ``|x'|^2`` and is constant along the curve, so the action is the squared
    Bloch speed at t=0.
    """
    rho0 = check_density(rho0)
    k = commutator(np.asarray(rho_psi, dtype=complex), np.asarray(a, dtype=complex))
    rho_dot = commutator(rho0, k)
    xdot = np.real(np.einsum("ab,jba->j", rho_dot, PAULI))
    return float(np.dot(xdot, xdot))
