import math

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.spatial.transform import Rotation

from hjdiv import LagrangianSpec, principal_function
from hjdiv.acceptance import sphere_pairs
from hjdiv.errors import DegenerateEndpointsError, NonUnitaryError, NotPureError
from hjdiv.quantum import (
    IDENTITY,
    PAULI,
    bloch_to_chart,
    bloch_to_density,
    chart_to_bloch,
    commutator,
    commutator_generator,
    conjugation_action,
    conjugation_geodesic,
    conjugation_unitary,
    density_to_bloch,
    fubini_divergence,
    normalize_bloch,
    trace_form_action,
    trace_lagrangian,
)

UP = np.array([0.0, 0.0, 1.0])
RHO_PSI = np.diag([1.0, 0.0]).astype(complex)


def _random_unit(rng):
    x = rng.normal(size=3)
    return x / np.linalg.norm(x)


def _random_hermitian(rng):
    m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    return m + m.conj().T


def test_bloch_density_examples(rng):
    assert np.array_equal(bloch_to_density(UP), RHO_PSI)
    assert np.array_equal(bloch_to_density(-UP), np.diag([0.0, 1.0]).astype(complex))
    for _ in range(100):
        x = _random_unit(rng)
        assert np.max(np.abs(density_to_bloch(bloch_to_density(x)) - x)) < 1e-12


def test_not_pure_rejected():
    with pytest.raises(NotPureError):
        bloch_to_density([0.5, 0.0, 0.0])
    with pytest.raises(NotPureError):
        density_to_bloch(np.eye(2) / 2)
    with pytest.raises(NotPureError):
        conjugation_geodesic(np.eye(2) / 2, RHO_PSI, PAULI[0], 1.0)


def test_chart_round_trip(rng):
    for _ in range(50):
        q = np.array([rng.uniform(0.1, 3.0), rng.uniform(-3.0, 3.0)])
        assert np.max(np.abs(bloch_to_chart(chart_to_bloch(q)) - q)) < 1e-12


def test_normalize_bloch_flags():
    unit, far = normalize_bloch([0.0, 0.0, 1.0 + 1e-8])
    assert not far and np.linalg.norm(unit) == pytest.approx(1.0, abs=1e-15)
    assert normalize_bloch([0.0, 2.0, 0.0])[1]


def test_unitary_matches_expm(rng):
    for _ in range(20):
        k = 1j * _random_hermitian(rng)
        t = rng.uniform(-2, 2)
        assert np.max(np.abs(conjugation_unitary(k, t) - expm(-k * t))) < 1e-12


def test_conjugation_geodesic_examples(rng):
    rho0 = bloch_to_density(_random_unit(rng))
    assert np.array_equal(conjugation_geodesic(rho0, RHO_PSI, PAULI[0], 0.0), rho0)
    end = conjugation_geodesic(RHO_PSI, RHO_PSI, PAULI[0] / 2, math.pi)
    assert np.max(np.abs(end - np.diag([0.0, 1.0]))) < 1e-10
    k = commutator(RHO_PSI, PAULI[0] / 2)
    oracle = expm(-k * math.pi) @ RHO_PSI @ expm(k * math.pi)
    assert np.max(np.abs(end - oracle)) < 1e-12


def test_isospectral_and_pure(rng):
    for _ in range(100):
        rho0 = bloch_to_density(_random_unit(rng))
        psi = bloch_to_density(_random_unit(rng))
        rho = conjugation_geodesic(rho0, psi, _random_hermitian(rng), rng.uniform(-5, 5))
        assert abs(np.trace(rho) - 1) < 1e-10
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-10
        assert np.max(np.abs(rho @ rho - rho)) < 1e-10
        assert np.max(np.abs(np.linalg.eigvalsh(rho) - [0.0, 1.0])) < 1e-10


def test_commutator_generator_reaches_target(rng):
    count = 0
    while count < 100:
        x0, x1 = _random_unit(rng), _random_unit(rng)
        if abs(abs(x0 @ x1) - 1) < 1e-6:
            continue
        r0, r1 = bloch_to_density(x0), bloch_to_density(x1)
        k = commutator_generator(r0, r1)
        assert np.max(np.abs(k + k.conj().T)) < 1e-12
        u = conjugation_unitary(k, 1.0)
        assert np.max(np.abs(u @ r0 @ u.conj().T - r1)) < 1e-8
        count += 1


def test_commutator_generator_orthogonal_scale():
    r0 = bloch_to_density(UP)
    r1 = bloch_to_density([1.0, 0.0, 0.0])
    assert np.max(np.abs(commutator_generator(r0, r1) - math.pi / 2 * commutator(r0, r1))) < 1e-15


def test_commutator_generator_degenerate():
    r = bloch_to_density(UP)
    with pytest.raises(DegenerateEndpointsError):
        commutator_generator(r, r)
    with pytest.raises(DegenerateEndpointsError):
        commutator_generator(r, bloch_to_density(-UP))


def test_fubini_examples(rng):
    x = _random_unit(rng)
    assert fubini_divergence(x, x) == pytest.approx(0.0, abs=1e-14)
    assert fubini_divergence(UP, [1.0, 0.0, 0.0]) == pytest.approx((math.pi / 2) ** 2, abs=1e-15)
    assert fubini_divergence(UP, -UP) == pytest.approx(math.pi**2, abs=1e-15)
    assert not math.isnan(fubini_divergence(x, x * (1 + 1e-16)))


def test_fubini_rotation_invariance(rng):
    rots = Rotation.random(50, random_state=7).as_matrix()
    for r in rots:
        x0, x1 = _random_unit(rng), _random_unit(rng)
        y0, y1 = r @ x0, r @ x1
        assert abs(fubini_divergence(y0 / np.linalg.norm(y0), y1 / np.linalg.norm(y1)) - fubini_divergence(x0, x1)) < 1e-12


def test_chart_principal_function_matches_fubini(sphere, rng):
    spec = LagrangianSpec.alpha_family(sphere, 0.0)
    for x0, x1 in sphere_pairs(rng, 15):
        s = principal_function(spec, bloch_to_chart(x0), bloch_to_chart(x1)).value
        assert abs(s - fubini_divergence(x0, x1)) < 1e-5


def test_trace_lagrangian_examples():
    assert trace_lagrangian(RHO_PSI, IDENTITY, np.zeros((2, 2))) == 0.0
    assert trace_lagrangian(RHO_PSI, IDENTITY, 1j * PAULI[2]) == 0.0
    # [diag(1,0), i sigma_1] is Hermitian, so the trace of its square is positive
    c = commutator(RHO_PSI, 1j * PAULI[0])
    assert np.max(np.abs(c - c.conj().T)) == 0.0
    assert trace_lagrangian(RHO_PSI, IDENTITY, 1j * PAULI[0]) == pytest.approx(1.0, abs=1e-15)
    assert 0.5 * np.trace(c @ c).real == pytest.approx(1.0, abs=1e-15)


def test_trace_lagrangian_isotropy_and_sign(rng):
    for _ in range(30):
        h = _random_hermitian(rng)
        u = expm(1j * h)
        x = 1j * _random_hermitian(rng)
        assert trace_lagrangian(RHO_PSI, u, u @ x) >= -1e-14
        # isotropy directions commute with rho_psi
        iso = 1j * np.diag(rng.normal(size=2))
        assert abs(trace_lagrangian(RHO_PSI, u, u @ iso)) < 1e-14


def test_trace_lagrangian_rejects_non_unitary():
    with pytest.raises(NonUnitaryError):
        trace_lagrangian(RHO_PSI, 2 * IDENTITY, IDENTITY)


def test_trace_form_action_consistency(rng):
    for _ in range(30):
        a = _random_hermitian(rng)
        first, second = trace_form_action(RHO_PSI, a)
        assert first == pytest.approx(second, abs=1e-12)
        # both trace forms are a quarter of the chart action of the same curve
        angle_sq = conjugation_action(RHO_PSI, RHO_PSI, a)
        assert 4 * first == pytest.approx(angle_sq, abs=1e-12)
        if angle_sq < (math.pi - 1e-3) ** 2:
            end = density_to_bloch(conjugation_geodesic(RHO_PSI, RHO_PSI, a, 1.0))
            assert fubini_divergence(UP, end / np.linalg.norm(end)) == pytest.approx(angle_sq, abs=1e-9)


def test_matrix_route_antipodal_action():
    a = 0.5 * math.pi * PAULI[0]
    end = conjugation_geodesic(RHO_PSI, RHO_PSI, a, 1.0)
    assert np.max(np.abs(density_to_bloch(end) + UP)) < 1e-12
    assert conjugation_action(RHO_PSI, RHO_PSI, a) == pytest.approx(math.pi**2, abs=1e-12)
    assert 4 * trace_form_action(RHO_PSI, a)[0] == pytest.approx(math.pi**2, abs=1e-12)


def test_conjugation_action_matches_divergence_on_minor_arcs(rng):
    for _ in range(30):
        x1 = _random_unit(rng)
        if x1 @ UP < -0.99:
            continue
        k = commutator_generator(RHO_PSI, bloch_to_density(x1))
        # recover A with [rho_psi, A] = K: A = K - (rho_psi K + K rho_psi) ... off-diagonal part solves it
        a = np.array([[0, k[0, 1]], [-k[1, 0], 0]], dtype=complex)
        assert np.max(np.abs(commutator(RHO_PSI, a) - k)) < 1e-14
        assert conjugation_action(RHO_PSI, RHO_PSI, a) == pytest.approx(fubini_divergence(UP, x1), abs=1e-10)
