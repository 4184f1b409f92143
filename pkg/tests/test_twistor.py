import numpy as np
import pytest

from hkspectral.twistor import (
    QuadraticTwistorFamily,
    RealStructureParams,
    complex_structure_from,
    degeneration_check,
    fibre_rotation,
    real_structure_identity,
    s1_equivariance,
    signature,
    theorem_a_hypothesis_check,
    triple_from_family,
)


def _random_invertible(rng, n):
    while True:
        P = rng.normal(size=(n, n))
        if np.linalg.cond(P) < 50:
            return P


def test_flat_torus_triple():
    t = triple_from_family(QuadraticTwistorFamily.flat_torus())
    assert max(t.quaternion_residuals().values()) < 1e-14
    assert max(t.metric_residuals().values()) < 1e-14
    np.testing.assert_allclose(t.g, np.eye(4), atol=1e-14)


@pytest.mark.parametrize("signs,sig,lag_sig", [((1, 1), (8, 0, 0), (4, 0, 0)), ((1, -1), (4, 4, 0), (2, 2, 0))])
def test_cotangent_signatures(signs, sig, lag_sig):
    fam = QuadraticTwistorFamily.flat_cotangent(signs)
    t = triple_from_family(fam)
    assert t.worst() < 1e-12
    assert t.signature() == sig
    L = fam.lagrangian
    assert signature(L.T @ t.g @ L) == lag_sig


def test_congruence_preserves_quaternion_relations(rng):
    fam = QuadraticTwistorFamily.flat_cotangent((1, -1))
    P = _random_invertible(rng, 8)
    t0 = triple_from_family(fam)
    t1 = triple_from_family(fam.congruence(P), tol=1e-8)
    assert t1.worst() < 1e-8
    np.testing.assert_allclose(t1.g, P.T @ t0.g @ P, atol=1e-9)
    # the Lagrangian is carried along
    L = fam.congruence(P).lagrangian
    assert np.abs(L.T @ (P.T @ fam.A @ P) @ L).max() < 1e-12


@pytest.mark.parametrize("t", [0.1, 3.0])
def test_overall_scale_leaves_structures_unchanged(t):
    fam = QuadraticTwistorFamily.flat_torus()
    big = QuadraticTwistorFamily(t * fam.A, t * fam.B)
    a, b = triple_from_family(fam), triple_from_family(big)
    for X, Y in ((a.I, b.I), (a.J, b.J), (a.K, b.K)):
        np.testing.assert_allclose(X, Y, atol=1e-13)
    np.testing.assert_allclose(b.g, t * a.g, atol=1e-13)


def test_non_hyperkahler_pencil_is_rejected(rng):
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    B = rng.normal(size=(4, 4))
    fam = QuadraticTwistorFamily(A - A.T, B - B.T)
    with pytest.raises(ValueError, match="quaternion residual"):
        triple_from_family(fam)


def test_input_validation(rng):
    M = rng.normal(size=(4, 4))
    with pytest.raises(ValueError):
        QuadraticTwistorFamily(M, M - M.T)
    with pytest.raises(ValueError):
        QuadraticTwistorFamily(M - M.T, 1j * (M - M.T))
    with pytest.raises(ValueError):
        complex_structure_from(np.zeros((4, 4), dtype=complex))


@pytest.mark.parametrize("eps", [0.5, 1.0, 2.0])
def test_real_structure_on_adapted_pencil(eps, rng):
    fam = QuadraticTwistorFamily.flat_cotangent()
    zs = eps * np.exp(2j * np.pi * rng.random(5)) * rng.uniform(0.3, 2.0, 5)
    out = real_structure_identity(fam, eps, zs)
    assert out["worst"] < 1e-12


def test_unadapted_pencil_fails_real_structure_off_unit_circle():
    fam = QuadraticTwistorFamily.flat_cotangent()
    eps = 0.5
    rs = RealStructureParams(eps)
    z = 0.3 + 0.2j
    res = np.abs(np.conj(fam.omega(rs.rho(z))) - eps**2 / z**2 * fam.omega(z)).max()
    assert res > 0.1


def test_real_structure_parameters():
    rs = RealStructureParams(0.5)
    zs = 0.5 * np.exp(1j * np.linspace(0, 6, 7))
    assert rs.involution_residual(zs) < 1e-15
    assert rs.circle_residual(zs) < 1e-15
    with pytest.raises(ValueError):
        rs.rho(0.0)
    with pytest.raises(ValueError):
        RealStructureParams(0.0)


@pytest.mark.parametrize("lam", [1.0, -1.0, np.exp(0.7j)])
def test_circle_action_on_cotangent_pencil(lam, rng):
    fam = QuadraticTwistorFamily.flat_cotangent()
    u = rng.normal(size=(3, 8))
    assert s1_equivariance(fam, [lam], [0.3, 0.2j, -0.5 + 0.1j], u) < 1e-14


def test_circle_action_requires_unit_lambda(rng):
    with pytest.raises(ValueError):
        s1_equivariance(QuadraticTwistorFamily.flat_cotangent(), [2.0], [0.3], rng.normal(size=(1, 8)))


def test_fibre_rotation_fixes_base():
    D = fibre_rotation(1j)
    np.testing.assert_allclose(D[:4, :4], np.eye(4))
    np.testing.assert_allclose(D @ D @ D @ D, np.eye(8), atol=1e-15)


def test_degeneration_check_flat():
    out = degeneration_check(QuadraticTwistorFamily.flat_cotangent(), radius=0.9)
    assert out["min_sigma"] > 0.1 and out["min_lagrangian"] > 0.1


def _pencil_callable(fam, extra=None):
    def omega(z, u):
        O = fam.omega(z) + (0 if extra is None else extra(z))
        return np.broadcast_to(O, (u.shape[0],) + O.shape)

    return omega


def test_hypothesis_check_and_injected_antiholomorphic_term(rng):
    fam = QuadraticTwistorFamily.flat_cotangent()
    x = rng.random((4, 4))
    base = fam.lagrangian_form()
    good = theorem_a_hypothesis_check(_pencil_callable(fam), fam.lagrangian, base, x, radius=1.0)
    assert good["status"] == "pass" and good["pullback"] < 1e-14
    # a conj(zeta) term is not holomorphic and must show up at negative frequencies
    bad = theorem_a_hypothesis_check(_pencil_callable(fam, lambda z: np.conj(z) * fam.B), fam.lagrangian, base, x, radius=1.0)
    assert bad["status"] == "fail" and bad["negative_modes"] > 0.1


def test_complex_structure_of_flat_form_is_standard():
    J0 = np.array([[0.0, -1.0], [1.0, 0.0]])
    I = complex_structure_from(QuadraticTwistorFamily.flat_torus().omega(0))
    np.testing.assert_allclose(I, np.kron(np.eye(2), J0), atol=1e-14)


def test_real_structure_at_one_point():
    out = real_structure_identity(QuadraticTwistorFamily.flat_cotangent(), 1.0, [1j])
    assert out["worst"] < 1e-12
