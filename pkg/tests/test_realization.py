import numpy as np
import pytest

from hkspectral.deformation import hitchin_series, radius_estimate
from hkspectral.realization import (
    LiftedFamily,
    RealizationModel,
    almost_complex,
    antidiagonal_pullback,
    closedness_fd,
    complex_frame,
    dual_pair_relations,
    eta_identity_residual,
    kernel_check,
    nijenhuis_residual,
    nijenhuis_study,
    reality_transversality,
)
from hkspectral.torus_forms import Bivector, random_trig_form


@pytest.fixture(scope="module")
def pair(request):
    from conftest import TERMS
    from hkspectral.hodge import KahlerStructure
    from hkspectral.torus_forms import Grid

    # 12^4 is the smallest grid where product aliasing sits below the series tail
    g = Grid(12)
    K = KahlerStructure.from_potential(g, TERMS, amplitude=0.003)
    sigma = Bivector.constant(g, 1.0)
    ser = hitchin_series(sigma, K, N=6)
    return LiftedFamily(RealizationModel("pair", K, sigma), ser, radius_estimate(ser)[1])


def test_complex_frame_is_dual():
    Fw, Fwb, dw = complex_frame(8)
    np.testing.assert_allclose(dw @ Fw, np.eye(4), atol=1e-15)
    np.testing.assert_allclose(dw @ Fwb, 0, atol=1e-15)


@pytest.mark.parametrize("kind,f", [("pair", 1.0), ("pair", 0.5 - 0.3j), ("cotangent", 0.0)])
def test_model_invariants_and_dual_pair(flat8, rng, kind, f):
    m = RealizationModel(kind, flat8, Bivector.constant(flat8.grid, f))
    inv = m.invariants(rng, 20)
    assert max(inv.values()) < 1e-14
    assert max(dual_pair_relations(m).values()) < 1e-14


def test_model_rejects_bad_bivectors(flat8):
    with pytest.raises(ValueError):
        RealizationModel("cotangent", flat8, Bivector.constant(flat8.grid, 1.0))
    with pytest.raises(ValueError):
        RealizationModel("pair", flat8, Bivector.constant(flat8.grid, 0.0))
    with pytest.raises(ValueError):
        RealizationModel("groupoid", flat8, Bivector.constant(flat8.grid, 1.0))


def test_kernel_has_half_dimension(pair, rng):
    u = pair.model.sample_points(rng, 20)
    z = 0.3 * pair.radius
    kr = kernel_check(pair, 1j * z, -1j * z, u)
    assert kr.status == "pass"
    assert np.all(kr.dims == 4) and kr.gaps.min() > 1e3
    # truncation of the series at N = 6 leaves an O(z^7) tail in the formula
    assert kr.formula_residual.max() < 1e-8


def test_eta_expansion_residual_is_truncation_tail(pair, rng):
    # gamma_n is kept only up to n = 6, so the mismatch is O(z^7)
    u = pair.model.sample_points(rng, 10)
    r = [eta_identity_residual(pair, t * 0.4j, -t * 0.2, u) for t in (1.0, 0.5)]
    assert r[0] < 1e-9
    assert np.log2(r[0] / r[1]) > 6.0


def test_transversality_and_psi_identities(pair, rng):
    u = pair.model.sample_points(rng, 10)
    z = 0.4 * pair.radius
    rt = reality_transversality(pair, 1j * z, -1j * z, u)
    assert rt["margin"].min() > 0.5
    assert rt["s_identity"].max() < 1e-10 and rt["t_identity"].max() < 1e-10


def test_antidiagonal_pullback(pair, rng):
    x = rng.random((20, 4))
    r = pair.radius
    res = antidiagonal_pullback(pair, [0.5 * r, 0.3j * r], x)
    assert res["antidiagonal"] < 1e-7 and res["beta_difference"] < 1e-12


def test_almost_complex_structure_squares_to_minus_one(pair, rng):
    u = pair.model.sample_points(rng, 5)
    _, sq = almost_complex(pair, 0.2, 0.1j, u)
    assert sq.max() < 1e-10


def test_lifted_form_is_closed(pair, rng):
    u0 = pair.model.sample_points(rng, 1)[0]
    r = [closedness_fd(pair, 0.2, 0.1j, u0, h) for h in (0.02, 0.01)]
    assert r[1] < r[0] / 3


def test_nijenhuis_second_order(pair, rng):
    u0 = pair.model.sample_points(rng, 1)[0]
    st = nijenhuis_study(pair, 0.3 * pair.radius, 0.25j * pair.radius, u0)
    assert all(abs(s - 2.0) < 0.3 for s in st["slopes"])


def test_non_closed_coefficient_is_detected(pair, rng):
    # replacing omega_2 by an arbitrary (1,1)-form breaks closedness of beta_2
    bad_series = pair.series.with_coefficient(2, 0.05 * random_trig_form(pair.series.grid, 1, 1, rng, kmax=1))
    bad = LiftedFamily(pair.model, bad_series)
    u0 = pair.model.sample_points(rng, 1)[0]
    good_r = [closedness_fd(pair, 0.2, 0.1j, u0, h) for h in (0.02, 0.01)]
    bad_r = [closedness_fd(bad, 0.2, 0.1j, u0, h) for h in (0.02, 0.01)]
    assert bad_r[1] > 100 * good_r[1]
    assert bad_r[1] > 0.5 * bad_r[0]  # does not converge to zero


def test_outside_radius_warns(pair, rng):
    u = pair.model.sample_points(rng, 2)
    with pytest.warns(UserWarning):
        pair.form(2 * pair.radius, 0.0, u)


def test_hypothesis_check_on_pair_antidiagonal(pair, rng):
    from hkspectral.twistor import antidiagonal_evaluator, theorem_a_hypothesis_check

    x = rng.random((3, 4))
    base = pair.series.omega[0].real_matrices(x)
    ev = antidiagonal_evaluator(pair)
    good = theorem_a_hypothesis_check(ev, pair.model.diota, base, x, radius=pair.radius, n_circle=16)
    assert good["status"] == "pass"
    M = rng.normal(size=(8, 8))
    M = M - M.T

    def injected(z, u):
        return ev(z, u) + z**3 * M

    bad = theorem_a_hypothesis_check(injected, pair.model.diota, base, x, radius=pair.radius, n_circle=16)
    assert bad["status"] == "fail" and bad["pullback"] > 1e-3


@pytest.fixture(scope="module")
def cotangent(request):
    from conftest import TERMS
    from hkspectral.hodge import KahlerStructure
    from hkspectral.torus_forms import Grid

    g = Grid(8)
    K = KahlerStructure.from_potential(g, TERMS, amplitude=0.003)
    sigma = Bivector.constant(g, 0.0)
    return LiftedFamily(RealizationModel("cotangent", K, sigma), hitchin_series(sigma, K, N=3))


def test_cotangent_antidiagonal_is_linear(cotangent, rng):
    m = cotangent.model
    u = m.sample_points(rng, 6)
    w1 = cotangent.series.omega[0].real_matrices(m.s(u))
    for z in (0.2, 0.5j, -0.3 + 0.1j):
        Om = cotangent.form(1j * z, -1j * z, u)
        expect = m.omega0 + 2j * z * (m.ds.T @ w1 @ m.ds)
        assert np.abs(Om - expect).max() < 1e-14
    np.testing.assert_array_equal(cotangent.form(0, 0, u), np.broadcast_to(m.omega0, (6, 8, 8)))


def test_cotangent_at_zero(cotangent, rng):
    u = cotangent.model.sample_points(rng, 6)
    kr = kernel_check(cotangent, 0, 0, u)
    assert np.all(kr.dims == 4)
    out = reality_transversality(cotangent, 0, 0, u)
    np.testing.assert_allclose(out["margin"], 1.0, atol=1e-12)


def test_cotangent_structure_is_integrable(cotangent, rng):
    u0 = cotangent.model.sample_points(rng, 1)[0]
    assert nijenhuis_residual(cotangent, 0.3j, -0.3j, u0, 1e-3) < 1e-6
