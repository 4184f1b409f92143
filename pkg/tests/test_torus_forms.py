import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hkspectral.torus_forms import (
    Bivector,
    ComplexForm,
    EndoField,
    Grid,
    fft4,
    ifft4,
    basis,
    contract_sigma_pair,
    d,
    delb,
    delz,
    mc_bracket,
    norms,
    random_trig_form,
    sort_sign,
    wedge,
)


def _plane_wave(grid, k):
    x = grid.coords()
    return np.exp(2j * np.pi * sum(ka * xa for ka, xa in zip(k, x)))


@pytest.mark.parametrize("k", [(1, 0, 0, 0), (0, 1, 0, 0), (1, -2, 0, 3), (2, 1, -1, -1)])
def test_del_single_mode_matches_chain_rule(grid8, k):
    # z_j = x_{2j} + i x_{2j+1}, so d/dz_j = (d/dx - i d/dy) / 2 on exp(2 pi i k.x)
    u = ComplexForm.from_physical(grid8, 0, 0, _plane_wave(grid8, k)[None])
    wave = _plane_wave(grid8, k)
    expect_dz = [np.pi * 1j * (k[0] - 1j * k[1]), np.pi * 1j * (k[2] - 1j * k[3])]
    expect_dzb = [np.pi * 1j * (k[0] + 1j * k[1]), np.pi * 1j * (k[2] + 1j * k[3])]
    a = delz(u)
    b = delb(u)
    for j in range(2):
        np.testing.assert_allclose(ifft4(a.component((j,))), expect_dz[j] * wave, atol=1e-12)
        np.testing.assert_allclose(ifft4(b.component((2 + j,))), expect_dzb[j] * wave, atol=1e-12)


def test_basis_sizes():
    assert [len(basis(p, q)) for p in range(3) for q in range(3)] == [1, 2, 1, 2, 4, 2, 1, 2, 1]
    assert basis(1, 1) == [(0, 2), (0, 3), (1, 2), (1, 3)]


def test_sort_sign():
    assert sort_sign((2, 0)) == (-1, (0, 2))
    assert sort_sign((0, 0))[0] == 0


@pytest.mark.parametrize("pq", [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (2, 1)])
def test_squares_vanish(grid8, rng, pq):
    a = random_trig_form(grid8, *pq, rng)
    for op in (delz, delb):
        once = op(a)
        if once is None:
            continue
        twice = op(once)
        if twice is not None:
            assert np.abs(twice.coeffs).max() < 1e-10
    # del and dbar anticommute
    if pq[0] < 2 and pq[1] < 2:
        assert np.abs((delz(delb(a)) + delb(delz(a))).coeffs).max() < 1e-10


@pytest.mark.parametrize("pa,pb", [((0, 0), (1, 1)), ((1, 0), (0, 1)), ((0, 1), (1, 0)), ((1, 1), (0, 0))])
def test_leibniz_rule(grid8, rng, pa, pb):
    a = random_trig_form(grid8, *pa, rng, kmax=1)
    b = random_trig_form(grid8, *pb, rng, kmax=1)
    lhs = delb(wedge(a, b))
    rhs = wedge(delb(a), b) + (-1) ** a.degree * wedge(a, delb(b))
    assert np.abs((lhs - rhs).coeffs).max() < 1e-10


def test_wedge_is_pointwise_on_constants(grid8):
    a = ComplexForm.from_components(grid8, 1, 0, {(0,): 1.0})
    b = ComplexForm.from_components(grid8, 0, 1, {(3,): 2.0})
    w = wedge(a, b)
    np.testing.assert_allclose(ifft4(w.component((0, 3))), 2.0)
    np.testing.assert_allclose(ifft4(wedge(b, a).component((0, 3))), -2.0)


@settings(max_examples=25, deadline=None)
@given(
    pa=st.tuples(st.integers(0, 2), st.integers(0, 2)),
    pb=st.tuples(st.integers(0, 2), st.integers(0, 2)),
    seed=st.integers(0, 2**31 - 1),
)
def test_wedge_graded_commutativity(pa, pb, seed):
    if pa[0] + pb[0] > 2 or pa[1] + pb[1] > 2:
        return  # the product vanishes identically
    g = Grid(8)
    r = np.random.default_rng(seed)
    a = random_trig_form(g, *pa, r, kmax=1)
    b = random_trig_form(g, *pb, r, kmax=1)
    sign = (-1) ** (a.degree * b.degree)
    assert np.abs((wedge(a, b) - sign * wedge(b, a)).coeffs).max() < 1e-12


def test_d_splits_by_bidegree(grid8, rng):
    a = random_trig_form(grid8, 1, 0, rng)
    s = d(a)
    assert set(s.parts) == {(2, 0), (1, 1)}
    assert np.allclose(s[(1, 1)].coeffs, delb(a).coeffs)


def test_serialization_round_trip(grid8, rng):
    a = random_trig_form(grid8, 1, 1, rng)
    b = ComplexForm.from_json(a.to_json())
    assert b.bidegree == (1, 1)
    np.testing.assert_array_equal(a.coeffs, b.coeffs)
    bad = json.loads(a.to_json())
    bad["format"] = "other"
    with pytest.raises(ValueError):
        ComplexForm.from_dict(bad)


def test_conj_swaps_bidegree(grid8, rng):
    a = random_trig_form(grid8, 1, 0, rng)
    assert a.conj().bidegree == (0, 1)
    np.testing.assert_allclose(a.conj().conj().coeffs, a.coeffs, atol=1e-14)


def test_norms_of_unit_constant(grid8):
    one = ComplexForm.from_components(grid8, 0, 0, {(): 1.0})
    l2, sup, sob = norms(one)
    assert l2 == pytest.approx(1.0) and sup == pytest.approx(1.0) and sob == pytest.approx(1.0)


def test_contraction_of_volume_squares(grid8):
    # omega = i (dz1 dzb1 + dz2 dzb2) / 2, so c11 = c22 = i/2 and the contraction is f/4
    om = ComplexForm.from_components(grid8, 1, 1, {(0, 2): 0.5j, (1, 3): 0.5j})
    g = contract_sigma_pair(Bivector.constant(grid8, 2.0), om, om)
    np.testing.assert_allclose(ifft4(g.component((2, 3))), 0.5, atol=1e-14)


def test_bivector_inverse_convention(grid8):
    assert Bivector.inverse_of(grid8, 2.0).constant_value == pytest.approx(-0.5)
    assert Bivector.constant(grid8, 1.0).holomorphy_residual() == 0.0


def test_norms_of_zero_and_single_mode(grid8):
    assert norms(ComplexForm.zeros(grid8, 1, 1)) == (0.0, 0.0, 0.0)
    w = ComplexForm.from_components(grid8, 0, 0, {(): _plane_wave(grid8, (1, 0, 0, 0))})
    l2, sup, sob = norms(w)
    assert l2 == pytest.approx(1.0) and sup == pytest.approx(1.0)
    assert sob == pytest.approx(2 * np.sqrt(2))


def test_delbar_of_conjugate(grid8, rng):
    a = random_trig_form(grid8, 1, 0, rng)
    np.testing.assert_allclose(delb(a.conj()).coeffs, delz(a).conj().coeffs, atol=1e-12)


def _endo(grid, entries):
    c = np.zeros((2, 2) + grid.shape, dtype=complex)
    for (i, j), val in entries.items():
        c[i, j] = fft4(np.broadcast_to(np.asarray(val, dtype=complex), grid.shape))
    return EndoField(grid, c)


def test_bracket_of_constants_vanishes(grid8, rng):
    phi = _endo(grid8, {(i, j): rng.normal() + 1j * rng.normal() for i in range(2) for j in range(2)})
    assert mc_bracket(phi, phi).l2() < 1e-14


def test_bracket_is_symmetric(grid8, rng):
    def field():
        return EndoField(grid8, np.stack([np.stack([random_trig_form(grid8, 0, 0, rng, kmax=1).coeffs[0] for _ in range(2)]) for _ in range(2)]))

    phi, psi = field(), field()
    assert (mc_bracket(phi, psi) - mc_bracket(psi, phi)).l2() < 1e-13


def test_bracket_single_mode(grid8):
    # phi = u d/dz1 (x) dzb1 + c d/dz2 (x) dzb2 with u = exp(2 pi i x3); d_z2 u = pi i u
    c = 0.7 - 0.2j
    u = _plane_wave(grid8, (0, 0, 1, 0))
    br = mc_bracket(*(2 * [_endo(grid8, {(0, 0): u, (1, 1): c})]))
    np.testing.assert_allclose(ifft4(br.coeffs[0, 0]), -2j * np.pi * c * u, atol=1e-12)
    assert np.abs(br.coeffs[1]).max() < 1e-14
