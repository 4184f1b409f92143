import numpy as np
import pytest

from hkspectral.hodge import (
    KahlerStructure,
    PositivityError,
    delbar_star,
    green,
    green_bound_constant,
    green_solve,
    harmonic_projection,
    inner,
    kahler_identity_residual,
    laplacian,
    lemma_residuals,
    lemma_solve,
)
from hkspectral.torus_forms import ComplexForm, Grid, delb, random_trig_form

from conftest import TERMS


def test_flat_structure_is_flat(flat8, perturbed8):
    assert flat8.is_flat
    assert not perturbed8.is_flat
    assert perturbed8.min_eigenvalue() > 0.8


def test_positivity_is_enforced(grid8):
    with pytest.raises(PositivityError):
        KahlerStructure.from_potential(grid8, TERMS, amplitude=1.0)


@pytest.mark.parametrize("pq", [(0, 1), (1, 1), (0, 2), (1, 2)])
def test_delbar_star_is_adjoint(perturbed8, rng, pq):
    p, q = pq
    a = random_trig_form(perturbed8.grid, p, q - 1, rng, kmax=1)
    b = random_trig_form(perturbed8.grid, p, q, rng, kmax=1)
    lhs = inner(delb(a), b, perturbed8)
    rhs = inner(a, delbar_star(b, perturbed8), perturbed8)
    assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


def test_flat_green_inverts_laplacian(flat8, rng):
    a = random_trig_form(flat8.grid, 0, 2, rng)
    a = a - harmonic_projection(a, flat8)
    back = laplacian(green(a, flat8), flat8)
    assert np.abs((back - a).coeffs).max() < 1e-12


def test_iterative_green_inverts_laplacian(perturbed8, rng):
    a = random_trig_form(perturbed8.grid, 0, 2, rng, kmax=1)
    G, info = green_solve(a, perturbed8)
    assert info.path == "pcg" and info.final_residual <= 1e-12
    a0 = a - harmonic_projection(a, perturbed8)
    back = laplacian(G, perturbed8)
    assert np.linalg.norm((back - a0).coeffs) < 1e-9 * np.linalg.norm(a0.coeffs)
    assert np.abs(harmonic_projection(G, perturbed8).coeffs).max() < 1e-12


def test_kahler_identity_flat(flat8):
    assert kahler_identity_residual(flat8) < 1e-12


def test_kahler_identity_converges_spectrally():
    r = [kahler_identity_residual(KahlerStructure.from_potential(Grid(n), TERMS, amplitude=0.003)) for n in (8, 12)]
    assert r[1] < r[0] / 10


def test_lemma_on_random_source(perturbed8, rng):
    g = random_trig_form(perturbed8.grid, 0, 2, rng, kmax=1)
    w = lemma_solve(g, perturbed8)
    res = lemma_residuals(g, w, perturbed8)
    assert res["equation"] < 1e-10


def test_lemma_coclosedness_improves_with_grid(rng):
    # coclosedness and primitivity hold up to collocation aliasing of the metric products
    out = []
    for n in (8, 12):
        K = KahlerStructure.from_potential(Grid(n), TERMS, amplitude=0.003)
        g = random_trig_form(K.grid, 0, 2, np.random.default_rng(5), kmax=1)
        out.append(lemma_residuals(g, lemma_solve(g, K), K))
    for key in ("coclosed", "primitive"):
        assert out[1][key] < out[0][key] / 10


def test_lemma_rejects_wrong_bidegree(flat8, rng):
    with pytest.raises(ValueError):
        lemma_solve(random_trig_form(flat8.grid, 1, 1, rng), flat8)


@pytest.mark.parametrize("k", [(1, 0, 0, 0), (1, 2, 0, -1), (0, 0, 3, 1)])
def test_flat_green_single_mode(flat8, k):
    # on the flat torus the dbar-Laplacian of a plane wave has eigenvalue 2 pi^2 |k|^2
    x = flat8.grid.coords()
    w = np.exp(2j * np.pi * sum(ka * xa for ka, xa in zip(k, x)))
    gam = ComplexForm.from_components(flat8.grid, 0, 2, {(2, 3): w})
    expect = gam.coeffs / (2 * np.pi**2 * sum(ka * ka for ka in k))
    assert np.abs(green(gam, flat8).coeffs - expect).max() < 1e-15


def test_green_is_self_adjoint(perturbed8, rng):
    a = random_trig_form(perturbed8.grid, 0, 2, rng, kmax=1)
    b = random_trig_form(perturbed8.grid, 0, 2, rng, kmax=1)
    a = a - harmonic_projection(a, perturbed8)
    b = b - harmonic_projection(b, perturbed8)
    lhs = inner(green(a, perturbed8), b, perturbed8)
    rhs = inner(a, green(b, perturbed8), perturbed8)
    assert abs(lhs - rhs) < 1e-9 * abs(lhs)


def test_constants_are_harmonic(perturbed8):
    c = ComplexForm.from_components(perturbed8.grid, 0, 2, {(2, 3): 0.3 - 0.1j})
    assert np.abs(delbar_star(c, perturbed8).coeffs).max() < 1e-12
    assert np.abs(green(c, perturbed8).coeffs).max() < 1e-12
    assert np.abs(lemma_solve(c, perturbed8).coeffs).max() < 1e-12


def test_lemma_is_linear(perturbed8, rng):
    g1 = random_trig_form(perturbed8.grid, 0, 2, rng, kmax=1)
    g2 = random_trig_form(perturbed8.grid, 0, 2, rng, kmax=1)
    lhs = lemma_solve(g1 + 2.5 * g2, perturbed8)
    rhs = lemma_solve(g1, perturbed8) + 2.5 * lemma_solve(g2, perturbed8)
    assert np.linalg.norm((lhs - rhs).coeffs) < 1e-10 * np.linalg.norm(rhs.coeffs)


def test_kahler_identity_on_fine_grid():
    K = KahlerStructure.from_potential(Grid(16), TERMS, amplitude=0.003)
    assert kahler_identity_residual(K) < 1e-8


def test_green_bound_constant(flat8, perturbed8):
    c_flat = green_bound_constant(flat8)
    c_pert = green_bound_constant(perturbed8)
    assert 0 < c_flat < 1 and 0 < c_pert < 1
    assert c_pert == pytest.approx(c_flat, rel=0.1)
