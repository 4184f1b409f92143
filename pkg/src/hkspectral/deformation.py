"""Recursive deformation series of a holomorphic Poisson structure.

Starting from a Kähler form ``omega_1`` and a holomorphic bivector ``sigma`` the
series ``omega(zeta) = sum_n omega_n zeta^n`` is defined by

    gamma_n = sum_{i+j=n} (1/2) i_sigma(omega_i ^ omega_j)
    omega_n = del dbar* G gamma_n

so that ``dbar omega_n + del gamma_n = 0`` order by order.  From it one gets the
closed B-field ``beta_n = omega_n + gamma_n`` and the Beltrami differential
``phi_zeta = -sigma o omega(zeta)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import comb as _comb

import numpy as np

from .hodge import KahlerStructure, delbar_star, green_solve
from .torus_forms import (
    Bivector,
    ComplexForm,
    EndoField,
    FormSum,
    contract_sigma_pair,
    delb,
    delz,
    mc_bracket,
    norms,
    phi_from,
    wedge,
)

__all__ = [
    "DeformationSeries",
    "hitchin_series",
    "order_residuals",
    "odd_vanishing_check",
    "beta_series",
    "mc_residual",
    "invertibility_margin",
    "radius_estimate",
    "catalan",
]

SOBOLEV_S = 3.0
ZERO_TOL = 1e-13


def catalan(n: int) -> int:
    """Catalan number ``C_n``."""
    return _comb(2 * n, n) // (n + 1)


@dataclass
class DeformationSeries:
    """Truncated series ``omega(zeta) = sum_{n=1}^N omega_n zeta^n``.

    Attributes
    ----------
    omega : list of ComplexForm
        ``omega[n-1]`` is the (1,1)-coefficient of order n.
    gamma : list of ComplexForm
        ``gamma[n-1] = sum_{i+j=n} (1/2) i_sigma(omega_i ^ omega_j)`` (zero for n = 1).
    norms : list of float
        Sobolev norms ``a_n`` (``s = 3``).
    """

    sigma: Bivector
    K: KahlerStructure
    omega: list
    gamma: list
    norms: list = field(default_factory=list)
    green_iterations: list = field(default_factory=list)
    sobolev_s: float = SOBOLEV_S

    @property
    def N(self) -> int:
        return len(self.omega)

    @property
    def grid(self):
        return self.K.grid

    @property
    def beta(self) -> list:
        return beta_series(self)

    def coefficient(self, n: int) -> ComplexForm:
        return self.omega[n - 1]

    @classmethod
    def from_coefficients(cls, sigma: Bivector, K: KahlerStructure, omegas, sobolev_s: float = SOBOLEV_S) -> "DeformationSeries":
        """Assemble a series from given coefficients (sources recomputed)."""
        omegas = list(omegas)
        gam = [_source(sigma, omegas, n) for n in range(1, len(omegas) + 1)]
        a = [norms(w, sobolev_s)[2] for w in omegas]
        return cls(sigma, K, omegas, gam, a, [0] * len(omegas), sobolev_s)

    def with_coefficient(self, n: int, form: ComplexForm) -> "DeformationSeries":
        """Copy with ``omega_n`` replaced (sources of higher orders recomputed)."""
        omegas = list(self.omega)
        omegas[n - 1] = form
        return DeformationSeries.from_coefficients(self.sigma, self.K, omegas, self.sobolev_s)

    def omega_at(self, zeta: complex) -> ComplexForm:
        """Horner evaluation of ``omega(zeta)``."""
        acc = ComplexForm.zeros(self.grid, 1, 1)
        for w in reversed(self.omega):
            acc = (acc + w) * zeta
        return acc

    def beta_at(self, zeta: complex) -> FormSum:
        b11 = ComplexForm.zeros(self.grid, 1, 1)
        b02 = ComplexForm.zeros(self.grid, 0, 2)
        for w, g in zip(reversed(self.omega), reversed(self.gamma)):
            b11 = (b11 + w) * zeta
            b02 = (b02 + g) * zeta
        return FormSum([b11, b02])

    def phi_at(self, zeta: complex) -> EndoField:
        return phi_from(self.sigma, self.omega_at(zeta))


def _source(sigma: Bivector, omegas, n: int) -> ComplexForm:
    grid = omegas[0].grid
    out = ComplexForm.zeros(grid, 0, 2)
    for i in range(1, n // 2 + 1):
        j = n - i
        if j < 1:
            continue
        term = contract_sigma_pair(sigma, omegas[i - 1], omegas[j - 1])
        out = out + (term if i == j else 2 * term)
    return out


def hitchin_series(
    sigma: Bivector,
    K: KahlerStructure,
    N: int = 8,
    omega1: ComplexForm | None = None,
    tol: float | None = None,
    sobolev_s: float = SOBOLEV_S,
) -> DeformationSeries:
    """Compute ``omega_1 .. omega_N`` by the recursion ``omega_n = del dbar* G gamma_n``.

    Parameters
    ----------
    sigma : Bivector
    K : KahlerStructure
        Supplies dbar*, G and the default ``omega_1``.
    N : int
        Truncation order, at least 1.
    omega1 : ComplexForm, optional
        Seed replacing ``K.omega1`` (the metric is still that of ``K``).

    Raises
    ------
    hkspectral.hodge.GreenSolveError
        Propagated from the Green solve.
    """
    if N < 1:
        raise ValueError("truncation order must be >= 1")
    w1 = K.omega1 if omega1 is None else omega1
    omegas = [w1]
    gammas = [ComplexForm.zeros(K.grid, 0, 2)]
    iters = [0]
    for n in range(2, N + 1):
        g = _source(sigma, omegas, n)
        G, info = green_solve(g, K, tol)
        omegas.append(delz(delbar_star(G, K)))
        gammas.append(g)
        iters.append(info.iterations)
    a = [norms(w, sobolev_s)[2] for w in omegas]
    return DeformationSeries(sigma, K, omegas, gammas, a, iters, sobolev_s)


def beta_series(series: DeformationSeries) -> list:
    """``beta_n = omega_n + gamma_n`` as FormSum objects, n = 1..N."""
    return [FormSum([w, g]) for w, g in zip(series.omega, series.gamma)]


def order_residuals(series: DeformationSeries) -> list:
    """Per-order identity residuals.

    Each entry holds absolute l2 residuals and versions relative to
    ``max(|dbar omega_n|, |del gamma_n|, max_i a_i)`` for the order-n identity
    ``dbar omega_n + del gamma_n = 0``, for ``del omega_n = 0``, for the
    closedness of ``beta_n`` and the gauge conditions ``dbar* omega_n = 0`` and
    ``omega_n ^ omega_1 = 0``.  Using one scale per order keeps the relative
    values meaningful at odd orders, where every term is numerically zero.
    """
    amax = max(series.norms) if series.norms else 0.0
    out = []
    for n, (w, g) in enumerate(zip(series.omega, series.gamma), start=1):
        db, dg, dw = delb(w), delz(g), delz(w)
        scale = max(np.linalg.norm(db.coeffs), np.linalg.norm(dg.coeffs), amax)
        scale = scale if scale > 0 else 1.0
        eq = float(np.linalg.norm((db + dg).coeffs))
        delw = float(np.linalg.norm(dw.coeffs))
        closed = float(np.sqrt(eq**2 + delw**2))
        rec = {"order": n, "equation": eq, "del_omega": delw, "beta_closed": closed, "scale": float(scale)}
        if n >= 2:
            rec["coclosed"] = float(np.linalg.norm(delbar_star(w, series.K).coeffs))
            rec["primitive"] = float(np.linalg.norm(wedge(w, series.K.omega1).coeffs))
        for key in ("equation", "del_omega", "beta_closed", "coclosed", "primitive"):
            if key not in rec:
                continue
            rec[key + "_rel"] = rec[key] / scale
        out.append(rec)
    return out


def odd_vanishing_check(series: DeformationSeries) -> dict:
    """Norms of the odd coefficients and of ``i_sigma(omega_2n ^ omega_1)``.

    Values are Sobolev norms divided by ``max_i a_i``.
    """
    amax = max(series.norms) or 1.0
    odd = {n: norms(series.omega[n - 1], series.sobolev_s)[2] / amax for n in range(3, series.N + 1, 2)}
    even = {}
    for n in range(2, series.N + 1, 2):
        c = 2 * contract_sigma_pair(series.sigma, series.omega[n - 1], series.omega[0])
        even[n] = norms(c, series.sobolev_s)[2] / amax
    worst = max(list(odd.values()) + list(even.values()) + [0.0])
    return {"odd_norms": odd, "contraction_norms": even, "max": worst}


def mc_residual(series: DeformationSeries, zeta: complex) -> float:
    """l2 norm of ``dbar phi + (1/2)[phi, phi]`` for ``phi = -sigma o omega(zeta)``."""
    if zeta == 0 or series.sigma.is_zero():
        return 0.0
    phi = series.phi_at(zeta)
    res = phi.delbar() + 0.5 * mc_bracket(phi, phi)
    return res.l2()


def invertibility_margin(series: DeformationSeries, zeta: complex, samples: int | None = None, rng=None) -> float:
    """Smallest singular value of ``1 - phi phibar`` over grid points.

    The induced endomorphism of the complexified tangent bundle is
    ``diag(1 - Phi conj(Phi), 1)`` in a frame adapted to the type
    decomposition, so its smallest singular value is ``min(s_2x2, 1)``.
    """
    phi = series.phi_at(zeta)
    from .torus_forms import ifft4

    P = ifft4(phi.coeffs).reshape(2, 2, -1)
    P = np.moveaxis(P, -1, 0)
    if samples is not None:
        rng = np.random.default_rng(0) if rng is None else rng
        P = P[rng.choice(P.shape[0], size=min(samples, P.shape[0]), replace=False)]
    M = np.eye(2)[None] - P @ np.conj(P)
    s = np.linalg.svd(M, compute_uv=False)
    return float(min(s[:, -1].min(), 1.0))


def radius_estimate(series: DeformationSeries) -> tuple:
    """Empirical recursion constant and the radius ``1 / (4 c a_1)``.

    Returns
    -------
    (c_est, radius, bound_ok)
        ``radius`` is ``inf`` when every ``a_n`` (n >= 2) is numerically zero;
        ``bound_ok`` reports ``a_n <= c^(n-1) a_1^n C_(n-1)`` for all n.
    """
    a = series.norms
    a1 = a[0]
    c = 0.0
    for n in range(2, len(a) + 1):
        if a[n - 1] <= ZERO_TOL * max(a1, 1.0) ** n:
            continue
        denom = sum(a[i - 1] * a[n - i - 1] for i in range(1, n))
        if denom > 0:
            c = max(c, a[n - 1] / denom)
    if c == 0.0 or a1 == 0.0:
        radius = float("inf")
    else:
        radius = 1.0 / (4.0 * c * a1)
    ok = all(
        a[n - 1] <= (c ** (n - 1)) * a1**n * catalan(n - 1) * (1 + 1e-12) + ZERO_TOL * max(a1, 1.0) ** n
        for n in range(1, len(a) + 1)
    )
    return c, radius, ok
