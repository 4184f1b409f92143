"""Metric operators of a Kähler form on the torus: dbar*, Laplacian, Green operator.

The hermitian matrix ``h`` of ``omega1 = (i/2) sum h_jk dz_j ^ dzbar_k`` fixes
the inner products.  In the real frame the metric is ``g(u, v) = omega1(u, I v)``,
which gives ``<dz_j, dz_k> = 2 (h^-1)_kj`` and the volume density ``det h``.
Inner products on (p, q)-forms are determinants of minors of these Gram
matrices.

On a form with component vector ``a`` the L^2 pairing is
``<a, b> = mean_x b^H W_pq a`` with the pointwise weight
``W_pq = det(h) Gram_pq^T``.  The adjoint is then
``dbar* b = W^-1 D^H (W b)`` where ``D`` is the coefficient-wise dbar symbol, so
adjointness holds exactly on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

from .torus_forms import (
    ComplexForm,
    Grid,
    _derivative_terms,
    basis,
    delb,
    delbar_adjoint_flat,
    delz,
    fft4,
    ifft4,
    norms,
    random_trig_form,
    wedge,
)

__all__ = [
    "KahlerStructure",
    "GreenSolveError",
    "GreenInfo",
    "PositivityError",
    "delbar_star",
    "laplacian",
    "green",
    "green_solve",
    "green_bound_constant",
    "harmonic_projection",
    "inner",
    "kahler_identity_residual",
    "lemma_solve",
    "lemma_residuals",
]

TOL_GREEN_FLAT = 1e-10
TOL_GREEN_ITER = 1e-12


class GreenSolveError(RuntimeError):
    """Raised when the iterative Green solve does not reach its tolerance."""

    def __init__(self, message: str, history):
        super().__init__(message)
        self.history = list(history)


class PositivityError(ValueError):
    """Raised when a candidate Kähler form is not positive definite."""


@dataclass
class GreenInfo:
    path: str
    iterations: int = 0
    residual_history: list = field(default_factory=list)

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else 0.0


def _matvec(W: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Pointwise (or constant) matrix times component vector."""
    if W.ndim == 2:
        return np.tensordot(W, x, axes=(1, 0))
    return np.einsum("ij...,j...->i...", W, x)


def _pointwise_inv(W: np.ndarray) -> np.ndarray:
    m = W.shape[0]
    if W.ndim == 2:
        return np.linalg.inv(W)
    flat = np.moveaxis(W.reshape(m, m, -1), -1, 0)
    inv = np.linalg.inv(flat)
    return np.moveaxis(inv, 0, -1).reshape(W.shape)


def _minor_det(G: np.ndarray, I, J) -> np.ndarray:
    if len(I) == 0:
        return np.ones(G.shape[2:]) if G.ndim > 2 else 1.0
    if len(I) == 1:
        return G[I[0], J[0]]
    return G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]


class KahlerStructure:
    """Kähler form ``omega1`` on the torus together with its metric data.

    Parameters
    ----------
    omega1 : ComplexForm
        Real, closed, positive (1,1)-form.
    tol_green : float, optional
        Relative residual target of the iterative Green solver.
    max_iter : int
        Iteration cap of the iterative Green solver.
    check : bool
        Validate reality, closedness and positivity.

    Raises
    ------
    PositivityError
        If ``h`` fails to be positive definite at some grid point.
    """

    def __init__(self, omega1: ComplexForm, tol_green: float | None = None, max_iter: int = 2000, check: bool = True):
        if omega1.bidegree != (1, 1):
            raise ValueError("omega1 must be a (1,1)-form")
        self.omega1 = omega1
        self.grid: Grid = omega1.grid
        c = omega1.coeffs
        rest = c.copy()
        rest[(slice(None), 0, 0, 0, 0)] = 0
        self.is_flat = not np.any(np.abs(rest) > 1e-15 * max(1.0, np.abs(c).max()))
        if self.is_flat:
            self.h = (-2j * c[:, 0, 0, 0, 0]).reshape(2, 2)
        else:
            self.h = (-2j * ifft4(c)).reshape((2, 2) + self.grid.shape)
        self.tol_green = tol_green if tol_green is not None else (TOL_GREEN_FLAT if self.is_flat else TOL_GREEN_ITER)
        self.max_iter = int(max_iter)
        self._cache: dict = {}
        if check:
            self.validate()

    # -- constructors -----------------------------------------------------
    @classmethod
    def flat(cls, grid: Grid, h0=None, **kw) -> "KahlerStructure":
        h0 = np.eye(2) if h0 is None else np.asarray(h0, dtype=complex)
        comps = {(j, 2 + k): 0.5j * h0[j, k] for j in range(2) for k in range(2)}
        return cls(ComplexForm.from_components(grid, 1, 1, comps), **kw)

    @classmethod
    def from_potential(cls, grid: Grid, terms, amplitude: float = 1.0, h0=None, **kw) -> "KahlerStructure":
        """``omega1 = flat + i del dbar rho`` for a real trigonometric polynomial rho.

        Parameters
        ----------
        terms : iterable of dict
            Each entry has ``k`` (four integers) and optional ``cos``/``sin``
            amplitudes; ``rho = amplitude * sum(cos * cos(2 pi k.x) + sin * sin(2 pi k.x))``.
        """
        x = grid.coords()
        rho = np.zeros(grid.shape)
        for t in terms:
            phase = 2 * np.pi * sum(int(ka) * xa for ka, xa in zip(t["k"], x))
            rho = rho + float(t.get("cos", 0.0)) * np.cos(phase) + float(t.get("sin", 0.0)) * np.sin(phase)
        rho_form = ComplexForm.from_physical(grid, 0, 0, amplitude * rho[None])
        ddbar = delz(delb(rho_form))
        base = cls.flat(grid, h0, check=False).omega1
        return cls(base + 1j * ddbar, **kw)

    # -- validation -------------------------------------------------------
    def validate(self):
        om = self.omega1
        scale = max(1.0, float(np.abs(om.coeffs).max()))
        closed = max(float(np.abs(delz(om).coeffs).max()), float(np.abs(delb(om).coeffs).max()))
        real = float(np.abs(om.conj().coeffs - om.coeffs).max())
        if real > 1e-12 * scale:
            raise ValueError(f"omega1 is not real (residual {real:.3e})")
        if closed > 1e-10 * scale:
            raise ValueError(f"omega1 is not closed (residual {closed:.3e})")
        lam = self.min_eigenvalue()
        if not lam > 0:
            raise PositivityError(f"omega1 is not positive: min eigenvalue of h is {lam:.6g}")

    def min_eigenvalue(self) -> float:
        h = self.h
        tr = 0.5 * (h[0, 0] + h[1, 1]).real
        det = (h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]).real
        return float(np.min(tr - np.sqrt(np.maximum(tr**2 - det, 0.0))))

    def reality_residual(self) -> float:
        return float(np.abs(self.omega1.conj().coeffs - self.omega1.coeffs).max())

    def closedness_residual(self) -> float:
        om = self.omega1
        return float(max(np.abs(delz(om).coeffs).max(), np.abs(delb(om).coeffs).max()))

    # -- metric data ------------------------------------------------------
    @property
    def volume(self):
        h = self.h
        return (h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]).real

    def gram10(self):
        """Pointwise ``<dz_j, dz_k> = 2 (h^-1)_kj``."""
        if "g10" not in self._cache:
            h = self.h
            det = h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]
            hinv = np.array([[h[1, 1], -h[0, 1]], [-h[1, 0], h[0, 0]]]) / det
            self._cache["g10"] = 2.0 * np.swapaxes(hinv, 0, 1)
        return self._cache["g10"]

    def gram(self, p: int, q: int):
        """Gram matrix ``Gram[a, b] = <e_a, e_b>`` of ``basis(p, q)``."""
        G10 = self.gram10()
        G01 = np.conj(G10)
        Is = list(combinations(range(2), p))
        Js = list(combinations(range(2), q))
        m = len(Is) * len(Js)
        extra = G10.shape[2:]
        out = np.zeros((m, m) + extra, dtype=complex)
        a = 0
        for I in Is:
            for J in Js:
                b = 0
                for I2 in Is:
                    for J2 in Js:
                        out[a, b] = _minor_det(G10, I, I2) * _minor_det(G01, J, J2)
                        b += 1
                a += 1
        return out

    def weight(self, p: int, q: int):
        key = ("W", p, q)
        if key not in self._cache:
            G = self.gram(p, q)
            self._cache[key] = self.volume * np.swapaxes(G, 0, 1)
        return self._cache[key]

    def weight_inv(self, p: int, q: int):
        key = ("Winv", p, q)
        if key not in self._cache:
            self._cache[key] = _pointwise_inv(self.weight(p, q))
        return self._cache[key]

    def apply_weight(self, a: ComplexForm, inverse: bool = False) -> ComplexForm:
        W = self.weight_inv(a.p, a.q) if inverse else self.weight(a.p, a.q)
        if W.ndim == 2:
            return a._like(_matvec(W, a.coeffs))
        return a._like(fft4(_matvec(W, ifft4(a.coeffs))))

    def reference(self) -> "KahlerStructure":
        """Constant-coefficient structure with the grid-averaged ``h``."""
        if self.is_flat:
            return self
        if "ref" not in self._cache:
            h0 = self.h.reshape(2, 2, -1).mean(axis=-1)
            h0 = 0.5 * (h0 + h0.conj().T)
            self._cache["ref"] = KahlerStructure.flat(self.grid, h0, check=False)
        return self._cache["ref"]


# -- inner products and adjoints -----------------------------------------------


def inner(a: ComplexForm, b: ComplexForm, K: KahlerStructure) -> complex:
    """L^2 inner product ``<a, b>`` (linear in a, antilinear in b)."""
    Wa = K.apply_weight(a)
    return complex(np.vdot(b.coeffs, Wa.coeffs))


def delbar_star(b: ComplexForm, K: KahlerStructure) -> ComplexForm:
    """Formal adjoint of dbar in the L^2 product of ``omega1``.

    Returns ``None`` for forms of bidegree (p, 0).
    """
    if b.q == 0:
        return None
    y = delbar_adjoint_flat(K.apply_weight(b))
    return K.apply_weight(y, inverse=True)


def laplacian(a: ComplexForm, K: KahlerStructure) -> ComplexForm:
    """``dbar dbar* + dbar* dbar``."""
    out = ComplexForm.zeros(a.grid, a.p, a.q)
    s = delbar_star(a, K)
    if s is not None:
        out = out + delb(s)
    t = delb(a)
    if t is not None:
        out = out + delbar_star(t, K)
    return out


# -- constant-coefficient symbols ---------------------------------------------


def _dbar_symbol(grid: Grid, p: int, q: int) -> np.ndarray:
    """Symbol matrix of dbar from (p, q-1) to (p, q), shape (m_out, m_in, n, n, n, n)."""
    m_out = comb(2, p) * comb(2, q)
    m_in = comb(2, p) * comb(2, q - 1)
    D = np.zeros((m_out, m_in) + grid.shape, dtype=complex)
    for o, i, sign, c in _derivative_terms(p, q - 1, (2, 3)):
        D[o, i] = D[o, i] + sign * grid.symbol(c)
    return D


def _flat_laplacian_symbol(K: KahlerStructure, p: int, q: int) -> np.ndarray:
    grid = K.grid
    m = comb(2, p) * comb(2, q)
    M = np.zeros((m, m) + grid.shape, dtype=complex)
    Wq = K.weight(p, q)
    Wq_inv = K.weight_inv(p, q)
    if q >= 1:
        D = _dbar_symbol(grid, p, q)
        Wm_inv = K.weight_inv(p, q - 1)
        DH = np.conj(np.swapaxes(D, 0, 1))
        # D Wm^-1 D^H Wq
        M += np.einsum("ab...,bc,cd...,de->ae...", D, Wm_inv, DH, Wq)
    if q <= 1:
        D = _dbar_symbol(grid, p, q + 1)
        Wp = K.weight(p, q + 1)
        DH = np.conj(np.swapaxes(D, 0, 1))
        M += np.einsum("ab,bc...,cd,de...->ae...", Wq_inv, DH, Wp, D)
    return M


def _stack_inv(M: np.ndarray, zero_mode_value: np.ndarray | None = None) -> np.ndarray:
    """Invert a field of small matrices; the k = 0 block is replaced first."""
    m = M.shape[0]
    M = M.copy()
    if zero_mode_value is None:
        M[(slice(None), slice(None), 0, 0, 0, 0)] = np.eye(m)
    else:
        M[(slice(None), slice(None), 0, 0, 0, 0)] = zero_mode_value
    flat = np.moveaxis(M.reshape(m, m, -1), -1, 0)
    inv = np.moveaxis(np.linalg.inv(flat), 0, -1).reshape(M.shape)
    return inv


def _flat_green_symbol(K: KahlerStructure, p: int, q: int) -> np.ndarray:
    key = ("Gsym", p, q)
    if key not in K._cache:
        inv = _stack_inv(_flat_laplacian_symbol(K, p, q))
        inv[(slice(None), slice(None), 0, 0, 0, 0)] = 0
        K._cache[key] = inv
    return K._cache[key]


def _preconditioner_symbol(K: KahlerStructure, p: int, q: int) -> np.ndarray:
    """Inverse of ``W0 Delta0`` (k != 0) and ``W0^-1`` (k = 0) for the reference metric."""
    key = ("Psym", p, q)
    if key not in K._cache:
        R = K.reference()
        W0 = R.weight(p, q)
        M = np.einsum("ab,bc...->ac...", W0, _flat_laplacian_symbol(R, p, q))
        K._cache[key] = _stack_inv(M, zero_mode_value=W0)
    return K._cache[key]


def _apply_symbol(S: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    return np.einsum("ab...,b...->a...", S, coeffs)


# -- harmonic forms ------------------------------------------------------------


def _harmonic_basis(K: KahlerStructure, p: int, q: int) -> list:
    key = ("Hbasis", p, q)
    if key in K._cache:
        return K._cache[key]
    grid = K.grid
    m = comb(2, p) * comb(2, q)
    out = []
    for e in range(m):
        c = np.zeros((m,) + grid.shape, dtype=complex)
        c[e, 0, 0, 0, 0] = 1.0
        const = ComplexForm(grid, p, q, c)
        if K.is_flat or q == 0:
            out.append(const)
        elif q == 2:
            # top antiholomorphic degree: dbar* b = 0 iff W b is constant
            out.append(K.apply_weight(const, inverse=True))
        else:
            # dbar-closed representative orthogonal to dbar-exact forms
            corr = green(delbar_star(const, K), K)
            out.append(const - delb(corr))
    K._cache[key] = out
    return out


def harmonic_projection(a: ComplexForm, K: KahlerStructure) -> ComplexForm:
    """L^2(omega1)-orthogonal projection onto the harmonic forms of ``a``'s bidegree."""
    if K.is_flat:
        c = np.zeros_like(a.coeffs)
        c[(slice(None), 0, 0, 0, 0)] = a.coeffs[(slice(None), 0, 0, 0, 0)]
        return a._like(c)
    B = _harmonic_basis(K, a.p, a.q)
    key = ("Hgram", a.p, a.q)
    if key not in K._cache:
        gram = np.array([[inner(bi, bj, K) for bi in B] for bj in B])
        K._cache[key] = np.linalg.inv(gram)
    v = np.array([inner(a, bj, K) for bj in B])
    coef = K._cache[key] @ v
    out = ComplexForm.zeros(a.grid, a.p, a.q)
    for ci, bi in zip(coef, B):
        out = out + ci * bi
    return out


# -- Green operator -------------------------------------------------------------


def green_solve(gamma: ComplexForm, K: KahlerStructure, tol: float | None = None) -> tuple:
    """Green operator with solver diagnostics.

    Returns
    -------
    (ComplexForm, GreenInfo)

    Raises
    ------
    GreenSolveError
        If preconditioned CG does not reach ``tol`` within ``K.max_iter`` steps.
    """
    p, q = gamma.bidegree
    if K.is_flat:
        out = gamma._like(_apply_symbol(_flat_green_symbol(K, p, q), gamma.coeffs))
        return out, GreenInfo("flat-symbol")
    tol = K.tol_green if tol is None else tol
    rhs_form = gamma - harmonic_projection(gamma, K)
    b = K.apply_weight(rhs_form).coeffs
    bnorm = np.linalg.norm(b)
    info = GreenInfo("pcg")
    # a harmonic input leaves only roundoff, which CG cannot reduce further
    if bnorm <= 64 * np.finfo(float).eps * np.linalg.norm(K.apply_weight(gamma).coeffs):
        return ComplexForm.zeros(gamma.grid, p, q), info
    P = _preconditioner_symbol(K, p, q)

    def A(x):
        return K.apply_weight(laplacian(gamma._like(x), K)).coeffs

    x = np.zeros_like(b)
    r = b.copy()
    z = _apply_symbol(P, r)
    d_ = z.copy()
    rz = np.vdot(r, z)
    info.residual_history.append(1.0)
    for it in range(1, K.max_iter + 1):
        Ad = A(d_)
        alpha = rz / np.vdot(d_, Ad)
        x = x + alpha * d_
        r = r - alpha * Ad
        res = float(np.linalg.norm(r) / bnorm)
        info.residual_history.append(res)
        info.iterations = it
        if res <= tol:
            break
        z = _apply_symbol(P, r)
        rz_new = np.vdot(r, z)
        d_ = z + (rz_new / rz) * d_
        rz = rz_new
    else:
        raise GreenSolveError(
            f"Green solve did not converge in {K.max_iter} iterations (residual {info.final_residual:.3e})",
            info.residual_history,
        )
    sol = gamma._like(x)
    sol = sol - harmonic_projection(sol, K)
    return sol, info


def green(gamma: ComplexForm, K: KahlerStructure, tol: float | None = None) -> ComplexForm:
    """Inverse of the dbar-Laplacian on the orthogonal complement of harmonics."""
    return green_solve(gamma, K, tol)[0]


# -- Kähler identity and the solved equation ---------------------------------


def kahler_identity_residual(K: KahlerStructure, rng: np.random.Generator | None = None, trials: int = 2, kmax: int = 1) -> float:
    """Max of ``|([dbar*, L] - i del) a| / |a|`` over random trigonometric forms.

    Test forms carry modes ``|k_a| <= kmax`` in every bidegree (p, q) with p <= 1.
    For a perturbed metric the residual is the collocation aliasing error and
    decays spectrally under grid refinement.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for p in (0, 1):
        for q in (0, 1, 2):
            for _ in range(trials):
                a = random_trig_form(K.grid, p, q, rng, kmax)
                res = -1j * delz(a)
                if q < 2:
                    res = res + delbar_star(wedge(K.omega1, a), K)
                s = delbar_star(a, K)
                if s is not None:
                    res = res - wedge(K.omega1, s)
                worst = max(worst, float(np.linalg.norm(res.coeffs) / np.linalg.norm(a.coeffs)))
    return worst


def green_bound_constant(K: KahlerStructure, rng: np.random.Generator | None = None, trials: int = 3, s: float = 3.0, kmax: int = 2) -> float:
    """Empirical ``c1`` in ``|G g|_s <= c1 |g|_(s-2)`` over random (0,2)-forms.

    The bound is existential in the analysis; here it is only measured on
    trigonometric test forms with modes ``|k_a| <= kmax``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for _ in range(trials):
        g = random_trig_form(K.grid, 0, 2, rng, kmax)
        g = g - harmonic_projection(g, K)
        den = norms(g, s - 2)[2]
        if den > 0:
            worst = max(worst, norms(green(g, K), s)[2] / den)
    return worst


def lemma_solve(gamma: ComplexForm, K: KahlerStructure, tol: float | None = None) -> ComplexForm:
    """``omega = del dbar* G gamma`` for a (0,2)-form ``gamma``."""
    if gamma.bidegree != (0, 2):
        raise ValueError("lemma_solve needs a (0,2)-form")
    return delz(delbar_star(green(gamma, K, tol), K))


def lemma_residuals(gamma: ComplexForm, omega: ComplexForm, K: KahlerStructure) -> dict:
    """Relative residuals of ``dbar w + del g``, ``dbar* w`` and ``w ^ omega1``.

    The first two are scaled by ``max(|dbar w|, |del g|)``; the wedge is scaled by
    ``|w| |omega1|_sup``.
    """
    db = delb(omega)
    dg = delz(gamma)
    scale = max(np.linalg.norm(db.coeffs), np.linalg.norm(dg.coeffs))
    scale = scale if scale > 0 else 1.0
    eq = np.linalg.norm((db + dg).coeffs) / scale
    cs = np.linalg.norm(delbar_star(omega, K).coeffs) / scale
    wn = np.linalg.norm(omega.coeffs) * float(np.abs(K.omega1.physical()).max())
    wn = wn if wn > 0 else 1.0
    lw = np.linalg.norm(wedge(omega, K.omega1).coeffs) / wn
    return {"equation": float(eq), "coclosed": float(cs), "primitive": float(lw)}
