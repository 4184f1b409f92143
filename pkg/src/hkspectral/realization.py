"""Explicit symplectic realizations over the torus and their lifted families.

Points of M carry 8 real coordinates ``u``.  The complex structure on M is the
standard one in the coordinates ``w_j = u_{2j} + i u_{2j+1}`` (0-based), so
``T^{0,1} M`` is spanned by ``d/dwbar_j = (e_2j + i e_2j+1) / 2``.

Two models are available:

* ``cotangent``: M = T*X with fibre coordinates ``p_j = u_{4+2j} + i u_{5+2j}``,
  ``Omega_0 = sum dp_j ^ dz_j``, source = target = projection, zero section.
  Only sigma = 0 is allowed.
* ``pair``: M = X x X with ``Omega_0 = pr1* Omega - pr2* Omega`` where
  ``Omega = sigma^-1``, source/target the projections and the diagonal as
  identity section.

All 2-forms and bivectors are 8x8 matrices in the real frame
(``M_ab = alpha(e_a, e_b)``).  Pullback of a form along a linear map ``D`` is
``D^T M D`` and pushforward of a bivector is ``D T D^T``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .deformation import DeformationSeries
from .hodge import KahlerStructure
from .torus_forms import Bivector

__all__ = [
    "RealizationModel",
    "LiftedFamily",
    "build_model",
    "dual_pair_relations",
    "lifted_form",
    "kernel_check",
    "reality_transversality",
    "almost_complex",
    "nijenhuis_residual",
    "nijenhuis_study",
    "antidiagonal_pullback",
    "closedness_fd",
    "complex_frame",
]

KERNEL_GAP = 1e3


def complex_frame(dim: int = 8) -> tuple:
    """Columns ``d/dw_j`` and ``d/dwbar_j`` of the complexified real frame, and ``dw_j`` rows."""
    m = dim // 2
    Fw = np.zeros((dim, m), dtype=complex)
    dw = np.zeros((m, dim), dtype=complex)
    for j in range(m):
        Fw[2 * j, j] = 0.5
        Fw[2 * j + 1, j] = -0.5j
        dw[j, 2 * j] = 1.0
        dw[j, 2 * j + 1] = 1j
    return Fw, np.conj(Fw), dw


def _hol_form(dw: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Real-frame matrix of ``sum_{j<k} a_jk dw_j ^ dw_k`` (``a`` antisymmetric)."""
    return dw.T @ a @ dw


def holomorphic_inverse(A: np.ndarray) -> np.ndarray:
    """Bivector ``tau`` in ``Lambda^2 T^{1,0}`` with ``tau^ij A_jk = delta`` on (1,0)-vectors."""
    dim = A.shape[0]
    Fw, _, _ = complex_frame(dim)
    a = Fw.T @ A @ Fw
    return Fw @ np.linalg.inv(a) @ Fw.T


class RealizationModel:
    """Cotangent or pair-groupoid realization over the torus.

    Parameters
    ----------
    kind : {"cotangent", "pair"}
    K : KahlerStructure
    sigma : Bivector
        Must be zero for ``cotangent`` and nondegenerate constant for ``pair``.
    p_max : float
        Half-width of the fibre sampling box for ``cotangent``.
    """

    def __init__(self, kind: str, K: KahlerStructure, sigma: Bivector, p_max: float = 1.0):
        if kind not in ("cotangent", "pair"):
            raise ValueError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.K = K
        self.sigma = sigma
        self.p_max = float(p_max)
        _, _, dw = complex_frame(8)
        E4 = np.eye(4)
        Z4 = np.zeros((4, 4))
        if kind == "cotangent":
            if not sigma.is_zero():
                raise ValueError("the cotangent model realizes only sigma = 0")
            self.ds = np.hstack([E4, Z4])
            self.dt = self.ds.copy()
            self.diota = np.vstack([E4, Z4])
            a = np.zeros((4, 4), dtype=complex)
            # Omega_0 = dp_1 ^ dz_1 + dp_2 ^ dz_2 ; w = (z1, z2, p1, p2)
            a[2, 0], a[0, 2] = 1.0, -1.0
            a[3, 1], a[1, 3] = 1.0, -1.0
        else:
            f = sigma.constant_value
            if f is None or abs(f) < 1e-12:
                raise ValueError("the pair groupoid needs a nondegenerate constant sigma")
            self.ds = np.hstack([E4, Z4])
            self.dt = np.hstack([Z4, E4])
            self.diota = np.vstack([E4, E4])
            g = -1.0 / f
            a = np.zeros((4, 4), dtype=complex)
            a[0, 1], a[1, 0] = g, -g
            a[2, 3], a[3, 2] = -g, g
        self.omega0 = _hol_form(dw, a)
        self.tau = holomorphic_inverse(self.omega0)

    def __repr__(self) -> str:
        return f"RealizationModel(kind={self.kind!r}, n={self.K.grid.n})"

    def s(self, u: np.ndarray) -> np.ndarray:
        return np.atleast_2d(u) @ self.ds.T

    def t(self, u: np.ndarray) -> np.ndarray:
        return np.atleast_2d(u) @ self.dt.T

    def iota(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_2d(x) @ self.diota.T

    def sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Random points of M: base uniform on the torus, fibres in a box."""
        x = rng.random((count, 4))
        if self.kind == "cotangent":
            p = rng.uniform(-self.p_max, self.p_max, size=(count, 4))
        else:
            p = rng.random((count, 4))
        return np.hstack([x, p])

    def invariants(self, rng: np.random.Generator, count: int = 100) -> dict:
        """Residuals of ``s o iota = id``, ``t o iota = id``, Lagrangian section and ``tau Omega_0``."""
        x = rng.random((count, 4))
        u = self.iota(x)
        Fw, _, dw = complex_frame(8)
        lag = self.diota.T @ self.omega0 @ self.diota
        inv = (dw @ self.tau @ dw.T) @ (Fw.T @ self.omega0 @ Fw) - np.eye(4)
        return {
            "s_iota": float(np.abs(self.s(u) - x).max()),
            "t_iota": float(np.abs(self.t(u) - x).max()),
            "lagrangian": float(np.abs(lag).max()),
            "tau_inverse": float(np.abs(inv).max()),
        }


def build_model(kind: str, K: KahlerStructure, sigma: Bivector, p_max: float = 1.0) -> RealizationModel:
    return RealizationModel(kind, K, sigma, p_max)


def dual_pair_relations(model: RealizationModel) -> dict:
    """``s_* tau t^* = t_* tau s^* = 0``, ``s_* tau s^* = sigma``, ``t_* tau t^* = -sigma``."""
    T = model.tau
    S = model.sigma.real_matrix() if not model.sigma.is_zero() else np.zeros((4, 4))
    ds, dt = model.ds, model.dt
    return {
        "s_tau_t": float(np.abs(ds @ T @ dt.T).max()),
        "t_tau_s": float(np.abs(dt @ T @ ds.T).max()),
        "s_tau_s": float(np.abs(ds @ T @ ds.T - S).max()),
        "t_tau_t": float(np.abs(dt @ T @ dt.T + S).max()),
    }


class LiftedFamily:
    """``Omega_{z1,z2} = Omega_0 + s* beta(z1) - t* beta(z2)`` over a realization."""

    def __init__(self, model: RealizationModel, series: DeformationSeries, radius: float | None = None):
        self.model = model
        self.series = series
        self.radius = radius
        self._beta: dict = {}
        self._omega: dict = {}

    def _beta_form(self, z):
        z = complex(z)
        if z not in self._beta:
            self._beta[z] = self.series.beta_at(z)
        return self._beta[z]

    def _omega_form(self, z):
        z = complex(z)
        if z not in self._omega:
            self._omega[z] = self.series.omega_at(z)
        return self._omega[z]

    def beta_matrices(self, z, x) -> np.ndarray:
        return self._beta_form(z).real_matrices(x)

    def omega_matrices(self, z, x) -> np.ndarray:
        return self._omega_form(z).real_matrices(x)

    def _warn(self, z1, z2):
        if self.radius is not None and max(abs(z1), abs(z2)) >= self.radius:
            warnings.warn(f"|zeta| = {max(abs(z1), abs(z2)):.3g} is outside the estimated radius {self.radius:.3g}")

    def form(self, z1, z2, u) -> np.ndarray:
        """Lifted form matrices at points ``u`` (shape (npts, 8, 8))."""
        self._warn(z1, z2)
        m = self.model
        u = np.atleast_2d(u)
        out = np.broadcast_to(m.omega0, (u.shape[0], 8, 8)).copy()
        if z1 != 0:
            out += m.ds.T @ self.beta_matrices(z1, m.s(u)) @ m.ds
        if z2 != 0:
            out -= m.dt.T @ self.beta_matrices(z2, m.t(u)) @ m.dt
        return out

    def eta(self, z1, z2, u) -> np.ndarray:
        """``eta = s* omega(z1) - t* omega(z2)``."""
        m = self.model
        u = np.atleast_2d(u)
        out = np.zeros((u.shape[0], 8, 8), dtype=complex)
        if z1 != 0:
            out += m.ds.T @ self.omega_matrices(z1, m.s(u)) @ m.ds
        if z2 != 0:
            out -= m.dt.T @ self.omega_matrices(z2, m.t(u)) @ m.dt
        return out

    def psi(self, z1, z2, u) -> np.ndarray:
        """``psi = -tau o eta`` as endomorphism matrices."""
        return -self.model.tau @ self.eta(z1, z2, u)


def lifted_form(family: LiftedFamily, z1, z2, u) -> np.ndarray:
    return family.form(z1, z2, u)


def eta_identity_residual(family: LiftedFamily, z1, z2, u) -> float:
    """Max of ``|Omega - (Omega_0 + eta + eta tau eta)|``."""
    H = family.eta(z1, z2, u)
    Om = family.form(z1, z2, u)
    pred = family.model.omega0 + H + H @ family.model.tau @ H
    return float(np.abs(Om - pred).max())


@dataclass
class KernelResult:
    dims: np.ndarray
    gaps: np.ndarray
    formula_residual: np.ndarray
    bases: np.ndarray
    singular_values: np.ndarray = field(repr=False, default=None)

    @property
    def status(self) -> str:
        if np.any(self.gaps < KERNEL_GAP):
            return "indeterminate"
        return "pass" if np.all(self.dims == 4) else "fail"


def kernel_check(family: LiftedFamily, z1, z2, u, rel_zero: float = 1e-8) -> KernelResult:
    """Kernel of ``Omega_{z1,z2}`` at each point and the residual of ``Omega (1 + psi) v = 0``.

    The dimension counts singular values below ``rel_zero * s_max``.  The gap is
    ``s_4 / s_5`` (1-based); a gap below 1e3 marks the point indeterminate.
    """
    Om = family.form(z1, z2, u)
    U, s, Vh = np.linalg.svd(Om)
    dims = np.sum(s <= rel_zero * s[:, :1], axis=1)
    with np.errstate(divide="ignore"):
        gaps = np.where(s[:, 4] > 0, s[:, 3] / np.where(s[:, 4] > 0, s[:, 4], 1.0), np.inf)
    bases = np.conj(np.swapaxes(Vh[:, 4:, :], 1, 2))
    _, Fwb, _ = complex_frame(8)
    psi = family.psi(z1, z2, u)
    vecs = Fwb[None] + psi @ Fwb[None]
    num = np.linalg.norm(Om @ vecs, axis=(1, 2))
    den = np.linalg.norm(Om, axis=(1, 2)) * np.linalg.norm(vecs, axis=(1, 2))
    return KernelResult(dims, gaps, num / den, bases, s)


def _principal_margin(B: np.ndarray) -> np.ndarray:
    """Sine of the smallest principal angle between span(B) and its conjugate."""
    Q, _ = np.linalg.qr(B)
    s = np.linalg.svd(np.conj(np.swapaxes(Q, 1, 2)) @ np.conj(Q), compute_uv=False)
    return np.sqrt(np.clip(1.0 - s[:, 0] ** 2, 0.0, None))


def _phi_blocks(series: DeformationSeries, z, x) -> np.ndarray:
    """``1 - phi phibar`` as real-frame 4x4 endomorphisms at base points."""
    if z == 0 or series.sigma.is_zero():
        return np.broadcast_to(np.eye(4), (np.atleast_2d(x).shape[0], 4, 4)).astype(complex)
    Phi = series.phi_at(z).matrices(x)
    from .torus_forms import EndoField

    R = EndoField.real_from_matrices(Phi)
    return np.eye(4)[None] - R @ np.conj(R)


def reality_transversality(family: LiftedFamily, z1, z2, u) -> dict:
    """Transversality of ker Omega and its conjugate, plus the psi-psibar identities.

    Returns
    -------
    dict
        ``margin`` (per point), ``s_identity`` and ``t_identity`` residuals of
        ``s_*(1 - psi psibar) = (1 - phi_1 phibar_1) s_*`` and its target analogue.
    """
    u = np.atleast_2d(u)
    m = family.model
    kr = kernel_check(family, z1, z2, u)
    margin = _principal_margin(kr.bases)
    psi = family.psi(z1, z2, u)
    lhs = np.eye(8)[None] - psi @ np.conj(psi)
    P1 = _phi_blocks(family.series, z1, m.s(u))
    P2 = _phi_blocks(family.series, z2, m.t(u))
    rs = np.abs(m.ds @ lhs - P1 @ m.ds).max(axis=(1, 2))
    rt = np.abs(m.dt @ lhs - P2 @ m.dt).max(axis=(1, 2))
    return {"margin": margin, "s_identity": rs, "t_identity": rt}


def _kernel_basis(Om: np.ndarray) -> np.ndarray:
    _, _, Vh = np.linalg.svd(Om)
    return np.conj(np.swapaxes(Vh[:, 4:, :], 1, 2))


def almost_complex(family: LiftedFamily, z1, z2, u) -> tuple:
    """Real endomorphisms ``I`` with ker Omega as the ``-i`` eigenspace.

    Returns
    -------
    (I, square_residual)
        ``I`` of shape (npts, 8, 8) and ``max |I^2 + 1|`` per point.
    """
    B = _kernel_basis(family.form(z1, z2, u))
    V = np.concatenate([B, np.conj(B)], axis=2)
    D = np.concatenate([-1j * np.ones(4), 1j * np.ones(4)])
    I = (V * D[None, None, :]) @ np.linalg.inv(V)
    imag = np.abs(I.imag).max(axis=(1, 2))
    I = I.real
    sq = np.abs(I @ I + np.eye(8)[None]).max(axis=(1, 2))
    return I, np.maximum(sq, imag)


def _nijenhuis_tensor(I: np.ndarray, dI: np.ndarray) -> np.ndarray:
    """``N^c_ab`` from ``I[c, a]`` and ``dI[d, c, a] = d_d I^c_a``."""
    # term1: I^d_a d_d I^c_b - I^d_b d_d I^c_a
    t1 = np.einsum("da,dcb->cab", I, dI) - np.einsum("db,dca->cab", I, dI)
    # term2: -I^c_d (d_a I^d_b - d_b I^d_a)
    t2 = -np.einsum("cd,adb->cab", I, dI) + np.einsum("cd,bda->cab", I, dI)
    return t1 + t2


def nijenhuis_residual(family: LiftedFamily, z1, z2, u0, h: float) -> float:
    """Max entry of the Nijenhuis tensor from central differences of step ``h``."""
    if h <= 1e-8:
        raise ValueError(f"finite-difference step {h} underflows")
    u0 = np.asarray(u0, dtype=float).reshape(8)
    shifts = np.concatenate([u0 + h * np.eye(8), u0 - h * np.eye(8), u0[None]])
    I, _ = almost_complex(family, z1, z2, shifts)
    dI = (I[:8] - I[8:16]) / (2 * h)
    return float(np.abs(_nijenhuis_tensor(I[16], dI)).max())


NIJENHUIS_FLOOR = 1e-9


def nijenhuis_study(family: LiftedFamily, z1, z2, u0, h: float = 0.02, levels: int = 3) -> dict:
    """Nijenhuis residual under step halving with Richardson slope and extrapolation.

    ``roundoff_limited`` is set when every residual is below ``NIJENHUIS_FLOOR``:
    the structure is then integrable to rounding error and the slopes only
    measure amplified roundoff.
    """
    hs = [h / 2**k for k in range(levels)]
    vals = [nijenhuis_residual(family, z1, z2, u0, hh) for hh in hs]
    slopes = [float(np.log2(vals[k] / vals[k + 1])) if vals[k + 1] > 0 else float("inf") for k in range(levels - 1)]
    extrap = abs(4 * vals[-1] - vals[-2]) / 3
    return {
        "steps": hs,
        "residuals": vals,
        "slopes": slopes,
        "extrapolated": float(extrap),
        "roundoff_limited": bool(max(vals) < NIJENHUIS_FLOOR),
    }


def antidiagonal_pullback(family: LiftedFamily, zetas, x) -> dict:
    """Residuals of ``iota* Omega_{i z, -i z} = 2 i z omega_1`` and ``iota* Omega_{z1,z2} = beta(z1) - beta(z2)``.

    The first residual is divided by ``|z|``.
    """
    m = family.model
    x = np.atleast_2d(x)
    u = m.iota(x)
    w1 = family.series.omega[0].real_matrices(x)
    worst, worst_beta = 0.0, 0.0
    for z in zetas:
        z = complex(z)
        if z == 0:
            continue
        Om = family.form(1j * z, -1j * z, u)
        pull = m.diota.T @ Om @ m.diota
        worst = max(worst, float(np.abs(pull - 2j * z * w1).max() / abs(z)))
        b = family.beta_matrices(1j * z, x) - family.beta_matrices(-1j * z, x)
        worst_beta = max(worst_beta, float(np.abs(pull - b).max()))
    return {"antidiagonal": worst, "beta_difference": worst_beta}


def closedness_fd(family: LiftedFamily, z1, z2, u0, h: float) -> float:
    """Max entry of ``d Omega`` at ``u0`` by central differences of step ``h``."""
    u0 = np.asarray(u0, dtype=float).reshape(8)
    pts = np.concatenate([u0 + h * np.eye(8), u0 - h * np.eye(8)])
    Om = family.form(z1, z2, pts)
    dOm = (Om[:8] - Om[8:]) / (2 * h)
    dO = dOm + np.einsum("bca->abc", dOm) + np.einsum("cab->abc", dOm)
    return float(np.abs(dO).max())
