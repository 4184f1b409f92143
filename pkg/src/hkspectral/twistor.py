"""Quadratic twistor families, hyperkähler triples and their identities.

A twistor family is the pencil

    Omega_zeta = A + 2 i zeta B + zeta^2 conj(A),   A = omega_J + i omega_K,  B = omega_I,

of complex 2-forms.  Forms are real-frame matrices ``M_ab = alpha(e_a, e_b)``,
optionally with leading batch axes (one matrix per sample point).  Endomorphisms
act on column vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .realization import LiftedFamily, _hol_form, complex_frame

__all__ = [
    "QuadraticTwistorFamily",
    "HyperkahlerTriple",
    "RealStructureParams",
    "complex_structure_from",
    "triple_from_family",
    "signature",
    "real_structure_identity",
    "s1_equivariance",
    "fibre_rotation",
    "antidiagonal_evaluator",
    "theorem_a_hypothesis_check",
    "degeneration_check",
    "TOL_QUATERNION",
]

TOL_QUATERNION = 1e-9
TOL_IDENTITY = 1e-10


def _eye_like(M: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.eye(M.shape[-1]), M.shape)


def _maxabs(M: np.ndarray) -> np.ndarray:
    """Per-point max entry (scalar for unbatched input)."""
    return np.abs(M).max(axis=(-2, -1))


def complex_structure_from(Omega: np.ndarray, cond_max: float = 1e12) -> np.ndarray:
    """Complex structure of a complex 2-form ``Omega = omega + i eta``.

    Returns ``I = eta^-1 omega`` so that ``ker Omega`` is the ``-i`` eigenspace
    of ``I`` (``Omega`` of type (2,0) for ``I``).

    Raises
    ------
    ValueError
        If ``eta`` is singular at some point.
    """
    Omega = np.asarray(Omega)
    W, E = Omega.real, Omega.imag
    c = np.linalg.cond(E)
    if np.any(~np.isfinite(c)) or np.any(c > cond_max):
        raise ValueError(f"imaginary part is singular (condition number {np.max(c):.3g})")
    return np.linalg.solve(E, W)


def signature(G: np.ndarray, rel_tol: float = 1e-10) -> tuple:
    """Counts ``(positive, negative, zero)`` of the eigenvalues of a symmetric matrix."""
    ev = np.linalg.eigvalsh(0.5 * (G + G.T))
    tol = rel_tol * max(np.abs(ev).max(), 1.0)
    return int(np.sum(ev > tol)), int(np.sum(ev < -tol)), int(np.sum(np.abs(ev) <= tol))


class QuadraticTwistorFamily:
    """The pencil ``Omega_zeta = A + 2 i zeta B + zeta^2 conj(A)``.

    Parameters
    ----------
    A : ndarray, complex, shape (..., d, d)
        Antisymmetric; ``omega_J + i omega_K``.
    B : ndarray, real, shape (..., d, d)
        Antisymmetric; ``omega_I``.
    lagrangian : ndarray, shape (d, m), optional
        Differential of a linear Lagrangian inclusion, used by the Lagrangian
        checks.
    """

    def __init__(self, A, B, lagrangian: np.ndarray | None = None):
        A = np.asarray(A, dtype=complex)
        B = np.asarray(B)
        if np.iscomplexobj(B):
            if np.abs(B.imag).max() > 1e-14 * max(np.abs(B).max(), 1.0):
                raise ValueError("B must be real")
            B = B.real
        for name, M in (("A", A), ("B", B)):
            if M.shape[-1] != M.shape[-2] or M.shape[-1] % 2:
                raise ValueError(f"{name} must be square of even size")
            if np.abs(M + np.swapaxes(M, -1, -2)).max() > 1e-12 * max(np.abs(M).max(), 1.0):
                raise ValueError(f"{name} must be antisymmetric")
        self.A = A
        self.B = B.astype(float)
        self.lagrangian = lagrangian

    @property
    def dim(self) -> int:
        return self.A.shape[-1]

    def omega(self, zeta: complex) -> np.ndarray:
        """``Omega_zeta``."""
        return self.A + 2j * zeta * self.B + zeta**2 * np.conj(self.A)

    __call__ = omega

    def scaled_omega(self, zeta: complex, eps: float) -> np.ndarray:
        """``eps * Omega_{zeta/eps}``, the pencil adapted to the circle ``|zeta| = eps``."""
        return eps * self.omega(zeta / eps)

    def congruence(self, P: np.ndarray) -> "QuadraticTwistorFamily":
        """Pull back by the real linear map ``P`` (``A -> P^T A P``)."""
        lag = None if self.lagrangian is None else np.linalg.solve(P, self.lagrangian)
        return QuadraticTwistorFamily(P.T @ self.A @ P, P.T @ self.B @ P, lag)

    @classmethod
    def flat_torus(cls) -> "QuadraticTwistorFamily":
        """Flat C^2: ``A = dz1 ^ dz2`` and ``B = (i/2) sum dz_j ^ dzbar_j``."""
        _, _, dw = complex_frame(4)
        a = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)
        return cls(_hol_form(dw, a), _kahler_matrix(dw, (1.0, 1.0)))

    @classmethod
    def flat_cotangent(cls, signs=(1, 1)) -> "QuadraticTwistorFamily":
        """Flat ``T*C^2`` with coordinates ``(z1, z2, p1, p2)``.

        ``A = sum dp_j ^ dz_j`` and ``B = (i/2) sum s_j (dz_j ^ dzbar_j + dp_j ^ dpbar_j)``.
        With mixed signs ``s`` the metric is pseudo-hyperkähler.  The zero
        section is the Lagrangian.
        """
        _, _, dw = complex_frame(8)
        a = np.zeros((4, 4), dtype=complex)
        a[2, 0], a[0, 2] = 1.0, -1.0
        a[3, 1], a[1, 3] = 1.0, -1.0
        s = tuple(signs)
        B = _kahler_matrix(dw, (s[0], s[1], s[0], s[1]))
        lag = np.vstack([np.eye(4), np.zeros((4, 4))])
        return cls(_hol_form(dw, a), B, lag)

    def lagrangian_form(self) -> np.ndarray:
        """``iota* B``, the Kähler form expected on the Lagrangian."""
        if self.lagrangian is None:
            raise ValueError("family has no Lagrangian")
        L = self.lagrangian
        return L.T @ self.B @ L


def _kahler_matrix(dw: np.ndarray, signs) -> np.ndarray:
    out = np.zeros((dw.shape[1], dw.shape[1]), dtype=complex)
    for j, s in enumerate(signs):
        out += s * 0.5j * (np.outer(dw[j], np.conj(dw[j])) - np.outer(np.conj(dw[j]), dw[j]))
    return out.real


@dataclass
class HyperkahlerTriple:
    """Kähler forms, complex structures and metric of a (pseudo-)hyperkähler structure."""

    omega_I: np.ndarray
    omega_J: np.ndarray
    omega_K: np.ndarray
    I: np.ndarray
    J: np.ndarray
    K: np.ndarray
    g: np.ndarray

    def quaternion_residuals(self) -> dict:
        one = _eye_like(self.I)
        return {
            "I2": float(np.max(_maxabs(self.I @ self.I + one))),
            "J2": float(np.max(_maxabs(self.J @ self.J + one))),
            "K2": float(np.max(_maxabs(self.K @ self.K + one))),
            "IJK": float(np.max(_maxabs(self.I @ self.J @ self.K + one))),
        }

    def metrics(self) -> tuple:
        """``g`` computed from each of ``(omega_I, I)``, ``(omega_J, J)``, ``(omega_K, K)``."""
        return self.omega_I @ self.I, self.omega_J @ self.J, self.omega_K @ self.K

    def metric_residuals(self) -> dict:
        gI, gJ, gK = self.metrics()
        sym = max(float(np.max(_maxabs(x - np.swapaxes(x, -1, -2)))) for x in (gI, gJ, gK))
        inv = 0.0
        for X in (self.I, self.J, self.K):
            inv = max(inv, float(np.max(_maxabs(np.swapaxes(X, -1, -2) @ self.g @ X - self.g))))
        return {
            "symmetric": sym,
            "IJ": float(np.max(_maxabs(gI - gJ))),
            "IK": float(np.max(_maxabs(gI - gK))),
            "JK": float(np.max(_maxabs(gJ - gK))),
            "compatible": inv,
        }

    def worst(self) -> float:
        return max(list(self.quaternion_residuals().values()) + list(self.metric_residuals().values()))

    def signature(self) -> tuple:
        """Eigenvalue counts of ``g`` (first point if batched)."""
        G = self.g.reshape((-1,) + self.g.shape[-2:])[0]
        return signature(G)


def triple_from_family(fam: QuadraticTwistorFamily, tol: float = TOL_QUATERNION) -> HyperkahlerTriple:
    """Extract ``(omega_I, omega_J, omega_K)`` and ``I, J, K`` from the pencil.

    ``I``, ``J`` and ``K`` are the complex structures of ``Omega_0``, ``Omega_i``
    and ``-Omega_1`` respectively, which makes ``IJK = -1``.  The metric is
    ``g = omega_I(., I .)`` (the identity on the flat model).

    Raises
    ------
    ValueError
        If a quaternion or metric residual exceeds ``tol``; the message
        carries the worst point.
    """
    I = complex_structure_from(fam.omega(0.0))
    J = complex_structure_from(fam.omega(1j))
    K = -complex_structure_from(fam.omega(1.0))
    wI, wJ, wK = fam.B, fam.A.real, fam.A.imag
    t = HyperkahlerTriple(wI, wJ, wK, I, J, K, wI @ I)
    one = _eye_like(I)
    per_point = np.maximum.reduce([_maxabs(X @ X + one) for X in (I, J, K)] + [_maxabs(I @ J @ K + one)])
    per_point = np.atleast_1d(per_point)
    if per_point.max() > tol:
        k = int(np.argmax(per_point))
        raise ValueError(f"quaternion residual {per_point[k]:.3g} above {tol:g} at point {k}")
    return t


@dataclass(frozen=True)
class RealStructureParams:
    """Antipodal map ``rho_eps(zeta) = -eps^2 / conj(zeta)``."""

    eps: float = 1.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    def rho(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        if np.any(zeta == 0):
            raise ValueError("zeta = 0 is excluded")
        return -self.eps**2 / np.conj(zeta)

    def involution_residual(self, zetas) -> float:
        z = np.asarray(zetas, dtype=complex)
        return float(np.abs(self.rho(self.rho(z)) - z).max())

    def circle_residual(self, zetas) -> float:
        """``| |rho(zeta)| - eps |`` for samples on ``|zeta| = eps``."""
        z = np.asarray(zetas, dtype=complex)
        return float(np.abs(np.abs(self.rho(z)) - self.eps).max())


def real_structure_identity(fam: QuadraticTwistorFamily, eps: float, zetas) -> dict:
    """Residuals of ``conj(Omega_{rho(zeta)}) = (eps^2 / zeta^2) Omega_zeta``.

    The real structure acts as the identity on points (constant sections of the
    flat model), and the pencil is the one adapted to ``|zeta| = eps``,
    ``eps * Omega_{zeta/eps}``.  When the family has a Lagrangian, the
    hypothesis ``iota* Omega_zeta = 2 i zeta omega`` and its conjugated version
    are checked too.  Residuals are relative to ``max |Omega_zeta|``.
    """
    rs = RealStructureParams(eps)
    out = {"identity": 0.0, "lagrangian": 0.0, "lagrangian_conjugate": 0.0}
    omega = fam.lagrangian_form() if fam.lagrangian is not None else None
    for z in np.atleast_1d(np.asarray(zetas, dtype=complex)):
        if z == 0:
            raise ValueError("zeta = 0 is excluded")
        Oz = fam.scaled_omega(z, eps)
        Or = fam.scaled_omega(rs.rho(z), eps)
        scale = max(float(np.abs(Oz).max()), 1.0)
        out["identity"] = max(out["identity"], float(np.abs(np.conj(Or) - eps**2 / z**2 * Oz).max()) / scale)
        if omega is not None:
            L = fam.lagrangian
            pz = L.T @ Oz @ L
            pr = L.T @ Or @ L
            out["lagrangian"] = max(out["lagrangian"], float(np.abs(pz - 2j * z * omega).max()) / scale)
            rhs = eps**2 / z**2 * (2j * z * omega)
            out["lagrangian_conjugate"] = max(out["lagrangian_conjugate"], float(np.abs(np.conj(pr) - rhs).max()) / scale)
    out["involution"] = rs.involution_residual(zetas)
    out["worst"] = max(out.values())
    return out


def fibre_rotation(lam: complex, dim: int = 8) -> np.ndarray:
    """Real matrix of ``(z, p) -> (z, lam p)`` on ``T*C^2`` (``|lam| = 1``)."""
    lam = complex(lam)
    R = np.array([[lam.real, -lam.imag], [lam.imag, lam.real]])
    D = np.eye(dim)
    for j in range(dim // 4):
        o = dim // 2 + 2 * j
        D[o:o + 2, o:o + 2] = R
    return D


def antidiagonal_evaluator(family: LiftedFamily):
    """``(zeta, u) -> Omega_{i zeta, -i zeta}(u)`` for a lifted family."""

    def omega(zeta, u):
        return family.form(1j * zeta, -1j * zeta, u)

    return omega


def s1_equivariance(omega, lambdas, zetas, u) -> float:
    """Max residual of ``psi_lam* Omega_zeta = lam Omega_{zeta/lam}``.

    Parameters
    ----------
    omega : callable ``(zeta, u) -> (npts, 8, 8)`` or QuadraticTwistorFamily
        Family on the cotangent model (fibre coordinates ``u[4:]``).
    lambdas, zetas : sequences of complex
        ``lambdas`` on the unit circle.
    u : ndarray, shape (npts, 8)
    """
    if isinstance(omega, QuadraticTwistorFamily):
        fam = omega

        def omega(zeta, pts):
            return np.broadcast_to(fam.omega(zeta), (pts.shape[0], fam.dim, fam.dim))

    u = np.atleast_2d(u)
    worst = 0.0
    for lam in lambdas:
        lam = complex(lam)
        if abs(abs(lam) - 1.0) > 1e-12:
            raise ValueError("lambda must lie on the unit circle")
        D = fibre_rotation(lam, u.shape[1])
        moved = u @ D.T
        for z in zetas:
            z = complex(z)
            lhs = D.T @ omega(z, moved) @ D
            rhs = lam * omega(z / lam, u)
            scale = max(float(np.abs(rhs).max()), 1.0)
            worst = max(worst, float(np.abs(lhs - rhs).max()) / scale)
    return worst


def theorem_a_hypothesis_check(
    omega,
    diota: np.ndarray,
    omega_base: np.ndarray,
    x: np.ndarray,
    radius: float,
    n_circle: int = 32,
    tol: float = 1e-9,
) -> dict:
    """Check ``iota* Omega_zeta = 2 i zeta omega`` and holomorphy in ``zeta``.

    Parameters
    ----------
    omega : callable ``(zeta, u) -> (npts, d, d)``
    diota : ndarray, shape (d, m)
        Differential of the (linear) Lagrangian inclusion; base points ``x``
        map to ``u = x @ diota.T``.
    omega_base : ndarray, shape (npts, m, m) or (m, m)
        Real-frame matrices of ``omega`` at ``x``.
    radius : float
        Samples are taken on ``|zeta| = radius / 2`` and ``radius / 4``.

    Returns
    -------
    dict
        ``pullback``: max ``|iota* Omega_zeta - 2 i zeta omega| / |zeta|``;
        ``negative_modes``: Fourier content of ``zeta -> Omega_zeta`` at
        negative frequencies relative to the total; ``status``.
    """
    x = np.atleast_2d(x)
    u = x @ diota.T
    pull = 0.0
    neg = 0.0
    for r in (radius / 2, radius / 4):
        zs = r * np.exp(2j * np.pi * np.arange(n_circle) / n_circle)
        vals = np.stack([omega(z, u) for z in zs])
        for z, V in zip(zs, vals):
            P = diota.T @ V @ diota
            pull = max(pull, float(np.abs(P - 2j * z * omega_base).max()) / abs(z))
        c = np.fft.fft(vals, axis=0) / n_circle
        m = np.fft.fftfreq(n_circle, 1.0 / n_circle)
        total = np.linalg.norm(c)
        neg = max(neg, float(np.linalg.norm(c[m < 0]) / total) if total > 0 else 0.0)
    status = "pass" if pull < tol and neg < tol else "fail"
    return {"pullback": float(pull), "negative_modes": float(neg), "tolerance": tol, "status": status}


def degeneration_check(fam: QuadraticTwistorFamily, radius: float = 1.0, n_r: int = 8, n_theta: int = 32) -> dict:
    """Nondegeneracy of the pencil over a disc and total reality of the Lagrangian.

    Returns
    -------
    dict
        ``min_sigma``: smallest normalised singular value of ``Im Omega_zeta``
        (nonzero iff ``Omega_zeta`` is a nondegenerate (2,0)-form);
        ``min_lagrangian``: smallest singular value of ``Omega_zeta iota`` over
        ``zeta != 0`` (nonzero iff the Lagrangian is totally real for ``I_zeta``),
        or ``None`` without a Lagrangian.
    """
    ms, ml = np.inf, np.inf
    for r in np.linspace(radius / n_r, radius, n_r):
        for th in 2 * np.pi * np.arange(n_theta) / n_theta:
            z = r * np.exp(1j * th)
            O = fam.omega(z)
            s = np.linalg.svd(O.imag, compute_uv=False)
            ms = min(ms, float(s[..., -1].min() / s[..., 0].max()))
            if fam.lagrangian is not None:
                sl = np.linalg.svd(O @ fam.lagrangian, compute_uv=False)
                ml = min(ml, float(sl[..., -1].min() / abs(z)))
    return {"min_sigma": ms, "min_lagrangian": None if fam.lagrangian is None else ml}
