"""Splitting type of holomorphic vector bundles on the Riemann sphere.

A rank-m bundle is presented by a loop ``L`` on the circle ``|zeta| = eps``:
sections are pairs ``(s_0, s_inf)`` holomorphic inside and outside the circle
with ``s_0 = L s_inf`` on it.  With this convention ``L = zeta^k`` is ``O(k)``.
Loops are stored through the Fourier coefficients of ``theta -> L(eps e^{i theta})``.

The splitting ``E = O(k_1) + ... + O(k_m)`` is read off from the dimensions
``h(j) = dim H^0(E(j)) = sum_i max(k_i + j + 1, 0)``, each computed as the
numerical kernel dimension of a truncated Fourier matching system.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LoopMatrix",
    "SplittingType",
    "TwistorLineVerdict",
    "BundleSplitError",
    "degree",
    "section_space_dim",
    "partial_indices",
    "is_twistor_line",
    "normal_bundle_loop",
    "loop_from_structures",
    "alpha_sections",
    "REL_ZERO",
    "GAP",
]

REL_ZERO = 1e-8
GAP = 1e3


class BundleSplitError(RuntimeError):
    """Ambiguous winding, unstable dimension or degenerate frame."""


class LoopMatrix:
    """Invertible matrix function on the circle ``|zeta| = eps``.

    Parameters
    ----------
    coeffs : ndarray, shape (2B+1, m, m)
        Fourier coefficients ``L_k`` for ``k = -B..B`` of ``L(eps w)``, ``|w| = 1``.
    eps : float
    """

    def __init__(self, coeffs, eps: float = 1.0):
        c = np.asarray(coeffs, dtype=complex)
        if c.ndim != 3 or c.shape[1] != c.shape[2] or c.shape[0] % 2 == 0:
            raise ValueError("coeffs must have shape (2B+1, m, m)")
        self.coeffs = c
        self.eps = float(eps)

    @property
    def rank(self) -> int:
        return self.coeffs.shape[1]

    @property
    def band(self) -> int:
        return self.coeffs.shape[0] // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.band, self.band + 1)

    @classmethod
    def from_samples(cls, values, eps: float = 1.0, tail_tol: float = 1e-14) -> "LoopMatrix":
        """From samples at ``eps exp(2 pi i j / n)``, trimming negligible high modes."""
        v = np.asarray(values, dtype=complex)
        n = v.shape[0]
        c = np.fft.fft(v, axis=0) / n
        k = np.fft.fftfreq(n, 1.0 / n).astype(int)
        B = n // 2 - 1
        keep = np.abs(k) <= B
        full = np.zeros((2 * B + 1,) + v.shape[1:], dtype=complex)
        full[k[keep] + B] = c[keep]
        mag = np.abs(full).max(axis=(1, 2))
        big = np.nonzero(mag > tail_tol * mag.max())[0]
        b = int(max(abs(big[0] - B), abs(big[-1] - B))) if big.size else 0
        return cls(full[B - b:B + b + 1], eps)

    @classmethod
    def from_function(cls, fn, m: int, eps: float = 1.0, n: int = 128) -> "LoopMatrix":
        """Sample ``fn(zeta) -> (m, m)`` on the circle."""
        zs = eps * np.exp(2j * np.pi * np.arange(n) / n)
        vals = np.stack([np.asarray(fn(z), dtype=complex).reshape(m, m) for z in zs])
        return cls.from_samples(vals, eps)

    @classmethod
    def diagonal(cls, powers, eps: float = 1.0) -> "LoopMatrix":
        """``diag(zeta^k_1, ..., zeta^k_m)``."""
        powers = [int(p) for p in powers]
        B = max([abs(p) for p in powers] + [0])
        c = np.zeros((2 * B + 1, len(powers), len(powers)), dtype=complex)
        for i, p in enumerate(powers):
            c[p + B, i, i] = eps**p
        return cls(c, eps)

    def __call__(self, zeta) -> np.ndarray:
        w = np.atleast_1d(np.asarray(zeta, dtype=complex)) / self.eps
        P = w[:, None] ** self.modes[None, :]
        return np.einsum("zk,kab->zab", P, self.coeffs)

    def on_circle(self, n: int) -> np.ndarray:
        return self(self.eps * np.exp(2j * np.pi * np.arange(n) / n))

    def min_abs_det(self, n: int = 512) -> float:
        return float(np.abs(np.linalg.det(self.on_circle(n))).min())

    def to_dict(self) -> dict:
        return {
            "format": "hkspectral-loop",
            "eps": self.eps,
            "rank": self.rank,
            "band": self.band,
            "real": self.coeffs.real.tolist(),
            "imag": self.coeffs.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LoopMatrix":
        if data.get("format") != "hkspectral-loop":
            raise ValueError("not a loop record")
        return cls(np.asarray(data["real"]) + 1j * np.asarray(data["imag"]), data["eps"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "LoopMatrix":
        return cls.from_dict(json.loads(text))


def _winding(loop: LoopMatrix, n: int) -> tuple:
    d = np.linalg.det(loop.on_circle(n))
    if np.any(d == 0):
        raise BundleSplitError("det L vanishes on the circle")
    steps = np.angle(np.roll(d, -1) / d)
    return float(steps.sum() / (2 * np.pi)), float(np.abs(d).min())


def degree(loop: LoopMatrix, n: int | None = None) -> int:
    """Winding number of ``det L`` around the circle.

    Raises
    ------
    BundleSplitError
        If the accumulated argument is more than 0.1 from an integer or changes
        under grid refinement.
    """
    n = n or max(256, 8 * (2 * loop.band + 1))
    w1, _ = _winding(loop, n)
    w2, _ = _winding(loop, 2 * n)
    k = int(round(w1))
    if abs(w1 - k) > 0.1 or abs(w2 - k) > 0.1:
        raise BundleSplitError(f"ambiguous winding {w1:.3f} / {w2:.3f}")
    return k


def _matching_system(loop: LoopMatrix, j: int, K: int) -> np.ndarray:
    """Columns: coefficients of ``a`` (modes 0..K) then ``b`` (modes 0..-K); rows: Fourier modes."""
    m, B = loop.rank, loop.band
    lo = min(0, j - B - K)
    hi = max(K, j + B)
    M = np.zeros(((hi - lo + 1) * m, 2 * (K + 1) * m), dtype=complex)
    eye = np.eye(m)
    for p in range(K + 1):
        r = (p - lo) * m
        M[r:r + m, p * m:(p + 1) * m] = eye
    off = (K + 1) * m
    for q in range(K + 1):
        for idx, k in enumerate(loop.modes):
            r = (j + k - q - lo) * m
            M[r:r + m, off + q * m:off + (q + 1) * m] -= loop.coeffs[idx]
    return M


def _kernel_dim(M: np.ndarray, rel_zero: float) -> tuple:
    s = np.linalg.svd(M, compute_uv=False)
    top = s[0] if s.size else 1.0
    thr = rel_zero * top
    zero = s[s <= thr]
    nonzero = s[s > thr]
    # pad so that a full-rank column count is reflected
    dim = int(zero.size + max(M.shape[1] - s.size, 0))
    below = zero.max() if zero.size else thr
    above = nonzero.min() if nonzero.size else thr
    gap = float(above / below) if below > 0 else np.inf
    return dim, gap


def section_space_dim(loop: LoopMatrix, k: int, K: int | None = None, rel_zero: float = REL_ZERO, max_K: int | None = None) -> dict:
    """``dim H^0(E(k))`` with the truncation doubled until the answer is stable.

    Returns
    -------
    dict
        ``dim``, ``gap`` (ratio across the zero threshold, worst over the two
        truncations used), ``K`` and ``status`` (``"ok"`` or ``"indeterminate"``).

    Raises
    ------
    BundleSplitError
        If no two consecutive truncations agree before ``max_K``.
    """
    K = K or max(8, 2 * loop.band + abs(k) + 2)
    max_K = max_K or 8 * K
    prev = None
    while K <= max_K:
        dim, gap = _kernel_dim(_matching_system(loop, k, K), rel_zero)
        if prev is not None and prev[0] == dim:
            g = min(gap, prev[1])
            return {"dim": dim, "gap": g, "K": K // 2, "status": "ok" if g >= GAP else "indeterminate"}
        prev = (dim, gap)
        K *= 2
    raise BundleSplitError(f"dim H0(E({k})) unstable up to K = {max_K}")


@dataclass
class SplittingType:
    """Partial indices ``k_1 >= ... >= k_m`` and the data behind them."""

    indices: tuple
    degree: int
    profile: dict = field(default_factory=dict)
    min_gap: float = np.inf
    status: str = "ok"

    def to_dict(self) -> dict:
        return {
            "indices": list(self.indices),
            "degree": self.degree,
            "profile": {str(k): v for k, v in sorted(self.profile.items())},
            "min_gap": self.min_gap if np.isfinite(self.min_gap) else None,
            "status": self.status,
        }


def partial_indices(loop: LoopMatrix, rel_zero: float = REL_ZERO) -> SplittingType:
    """Splitting type from the profile ``j -> dim H^0(E(j))``.

    The number of indices ``>= t`` is ``h(-t) - h(-t-1)``.

    Raises
    ------
    BundleSplitError
        If the profile is not consistent with a splitting of the computed degree.
    """
    m = loop.rank
    deg = degree(loop)
    prof: dict = {}
    gaps = []

    def h(j):
        if j not in prof:
            r = section_space_dim(loop, j, rel_zero=rel_zero)
            prof[j] = r["dim"]
            gaps.append(r["gap"])
        return prof[j]

    # start where no twisted section can exist, then walk up
    j = -int(np.ceil(deg / m)) - 1
    while h(j) > 0:
        j -= 1
        if j < -4 * (loop.band + abs(deg) + 2):
            raise BundleSplitError("no vanishing twist found")
    counts = []  # counts[t] = #indices >= -j
    found = 0
    indices = []
    while found < m:
        step = h(j + 1) - h(j)
        if step < found or step > m:
            raise BundleSplitError(f"dimension profile not monotone at twist {j + 1}")
        t = -(j + 1)
        indices.extend([t] * (step - found))
        found = step
        counts.append(step)
        j += 1
        if j > 4 * (loop.band + abs(deg) + 2):
            raise BundleSplitError("indices not exhausted")
    indices = tuple(sorted(indices, reverse=True))
    if sum(indices) != deg:
        raise BundleSplitError(f"indices {indices} do not sum to degree {deg}")
    g = float(min(gaps)) if gaps else np.inf
    return SplittingType(indices, deg, prof, g, "ok" if g >= GAP else "indeterminate")


@dataclass
class TwistorLineVerdict:
    ok: bool
    rank: int
    degree: int
    h0_minus2: int
    gap: float
    status: str

    def __bool__(self) -> bool:
        return self.ok

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "rank": self.rank,
            "degree": self.degree,
            "h0_minus2": self.h0_minus2,
            "gap": self.gap if np.isfinite(self.gap) else None,
            "status": self.status,
        }


def is_twistor_line(loop: LoopMatrix, n: int) -> TwistorLineVerdict:
    """``E = O(1)^(2n)`` iff rank and degree are ``2n`` and ``H^0(E(-2)) = 0``."""
    if loop.rank != 2 * n:
        raise ValueError(f"rank {loop.rank} is not 2n = {2 * n}")
    deg = degree(loop)
    r = section_space_dim(loop, -2)
    ok = deg == 2 * n and r["dim"] == 0
    return TwistorLineVerdict(bool(ok), loop.rank, deg, r["dim"], r["gap"], r["status"])


def _real_solve(E: np.ndarray, I: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Complex coefficients ``G`` with ``F_j = sum_k (Re G_kj + I Im G_kj) E_k``."""
    m = E.shape[1]
    S = np.hstack([E, I @ E])
    X = np.linalg.solve(S, F)
    return X[:m] + 1j * X[m:]


def loop_from_structures(I_of, diota: np.ndarray, eps: float, n: int = 64, frame: np.ndarray | None = None, cond_max: float = 1e8) -> LoopMatrix:
    """Transition loop of ``N`` along the constant section through a Lagrangian point.

    Parameters
    ----------
    I_of : callable
        ``zeta -> I_zeta`` (real ``2m x 2m``) at the section point.
    diota : ndarray, shape (2m, m)
        Tangent space of the Lagrangian, totally real for ``I_zeta``, ``zeta != 0``.
    eps : float
        Radius of the gluing circle.
    frame : ndarray, shape (2m, m), optional
        Constant real vectors spanning over ``I_zeta`` on the disc
        (default: the odd coordinate vectors).

    Notes
    -----
    Inside, sections are ``sum c_k E_k`` with complex scalars acting through
    ``I_zeta``.  Outside, the frame is ``F_j(zeta) = dtau(E_j)`` with
    ``dtau(v + I_{rho(zeta)} w) = v - I_zeta w`` for ``v, w`` tangent to the
    Lagrangian.  The loop is the change of frame ``c_0 = G c_inf``.
    """
    dim = diota.shape[0]
    m = dim // 2
    E = np.eye(dim)[:, 1::2] if frame is None else frame
    rho = lambda z: -eps**2 / np.conj(z)  # noqa: E731
    zs = eps * np.exp(2j * np.pi * np.arange(n) / n)
    vals = np.empty((n, m, m), dtype=complex)
    for idx, z in enumerate(zs):
        Iz, Ir = I_of(z), I_of(rho(z))
        T = np.hstack([diota, Ir @ diota])
        for M in (T, np.hstack([E, Iz @ E])):
            if np.linalg.cond(M) > cond_max:
                raise BundleSplitError(f"degenerate frame at zeta = {z:.4g}")
        X = np.linalg.solve(T, E)
        F = diota @ X[:m] - Iz @ diota @ X[m:]
        vals[idx] = _real_solve(E, Iz, F)
    return LoopMatrix.from_samples(vals, eps)


def normal_bundle_loop(family, x, eps: float, n: int = 64, frame: np.ndarray | None = None) -> LoopMatrix:
    """Normal-bundle loop of the constant section through ``x`` on the Lagrangian.

    ``family`` is a ``QuadraticTwistorFamily`` with a Lagrangian (``x`` unused
    beyond validation) or a ``LiftedFamily``, for which ``I_zeta`` is the almost
    complex structure of ``Omega_{i zeta, -i zeta}`` at ``iota(x)``.
    """
    from .realization import LiftedFamily, almost_complex
    from .twistor import QuadraticTwistorFamily, complex_structure_from

    if isinstance(family, QuadraticTwistorFamily):
        if family.lagrangian is None:
            raise ValueError("family needs a Lagrangian")
        diota = family.lagrangian

        def I_of(z):
            return complex_structure_from(family.omega(z))

    elif isinstance(family, LiftedFamily):
        diota = family.model.diota
        u = family.model.iota(np.asarray(x, dtype=float).reshape(1, -1))

        def I_of(z):
            return almost_complex(family, 1j * z, -1j * z, u)[0][0]

    else:
        raise TypeError(f"unsupported family {type(family).__name__}")
    return loop_from_structures(I_of, diota, eps, n, frame)


def alpha_sections(I_of, diota: np.ndarray, eps: float, n: int = 64, frame: np.ndarray | None = None) -> dict:
    """Coefficients of the sections ``I_0 v + I_zeta v`` and ``I_0 v - I_zeta v`` in the inner frame.

    Returns Fourier coefficients over the circle (``n`` samples, axis 0) for
    both families, shape (n, m, m) with column ``i`` belonging to ``v_i``.
    Inside the circle they must have no negative modes.
    """
    dim = diota.shape[0]
    E = np.eye(dim)[:, 1::2] if frame is None else frame
    I0 = I_of(0.0)
    zs = eps * np.exp(2j * np.pi * np.arange(n) / n)
    plus, minus = [], []
    for z in zs:
        Iz = I_of(z)
        plus.append(_real_solve(E, Iz, I0 @ diota + Iz @ diota))
        minus.append(_real_solve(E, Iz, I0 @ diota - Iz @ diota))
    return {"plus": np.fft.fft(np.stack(plus), axis=0) / n, "minus": np.fft.fft(np.stack(minus), axis=0) / n}
