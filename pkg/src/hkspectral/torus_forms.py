"""Spectral exterior calculus on the flat torus X = C^2 / (Z + iZ)^2.

Real coordinates are ``x1, x2, x3, x4`` with period 1 and holomorphic
coordinates ``z1 = x1 + i x2``, ``z2 = x3 + i x4``.  Every scalar field is
stored by its Fourier coefficients on an ``n^4`` grid (``norm="forward"``, so a
constant field equal to 1 has coefficient 1 at k = 0).

Frequencies follow ``numpy.fft.fftfreq`` and span ``-n/2 .. n/2 - 1``.  All
linear operators are exact Fourier multipliers on that set.  Products are
evaluated on a 3/2-padded grid and truncated back, which makes them exact for
inputs without Nyquist content and keeps the Leibniz rule exact at the
discrete level.

Basis covectors are labelled by "letters": ``0 = dz1``, ``1 = dz2``,
``2 = dzbar1``, ``3 = dzbar2``.  A basis form of bidegree (p, q) is a strictly
increasing tuple of letters, so ``dz_I`` always precedes ``dzbar_J``.
"""

from __future__ import annotations

import base64
import json
import os
from functools import cached_property
from itertools import combinations
from math import comb

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "ComplexForm",
    "FormSum",
    "Bivector",
    "VectorForm",
    "EndoField",
    "basis",
    "wedge",
    "d",
    "delbar",
    "delb",
    "delz",
    "contract_sigma_pair",
    "phi_from",
    "mc_bracket",
    "norms",
    "covector_real",
    "letters_to_real_matrix",
    "evaluate_coeffs",
    "random_trig_form",
    "scalar_times",
]

AXES = (-4, -3, -2, -1)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("HKSPECTRAL_THREADS", "1")))
    except ValueError:
        return 1


def fft4(a: np.ndarray) -> np.ndarray:
    """Physical values -> Fourier coefficients over the last four axes."""
    return sfft.fftn(a, axes=AXES, norm="forward", workers=_workers())


def ifft4(a: np.ndarray) -> np.ndarray:
    """Fourier coefficients -> physical values over the last four axes."""
    return sfft.ifftn(a, axes=AXES, norm="forward", workers=_workers())


class Grid:
    """Uniform ``n^4`` grid on the unit-period torus.

    Parameters
    ----------
    n : int
        Points per real axis; even and at least 8.
    """

    def __init__(self, n: int = 16):
        n = int(n)
        if n < 8 or n % 2:
            raise ValueError(f"grid size must be even and >= 8, got {n}")
        self.n = n

    def __repr__(self) -> str:
        return f"Grid(n={self.n})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Grid) and other.n == self.n

    def __hash__(self) -> int:
        return hash(("Grid", self.n))

    @property
    def shape(self) -> tuple:
        return (self.n,) * 4

    @property
    def npoints(self) -> int:
        return self.n**4

    @cached_property
    def freqs(self) -> np.ndarray:
        """Integer frequencies in FFT order, ``-n/2 .. n/2 - 1``."""
        return np.fft.fftfreq(self.n, 1.0 / self.n)

    def k(self, axis: int) -> np.ndarray:
        """Integer wavenumber along ``axis`` shaped for broadcasting."""
        shape = [1, 1, 1, 1]
        shape[axis] = self.n
        return self.freqs.reshape(shape)

    @cached_property
    def ksq(self) -> np.ndarray:
        return sum(self.k(a) ** 2 for a in range(4))

    @cached_property
    def dx(self) -> tuple:
        """Symbols of d/dx_a, i.e. ``2 pi i k_a``."""
        return tuple(2j * np.pi * self.k(a) for a in range(4))

    @cached_property
    def dz(self) -> tuple:
        """Symbols of d/dz_j = (d/dx - i d/dy) / 2."""
        dx = self.dx
        return (0.5 * (dx[0] - 1j * dx[1]), 0.5 * (dx[2] - 1j * dx[3]))

    @cached_property
    def dzbar(self) -> tuple:
        """Symbols of d/dzbar_j = (d/dx + i d/dy) / 2."""
        dx = self.dx
        return (0.5 * (dx[0] + 1j * dx[1]), 0.5 * (dx[2] + 1j * dx[3]))

    def symbol(self, letter: int):
        """Derivative symbol paired with a covector letter."""
        return self.dz[letter] if letter < 2 else self.dzbar[letter - 2]

    def coords(self) -> tuple:
        """Broadcastable physical coordinates ``x_a = j / n``."""
        x = np.arange(self.n) / self.n
        out = []
        for a in range(4):
            shape = [1, 1, 1, 1]
            shape[a] = self.n
            out.append(x.reshape(shape))
        return tuple(out)

    # -- 3/2-rule padding ---------------------------------------------------
    @cached_property
    def _pad_maps(self):
        n = self.n
        m = 3 * n // 2
        keep = np.nonzero(self.freqs != -n // 2)[0]
        dst = (self.freqs[keep].astype(int)) % m
        return m, keep, dst

    def pad(self, coeffs: np.ndarray) -> np.ndarray:
        """Embed coefficients in the padded spectrum, dropping the Nyquist plane."""
        m, keep, dst = self._pad_maps
        out = np.zeros(coeffs.shape[:-4] + (m,) * 4, dtype=complex)
        out[(Ellipsis,) + np.ix_(dst, dst, dst, dst)] = coeffs[
            (Ellipsis,) + np.ix_(keep, keep, keep, keep)
        ]
        return out

    def truncate(self, coeffs: np.ndarray) -> np.ndarray:
        """Restrict a padded spectrum back to this grid (Nyquist set to zero)."""
        m, keep, dst = self._pad_maps
        out = np.zeros(coeffs.shape[:-4] + self.shape, dtype=complex)
        out[(Ellipsis,) + np.ix_(keep, keep, keep, keep)] = coeffs[
            (Ellipsis,) + np.ix_(dst, dst, dst, dst)
        ]
        return out

    def padded_physical(self, coeffs: np.ndarray) -> np.ndarray:
        return ifft4(self.pad(coeffs))

    def from_padded_physical(self, values: np.ndarray) -> np.ndarray:
        return self.truncate(fft4(values))

    def product(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Dealiased product of two spectral scalar fields."""
        return self.from_padded_physical(self.padded_physical(a) * self.padded_physical(b))

    def nyquist_free(self, coeffs: np.ndarray) -> np.ndarray:
        """Zero every mode with some component equal to ``-n/2``."""
        mask = np.ones(self.shape, dtype=bool)
        for a in range(4):
            mask &= self.k(a) != -self.n // 2
        return coeffs * mask


# -- basis bookkeeping --------------------------------------------------------


def basis(p: int, q: int) -> list:
    """Ordered basis of bidegree (p, q) as tuples of letters."""
    if not (0 <= p <= 2 and 0 <= q <= 2):
        return []
    return [I + tuple(2 + j for j in J) for I in combinations(range(2), p) for J in combinations(range(2), q)]


def sort_sign(letters) -> tuple:
    """Sign of the permutation sorting ``letters`` and the sorted tuple.

    Returns ``(0, None)`` when a letter repeats.
    """
    letters = list(letters)
    if len(set(letters)) != len(letters):
        return 0, None
    sign = 1
    for i in range(len(letters)):
        for j in range(i + 1, len(letters)):
            if letters[i] > letters[j]:
                sign = -sign
    return sign, tuple(sorted(letters))


def bidegree_of(letters) -> tuple:
    return sum(1 for c in letters if c < 2), sum(1 for c in letters if c >= 2)


def covector_real(letter: int) -> np.ndarray:
    """Components of a basis covector in the real coframe dx1..dx4."""
    v = np.zeros(4, dtype=complex)
    j = letter % 2
    v[2 * j] = 1.0
    v[2 * j + 1] = 1j if letter < 2 else -1j
    return v


def letters_to_real_matrix(letters) -> np.ndarray:
    """Antisymmetric 4x4 matrix ``M_ab = alpha(e_a, e_b)`` of a basis 2-form."""
    a, b = (covector_real(c) for c in letters)
    return np.outer(a, b) - np.outer(b, a)


def evaluate_coeffs(grid: Grid, coeffs: np.ndarray, points, chunk: int = 32) -> np.ndarray:
    """Evaluate spectral fields ``coeffs[c]`` at arbitrary real points.

    Parameters
    ----------
    coeffs : ndarray, shape (ncomp, n, n, n, n)
    points : array_like, shape (npts, 4)

    Returns
    -------
    ndarray, shape (npts, ncomp)
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    f = grid.freqs
    out = np.empty((pts.shape[0], coeffs.shape[0]), dtype=complex)
    for s in range(0, pts.shape[0], chunk):
        e = np.exp(2j * np.pi * pts[s : s + chunk, :, None] * f[None, None, :])
        t = np.einsum("cabde,pe->pcabd", coeffs, e[:, 3], optimize=True)
        t = np.einsum("pcabd,pd->pcab", t, e[:, 2])
        t = np.einsum("pcab,pb->pca", t, e[:, 1])
        out[s : s + chunk] = np.einsum("pca,pa->pc", t, e[:, 0])
    return out


# -- forms ----------------------------------------------------------------------


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=complex)
    a.setflags(write=False)
    return a


class ComplexForm:
    """A bidegree-(p, q) complex form stored as Fourier coefficient fields.

    Parameters
    ----------
    grid : Grid
    p, q : int
        Bidegree, each between 0 and 2.
    coeffs : ndarray, shape (C(2,p) C(2,q), n, n, n, n)
        Fourier coefficients per basis component, ordered as ``basis(p, q)``.
    """

    __array_priority__ = 100

    def __init__(self, grid: Grid, p: int, q: int, coeffs: np.ndarray):
        if not (0 <= p <= 2 and 0 <= q <= 2):
            raise ValueError(f"bidegree ({p},{q}) out of range")
        shape = (comb(2, p) * comb(2, q),) + grid.shape
        coeffs = np.asarray(coeffs)
        if coeffs.shape != shape:
            raise ValueError(f"coefficient array has shape {coeffs.shape}, expected {shape}")
        self.grid = grid
        self.p = p
        self.q = q
        self.coeffs = _frozen(coeffs)

    # constructors
    @classmethod
    def zeros(cls, grid: Grid, p: int, q: int) -> "ComplexForm":
        return cls(grid, p, q, np.zeros((comb(2, p) * comb(2, q),) + grid.shape, dtype=complex))

    @classmethod
    def from_physical(cls, grid: Grid, p: int, q: int, values) -> "ComplexForm":
        values = np.asarray(values, dtype=complex)
        ncomp = comb(2, p) * comb(2, q)
        values = np.broadcast_to(values, (ncomp,) + grid.shape)
        return cls(grid, p, q, fft4(values))

    @classmethod
    def from_components(cls, grid: Grid, p: int, q: int, comps: dict) -> "ComplexForm":
        """Build from ``{letters: physical values or scalar}``; letters need not be sorted."""
        coeffs = np.zeros((comb(2, p) * comb(2, q),) + grid.shape, dtype=complex)
        names = basis(p, q)
        for letters, val in comps.items():
            sign, key = sort_sign(letters)
            if sign == 0:
                continue
            if bidegree_of(key) != (p, q):
                raise ValueError(f"component {letters} is not of bidegree ({p},{q})")
            coeffs[names.index(key)] += sign * fft4(np.broadcast_to(np.asarray(val, dtype=complex), grid.shape))
        return cls(grid, p, q, coeffs)

    # basic data
    @property
    def degree(self) -> int:
        return self.p + self.q

    @property
    def bidegree(self) -> tuple:
        return (self.p, self.q)

    @property
    def names(self) -> list:
        return basis(self.p, self.q)

    def __repr__(self) -> str:
        return f"ComplexForm(n={self.grid.n}, bidegree=({self.p},{self.q}))"

    def physical(self) -> np.ndarray:
        return ifft4(self.coeffs)

    def component(self, letters) -> np.ndarray:
        """Spectral coefficients of one basis component (signed if unsorted)."""
        sign, key = sort_sign(letters)
        if sign == 0 or bidegree_of(key) != self.bidegree:
            return np.zeros(self.grid.shape, dtype=complex)
        return sign * self.coeffs[self.names.index(key)]

    def _like(self, coeffs) -> "ComplexForm":
        return ComplexForm(self.grid, self.p, self.q, coeffs)

    def _check(self, other: "ComplexForm"):
        if not isinstance(other, ComplexForm):
            return NotImplemented
        if other.grid != self.grid or other.bidegree != self.bidegree:
            raise ValueError(f"cannot combine forms of bidegree {self.bidegree} and {other.bidegree}")
        return None

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self._like(self.coeffs + other.coeffs)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self._like(self.coeffs - other.coeffs)

    def __neg__(self):
        return self._like(-self.coeffs)

    def __mul__(self, c):
        if np.ndim(c) != 0:
            return NotImplemented
        return self._like(self.coeffs * complex(c))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self._like(self.coeffs / complex(c))

    def conj(self) -> "ComplexForm":
        """Complex conjugate; bidegree (p, q) becomes (q, p)."""
        # coefficient at -k of the conjugate field
        c = np.conj(np.roll(np.flip(self.coeffs, axis=AXES), 1, axis=AXES))
        out = np.zeros((comb(2, self.q) * comb(2, self.p),) + self.grid.shape, dtype=complex)
        target = basis(self.q, self.p)
        for i, letters in enumerate(self.names):
            flipped = [(c_ + 2) % 4 for c_ in letters]
            sign, key = sort_sign(flipped)
            out[target.index(key)] += sign * c[i]
        return ComplexForm(self.grid, self.q, self.p, out)

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def mean(self) -> np.ndarray:
        """k = 0 coefficient per component."""
        return self.coeffs[(slice(None), 0, 0, 0, 0)].copy()

    def evaluate(self, points) -> np.ndarray:
        """Trigonometric interpolant at arbitrary points, shape (npts, ncomp)."""
        return evaluate_coeffs(self.grid, self.coeffs, points)

    def real_matrices(self, points) -> np.ndarray:
        """Pointwise 4x4 matrices ``M_ab = a(e_a, e_b)`` of a 2-form."""
        if self.degree != 2:
            raise ValueError("real_matrices needs a 2-form")
        vals = self.evaluate(points)
        mats = np.stack([letters_to_real_matrix(L) for L in self.names])
        return np.einsum("pc,cab->pab", vals, mats)

    # serialization
    def to_dict(self) -> dict:
        raw = np.ascontiguousarray(self.coeffs).astype("<c16").tobytes()
        return {
            "format": "hkspectral-form",
            "version": 1,
            "grid_n": self.grid.n,
            "bidegree": [self.p, self.q],
            "components": [list(L) for L in self.names],
            "encoding": "base64 little-endian complex128 (re, im) pairs, C order, shape [ncomp, n, n, n, n]",
            "coefficients": base64.b64encode(raw).decode("ascii"),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ComplexForm":
        if data.get("format") != "hkspectral-form":
            raise ValueError("not a serialized form")
        grid = Grid(int(data["grid_n"]))
        p, q = (int(v) for v in data["bidegree"])
        if [list(L) for L in basis(p, q)] != [list(L) for L in data["components"]]:
            raise ValueError("component ordering mismatch")
        raw = base64.b64decode(data["coefficients"])
        arr = np.frombuffer(raw, dtype="<c16").reshape((comb(2, p) * comb(2, q),) + grid.shape)
        return cls(grid, p, q, arr.astype(complex))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ComplexForm":
        return cls.from_dict(json.loads(text))


class FormSum:
    """Sum of homogeneous pieces of possibly different bidegrees."""

    def __init__(self, parts):
        merged: dict = {}
        for f in parts:
            if f.bidegree in merged:
                merged[f.bidegree] = merged[f.bidegree] + f
            else:
                merged[f.bidegree] = f
        self.parts = merged

    def __getitem__(self, bideg) -> ComplexForm:
        return self.parts[tuple(bideg)]

    def get(self, bideg, grid: Grid) -> ComplexForm:
        return self.parts.get(tuple(bideg)) or ComplexForm.zeros(grid, *bideg)

    def __add__(self, other):
        o = other.parts.values() if isinstance(other, FormSum) else [other]
        return FormSum(list(self.parts.values()) + list(o))

    def __mul__(self, c):
        return FormSum([c * f for f in self.parts.values()])

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        return self + (-other)

    def l2(self) -> float:
        return float(np.sqrt(sum(norms(f)[0] ** 2 for f in self.parts.values())))

    def real_matrices(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        out = np.zeros((pts.shape[0], 4, 4), dtype=complex)
        for f in self.parts.values():
            out += f.real_matrices(pts)
        return out


# -- linear differential operators -------------------------------------------


def _derivative_terms(p: int, q: int, letters_pool) -> list:
    """Terms (out, in, sign, letter) of ``a -> sum_l D_l a dl ^ .``."""
    src = basis(p, q)
    terms = []
    for i, L in enumerate(src):
        for c in letters_pool:
            sign, key = sort_sign((c,) + L)
            if sign == 0:
                continue
            dp, dq = bidegree_of(key)
            terms.append((basis(dp, dq).index(key), i, sign, c))
    return terms


def _apply_derivative(a: ComplexForm, pool, dp: int, dq: int) -> ComplexForm:
    p, q = a.p + dp, a.q + dq
    if p > 2 or q > 2:
        return None
    out = np.zeros((comb(2, p) * comb(2, q),) + a.grid.shape, dtype=complex)
    for o, i, sign, c in _derivative_terms(a.p, a.q, pool):
        out[o] += sign * a.grid.symbol(c) * a.coeffs[i]
    return ComplexForm(a.grid, p, q, out)


def delz(a: ComplexForm) -> ComplexForm:
    """Holomorphic exterior derivative; returns None above top bidegree."""
    return _apply_derivative(a, (0, 1), 1, 0)


def delb(a: ComplexForm) -> ComplexForm:
    """Antiholomorphic exterior derivative; returns None above top bidegree."""
    return _apply_derivative(a, (2, 3), 0, 1)


def delbar(a: ComplexForm) -> ComplexForm:
    """dbar a; a form of bidegree (p, 3) is reported as None."""
    return delb(a)


def d(a: ComplexForm) -> FormSum:
    """Exterior derivative ``d = del + delbar`` as a sum of bidegree pieces."""
    return FormSum([f for f in (delz(a), delb(a)) if f is not None])


def delbar_adjoint_flat(b: ComplexForm) -> ComplexForm:
    """Coefficient-wise adjoint of dbar (flat grid inner product, no metric)."""
    if b.q == 0:
        return None
    p, q = b.p, b.q - 1
    out = np.zeros((comb(2, p) * comb(2, q),) + b.grid.shape, dtype=complex)
    for o, i, sign, c in _derivative_terms(p, q, (2, 3)):
        out[i] += sign * np.conj(b.grid.symbol(c)) * b.coeffs[o]
    return ComplexForm(b.grid, p, q, out)


# -- products -------------------------------------------------------------------


def _wedge_table(pa, qa, pb, qb):
    A, B = basis(pa, qa), basis(pb, qb)
    P, Q = pa + pb, qa + qb
    C = basis(P, Q)
    table = []
    for i, La in enumerate(A):
        for j, Lb in enumerate(B):
            sign, key = sort_sign(La + Lb)
            if sign:
                table.append((C.index(key), i, j, sign))
    return table


def wedge(a: ComplexForm, b: ComplexForm) -> ComplexForm:
    """Exterior product with 3/2-rule dealiasing.

    Raises
    ------
    ValueError
        If the total degree exceeds 4 or a bidegree exceeds 2.
    """
    if a.grid != b.grid:
        raise ValueError("grid mismatch")
    if a.degree + b.degree > 4:
        raise ValueError("degree overflow in wedge")
    P, Q = a.p + b.p, a.q + b.q
    if P > 2 or Q > 2:
        return None
    grid = a.grid
    table = _wedge_table(a.p, a.q, b.p, b.q)
    pa = {i: grid.padded_physical(a.coeffs[i]) for i in {t[1] for t in table}}
    pb = {j: grid.padded_physical(b.coeffs[j]) for j in {t[2] for t in table}}
    acc: dict = {}
    for o, i, j, sign in table:
        term = sign * pa[i] * pb[j]
        acc[o] = acc[o] + term if o in acc else term
    out = np.zeros((comb(2, P) * comb(2, Q),) + grid.shape, dtype=complex)
    for o, v in acc.items():
        out[o] = grid.from_padded_physical(v)
    return ComplexForm(grid, P, Q, out)


def scalar_times(f: np.ndarray, a: ComplexForm) -> ComplexForm:
    """Dealiased product of a spectral scalar field with a form."""
    pf = a.grid.padded_physical(f)
    out = np.stack([a.grid.from_padded_physical(pf * a.grid.padded_physical(c)) for c in a.coeffs])
    return a._like(out)


# -- bivectors and contractions ----------------------------------------------


class Bivector:
    """Holomorphic bivector ``sigma = f d/dz1 ^ d/dz2``.

    Parameters
    ----------
    grid : Grid
    f : complex or ndarray
        Constant value or spectral coefficient field.
    """

    def __init__(self, grid: Grid, f):
        self.grid = grid
        if np.ndim(f) == 0:
            self.constant_value = complex(f)
            c = np.zeros(grid.shape, dtype=complex)
            c[0, 0, 0, 0] = f
            self.f = _frozen(c)
        else:
            f = np.asarray(f, dtype=complex)
            if f.shape != grid.shape:
                raise ValueError("bivector coefficient has wrong shape")
            self.f = _frozen(f)
            rest = f.copy()
            rest[0, 0, 0, 0] = 0
            self.constant_value = complex(f[0, 0, 0, 0]) if not np.any(rest) else None

    @classmethod
    def constant(cls, grid: Grid, f: complex) -> "Bivector":
        return cls(grid, complex(f))

    @classmethod
    def inverse_of(cls, grid: Grid, g: complex) -> "Bivector":
        """Poisson bivector inverse to ``g dz1 ^ dz2`` (i.e. ``f = -1/g``)."""
        return cls(grid, -1.0 / complex(g))

    def holomorphy_residual(self) -> float:
        return float(max(np.sqrt(np.sum(np.abs(s * self.f) ** 2)) for s in self.grid.dzbar))

    def is_zero(self) -> bool:
        return not np.any(self.f)

    def real_matrix(self) -> np.ndarray:
        """``S_ab`` with ``sigma = sum S_ab e_a ^ e_b / 2`` in the real frame (constant f)."""
        if self.constant_value is None:
            raise ValueError("real_matrix requires constant f")
        d1 = 0.5 * np.array([1, -1j, 0, 0])
        d2 = 0.5 * np.array([0, 0, 1, -1j])
        return self.constant_value * (np.outer(d1, d2) - np.outer(d2, d1))

    def times(self, field: np.ndarray) -> np.ndarray:
        """``f * field`` for a spectral scalar field."""
        if self.constant_value is not None:
            return self.constant_value * field
        return self.grid.product(self.f, field)


def contract_sigma_pair(sigma: Bivector, w: ComplexForm, wp: ComplexForm) -> ComplexForm:
    """Return ``(1/2) i_sigma(w ^ wp)`` as a (0,2)-form.

    With ``w = sum c_jk dz_j ^ dzbar_k`` the result is
    ``-(f/2) (c11 c'22 + c22 c'11 - c12 c'21 - c21 c'12) dzbar1 ^ dzbar2``.
    """
    if w.bidegree != (1, 1) or wp.bidegree != (1, 1):
        raise ValueError("contract_sigma_pair needs two (1,1)-forms")
    grid = w.grid
    if sigma.is_zero():
        return ComplexForm.zeros(grid, 0, 2)
    # basis(1,1) order: c11, c12, c21, c22
    A = [grid.padded_physical(c) for c in w.coeffs]
    B = A if wp is w else [grid.padded_physical(c) for c in wp.coeffs]
    s = A[0] * B[3] + A[3] * B[0] - A[1] * B[2] - A[2] * B[1]
    beta = -0.5 * sigma.times(grid.from_padded_physical(s))
    return ComplexForm(grid, 0, 2, beta[None])


class VectorForm:
    """A (0, q)-form with values in T^{1,0}.

    ``coeffs[i, c]`` is the spectral field of the ``d/dz_i`` part of basis
    component ``c`` of ``basis(0, q)``.
    """

    def __init__(self, grid: Grid, q: int, coeffs: np.ndarray):
        shape = (2, comb(2, q)) + grid.shape
        coeffs = np.asarray(coeffs)
        if coeffs.shape != shape:
            raise ValueError(f"vector form has shape {coeffs.shape}, expected {shape}")
        self.grid = grid
        self.q = q
        self.coeffs = _frozen(coeffs)

    def __add__(self, other):
        return self._new(self.coeffs + other.coeffs)

    def _new(self, coeffs):
        return VectorForm(self.grid, self.q, coeffs)

    def __sub__(self, other):
        return self._new(self.coeffs - other.coeffs)

    def __mul__(self, c):
        return self._new(self.coeffs * complex(c))

    __rmul__ = __mul__

    def l2(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def delbar(self) -> "VectorForm":
        """dbar acting on each vector component."""
        out = []
        for i in range(2):
            f = delb(ComplexForm(self.grid, 0, self.q, self.coeffs[i]))
            out.append(f.coeffs)
        return VectorForm(self.grid, self.q + 1, np.stack(out))


class EndoField(VectorForm):
    """``phi = sum phi^i_jbar dzbar_j (x) d/dz_i`` stored as ``coeffs[i, j]``."""

    def __init__(self, grid: Grid, coeffs: np.ndarray):
        super().__init__(grid, 1, coeffs)

    def _new(self, coeffs):
        return EndoField(self.grid, coeffs)

    @classmethod
    def zeros(cls, grid: Grid) -> "EndoField":
        return cls(grid, np.zeros((2, 2) + grid.shape, dtype=complex))

    def matrices(self, points) -> np.ndarray:
        """Pointwise 2x2 matrices ``Phi[i, j] = phi^i_jbar``."""
        pts = np.atleast_2d(points)
        vals = evaluate_coeffs(self.grid, self.coeffs.reshape((4,) + self.grid.shape), pts)
        return vals.reshape(-1, 2, 2)

    @staticmethod
    def real_from_matrices(Phi: np.ndarray) -> np.ndarray:
        """Endomorphism of T_C X in the real frame, from 2x2 blocks ``phi^i_jbar``."""
        dvec = [0.5 * np.array([1, -1j, 0, 0]), 0.5 * np.array([0, 0, 1, -1j])]
        dzb = [covector_real(2), covector_real(3)]
        basis_ops = np.array([[np.outer(dvec[i], dzb[j]) for j in range(2)] for i in range(2)])
        return np.einsum("pij,ijab->pab", Phi, basis_ops)


def phi_from(sigma: Bivector, w: ComplexForm) -> EndoField:
    """``phi = -sigma o w`` as an EndoField (``phi^1 = -f c_2.``, ``phi^2 = f c_1.``)."""
    if w.bidegree != (1, 1):
        raise ValueError("phi_from needs a (1,1)-form")
    grid = w.grid
    if sigma.is_zero():
        return EndoField.zeros(grid)
    c = w.coeffs  # c11, c12, c21, c22
    out = np.stack(
        [
            np.stack([-sigma.times(c[2]), -sigma.times(c[3])]),
            np.stack([sigma.times(c[0]), sigma.times(c[1])]),
        ]
    )
    return EndoField(grid, out)


def mc_bracket(phi: EndoField, psi: EndoField) -> VectorForm:
    """Bracket ``[phi, psi]`` as a T^{1,0}-valued (0,2)-form.

    ``[phi,psi]^i_12 = phi^l_1 d_l psi^i_2 + psi^l_1 d_l phi^i_2 - (1 <-> 2)``
    with dealiased products.
    """
    grid = phi.grid
    P = {(l, j): grid.padded_physical(phi.coeffs[l, j]) for l in range(2) for j in range(2)}
    Q = P if psi is phi else {(l, j): grid.padded_physical(psi.coeffs[l, j]) for l in range(2) for j in range(2)}
    dP = {(l, i, j): grid.padded_physical(grid.dz[l] * phi.coeffs[i, j]) for l in range(2) for i in range(2) for j in range(2)}
    dQ = dP if psi is phi else {
        (l, i, j): grid.padded_physical(grid.dz[l] * psi.coeffs[i, j]) for l in range(2) for i in range(2) for j in range(2)
    }
    out = []
    for i in range(2):
        acc = 0
        for l in range(2):
            acc = acc + P[l, 0] * dQ[l, i, 1] + Q[l, 0] * dP[l, i, 1] - P[l, 1] * dQ[l, i, 0] - Q[l, 1] * dP[l, i, 0]
        out.append(grid.from_padded_physical(acc)[None])
    return VectorForm(grid, 2, np.stack(out))


def norms(a, s: float = 3.0) -> tuple:
    """Return ``(l2, sup, sobolev_s)`` of a form.

    ``l2`` is the L^2 norm over the unit-volume torus (Parseval on the
    coefficients), ``sup`` the maximum over grid points of the Euclidean norm of
    the component vector, and ``sobolev_s`` the weighted norm
    ``sqrt(sum (1 + |k|^2)^s |a_k|^2)`` with integer frequencies k.
    """
    c = a.coeffs.reshape((-1,) + a.grid.shape)
    p2 = np.abs(c) ** 2
    l2 = float(np.sqrt(p2.sum()))
    sup = float(np.sqrt((np.abs(ifft4(c)) ** 2).sum(axis=0)).max())
    sob = float(np.sqrt(((1.0 + a.grid.ksq) ** s * p2).sum()))
    return l2, sup, sob


def random_trig_form(grid: Grid, p: int, q: int, rng: np.random.Generator, kmax: int = 2) -> ComplexForm:
    """Random complex trigonometric polynomial form with ``|k_a| <= kmax``."""
    ncomp = comb(2, p) * comb(2, q)
    coeffs = np.zeros((ncomp,) + grid.shape, dtype=complex)
    idx = np.nonzero(np.abs(grid.freqs) <= kmax)[0]
    sub = (len(idx),) * 4
    vals = rng.normal(size=(ncomp,) + sub) + 1j * rng.normal(size=(ncomp,) + sub)
    coeffs[(slice(None),) + np.ix_(idx, idx, idx, idx)] = vals / np.sqrt(ncomp * len(idx) ** 4)
    return ComplexForm(grid, p, q, coeffs)
