"""Acceptance battery shared by the ``selftest`` command and the test suite.

Each ``criterion_*`` function takes a :class:`Context` and returns a
:class:`Record`.  The context caches expensive objects (Kähler structures,
series, lifted families) for one run only, so two runs are independent.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .bundle_split import LoopMatrix, is_twistor_line, normal_bundle_loop, partial_indices
from .deformation import hitchin_series, mc_residual, odd_vanishing_check, order_residuals, radius_estimate
from .hodge import KahlerStructure, lemma_residuals, lemma_solve
from .realization import (
    LiftedFamily,
    RealizationModel,
    antidiagonal_pullback,
    kernel_check,
    nijenhuis_study,
    reality_transversality,
)
from .torus_forms import Bivector, ComplexForm, Grid, contract_sigma_pair
from .twistor import (
    QuadraticTwistorFamily,
    antidiagonal_evaluator,
    s1_equivariance,
    signature,
    triple_from_family,
)

__all__ = ["Settings", "Context", "Record", "CRITERIA", "run_suite", "records_json", "DEFAULT_TERMS"]

DEFAULT_TERMS = [
    {"k": [1, 0, 0, 0], "cos": 1.0},
    {"k": [0, 0, 1, 0], "cos": 1.0},
    {"k": [1, 0, 0, 1], "sin": 0.5},
]

TOLERANCES = {
    "flat_contraction": 1e-12,
    "lemma": 1e-8,
    "recursion": 1e-8,
    "odd_vanishing": 1e-10,
    "mc_slope": 0.3,
    "kernel_formula": 1e-9,
    "psi_identity": 1e-10,
    "kernel_gap": 1e3,
    "kernel_zero": 1e-8,
    "antidiagonal": 1e-9,
    "quaternion": 1e-9,
    "s1": 1e-10,
    "nijenhuis_slope": 0.3,
}

# Reduced 8^4 grid: aliasing of the perturbed metric dominates, so the
# spectral-accuracy thresholds are relaxed (calibrated, see README).
SMOKE_TOLERANCES = dict(
    TOLERANCES,
    lemma=1e-4,
    recursion=1e-6,
    odd_vanishing=1e-6,
    kernel_formula=1e-7,
    kernel_zero=1e-6,
    psi_identity=1e-8,
    antidiagonal=1e-7,
)


@dataclass
class Settings:
    grid: int = 16
    green_grid: int = 32
    N: int = 8
    sigma: float = 1.0
    terms: list = field(default_factory=lambda: [dict(t) for t in DEFAULT_TERMS])
    amplitude: float = 0.003
    points: int = 100
    zetas: int = 3
    mc_orders: tuple = (3, 5)
    mc_diagnostic_orders: tuple = (7, 8)
    mc_tol: float = 1e-14
    mc_samples: int = 9
    eps: float = 0.5
    loop_samples: int = 64
    s1_samples: int = 16
    nijenhuis_points: int = 2
    seed: int = 7
    smoke: bool = False
    tolerances: dict = field(default_factory=lambda: dict(TOLERANCES))

    @classmethod
    def smoke_mode(cls, **kw) -> "Settings":
        base = dict(grid=8, green_grid=8, points=20, zetas=2, s1_samples=16, nijenhuis_points=1, smoke=True, tolerances=dict(SMOKE_TOLERANCES))
        base.update(kw)
        return cls(**base)


@dataclass
class Record:
    """One acceptance check.  ``seconds`` is kept out of the deterministic payload."""

    criterion: int | None
    name: str
    anchor: str
    status: str
    residual: float
    tolerance: float
    worst: dict = field(default_factory=dict)
    seconds: float = 0.0

    def payload(self) -> dict:
        d = asdict(self)
        d.pop("seconds")
        return _jsonable(d)

    def line(self) -> str:
        tag = f"criterion {self.criterion:2d} " if self.criterion is not None else ""
        return f"[{self.status.upper():>13}] {tag}{self.name}: residual={self.residual:.3e} tol={self.tolerance:.1e}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_jsonable(obj.real), _jsonable(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


class Context:
    """Per-run cache of models derived from :class:`Settings`."""

    def __init__(self, settings: Settings | None = None):
        self.s = settings or Settings()
        self._cache: dict = {}

    def rng(self, tag: int) -> np.random.Generator:
        return np.random.default_rng([self.s.seed, tag])

    def _get(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def grid(self, n=None) -> Grid:
        n = n or self.s.grid
        return self._get(("grid", n), lambda: Grid(n))

    def perturbed(self, n=None) -> KahlerStructure:
        n = n or self.s.grid
        return self._get(("K", n), lambda: KahlerStructure.from_potential(self.grid(n), self.s.terms, self.s.amplitude))

    def flat(self, n=None) -> KahlerStructure:
        n = n or self.s.grid
        return self._get(("Kflat", n), lambda: KahlerStructure.flat(self.grid(n)))

    def sigma(self, n=None) -> Bivector:
        return Bivector(self.grid(n), complex(self.s.sigma))

    def series(self, N=None, tol=None, flat=False):
        N = N or self.s.N
        K = self.flat() if flat else self.perturbed()
        return self._get(("series", N, tol, flat), lambda: hitchin_series(self.sigma(), K, N, tol=tol))

    def radius(self) -> float:
        return self._get("radius", lambda: radius_estimate(self.series())[1])

    def pair_family(self, flat=False) -> LiftedFamily:
        def build():
            K = self.flat() if flat else self.perturbed()
            model = RealizationModel("pair", K, self.sigma())
            ser = self.series(flat=flat)
            return LiftedFamily(model, ser, radius_estimate(ser)[1])

        return self._get(("pair", flat), build)


def criterion_1(ctx: Context) -> Record:
    """Flat hyperkähler torus: ``(1/2) i_sigma(omega_I ^ omega_I) = -(1/4) conj(Omega)``."""
    g = ctx.grid()
    K = ctx.flat()
    sig = ctx.sigma()
    Om = ComplexForm.from_components(g, 2, 0, {(0, 1): -1.0 / complex(ctx.s.sigma)})
    lhs = contract_sigma_pair(sig, K.omega1, K.omega1)
    res = float(np.abs((lhs + 0.25 * Om.conj()).physical()).max())
    tol = ctx.s.tolerances["flat_contraction"]
    return Record(1, "flat hyperkähler contraction identity", "flat-hk-contraction", _status(res < tol), res, tol, {"pointwise_sup": res})


def criterion_2(ctx: Context) -> Record:
    """Solved equation of the dbar-del lemma on the finest grid (iterative Green path)."""
    n = ctx.s.green_grid
    K = ctx.perturbed(n)
    sig = ctx.sigma(n)
    gamma = contract_sigma_pair(sig, K.omega1, K.omega1)
    omega = lemma_solve(gamma, K)
    r = lemma_residuals(gamma, omega, K)
    tol = ctx.s.tolerances["lemma"]
    worst = max(r.values())
    r["grid"] = n
    r["flat_path"] = bool(K.is_flat)
    return Record(2, "dbar-del lemma triple", "lemma-triple", _status(worst < tol), worst, tol, r)


def criterion_3(ctx: Context) -> Record:
    """Order-by-order recursion residuals and odd vanishing."""
    ser = ctx.series()
    rows = order_residuals(ser)
    eq = max(r["equation_rel"] for r in rows)
    closed = max(r["beta_closed_rel"] for r in rows)
    odd = odd_vanishing_check(ser)
    t_rec = ctx.s.tolerances["recursion"]
    t_odd = ctx.s.tolerances["odd_vanishing"]
    ok = eq < t_rec and closed < t_rec and odd["max"] < t_odd
    worst = {
        "equation_rel": eq,
        "beta_closed_rel": closed,
        "odd_max": odd["max"],
        "odd_norms": odd["odd_norms"],
        "contraction_norms": odd["contraction_norms"],
        "odd_tolerance": t_odd,
        "N": ser.N,
    }
    return Record(3, "recursion to order N with odd vanishing", "recursion", _status(ok), max(eq, closed), t_rec, worst)


def criterion_4(ctx: Context) -> Record:
    """Catalan-type bound on the coefficient norms and a positive radius."""
    ser = ctx.series()
    c, radius, ok = radius_estimate(ser)
    a1 = ser.norms[0]
    ratios = []
    for n in range(1, ser.N + 1):
        from .deformation import catalan

        bound = c ** (n - 1) * a1**n * catalan(n - 1)
        ratios.append(ser.norms[n - 1] / bound if bound > 0 else 0.0)
    passed = bool(ok) and radius > 0
    worst = {"c_est": c, "radius": radius, "a_n": ser.norms, "bound_ratio": ratios}
    return Record(4, "Catalan bound and convergence radius", "catalan-bound", _status(passed), float(max(ratios)), 1.0, worst)


def _slope(series, zetas) -> tuple:
    res = np.array([mc_residual(series, z) for z in zetas])
    t = np.abs(np.asarray(zetas))
    return float(np.polyfit(np.log(t), np.log(res), 1)[0]), res


def criterion_5(ctx: Context) -> Record:
    """Maurer-Cartan residual scales like ``|zeta|^(N+1)`` over ``[r/32, r/2]``.

    Checked at odd truncation orders, where the first omitted order ``N+1`` is
    even and nonzero.  Even orders are reported as diagnostics (see README).
    """
    r = ctx.radius()
    zetas = np.geomspace(r / 32, r / 2, ctx.s.mc_samples)
    tol = ctx.s.tolerances["mc_slope"]
    slopes, diag = {}, {}
    worst_dev = 0.0
    for N in ctx.s.mc_orders:
        s, _ = _slope(ctx.series(N, ctx.s.mc_tol), zetas)
        slopes[N] = s
        worst_dev = max(worst_dev, abs(s - (N + 1)))
    for N in ctx.s.mc_diagnostic_orders:
        s, res = _slope(ctx.series(N, ctx.s.mc_tol), zetas)
        diag[N] = {"slope": s, "residuals": res}
    worst = {"radius": r, "window": [zetas[0], zetas[-1]], "slopes": slopes, "diagnostics": diag}
    return Record(5, "Maurer-Cartan truncation order", "maurer-cartan", _status(worst_dev <= tol), worst_dev, tol, worst)


def _antidiagonal_zetas(ctx: Context, rng) -> list:
    r = ctx.radius()
    th = 2 * np.pi * rng.random(ctx.s.zetas)
    zs = [r / 2 * np.exp(1j * t) for t in th[:-1]] + [r / 8 * np.exp(1j * th[-1])]
    return zs


def criterion_6(ctx: Context) -> Record:
    """Kernel, transversality, kernel formula and psi identities on the pair groupoid."""
    fam = ctx.pair_family()
    rng = ctx.rng(6)
    u = fam.model.sample_points(rng, ctx.s.points)
    zs = _antidiagonal_zetas(ctx, rng)
    tol_f = ctx.s.tolerances["kernel_formula"]
    tol_p = ctx.s.tolerances["psi_identity"]
    gap_req = ctx.s.tolerances["kernel_gap"]
    dims_ok, gap_min, formula, margin, ident = True, np.inf, 0.0, np.inf, 0.0
    worst_pt = {}
    for z in zs:
        kr = kernel_check(fam, 1j * z, -1j * z, u, rel_zero=ctx.s.tolerances["kernel_zero"])
        rt = reality_transversality(fam, 1j * z, -1j * z, u)
        dims_ok = dims_ok and bool(np.all(kr.dims == 4))
        gap_min = min(gap_min, float(kr.gaps.min()))
        k = int(np.argmax(kr.formula_residual))
        if kr.formula_residual[k] > formula:
            formula = float(kr.formula_residual[k])
            worst_pt = {"zeta": z, "point": u[k]}
        margin = min(margin, float(rt["margin"].min()))
        ident = max(ident, float(rt["s_identity"].max()), float(rt["t_identity"].max()))
    if gap_min < gap_req:
        status = "indeterminate"
    else:
        status = _status(dims_ok and margin > 0 and formula < tol_f and ident < tol_p)
    worst = {
        "kernel_dims_all_4": dims_ok,
        "min_gap": gap_min,
        "formula_residual": formula,
        "margin": margin,
        "psi_identity": ident,
        "psi_tolerance": tol_p,
        "points": ctx.s.points,
        "zetas": zs,
        **worst_pt,
    }
    return Record(6, "holomorphic symplectic lifted family", "lifted-family", status, formula, tol_f, worst)


def criterion_7(ctx: Context) -> Record:
    """``iota* Omega_{i zeta, -i zeta} = 2 i zeta omega_1``."""
    fam = ctx.pair_family()
    rng = ctx.rng(7)
    x = rng.random((ctx.s.points, 4))
    r = ctx.radius()
    zs = [r / 2 * np.exp(2j * np.pi * t) for t in rng.random(2)] + [r / 16]
    res = antidiagonal_pullback(fam, zs, x)
    tol = ctx.s.tolerances["antidiagonal"]
    return Record(7, "anti-diagonal pullback", "anti-diagonal", _status(res["antidiagonal"] < tol), res["antidiagonal"], tol, res)


def criterion_8(ctx: Context) -> Record:
    """Quaternion relations of the flat triple and the pseudo signature."""
    tol = ctx.s.tolerances["quaternion"]
    flat = triple_from_family(QuadraticTwistorFamily.flat_torus())
    rng = ctx.rng(8)
    P = np.eye(4) + 0.3 * rng.standard_normal((4, 4))
    cong = triple_from_family(QuadraticTwistorFamily.flat_torus().congruence(P))
    pf = QuadraticTwistorFamily.flat_cotangent((1, -1))
    pseudo = triple_from_family(pf)
    sig_total = pseudo.signature()
    L = pf.lagrangian
    sig_lag = signature(L.T @ pseudo.g @ L)
    res = max(flat.worst(), cong.worst(), pseudo.worst())
    ok = res < tol and sig_lag == (2, 2, 0) and sig_total == (4, 4, 0) and flat.signature() == (4, 0, 0)
    worst = {
        "flat": flat.quaternion_residuals(),
        "flat_metric": flat.metric_residuals(),
        "congruence": cong.worst(),
        "pseudo": pseudo.worst(),
        "pseudo_signature_lagrangian": sig_lag,
        "pseudo_signature_total": sig_total,
        "flat_signature": flat.signature(),
    }
    return Record(8, "hyperkähler triple extraction", "twistor-family", _status(ok), res, tol, worst)


def criterion_9(ctx: Context) -> Record:
    """``psi_lam* Omega_zeta = lam Omega_{zeta/lam}`` on the cotangent model, sigma = 0."""
    K = ctx.perturbed()
    s0 = Bivector(ctx.grid(), 0.0)
    ser = ctx._get("series_sigma0", lambda: hitchin_series(s0, K, ctx.s.N))
    fam = LiftedFamily(RealizationModel("cotangent", K, s0), ser)
    rng = ctx.rng(9)
    u = fam.model.sample_points(rng, 10)
    m = int(np.sqrt(ctx.s.s1_samples))
    lams = np.exp(2j * np.pi * rng.random(m))
    zs = rng.random(m) * np.exp(2j * np.pi * rng.random(m))
    lifted = s1_equivariance(antidiagonal_evaluator(fam), lams, zs, u)
    flat = s1_equivariance(QuadraticTwistorFamily.flat_cotangent(), lams, zs, u)
    res = max(lifted, flat)
    tol = ctx.s.tolerances["s1"]
    worst = {"lifted": lifted, "flat_twistor": flat, "samples": m * m}
    return Record(9, "circle equivariance", "circle-action", _status(res < tol), res, tol, worst)


def criterion_10(ctx: Context) -> Record:
    """Normal bundles of constant sections are ``O(1)^4``; ``diag(z^2, 1)`` is not a twistor line."""
    eps = ctx.s.eps
    rng = ctx.rng(10)
    x = rng.random(4)
    n = ctx.s.loop_samples
    cases = {}
    ok = True
    gaps = []
    families = {"flat_cotangent": QuadraticTwistorFamily.flat_cotangent(), "flat_pair": ctx.pair_family(flat=True)}
    for name, fam in families.items():
        found = []
        for samples in (n, 2 * n):
            L = normal_bundle_loop(fam, x, eps, samples)
            st = partial_indices(L)
            tl = is_twistor_line(L, 2)
            found.append(st.indices)
            gaps += [st.min_gap, tl.gap]
            ok = ok and st.degree == 4 and st.indices == (1, 1, 1, 1) and bool(tl)
            cases[f"{name}_{samples}"] = {"degree": st.degree, "indices": st.indices, "twistor_line": bool(tl), "band": L.band}
        ok = ok and found[0] == found[1]
    neg = LoopMatrix.diagonal((2, 0), eps)
    st = partial_indices(neg)
    tl = is_twistor_line(neg, 1)
    cases["diag_z2_1"] = {"indices": st.indices, "twistor_line": bool(tl)}
    ok = ok and st.indices == (2, 0) and not bool(tl)
    g = float(min(gaps))
    status = "indeterminate" if g < ctx.s.tolerances["kernel_gap"] else _status(ok)
    return Record(10, "normal bundle splitting", "normal-bundle", status, 0.0 if ok else 1.0, 0.5, {"cases": cases, "min_gap": g})


def criterion_11(ctx: Context) -> Record:
    """Nijenhuis tensor of ``I_{z1,z2}`` vanishes at the finite-difference order."""
    fam = ctx.pair_family()
    rng = ctx.rng(11)
    r = ctx.radius()
    tol = ctx.s.tolerances["nijenhuis_slope"]
    studies = []
    dev = 0.0
    for _ in range(ctx.s.nijenhuis_points):
        u0 = fam.model.sample_points(rng, 1)[0]
        z1 = 0.3 * r * np.exp(2j * np.pi * rng.random())
        z2 = 0.25 * r * np.exp(2j * np.pi * rng.random())
        st = nijenhuis_study(fam, z1, z2, u0)
        st.update(point=u0, z1=z1, z2=z2)
        studies.append(st)
        dev = max(dev, max(abs(s - 2.0) for s in st["slopes"]))
    return Record(11, "Nijenhuis integrability", "nijenhuis", _status(dev <= tol), dev, tol, {"studies": studies})


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
    11: criterion_11,
}


def run_suite(settings: Settings | None = None, only=None, echo=None) -> list:
    """Run criteria 1-11 in a fresh context and return their records."""
    ctx = Context(settings)
    out = []
    for k, fn in CRITERIA.items():
        if only is not None and k not in only:
            continue
        t0 = time.perf_counter()
        try:
            rec = fn(ctx)
        except Exception as exc:  # a crash is a failed check, not a crashed run
            rec = Record(k, fn.__doc__.strip().splitlines()[0], "error", "fail", float("inf"), 0.0, {"error": repr(exc)})
        rec.seconds = time.perf_counter() - t0
        if echo is not None:
            echo(rec)
        out.append(rec)
    return out


def records_json(records) -> str:
    """Deterministic serialization of the record payloads."""
    return json.dumps([r.payload() for r in records], sort_keys=True, indent=2)
