"""Command line driver: ``hkspectral <command> [--config PATH] [--seed N] [--out DIR] [--smoke]``.

Commands
--------
deform               recursive series, per-order residuals, Maurer-Cartan sweep
verify-realization   lifted family on the pair groupoid or cotangent model
twistor-verify       triple extraction, real structure, circle action, hypothesis check
bundle-indices       splitting type of a normal-bundle or user-supplied loop
selftest             the acceptance battery, run twice for determinism

Exit codes: 0 pass, 1 fail, 2 indeterminate, 3 configuration error.
The environment variable ``HKSPECTRAL_THREADS`` sets the FFT worker count.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import platform
import sys
import time
from importlib import resources

import jsonschema
import numpy as np
import scipy
import yaml

from . import __version__
from .acceptance import (
    DEFAULT_TERMS,
    SMOKE_TOLERANCES,
    TOLERANCES,
    Context,
    Record,
    Settings,
    _jsonable,
    records_json,
    run_suite,
)
from .bundle_split import BundleSplitError, LoopMatrix, is_twistor_line, normal_bundle_loop, partial_indices
from .deformation import hitchin_series, invertibility_margin, mc_residual, odd_vanishing_check, order_residuals, radius_estimate
from .hodge import green_bound_constant
from .realization import (
    LiftedFamily,
    RealizationModel,
    antidiagonal_pullback,
    dual_pair_relations,
    eta_identity_residual,
    kernel_check,
    nijenhuis_study,
    reality_transversality,
)
from .torus_forms import Bivector, ComplexForm, contract_sigma_pair
from .twistor import (
    QuadraticTwistorFamily,
    antidiagonal_evaluator,
    degeneration_check,
    real_structure_identity,
    s1_equivariance,
    signature,
    theorem_a_hypothesis_check,
    triple_from_family,
)

EXIT = {"pass": 0, "fail": 1, "indeterminate": 2}
EXIT_CONFIG = 3

DEFAULTS = {
    "grid": 16,
    "green_grid": 32,
    "model": "pair",
    "sigma": 1.0,
    "potential": {"amplitude": 0.003, "terms": DEFAULT_TERMS},
    "N": 8,
    "zetas": [],
    "eps": 0.5,
    "tolerances": {},
    "samples": {"points": 100, "loop": 64, "s1": 16, "nijenhuis": 2},
    "loop": "flat_cotangent",
    "seed": 7,
    "output": {"dir": "hkspectral-out"},
}

SMOKE_OVERRIDES = {"grid": 8, "green_grid": 8, "samples": {"points": 20, "nijenhuis": 1}}


class ConfigError(ValueError):
    pass


def _schema(name: str) -> dict:
    return json.loads(resources.files("hkspectral").joinpath("schemas", name).read_text())


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _validate(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, _schema("config.schema.json"))
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message} at {'/'.join(map(str, exc.absolute_path)) or '<root>'}") from exc


def load_config(path: str | None, seed: int | None = None, out: str | None = None, smoke: bool = False) -> dict:
    """Read, validate and complete a YAML configuration.

    Raises
    ------
    ConfigError
        On unreadable files, schema violations or inconsistent settings.
    """
    user: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                user = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a mapping")
    _validate(user)
    cfg = _merge(DEFAULTS, SMOKE_OVERRIDES) if smoke else copy.deepcopy(DEFAULTS)
    cfg = _merge(cfg, user)
    if seed is not None:
        cfg["seed"] = int(seed)
    if out is not None:
        cfg["output"]["dir"] = out
    # command-line overrides go through the same schema
    _validate(cfg)
    unknown = set(cfg["tolerances"]) - set(TOLERANCES)
    if unknown:
        raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
    if cfg["model"] == "cotangent" and cfg["sigma"] != 0:
        raise ConfigError("the cotangent model requires sigma = 0")
    if cfg["green_grid"] < cfg["grid"]:
        raise ConfigError("green_grid must be at least grid")
    return cfg


def settings_from(cfg: dict, smoke: bool) -> Settings:
    tol = dict(SMOKE_TOLERANCES if smoke else TOLERANCES)
    tol.update(cfg["tolerances"])
    return Settings(
        grid=cfg["grid"],
        green_grid=cfg["green_grid"],
        N=cfg["N"],
        sigma=float(cfg["sigma"]),
        terms=cfg["potential"]["terms"],
        amplitude=float(cfg["potential"]["amplitude"]),
        points=cfg["samples"]["points"],
        eps=float(cfg["eps"]),
        loop_samples=cfg["samples"]["loop"],
        s1_samples=cfg["samples"]["s1"],
        nijenhuis_points=cfg["samples"]["nijenhuis"],
        seed=cfg["seed"],
        smoke=smoke,
        tolerances=tol,
    )


def _zetas(cfg: dict, scale: float, rng: np.random.Generator) -> list:
    if cfg["zetas"]:
        return [complex(*z) if isinstance(z, list) else complex(z) for z in cfg["zetas"]]
    th = 2 * np.pi * rng.random(2)
    return [scale / 2 * np.exp(1j * th[0]), scale / 8 * np.exp(1j * th[1])]


def _rec(name, anchor, ok, residual, tol, worst=None, status=None) -> Record:
    return Record(None, name, anchor, status or ("pass" if ok else "fail"), float(residual), float(tol), worst or {})


def _kahler(ctx: Context):
    return ctx.flat() if ctx.s.amplitude == 0 or not ctx.s.terms else ctx.perturbed()


# -- commands -----------------------------------------------------------------


def cmd_deform(cfg: dict, s: Settings, outdir: str) -> list:
    ctx = Context(s)
    K = _kahler(ctx)
    sig = ctx.sigma()
    ser = hitchin_series(sig, K, s.N)
    tol = s.tolerances
    rows = order_residuals(ser)
    eq = max(r["equation_rel"] for r in rows)
    recs = [_rec("order-by-order equation", "recursion", eq < tol["recursion"], eq, tol["recursion"], {"orders": rows})]
    odd = odd_vanishing_check(ser)
    recs.append(_rec("odd vanishing", "odd-vanishing", odd["max"] < tol["odd_vanishing"], odd["max"], tol["odd_vanishing"], odd))
    c, radius, ok = radius_estimate(ser)
    c1 = green_bound_constant(K, ctx.rng(101))
    info = {"c_est": c, "radius": radius, "a_n": ser.norms, "green_iterations": ser.green_iterations, "green_c1": c1}
    recs.append(_rec("Catalan bound", "catalan-bound", ok and radius > 0, 0.0 if ok else 1.0, 0.5, info))
    if K.is_flat and not sig.is_zero() and ser.N >= 2:
        Om = ComplexForm.from_components(ctx.grid(), 2, 0, {(0, 1): -1.0 / complex(s.sigma)})
        b2 = ser.beta[1]
        r = max(float(np.abs(b2.get((0, 2), ctx.grid()).physical() + 0.25 * Om.conj().physical()).max()), float(np.abs(b2.get((1, 1), ctx.grid()).physical()).max()))
        recs.append(_rec("beta_2 = -conj(Omega)/4", "flat-hk-contraction", r < tol["flat_contraction"], r, tol["flat_contraction"]))
    scale = radius if np.isfinite(radius) else 1.0
    zs = _zetas(cfg, scale, ctx.rng(100)) if cfg["zetas"] else list(np.geomspace(scale / 32, scale / 2, 9))
    sweep = []
    worst_margin = np.inf
    for z in zs:
        m = invertibility_margin(ser, z)
        worst_margin = min(worst_margin, m)
        sweep.append({"zeta_re": complex(z).real, "zeta_im": complex(z).imag, "abs_zeta": abs(z), "mc_residual": mc_residual(ser, z), "margin": m})
    recs.append(_rec("invertibility of 1 - phi phibar at probes", "maurer-cartan", worst_margin > 0, worst_margin, 0.0, {"probes": len(zs)}))
    _write_csv(os.path.join(outdir, "orders.csv"), [dict(r, a_n=a, green_iterations=it) for r, a, it in zip(rows, ser.norms, ser.green_iterations)])
    _write_csv(os.path.join(outdir, "mc_sweep.csv"), sweep)
    return recs


def _family(ctx: Context, kind: str) -> LiftedFamily:
    K = _kahler(ctx)
    sig = ctx.sigma()
    ser = hitchin_series(sig, K, ctx.s.N)
    model = RealizationModel(kind, K, sig)
    return LiftedFamily(model, ser, radius_estimate(ser)[1])


def cmd_verify_realization(cfg: dict, s: Settings, outdir: str) -> list:
    ctx = Context(s)
    fam = _family(ctx, cfg["model"])
    m = fam.model
    tol = s.tolerances
    rng = ctx.rng(200)
    r = fam.radius if np.isfinite(fam.radius) else 2.0
    u = m.sample_points(rng, s.points)
    recs = []
    inv = m.invariants(rng, s.points)
    dp = dual_pair_relations(m)
    worst = max(list(inv.values()) + list(dp.values()))
    recs.append(_rec("realization invariants and dual pair", "realization", worst < 1e-12, worst, 1e-12, {**inv, **dp}))
    zs = _zetas(cfg, r, rng)
    formula, gap, ident, margin, eta, dims = 0.0, np.inf, 0.0, np.inf, 0.0, True
    rows = []
    for z in zs:
        kr = kernel_check(fam, 1j * z, -1j * z, u, rel_zero=tol["kernel_zero"])
        rt = reality_transversality(fam, 1j * z, -1j * z, u)
        rows.append(
            {
                "zeta_re": complex(z).real,
                "zeta_im": complex(z).imag,
                "abs_zeta": abs(z),
                "margin": float(rt["margin"].min()),
                "invertibility": invertibility_margin(fam.series, 1j * z),
                "formula_residual": float(kr.formula_residual.max()),
                "min_gap": float(kr.gaps.min()),
            }
        )
        formula = max(formula, float(kr.formula_residual.max()))
        gap = min(gap, float(kr.gaps.min()))
        dims = dims and bool(np.all(kr.dims == 4))
        ident = max(ident, float(rt["s_identity"].max()), float(rt["t_identity"].max()))
        margin = min(margin, float(rt["margin"].min()))
        eta = max(eta, eta_identity_residual(fam, 1j * z, -1j * z, u))
    status = "indeterminate" if gap < tol["kernel_gap"] else None
    recs.append(_rec("kernel dimension and formula", "lifted-family", dims and formula < tol["kernel_formula"], formula, tol["kernel_formula"], {"min_gap": gap, "dims_all_4": dims, "zetas": zs}, status))
    recs.append(_rec("conjugate transversality", "lifted-family", margin > 0, margin, 0.0))
    recs.append(_rec("psi psibar identities", "lifted-family", ident < tol["psi_identity"], ident, tol["psi_identity"]))
    recs.append(_rec("Omega_0 + eta + eta tau eta expansion", "lifted-family", eta < tol["kernel_formula"], eta, tol["kernel_formula"]))
    x = rng.random((s.points, 4))
    ad = antidiagonal_pullback(fam, zs, x)
    recs.append(_rec("anti-diagonal pullback", "anti-diagonal", ad["antidiagonal"] < tol["antidiagonal"], ad["antidiagonal"], tol["antidiagonal"], ad))
    studies, dev = [], 0.0
    for _ in range(s.nijenhuis_points):
        u0 = m.sample_points(rng, 1)[0]
        st = nijenhuis_study(fam, 0.3 * r * np.exp(2j * np.pi * rng.random()), 0.25 * r * np.exp(2j * np.pi * rng.random()), u0)
        studies.append(st)
        if not st["roundoff_limited"]:
            dev = max(dev, max(abs(v - 2.0) for v in st["slopes"]))
    _write_csv(os.path.join(outdir, "margins.csv"), sorted(rows, key=lambda d: d["abs_zeta"]))
    recs.append(_rec("Nijenhuis step-halving slope", "nijenhuis", dev <= tol["nijenhuis_slope"], dev, tol["nijenhuis_slope"], {"studies": studies}))
    return recs


def cmd_twistor_verify(cfg: dict, s: Settings, outdir: str) -> list:
    ctx = Context(s)
    tol = s.tolerances
    rng = ctx.rng(300)
    recs = []
    flat = triple_from_family(QuadraticTwistorFamily.flat_torus())
    P = np.eye(4) + 0.3 * rng.standard_normal((4, 4))
    cong = triple_from_family(QuadraticTwistorFamily.flat_torus().congruence(P))
    w = max(flat.worst(), cong.worst())
    recs.append(_rec("quaternion and metric relations", "twistor-family", w < tol["quaternion"], w, tol["quaternion"], {"flat": flat.quaternion_residuals(), "congruence": cong.worst()}))
    pf = QuadraticTwistorFamily.flat_cotangent((1, -1))
    pt = triple_from_family(pf)
    sl = signature(pf.lagrangian.T @ pt.g @ pf.lagrangian)
    recs.append(_rec("pseudo signature", "pseudo-signature", sl == (2, 2, 0) and pt.signature() == (4, 4, 0), pt.worst(), tol["quaternion"], {"lagrangian": sl, "total": pt.signature()}))
    fc = QuadraticTwistorFamily.flat_cotangent()
    eps = s.eps
    zs = eps * np.exp(2j * np.pi * rng.random(8))
    rs = real_structure_identity(fc, eps, zs)
    rs2 = real_structure_identity(fc, 2 * eps, 2 * zs)
    w = max(rs["worst"], rs2["worst"])
    recs.append(_rec("real structure identity", "real-structure", w < 1e-10, w, 1e-10, {"eps": rs, "two_eps": rs2}))
    dg = degeneration_check(fc)
    recs.append(_rec("nondegenerate pencil, totally real Lagrangian", "twistor-family", dg["min_sigma"] > 0 and dg["min_lagrangian"] > 0, dg["min_sigma"], 0.0, dg))
    K = ctx.perturbed()
    s0 = Bivector(ctx.grid(), 0.0)
    cot = LiftedFamily(RealizationModel("cotangent", K, s0), hitchin_series(s0, K, s.N))
    u = cot.model.sample_points(rng, 10)
    mm = int(np.sqrt(s.s1_samples))
    lams = np.exp(2j * np.pi * rng.random(mm))
    zz = rng.random(mm) * np.exp(2j * np.pi * rng.random(mm))
    s1 = max(s1_equivariance(antidiagonal_evaluator(cot), lams, zz, u), s1_equivariance(fc, lams, zz, u))
    recs.append(_rec("circle equivariance", "circle-action", s1 < tol["s1"], s1, tol["s1"]))
    fam = _family(ctx, "pair")
    x = rng.random((10, 4))
    w1 = fam.series.omega[0].real_matrices(x)
    r = fam.radius if np.isfinite(fam.radius) else 2.0
    ev = antidiagonal_evaluator(fam)
    th = theorem_a_hypothesis_check(ev, fam.model.diota, w1, x, r, tol=tol["antidiagonal"])
    recs.append(_rec("hypothesis of the lifted family", "hypothesis-check", th["status"] == "pass", max(th["pullback"], th["negative_modes"]), th["tolerance"], th))
    bump = np.zeros((8, 8))
    bump[0, 2], bump[2, 0] = 1.0, -1.0

    def injected(z, pts):
        return ev(z, pts) + z**3 * bump

    neg = theorem_a_hypothesis_check(injected, fam.model.diota, w1, x, r, tol=tol["antidiagonal"])
    recs.append(_rec("injected zeta^3 term is detected", "hypothesis-check", neg["status"] == "fail", neg["pullback"], neg["tolerance"], neg))
    return recs


def _named_loop(name: str, ctx: Context, eps: float, n: int) -> tuple:
    """Return (loop, n) for a named model; ``n`` is the twistor-line rank parameter or None."""
    rng = ctx.rng(400)
    x = rng.random(4)
    if name.startswith("diag:"):
        powers = [int(p) for p in name[5:].split(",")]
        return LoopMatrix.diagonal(powers, eps), (len(powers) // 2 if len(powers) % 2 == 0 else None)
    if name == "flat_cotangent":
        return normal_bundle_loop(QuadraticTwistorFamily.flat_cotangent(), x, eps, n), 2
    if name == "pseudo_cotangent":
        return normal_bundle_loop(QuadraticTwistorFamily.flat_cotangent((1, -1)), x, eps, n), 2
    if name in ("flat_pair", "lifted_pair"):
        K = ctx.flat() if name == "flat_pair" else ctx.perturbed()
        ser = hitchin_series(ctx.sigma(), K, ctx.s.N)
        fam = LiftedFamily(RealizationModel("pair", K, ctx.sigma()), ser)
        return normal_bundle_loop(fam, x, eps, n), 2
    if os.path.exists(name):
        with open(name, encoding="utf-8") as fh:
            loop = LoopMatrix.from_json(fh.read())
        return loop, (loop.rank // 2 if loop.rank % 2 == 0 else None)
    raise ConfigError(f"unknown loop {name!r}")


NAMED_LOOPS = ("flat_cotangent", "pseudo_cotangent", "flat_pair", "lifted_pair")


def _check_loop_name(name: str) -> None:
    if name in NAMED_LOOPS or os.path.exists(name):
        return
    if name.startswith("diag:"):
        try:
            [int(p) for p in name[5:].split(",")]
            return
        except ValueError:
            pass
    raise ConfigError(f"unknown loop {name!r}")


def cmd_bundle_indices(cfg: dict, s: Settings, outdir: str) -> list:
    ctx = Context(s)
    loop, n = _named_loop(cfg["loop"], ctx, s.eps, s.loop_samples)
    recs = []
    try:
        st = partial_indices(loop)
    except BundleSplitError as exc:
        return [_rec("partial indices", "splitting-type", False, np.inf, 0.0, {"error": str(exc)}, "indeterminate")]
    info = st.to_dict()
    info.update(rank=loop.rank, band=loop.band, min_abs_det=loop.min_abs_det())
    status = "indeterminate" if st.status != "ok" else "pass"
    recs.append(_rec("partial indices", "splitting-type", True, 1.0 / st.min_gap if st.min_gap > 0 else np.inf, 1.0 / s.tolerances["kernel_gap"], info, status))
    if n is not None:
        tl = is_twistor_line(loop, n)
        st_tl = "indeterminate" if tl.status != "ok" else None
        recs.append(_rec("normal bundle is O(1)^(2n)", "twistor-line", bool(tl), float(tl.h0_minus2), 0.5, tl.to_dict(), st_tl))
    with open(os.path.join(outdir, "splitting.json"), "w", encoding="utf-8") as fh:
        json.dump(_jsonable(info), fh, indent=2, sort_keys=True)
    return recs


def cmd_selftest(cfg: dict, s: Settings, outdir: str, echo=None) -> list:
    first = run_suite(s, echo=echo)
    second = run_suite(s)
    a, b = records_json(first), records_json(second)
    diff = [r1.criterion for r1, r2 in zip(first, second) if json.dumps(r1.payload(), sort_keys=True) != json.dumps(r2.payload(), sort_keys=True)]
    det = Record(12, "determinism of two runs", "determinism", "pass" if a == b else "fail", float(len(diff)), 0.5, {"differing_criteria": diff})
    det.seconds = sum(r.seconds for r in second)
    if echo is not None:
        echo(det)
    return first + [det]


COMMANDS = {
    "deform": cmd_deform,
    "verify-realization": cmd_verify_realization,
    "twistor-verify": cmd_twistor_verify,
    "bundle-indices": cmd_bundle_indices,
    "selftest": cmd_selftest,
}


# -- reporting ----------------------------------------------------------------


def _write_csv(path: str, rows: list) -> None:
    if not rows:
        return
    keys = sorted({k for r in rows for k in r})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: _jsonable(r.get(k, "")) for k in keys})


def overall_status(records) -> str:
    st = [r.status for r in records]
    if "fail" in st:
        return "fail"
    if "indeterminate" in st:
        return "indeterminate"
    return "pass"


def build_report(command: str, cfg: dict, smoke: bool, records, seconds: float) -> dict:
    report = {
        "tool": "hkspectral",
        "version": __version__,
        "command": command,
        "seed": cfg["seed"],
        "smoke": smoke,
        "status": overall_status(records),
        "config": _jsonable(cfg),
        "environment": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "threads": os.environ.get("HKSPECTRAL_THREADS", "1"),
        },
        "records": [r.payload() for r in records],
        "timing": {"total_seconds": seconds, "per_record": [{"name": r.name, "seconds": r.seconds} for r in records]},
    }
    jsonschema.validate(report, _schema("report.schema.json"))
    return report


def deterministic_view(report: dict) -> str:
    """Report text with the timing fields removed."""
    r = dict(report)
    r.pop("timing", None)
    return json.dumps(r, sort_keys=True, indent=2)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="hkspectral", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML configuration file")
        sp.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--smoke", action="store_true", help="reduced 8^4 grid with relaxed tolerances")
        if name == "bundle-indices":
            sp.add_argument("--loop", help="named model (flat_cotangent, pseudo_cotangent, flat_pair, lifted_pair, diag:k1,k2,...) or loop JSON file")
    args = p.parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out, args.smoke)
        if getattr(args, "loop", None):
            cfg["loop"] = args.loop
        settings = settings_from(cfg, args.smoke)
        if args.command == "bundle-indices":
            _check_loop_name(cfg["loop"])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = cfg["output"]["dir"]
    os.makedirs(outdir, exist_ok=True)
    t0 = time.perf_counter()

    def echo(rec):
        print(rec.line(), flush=True)

    try:
        if args.command == "selftest":
            records = cmd_selftest(cfg, settings, outdir, echo)
        else:
            records = COMMANDS[args.command](cfg, settings, outdir)
            for r in records:
                echo(r)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = build_report(args.command, cfg, args.smoke, records, time.perf_counter() - t0)
    path = os.path.join(outdir, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report, sort_keys=True, indent=2))
    print(f"{report['status']}: report written to {path}")
    return EXIT[report["status"]]


if __name__ == "__main__":
    sys.exit(main())
