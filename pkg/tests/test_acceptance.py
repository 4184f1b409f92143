"""Acceptance suite: one test per criterion at the stated tolerances.

The suite runs once per module on the full-size settings (16^4 grid, Green
solves at 32^4, N = 8).  Thresholds are written out here rather than taken
from ``hkspectral.acceptance.TOLERANCES`` so that a change in the library
defaults cannot silently relax a criterion.
"""

import json

import numpy as np
import pytest

from hkspectral.acceptance import Settings, records_json, run_suite

SUMMARY: list = []

# criterion -> runtime budget in seconds
BUDGET = {1: 1, 2: 30, 3: 120, 4: 1, 5: 60, 6: 120, 7: 30, 8: 10, 9: 10, 10: 30, 11: 60}


@pytest.fixture(scope="module")
def suite():
    recs = run_suite(Settings())
    return {r.criterion: r for r in recs}


def report(k, ok, message):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {k:2d}: {message}"
    SUMMARY.append(line)
    print(line)
    assert ok, line


def _common(rec, k):
    """Serialized diagnostics (as written to reports) and the runtime verdict."""
    payload = json.loads(records_json([rec]))
    payload = payload[0] if isinstance(payload, list) else payload["records"][0]
    return payload["worst"], rec.seconds <= BUDGET[k]


def test_criterion_01_flat_contraction(suite):
    w, fast = _common(suite[1], 1)
    r = w["pointwise_sup"]
    report(1, r < 1e-12 and fast, f"flat contraction residual {r:.2e} < 1e-12, {suite[1].seconds:.1f}s")


def test_criterion_02_lemma_triple(suite):
    w, fast = _common(suite[2], 2)
    worst = max(w["equation"], w["coclosed"], w["primitive"])
    ok = worst < 1e-8 and w["grid"] == 32 and not w["flat_path"] and fast
    report(2, ok, f"lemma triple max {worst:.2e} < 1e-8 at {w['grid']}^4 (iterative), {suite[2].seconds:.1f}s")


def test_criterion_03_recursion(suite):
    w, fast = _common(suite[3], 3)
    odd = max(list(w["odd_norms"].values()) + list(w["contraction_norms"].values()))
    ok = w["N"] == 8 and w["equation_rel"] < 1e-8 and odd < 1e-10 and set(w["odd_norms"]) == {"3", "5", "7"} and fast
    report(3, ok, f"N=8 order residual {w['equation_rel']:.2e} < 1e-8, odd/contraction {odd:.2e} < 1e-10")


def test_criterion_04_catalan(suite):
    w, fast = _common(suite[4], 4)
    a = np.array(w["a_n"])
    c = w["c_est"]
    from math import comb

    cat = [comb(2 * m, m) // (m + 1) for m in range(len(a))]
    bound = np.array([c**n * a[0] ** (n + 1) * cat[n] for n in range(len(a))])
    ok = bool(np.all(a <= bound * (1 + 1e-12) + 1e-13)) and w["radius"] > 0 and fast
    report(4, ok, f"a_n within Catalan bound, c_est {c:.4f}, radius {w['radius']:.4f} > 0")


def test_criterion_05_maurer_cartan(suite):
    w, fast = _common(suite[5], 5)
    r = w["radius"]
    window_ok = np.isclose(w["window"][0], r / 32) and np.isclose(w["window"][1], r / 2)
    devs = {int(n): abs(s - (int(n) + 1)) for n, s in w["slopes"].items()}
    ok = window_ok and max(devs.values()) <= 0.3 and fast
    diag = ", ".join(f"N={n}: {d['slope']:.2f}" for n, d in w["diagnostics"].items())
    report(5, ok, f"slopes {w['slopes']} vs N+1 (max dev {max(devs.values()):.1e} <= 0.3) on [r/32, r/2]; diagnostics {diag}")


def test_criterion_06_lifted_family(suite):
    w, fast = _common(suite[6], 6)
    ok = (
        w["points"] == 100
        and w["kernel_dims_all_4"]
        and w["min_gap"] >= 1e3
        and w["margin"] > 0
        and w["formula_residual"] < 1e-9
        and w["psi_identity"] < 1e-10
        and all(abs(complex(*z)) <= _common(suite[4], 4)[0]["radius"] / 2 + 1e-12 for z in w["zetas"])
        and fast
    )
    report(
        6,
        ok,
        f"dims 4, gap {w['min_gap']:.1e} >= 1e3, margin {w['margin']:.3f} > 0, "
        f"formula {w['formula_residual']:.2e} < 1e-9, psi {w['psi_identity']:.1e} < 1e-10",
    )


def test_criterion_07_antidiagonal(suite):
    w, fast = _common(suite[7], 7)
    r = w["antidiagonal"]
    report(7, r < 1e-9 and fast, f"pullback residual / |zeta| {r:.2e} < 1e-9")


def test_criterion_08_triple(suite):
    w, fast = _common(suite[8], 8)
    q = max(w["flat"].values())
    ok = q < 1e-9 and w["pseudo"] < 1e-9 and tuple(w["pseudo_signature_lagrangian"][:2]) == (2, 2) and fast
    report(8, ok, f"quaternion residual {q:.1e} < 1e-9, pseudo signature {tuple(w['pseudo_signature_lagrangian'][:2])} == (2, 2)")


def test_criterion_09_circle_action(suite):
    w, fast = _common(suite[9], 9)
    ok = w["lifted"] < 1e-10 and w["samples"] >= 16 and fast
    report(9, ok, f"S^1 residual {w['lifted']:.1e} < 1e-10 over {w['samples']} samples")


def test_criterion_10_normal_bundle(suite):
    w, fast = _common(suite[10], 10)
    cases = w["cases"]
    flat = {k: v for k, v in cases.items() if k.startswith("flat")}
    flat_ok = all(v["degree"] == 4 and tuple(v["indices"]) == (1, 1, 1, 1) and v["twistor_line"] for v in flat.values())
    stable = all(flat[f"{m}_64"]["indices"] == flat[f"{m}_128"]["indices"] for m in ("flat_cotangent", "flat_pair"))
    neg = cases["diag_z2_1"]
    neg_ok = tuple(neg["indices"]) == (2, 0) and neg["twistor_line"] is False
    ok = flat_ok and stable and neg_ok and fast
    report(10, ok, f"flat loops (1,1,1,1) deg 4 stable under doubling; diag(z^2,1) -> {tuple(neg['indices'])}, {suite[10].seconds:.1f}s")


def test_criterion_11_nijenhuis(suite):
    w, fast = _common(suite[11], 11)
    slopes = [s for st in w["studies"] for s in st["slopes"]]
    dev = max(abs(s - 2.0) for s in slopes)
    report(11, dev <= 0.3 and fast, f"Richardson slopes {', '.join(f'{s:.3f}' for s in slopes)} (2 +- 0.3)")


def test_criterion_12_determinism(suite):
    first = records_json(list(suite.values()))
    second = records_json(run_suite(Settings()))
    report(12, first == second, "two runs with the same seed give identical records (timing excluded)")
