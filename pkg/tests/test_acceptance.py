"""The ten acceptance criteria, one test each, each printing a PASS/FAIL line."""
import json
import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pinched.analysis import (
    estimate_global_constants, find_alpha0, lyapunov_on_graph, sna_criterion, worked_example_report,
)
from pinched.boundary import (
    DecayParams, boundary_sequence, boundary_values, density_probe, difference_decay_check, slope_check,
    upper_bounding_graph,
)
from pinched.circle_rotation import GOLDEN, ContinuedFraction, first_entry_time
from pinched.cli import main
from pinched.counterexample import (
    CounterexampleSpec, build_g, isolated_point_certificate, verify_claim1, verify_claim2,
)
from pinched.export import jsonable
from pinched.systems import tanh_family, tanh_spec

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture(scope="module")
def alpha0():
    res = find_alpha0()
    assert res.found, res.diagnostic
    return res


def test_c01_sna_threshold(report_line):
    t0 = time.perf_counter()
    errs = {a: abs(sna_criterion(tanh_spec(a), quad_n=10**6).lambda0 - math.log(a / 2)) for a in (3.0, 5.0, 32.0)}
    at_two = sna_criterion(tanh_spec(2.0), quad_n=10**6)
    above = sna_criterion(tanh_spec(2.0 * (1 + 1e-6)), quad_n=10**6)
    below = sna_criterion(tanh_spec(2.0 * (1 - 1e-6)), quad_n=10**6)
    dt = time.perf_counter() - t0
    ok = max(errs.values()) <= 1e-3 and not at_two.exists_sna and above.exists_sna and not below.exists_sna
    ok = ok and dt < 5.0
    assert report_line(1, ok, f"max |lambda0 - log(alpha/2)| = {max(errs.values()):.2e}, "
                              f"threshold at alpha = 2, {dt:.2f} s")


@pytest.mark.parametrize("alpha", [5.0, 32.0])
def test_c02_lyapunov_nonpositive(report_line, alpha):
    t0 = time.perf_counter()
    sys = tanh_family(alpha)
    phi = upper_bounding_graph(sys, 100_000, 400, 1e-10, strict=True, l1_tol=1e-9)
    res = lyapunov_on_graph(sys, phi)
    dt = time.perf_counter() - t0
    ok = res.value <= 0.05 and dt < 120
    assert report_line(2, ok, f"alpha = {alpha:g}: lambda(phi+) = {res.value:.4f} "
                              f"(n = {phi.n}, residual {res.invariance_residual:.1e}), {dt:.1f} s")


def test_c03_monotone_convergence_and_pinch(report_line):
    sys = tanh_family(5.0)
    seq = boundary_sequence(sys, 30, 100_000)
    worst = max(float(np.max(b.values - a.values)) for a, b in zip(seq, seq[1:]))
    violations = sum(int(np.sum(b.values - a.values > 1e-12)) for a, b in zip(seq, seq[1:]))
    pinch = [boundary_values(sys, n, 0.0, shifts=np.arange(1, n + 1)) for n in range(1, 31)]
    exact_zero = all(np.all(p == 0.0) for p in pinch)
    ok = violations == 0 and exact_zero
    assert report_line(3, ok, f"monotonicity violations > 1e-12: {violations} (worst {worst:.1e}); "
                              f"phi_n(tau_j) == 0 for all j <= n <= 30: {exact_zero}")


def test_c04_slope_bound(report_line):
    sys = tanh_family(5.0)
    consts = estimate_global_constants(sys, strict=False)
    ratios = []

    @settings(max_examples=5, deadline=None)
    @given(st.floats(0.0, 1.0, exclude_max=True))
    def slope_within_bound(offset):
        for phi in boundary_sequence(sys, 15, 100_000, offset):
            rep = slope_check(phi, consts.beta, consts.alpha)
            ratios.append(rep.observed / rep.bound)
            assert rep.passed, rep

    try:
        slope_within_bound()
        ok = True
    except AssertionError:
        ok = False
    ok = ok and consts.alpha == pytest.approx(5.0)
    assert report_line(4, ok, f"beta = {consts.beta:.4f}; max slope / (beta alpha^n) = {max(ratios):.3g} "
                              f"over n <= 15 and sampled grid offsets")


def test_c05_decay(report_line, alpha0):
    rep = alpha0.report
    sys = tanh_family(alpha0.alpha0, split=alpha0.split)
    seq = boundary_sequence(sys, 30, 100_000)
    params = DecayParams(rep.a, rep.b, rep.m, rep.alpha, rep.gamma, sys.L, q=1)
    dec = difference_decay_check(seq, params)
    tested = dec.tested_rows
    emp, pred = dec.empirical_rate(), dec.predicted_rate()
    ok = dec.passed and len(tested) > 0 and emp <= 0.9 * pred
    assert report_line(5, ok, f"alpha0 = {alpha0.alpha0:.3f} split {tuple(round(v, 3) for v in alpha0.split)}, "
                              f"lambda = {rep.lambda_decay:.4g}, {len(tested)} tested rows pass; "
                              f"empirical rate {emp:.3g} <= 0.9 * predicted {pred:.3g}")


def _close(a, b, rel=1e-9, path="$"):
    if isinstance(b, dict):
        assert isinstance(a, dict) and a.keys() == b.keys(), path
        for k in b:
            _close(a[k], b[k], rel, f"{path}.{k}")
    elif isinstance(b, list):
        assert isinstance(a, list) and len(a) == len(b), path
        for i, (x, y) in enumerate(zip(a, b)):
            _close(x, y, rel, f"{path}[{i}]")
    elif isinstance(b, float) and not isinstance(a, bool):
        assert a == pytest.approx(b, rel=rel, abs=1e-300), path
    else:
        assert a == b, path


def test_c06_worked_example(report_line):
    rep = jsonable(worked_example_report())
    pub = rep["published_comparisons"]
    golden = json.loads((GOLDEN_DIR / "worked_example.json").read_text())
    _close(rep, golden)
    ok = (pub["reference_domination_a8_b_omega3"] and pub["tanh_slope_bound_2e-16_below_32^-4"]
          and pub["three_sin_above_ramp_off_zero"] and pub["four_thirds_tanh1_above_1"])
    chk = rep["checker"]
    assert report_line(6, ok, f"domination a = 8, b = omega^3 passes; 2e-16 < 32^-4 confirmed; "
                              f"checker gamma = {chk['gamma']:.4f}, direct b = omega^4 "
                              f"({chk['b_direct_is_omega4']}); golden JSON matches")


def test_c07_density_probe(report_line, alpha0):
    t0 = time.perf_counter()
    sys = tanh_family(alpha0.alpha0, split=alpha0.split)
    phi = upper_bounding_graph(sys, 200_000, 400, 1e-10, strict=True, l1_tol=1e-9)
    rep = density_probe(sys, phi, 200, 5e-3, 5e-3, seed=0)
    dt = time.perf_counter() - t0
    ok = rep.samples == 200 and rep.hit_fraction >= 0.95 and dt < 600
    assert report_line(7, ok, f"hit fraction {rep.hit_fraction:.3f} over {rep.samples} samples "
                              f"({rep.orbit_hits} via orbit-snapped dips), {dt:.1f} s")


def test_c08_counterexample_claims(report_line):
    t0 = time.perf_counter()
    spec = CounterexampleSpec()
    g = build_g(spec)
    c1 = verify_claim1(spec, 500, g)
    c2 = verify_claim2(spec, 500, g=g)
    cert = isolated_point_certificate(c1, c2)
    integral = g.integral_log_quadrature()
    dt = time.perf_counter() - t0
    parts = {
        "claim1": c1.passed,
        "claim2_on_I": c2.literal_passed,
        "integral": abs(integral) <= 0.5 * math.log(3),
        "certificate": cert["isolated"],
        "runtime": dt < 120,
    }
    detail = (f"claim1 {c1.passed}; claim2 max over I minus 0 = {c2.max_on_I:.6g} at {c2.argmax_on_I:.6g} "
              f"(mirror region max {c2.max_on_mirror:.17g}); int |log g| = {abs(integral):.4f} (log g <= 0); "
              f"certificate {cert['isolated']}; {dt:.1f} s")
    assert report_line(8, all(parts.values()), detail), parts


@pytest.mark.parametrize("name,coeffs", [("golden", [1] * 40), ("square", [n * n for n in range(1, 30)])])
def test_c09_continued_fractions(report_line, name, coeffs):
    cf = ContinuedFraction.from_coeffs(coeffs[:25])
    exact = cf.recurrence_holds() and cf.return_bounds_hold()
    omega = ContinuedFraction.from_coeffs(coeffs).omega
    flt = ContinuedFraction.from_coeffs(coeffs[:14], omega=Fraction(omega))
    checked, entry_ok = 0, True
    for n in range(1, len(flt.returns)):
        qn = flt.denominators[n]
        if qn > 10**6:
            break
        entry_ok &= first_entry_time(flt.omega, 0.0, abs(flt.returns[n])) == qn
        checked += 1
    ok = exact and entry_ok and checked > 0
    assert report_line(9, ok, f"{name}: recurrence and return bounds exact to depth 25: {exact}; "
                              f"first entry = q_n for {checked} denominators <= 1e6: {entry_ok}")


COMMANDS = [
    ["boundary", "--grid-n", "2000", "--n-max", "6", "--svg"],
    ["attractor", "--alpha", "32", "--grid-n", "20000", "--svg"],
    ["check", "--alpha", "32", "--split", "4,8", "--worked-example"],
    ["counterexample", "--grid-n", "4001", "--smooth"],
    ["probe", "--alpha", "32", "--grid-n", "20000", "--set", "n_samples=40"],
]


def test_c10_determinism(report_line, tmp_path):
    same = {}
    for args in COMMANDS:
        hashes = []
        for k in range(2):
            out = tmp_path / f"{args[0]}_{k}"
            main([*args, "--out", str(out)])
            files = json.loads((out / "manifest.json").read_text())["files"]
            blobs = {name: (out / name).read_bytes() for name in files}
            hashes.append((files, blobs))
        same[args[0]] = hashes[0] == hashes[1] and len(hashes[0][0]) > 0
    ok = all(same.values())
    assert report_line(10, ok, "byte-identical re-runs: " + ", ".join(f"{k} {v}" for k, v in same.items()))
