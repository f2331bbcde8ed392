"""Acceptance criteria 1-9, each at its stated tolerance and time limit.

Every criterion records a one-line PASS/FAIL summary that is printed at
the end of the pytest run.
"""

import time

import numpy as np
import pytest

from finitary.cli import main as cli_main
from finitary.dilution import fill_blocks_flat, make_plan
from finitary.dist_core import gaps_from_bits, geometric, load_jump_distribution
from finitary.errors import BoundedJump, LatticeInput, LatticeJump
from finitary.gf_analysis import analyze_gf, pmf_Tstar
from finitary.markov_coder import code_markov_range, make_kernel, prepare_markov
from finitary.pipeline import prepare_renewal
from finitary.renewal_coder import (
    build_coder_params,
    cftp_code_bounded,
    cftp_code_range,
    code_renewal_range,
    event_mask,
    scan_regeneration,
    verify_coalescence,
)
from finitary.streams import FILL, Z_CHAIN, PerturbedStream, UniformStream
from finitary.verify import chi_square_gaps, fit_window_tail, independence_lag

from conftest import brute_force_tstar, composition_weights, late_start, unif12

SEED = 20240601
DOMINANCE_MAX = 2.0


def law_checks(bits, d):
    """Gap chi-square, point density and gap independence of a coded sample."""
    gaps = gaps_from_bits(bits)
    chi = chi_square_gaps(gaps, d)
    density = float(bits.mean())
    lag = independence_lag(gaps)
    checks = {
        "chi2": chi.p_value > 1e-3,
        "density": abs(density - 1 / d.mean) < 0.002,
        "lag": lag.passed,
    }
    detail = (f"chi2 p={chi.p_value:.3g}, density={density:.5f} vs {1 / d.mean:.5f}, "
              f"max|rho|={np.max(np.abs(lag.rho)):.2e} < {lag.threshold:.2e}")
    return checks, detail


def test_criterion_1_gf_exactness(acceptance):
    t0 = time.perf_counter()
    d = geometric(0.5)
    rep = analyze_gf(d, 0.5)
    q = pmf_Tstar(d, 0.5, 500)
    n = np.arange(1, 501)
    err = float(np.max(np.abs(q - 0.25 * 0.75 ** (n - 1))))
    elapsed = time.perf_counter() - t0
    checks = {
        "nu": abs(rep.nu - 4 / 3) < 1e-9,
        "c": abs(rep.c - 4 / 9) < 1e-9,
        "pmf": err < 1e-12,
        "time": elapsed < 1.0,
    }
    ok = all(checks.values())
    acceptance(1, "generating-function exactness", ok,
               f"nu={rep.nu!r}, c={rep.c!r}, max pmf err={err:.1e}, {elapsed:.2f}s")
    assert ok, checks


def test_criterion_2_dp_vs_enumeration(acceptance):
    t0 = time.perf_counter()
    d = unif12()
    q = pmf_Tstar(d, 0.5, 20)
    brute = brute_force_tstar(d, 0.5, 20)
    enum = np.array([sum(composition_weights(d, 0.5, L).values()) for L in range(1, 21)])
    err = float(max(np.max(np.abs(q - brute)), np.max(np.abs(q - enum))))
    elapsed = time.perf_counter() - t0
    checks = {
        "match": err < 1e-12,
        "first": np.allclose(q[:3], [1 / 4, 5 / 16, 9 / 64], rtol=0, atol=1e-15),
        "time": elapsed < 1.0,
    }
    ok = all(checks.values())
    acceptance(2, "DP vs enumeration", ok, f"max err={err:.1e}, {elapsed:.2f}s")
    assert ok, checks


def _composition_keys(jumps, counts):
    """Injective integer key of each composition (parts are below 8)."""
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    pos = np.arange(jumps.size) - np.repeat(starts, counts)
    return np.bincount(np.repeat(np.arange(counts.size), counts), weights=jumps * 8.0 ** pos,
                       minlength=counts.size).astype(np.int64)


def test_criterion_3_block_sampler(acceptance):
    t0 = time.perf_counter()
    d = unif12()
    plan = make_plan(d, 0.5, 8)
    rng = UniformStream(SEED, FILL)
    n = 10 ** 6
    worst, cells, sums_ok = 0.0, 0, True
    for L in range(1, 7):
        weights = composition_weights(d, 0.5, L)
        total = sum(weights.values())
        jumps, counts = fill_blocks_flat(plan, np.full(n, L), rng, np.arange(n) + L * n)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        sums_ok &= bool(np.all(np.add.reduceat(jumps, starts) == L))
        keys = _composition_keys(jumps, counts)
        seen = dict(zip(*np.unique(keys, return_counts=True)))
        expected_keys = set()
        for comp, w in weights.items():
            key = int(sum(t * 8 ** i for i, t in enumerate(comp)))
            expected_keys.add(key)
            p = w / total
            sd = np.sqrt(p * (1 - p) / n)
            z = abs(seen.get(key, 0) / n - p) / sd if sd > 0 else (0.0 if seen.get(key, 0) == n else np.inf)
            worst = max(worst, z)
            cells += 1
        sums_ok &= set(int(k) for k in seen) <= expected_keys
    elapsed = time.perf_counter() - t0
    checks = {"3sigma": worst < 3.0, "sums": sums_ok, "time": elapsed < 30.0}
    ok = all(checks.values())
    acceptance(3, "conditional block sampler", ok,
               f"{cells} compositions, max |z|={worst:.2f}, {elapsed:.1f}s")
    assert ok, checks


@pytest.mark.parametrize("name", ["late_start", "geom_quarter"])
def test_criterion_4_coalescence(acceptance, name):
    t0 = time.perf_counter()
    d = late_start() if name == "late_start" else geometric(0.25)
    p = build_coder_params(d)
    y = UniformStream(SEED, Z_CHAIN)
    rng = np.random.default_rng(SEED)
    span = 2_000_000
    yv = y.range(0, span)
    events = np.flatnonzero(event_mask(yv, p)) + p.n0
    events = events[events > 1000][:10_000]
    failures = 0
    for i in events:
        i = int(i)
        t = i - p.n0 - 1 - rng.integers(0, 200, 50)
        s = rng.integers(1, 4 * p.n0 + 20, 50)
        if not verify_coalescence(y, i, p, zip(t.tolist(), s.tolist())):
            failures += 1
    elapsed = time.perf_counter() - t0
    checks = {"count": events.size == 10_000, "all": failures == 0, "time": elapsed < 60.0}
    ok = all(checks.values())
    key = 4
    if name == "late_start":
        acceptance(key, "regeneration coalescence", ok,
                   f"{events.size} events x 50 starts (n0={p.n0}), {failures} failures, {elapsed:.1f}s")
    assert ok, checks


def test_criterion_5_coder_law(acceptance):
    t0 = time.perf_counter()
    d = geometric(0.25)
    cs = code_renewal_range(UniformStream(SEED, Z_CHAIN), 0, 10 ** 6 - 1, build_coder_params(d))
    checks, detail = law_checks(cs.bits, d)
    elapsed = time.perf_counter() - t0
    checks["time"] = elapsed < 60.0
    ok = all(checks.values())
    acceptance(5, "coder law (Geom(1/4))", ok, f"{detail}, {elapsed:.1f}s")
    assert ok, checks


def test_criterion_6_window_tails(acceptance):
    t0 = time.perf_counter()
    p = build_coder_params(geometric(0.25))
    windows = np.array([scan_regeneration(UniformStream(seed, Z_CHAIN), 0, p) for seed in range(10 ** 5)])
    windows = 0 - windows + p.n0
    fit = fit_window_tail(windows, p)
    elapsed = time.perf_counter() - t0
    checks = {
        "params": (p.n0, p.a, p.b) == (1, 0.25, 0.25),
        "r2": fit.r2 > 0.98 and fit.slope < 0,
        "dominated": fit.dominance_ratio <= DOMINANCE_MAX,
        "time": elapsed < 120.0,
    }
    ok = all(checks.values())
    acceptance(6, "window tails", ok,
               f"slope={fit.slope:.4f} (bound {fit.reference_slope:.4f}), R2={fit.r2:.4f}, "
               f"max ratio to bound={fit.dominance_ratio:.3f}, {elapsed:.1f}s")
    assert ok, checks


def test_criterion_7_replay(acceptance):
    t0 = time.perf_counter()
    p = build_coder_params(late_start())
    base = UniformStream(SEED, Z_CHAIN)
    lo, hi = 0, 9_999
    ref = code_renewal_range(base, lo, hi, p)
    win_lo = ref.regen_times - p.n0
    idx = np.arange(lo, hi + 1)
    rng = np.random.default_rng(SEED)
    margin = int(np.max(idx - win_lo)) + 50
    violations, changed = 0, 0
    for _ in range(1000):
        k = int(rng.integers(lo - margin, hi + 1))
        out = code_renewal_range(PerturbedStream(base, {k: float(rng.random())}), lo, hi, p)
        outside = (k < win_lo) | (k > idx)
        diff = (out.bits != ref.bits) | (out.windows != ref.windows)
        violations += int(np.sum(diff & outside))
        changed += int(np.sum(diff & ~outside))
    elapsed = time.perf_counter() - t0
    checks = {"untouched": violations == 0, "time": elapsed < 30.0}
    ok = all(checks.values())
    acceptance(7, "finitariness replay", ok,
               f"1000 perturbations on 10^4 indices, {violations} out-of-window changes "
               f"({changed} in-window changes), {elapsed:.1f}s")
    assert ok, checks


def test_criterion_8_two_state_chain(acceptance):
    t0 = time.perf_counter()
    k = make_kernel([0, 1], [[0.5, 0.5], [1.0, 0.0]])
    cc = code_markov_range(k, None, SEED, 0, 10 ** 6 - 1, pipeline=prepare_markov(k))
    s = cc.states
    freq = np.bincount(s, minlength=2) / s.size
    tv = 0.5 * float(np.abs(freq - [2 / 3, 1 / 3]).sum())
    P = k.dense
    worst = 0.0
    for x in range(2):
        nxt = s[1:][s[:-1] == x]
        for yv in range(2):
            f = float(np.mean(nxt == yv))
            sd = np.sqrt(P[x, yv] * (1 - P[x, yv]) / nxt.size)
            worst = max(worst, abs(f - P[x, yv]) / sd if sd > 0 else (0.0 if f == P[x, yv] else np.inf))
    fit = fit_window_tail(cc.windows)
    elapsed = time.perf_counter() - t0
    checks = {"tv": tv < 0.01, "transitions": worst < 3.0, "r2": fit.r2 > 0.98 and fit.slope < 0,
              "time": elapsed < 120.0}
    ok = all(checks.values())
    acceptance(8, "two-state chain end to end", ok,
               f"TV={tv:.4f}, max transition |z|={worst:.2f}, window R2={fit.r2:.4f}, {elapsed:.1f}s")
    assert ok, checks


def test_criterion_9_necessity_gate(acceptance, tmp_path, capsys):
    t0 = time.perf_counter()
    lattice = load_jump_distribution(head=[0, 0.5, 0, 0.5])
    errors = {}

    def raises(name, exc, fn):
        try:
            fn()
        except exc:
            errors[name] = True
        except Exception:  # noqa: BLE001
            errors[name] = False
        else:
            errors[name] = False

    raises("analyze_gf", LatticeInput, lambda: analyze_gf(lattice, 0.5))
    raises("prepare_renewal", LatticeInput, lambda: prepare_renewal(lattice))
    raises("build_coder_params", LatticeJump, lambda: build_coder_params(lattice))
    raises("cftp", LatticeJump, lambda: cftp_code_bounded(lattice, UniformStream(0, Z_CHAIN), 0))
    raises("bounded", BoundedJump, lambda: build_coder_params(unif12()))
    spec = tmp_path / "lat.json"
    spec.write_text('{"head": [0, 0.5, 0, 0.5], "tail": null}')
    errors["cli"] = cli_main(["analyze-gf", "--dist", str(spec)]) == 2 and "LatticeInput" in capsys.readouterr().err

    d = unif12()
    cs = cftp_code_range(d, UniformStream(SEED, Z_CHAIN), 0, 10 ** 6 - 1)
    checks, detail = law_checks(cs.bits, d)
    checks["errors"] = all(errors.values())
    elapsed = time.perf_counter() - t0
    checks["time"] = elapsed < 60.0
    ok = all(checks.values())
    acceptance(9, "necessity gate and CFTP law", ok,
               f"{sum(errors.values())}/{len(errors)} error routes, CFTP {detail}, {elapsed:.1f}s")
    assert ok, (checks, errors)
