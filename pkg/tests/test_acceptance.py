"""Acceptance criteria, one test each, at their stated tolerances and sizes.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""
import json
import math
import time

import numpy as np
import pytest

from npsim.bdchain import BdSpec, compute_moments, moment_bounds, simulate_bd_many
from npsim.cli import main as cli_main
from npsim.experiments import (ExperimentPlan, KernelSpec, domination_test, edge_diffusion,
                               lower_bound_test, run_sweep)
from npsim.kernel import BirthKernel, build_power_law_psi, compute_M
from npsim.renewal import (brute_force_log_K, compute_weights, enumerate_pi, log_nu, sample_pi)
from npsim.simulator import make_rng

from oracles import all_states, transition_rates

pytestmark = pytest.mark.acceptance

CRITICAL_TRIALS = 200


@pytest.fixture(scope="module")
def psi():
    return build_power_law_psi(4.0, 4096)


def test_c01_bd_closed_form(record):
    t0 = time.perf_counter()
    worst = 0.0
    for alpha in (0.0, 0.5, 1.0, 1.5):
        for N in (5, 10, 20):
            tau = simulate_bd_many(BdSpec(N, alpha), 10_000, master_seed=101, key=(N, int(alpha * 10)))
            E = compute_moments(BdSpec(N, alpha)).Etau
            z = abs(tau.mean() - E) / (tau.std(ddof=1) / math.sqrt(len(tau)))
            worst = max(worst, z)
    dt = time.perf_counter() - t0
    ok = worst <= 3 and dt < 60
    record(1, ok, f"max |mean - Etau|/SE = {worst:.2f} (<= 3), {dt:.1f}s (< 60s)")
    assert ok


def test_c02_moment_inequalities(record):
    t0 = time.perf_counter()
    bad = []
    for alpha in np.round(np.arange(0.0, 2.0 + 1e-9, 0.1), 10):
        rep = moment_bounds(BdSpec(200, float(alpha)))
        holds = rep.per_n["holds"]
        for N in range(10, 201):
            mo = compute_moments(BdSpec(N, float(alpha)))
            if mo.Etau2 > 2 * mo.Etau ** 2 * (1 + 1e-12):
                bad.append(("second", alpha, N))
            if rep.onset is None or (N >= rep.onset and not holds[N - 1]):
                bad.append(("regime", alpha, N))
    dt = time.perf_counter() - t0
    ok = not bad
    record(2, ok, f"{len(bad)} violations over alpha in [0,2], N in 10..200, {dt:.1f}s")
    assert ok, bad[:5]


def test_c03_detailed_balance(record):
    worst = 0.0
    p4 = build_power_law_psi(4.0, 64)
    for lam in (0.5, 1.0, 1.5):
        kern = BirthKernel.reversible(lam, p4)
        for N in range(1, 7):
            w = compute_weights(N, lam, p4)
            for a in all_states(N):
                for b, q_ab in transition_rates(a, N, kern).items():
                    if not b:
                        continue
                    q_ba = transition_rates(b, N, kern)[a]
                    pa = math.exp(log_nu(a, lam, p4) - w.log_K)
                    pb = math.exp(log_nu(b, lam, p4) - w.log_K)
                    lhs, rhs = pa * q_ab, pb * q_ba
                    worst = max(worst, abs(lhs - rhs) / max(lhs, rhs))
    ok = worst <= 1e-12
    record(3, ok, f"max relative detailed-balance defect {worst:.2e} (<= 1e-12)")
    assert ok


def test_c04_sampler_exactness(record):
    t0 = time.perf_counter()
    p4 = build_power_law_psi(4.0, 64)
    N = 6
    w = compute_weights(N, 1.0, p4)
    rng = make_rng(404)
    n = 100_000
    counts: dict = {}
    for _ in range(n):
        k = sample_pi(w, p4, rng).to_bitstring()
        counts[k] = counts.get(k, 0) + 1
    exact = enumerate_pi(N, 1.0, p4)
    tv = 0.5 * sum(abs(counts.get(k, 0) / n - p) for k, p in exact.items())
    rel = max(abs(compute_weights(m, lam, p4).log_K - brute_force_log_K(m, lam, p4))
              / max(1.0, abs(brute_force_log_K(m, lam, p4)))
              for m in range(1, 13) for lam in (0.5, 1.0, 1.5))
    dt = time.perf_counter() - t0
    ok = tv < 0.01 and rel <= 1e-9 and dt < 60
    record(4, ok, f"TV = {tv:.4f} (< 0.01), K_N DP vs enumeration {rel:.1e} (<= 1e-9), {dt:.1f}s")
    assert ok


def test_c05_domination(record, psi):
    t0 = time.perf_counter()
    rep = domination_test(BirthKernel.reversible(0.03, psi), 64, 10_000, master_seed=505)
    dt = time.perf_counter() - t0
    ok = rep.passed and len(rep.ts) == 10 and dt < 300
    excess = float(np.max(rep.p_nps - rep.p_bd))
    record(5, ok, f"max P(sigma>t) - P(tau>=t) = {excess:.4f} at 10 quantiles, M = {rep.M:.4f}, "
                  f"exact-chain check {'ok' if rep.passed_exact else 'fails'}, {dt:.1f}s")
    assert ok


def test_c06_subcritical(record):
    t0 = time.perf_counter()
    plan = ExperimentPlan(KernelSpec("reversible", 0.03, 4.0), [2 ** k for k in range(4, 11)],
                          trials=1000, master_seed=606, regime="subcritical")
    rep = run_sweep(plan)
    dt = time.perf_counter() - t0
    bound, fit = rep.check("m_bound"), rep.fits["mean_vs_logN"]
    worst = max(v["mean"] / v["bound"] for v in bound.values.values())
    ok = bound.passed and fit.r2 >= 0.95 and dt < 600
    record(6, ok, f"max mean/bound = {worst:.3f}, R^2 = {fit.r2:.4f} (>= 0.95), {dt:.1f}s")
    assert ok


def test_c07_critical(record):
    t0 = time.perf_counter()
    plan = ExperimentPlan(KernelSpec("reversible", 1.0, 4.0), [32, 64, 128, 256, 512],
                          start="pi", trials=CRITICAL_TRIALS, master_seed=707, regime="critical")
    rep = run_sweep(plan)
    dt = time.perf_counter() - t0
    lo, hi, sl = (rep.check(n) for n in ("critical_lower_tail", "critical_upper_tail",
                                         "critical_slope"))
    ok = lo.passed and hi.passed and sl.passed and dt < 1800
    record(7, ok, f"P(sigma<N/C_N) = {lo.values['p']:.3f}, P(sigma>C_N N^2) = {hi.values['p']:.3f} "
                  f"(<= 0.1), slope = {sl.values['slope']:.3f} in [1.0, 2.2], {dt:.1f}s")
    assert ok


def test_c08_tail_bound(record, psi):
    t0 = time.perf_counter()
    parts, ok = [], True
    for N in (64, 128):
        rep = lower_bound_test(psi, N, 10_000, lam=1.0, master_seed=808)
        ok &= rep.passed
        parts.append(f"N={N}: {rep.p_emp[0]:.4f} <= {rep.bound[0]:.3f}+3SE")
    dt = time.perf_counter() - t0
    ok = bool(ok and dt < 600)
    record(8, ok, ", ".join(parts) + f", {dt:.1f}s")
    assert ok


def test_c09_supercritical(record):
    t0 = time.perf_counter()
    plan = ExperimentPlan(KernelSpec("reversible", 1.5, 4.0), list(range(6, 17)), trials=1000,
                          master_seed=909, regime="supercritical")
    rep = run_sweep(plan)
    dt = time.perf_counter() - t0
    f = rep.fits["logmedian_vs_N"]
    ok = rep.check("exp_slope").passed and dt < 1800
    record(9, ok, f"slope = {f.slope:.4f}, 95% CI [{f.slope_ci[0]:.4f}, {f.slope_ci[1]:.4f}], {dt:.1f}s")
    assert ok


def test_c10_edge(record, psi):
    t0 = time.perf_counter()
    rep = edge_diffusion(psi, W=2000, T=2000.0, trials=100, master_seed=1010)
    dt = time.perf_counter() - t0
    ok = rep.passed and dt < 1800
    record(10, ok, f"D_hat = {rep.D_hat:.3f}, R^2 = {rep.fit.r2:.4f}, drift z = {rep.drift_z:.3f} "
                   f"(|z| <= {rep.drift_band:.2f}), guard hits {rep.n_guard}/{rep.trials}, {dt:.1f}s")
    assert ok


def test_c11_determinism(record, tmp_path):
    runs = {
        "simulate": ["simulate", "--N", "40", "--lambda", "0.5", "--trials", "200", "--seed", "11"],
        "sweep": ["sweep", "--N-grid", "8,16,32,64", "--lambda", "0.03", "--trials", "100"],
        "sample-pi": ["sample-pi", "--N", "12", "--count", "100", "--seed", "5"],
        "kn": ["kn", "--N-grid", "5,10,50", "--lambda", "1.2"],
        "bd": ["bd", "--N", "30", "--alpha", "0.7"],
        "dominate": ["dominate", "--N", "16", "--lambda", "0.03", "--trials", "300"],
        "tail": ["tail", "--N", "20", "--trials", "300"],
        "edge": ["edge", "--W", "300", "--T", "30", "--trials", "8", "--n-probes", "4"],
        "validate": ["validate", "--alpha", "4", "--N", "64"],
    }
    diffs = []
    for name, args in runs.items():
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / f"{name}-{rep}"
            cli_main([*args, "--out", str(out)])
            outs.append(out)
        files = sorted(p.name for p in outs[0].iterdir())
        if files != sorted(p.name for p in outs[1].iterdir()):
            diffs.append(name)
            continue
        for f in files:
            a, b = (outs[0] / f).read_bytes(), (outs[1] / f).read_bytes()
            if f == "manifest.json":
                ma, mb = json.loads(a), json.loads(b)
                ma.pop("wall_time"), mb.pop("wall_time")
                same = ma == mb
            else:
                same = a == b
            if not same:
                diffs.append(f"{name}/{f}")
    ok = not diffs
    record(11, ok, f"{len(runs)} commands rerun; differing outputs: {diffs or 'none'} "
                   "(manifest wall_time excluded)")
    assert ok

