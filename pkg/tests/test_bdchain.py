import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from npsim.bdchain import (BdSpec, ScaleExceeded, bd_survival, compute_moments, moment_bounds,
                           regime_bound, simulate_bd, simulate_bd_many, write_moments_csv)
from npsim.simulator import make_rng

from oracles import bd_moments_linear


def test_alpha_one_closed_form():
    N = 9
    mo = compute_moments(BdSpec(N, 1.0))
    i = np.arange(1, N + 1)
    np.testing.assert_allclose(mo.e, (N - i + 1) / i, rtol=1e-15)


def test_pure_death_harmonic():
    assert compute_moments(BdSpec(4, 0.0)).Etau == pytest.approx(25 / 12, rel=1e-15)


def test_alpha_one_three_levels():
    assert compute_moments(BdSpec(3, 1.0)).Etau == pytest.approx(13 / 3, rel=1e-15)


@pytest.mark.parametrize("N", [1, 2, 5, 10, 20])
@pytest.mark.parametrize("alpha", [0.0, 0.3, 0.5, 1.0, 1.5, 2.0])
def test_moments_match_linear_solve(N, alpha):
    mo = compute_moments(BdSpec(N, alpha))
    m1, m2 = bd_moments_linear(N, alpha)
    assert mo.Etau == pytest.approx(m1, rel=1e-10)
    assert mo.Etau2 == pytest.approx(m2, rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(N=st.integers(1, 80), alpha=st.floats(0.0, 2.5))
def test_first_step_recurrence(N, alpha):
    mo = compute_moments(BdSpec(N, alpha))
    e = np.append(mo.e, 0.0)
    i = np.arange(1, N + 1)
    b = np.where(i < N, (i + 1) * alpha, 0.0)
    np.testing.assert_allclose(i * e[:-1], 1 + b * e[1:], rtol=1e-10)
    assert np.all(np.diff(mo.m) >= 0)
    assert mo.Etau == pytest.approx(mo.e.sum(), rel=1e-12)
    assert mo.Etau2 <= 2 * mo.Etau ** 2 * (1 + 1e-12)


@pytest.mark.parametrize("N", [5, 50, 200])
def test_alpha_continuity(N):
    lo = compute_moments(BdSpec(N, 1 - 1e-8)).Etau
    mid = compute_moments(BdSpec(N, 1.0)).Etau
    hi = compute_moments(BdSpec(N, 1 + 1e-8)).Etau
    assert lo <= mid <= hi
    assert hi - lo < 1e-4 * mid


def test_bounds_examples():
    r = moment_bounds(BdSpec(100, 0.5))
    assert r.holds and r.bound == pytest.approx(2 * math.log(100) / 0.5)
    r = moment_bounds(BdSpec(100, 1.0))
    assert r.holds and r.bound == pytest.approx(200 * math.log(100))
    r = moment_bounds(BdSpec(30, 1.5))
    assert r.holds and r.second_moment_holds and r.second_moment_margin >= 0
    assert regime_bound(1.5, 30) == pytest.approx(1.5 ** 31 / 0.25)


def test_scale_exceeded():
    with pytest.raises(ScaleExceeded) as exc:
        compute_moments(BdSpec(5000, 2.0))
    n = exc.value.largest_N
    assert 100 < n < 5000
    compute_moments(BdSpec(n, 2.0))
    with pytest.raises(ScaleExceeded):
        compute_moments(BdSpec(n + 1, 2.0))


def test_spec_validation():
    with pytest.raises(ValueError):
        BdSpec(0, 1.0)
    with pytest.raises(ValueError):
        BdSpec(3, -0.1)


def test_single_level_exponential():
    t = simulate_bd_many(BdSpec(1, 0.0), 100_000, master_seed=1)
    assert abs(t.mean() - 1) <= 0.01


def test_simulated_mean():
    mo = compute_moments(BdSpec(10, 1.0))
    t = simulate_bd_many(BdSpec(10, 1.0), 20_000, master_seed=2)
    assert abs(t.mean() - mo.Etau) <= 3 * t.std(ddof=1) / math.sqrt(len(t))


def test_simulated_second_moment():
    mo = compute_moments(BdSpec(10, 0.5))
    t = simulate_bd_many(BdSpec(10, 0.5), 50_000, master_seed=3)
    sq = t ** 2
    assert abs(sq.mean() - mo.Etau2) <= 4 * sq.std(ddof=1) / math.sqrt(len(t))


@pytest.mark.parametrize("alpha", [0.5, 1.0])
def test_chebyshev_tail(alpha):
    spec = BdSpec(50, alpha)
    E = compute_moments(spec).Etau
    t = simulate_bd_many(spec, 20_000, master_seed=4)
    for c in (2, 4, 8):
        p = np.mean(t >= c * E)
        b = 2 / c ** 2
        assert p <= b + 3 * math.sqrt(b * (1 - b) / len(t))


def test_cap():
    tau, ev, capped = simulate_bd(BdSpec(30, 2.0), make_rng(0), t_cap=1.0)
    assert capped and tau == 1.0


def test_exact_survival():
    spec = BdSpec(8, 0.7)
    assert bd_survival(spec, [0.0])[0] == pytest.approx(1.0)
    s = bd_survival(spec, [0.5, 1, 2, 4, 8])
    assert np.all(np.diff(s) < 0)
    # integral of the survival function is the mean
    area, _ = integrate.quad(lambda x: bd_survival(spec, [x])[0], 0, np.inf, limit=200)
    assert area == pytest.approx(compute_moments(spec).Etau, rel=1e-6)
    t = simulate_bd_many(spec, 20_000, master_seed=5)
    emp = np.array([np.mean(t > x) for x in (0.5, 1, 2, 4, 8)])
    assert np.all(np.abs(emp - s) <= 4 * np.sqrt(s * (1 - s) / len(t)) + 1e-3)


def test_moments_csv():
    buf = io.StringIO()
    mo = compute_moments(BdSpec(3, 1.0))
    write_moments_csv(mo, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "i,e_i,m_i,eps_i" and len(lines) == 4
    assert float(lines[1].split(",")[1]) == 3.0
