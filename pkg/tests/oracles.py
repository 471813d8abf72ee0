"""Independent reference computations used across the test-suite.

These deliberately avoid the package's fast paths: rates come from the
brute-force nearest-particle scan and hitting times from dense linear algebra.
"""
import itertools
from fractions import Fraction

import numpy as np

from npsim.state import Configuration, brute_force_rates


def all_states(N):
    """Nonempty subsets of {1..N} as sorted tuples."""
    return [c for k in range(1, N + 1) for c in itertools.combinations(range(1, N + 1), k)]


def transition_rates(sites, N, kernel):
    """Dict target-tuple -> rate out of ``sites``; the empty target is ()."""
    out = {}
    for x in sites:
        out[tuple(s for s in sites if s != x)] = 1.0
    for x, r in brute_force_rates(Configuration(N, sites), kernel).items():
        if r > 0:
            out[tuple(sorted(sites + (x,)))] = r
    return out


def mean_hitting_times(N, kernel):
    """E sigma from every nonempty state by solving the linear system on transients."""
    states = all_states(N)
    idx = {s: i for i, s in enumerate(states)}
    A = np.zeros((len(states), len(states)))
    for s in states:
        i = idx[s]
        for t, r in transition_rates(s, N, kernel).items():
            A[i, i] += r
            if t:
                A[i, idx[t]] -= r
    m = np.linalg.solve(A, np.ones(len(states)))
    return {s: m[idx[s]] for s in states}


def _tridiag_solve(lower, diag, upper, rhs):
    """Thomas algorithm; works on Fractions for exact answers."""
    n = len(diag)
    c, d = [0] * n, [0] * n
    c[0], d[0] = upper[0] / diag[0], rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - lower[i] * c[i - 1]
        c[i] = upper[i] / den if i < n - 1 else 0
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / den
    x = [0] * n
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def bd_moments_linear(N, alpha):
    """First two moments of the birth-death hitting time of 0 from N.

    Solves the first-step linear systems in exact rational arithmetic.
    """
    a = Fraction(alpha)
    lower, diag, upper = [], [], []
    for i in range(1, N + 1):
        b = (i + 1) * a if i < N else Fraction(0)
        diag.append(i + b)
        lower.append(Fraction(-i) if i > 1 else Fraction(0))
        upper.append(-b if i < N else Fraction(0))
    m1 = _tridiag_solve(lower, diag, upper, [Fraction(1)] * N)
    m2 = _tridiag_solve(lower, diag, upper, [2 * v for v in m1])
    return float(m1[-1]), float(m2[-1])
