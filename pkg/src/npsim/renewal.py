"""Renewal weights, the partition function and exact sampling of the reversible measure.

For a nonempty ``A = {x_1 < ... < x_k}`` the weight is
``lam**(k-1) * psi(x_2 - x_1) ... psi(x_k - x_{k-1})`` (1 for singletons).
Let ``h(x)`` be the total weight of configurations whose leftmost site is x.
Then ``h(N) = 1`` and

    h(x) = 1 + lam * sum_{y > x} psi(y - x) h(y),

so ``K_N = sum_x h(x)`` and the leftmost-first factorization gives an exact
sampler. Everything is kept in log space because ``K_N`` grows exponentially
for ``lam > 1``.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _core
from .kernel import CutoffExceeded, PsiDensity
from .state import Configuration

__all__ = [
    "RenewalWeights",
    "GrowthReport",
    "compute_weights",
    "rightmost_weights",
    "sample_pi",
    "sample_pi_rightmost",
    "log_nu",
    "enumerate_pi",
    "brute_force_log_K",
    "kn_growth_check",
    "sample_renewal_halfline",
    "write_kn_csv",
]


@dataclass(frozen=True)
class RenewalWeights:
    N: int
    lam: float
    log_h: np.ndarray   # log_h[x - 1] = log h(x)
    log_K: float

    @property
    def K(self) -> float:
        return math.exp(self.log_K)

    def leftmost_probs(self) -> np.ndarray:
        return np.exp(self.log_h - self.log_K)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def compute_weights(N: int, lam: float, psi: PsiDensity) -> RenewalWeights:
    """Backward DP for ``log h`` and ``log K_N(lam)``; O(N^2)."""
    if N < 1:
        raise ValueError("N must be positive")
    if N - 1 > psi.L_max:
        raise CutoffExceeded(f"N = {N} needs psi up to {N - 1}, L_max = {psi.L_max}")
    log_psi = psi.log_values[: max(N - 1, 1)]
    log_lam = _log(lam)
    log_h = np.zeros(N)
    for x in range(N - 1, 0, -1):
        # y = x+1..N  ->  gaps 1..N-x
        terms = log_psi[: N - x] + log_h[x:]
        s = log_lam + logsumexp(terms)
        log_h[x - 1] = np.logaddexp(0.0, s)
    return RenewalWeights(N, float(lam), log_h, float(logsumexp(log_h)))


def rightmost_weights(N: int, lam: float, psi: PsiDensity) -> np.ndarray:
    """``log g(y)``: total weight of configurations whose rightmost site is y."""
    log_psi = psi.log_values[: max(N - 1, 1)]
    log_lam = _log(lam)
    log_g = np.zeros(N)
    for y in range(2, N + 1):
        # x = 1..y-1 -> gaps y-1..1
        terms = log_psi[y - 2::-1] + log_g[: y - 1]
        log_g[y - 1] = np.logaddexp(0.0, log_lam + logsumexp(terms))
    return log_g


def sample_pi(weights: RenewalWeights, psi: PsiDensity, rng: np.random.Generator) -> Configuration:
    """Exact draw from ``pi``: leftmost site, then successive particles left to right."""
    N = weights.N
    log_psi = psi.log_values[: max(N - 1, 1)].copy()
    mask = _core.sample_renewal_chain(rng, weights.log_h, log_psi, _log(weights.lam), N)
    return Configuration.from_mask(mask)


def sample_pi_rightmost(N: int, lam: float, psi: PsiDensity, rng: np.random.Generator,
                        log_g: np.ndarray | None = None) -> Configuration:
    """Exact draw from ``pi`` built right to left; an independent cross-check of :func:`sample_pi`."""
    if log_g is None:
        log_g = rightmost_weights(N, lam, psi)
    log_psi = psi.log_values
    log_lam = _log(lam)
    p = np.exp(log_g - logsumexp(log_g))
    y = int(rng.choice(N, p=p / p.sum())) + 1
    sites = [y]
    while y > 1:
        stop = math.exp(-log_g[y - 1])
        xs = np.arange(1, y)
        q = np.exp(log_lam + log_psi[y - xs - 1] + log_g[xs - 1] - log_g[y - 1])
        probs = np.concatenate([[stop], q])
        k = int(rng.choice(len(probs), p=probs / probs.sum()))
        if k == 0:
            break
        y = int(xs[k - 1])
        sites.append(y)
    return Configuration(N, sites)


def log_nu(sites, lam: float, psi: PsiDensity) -> float:
    """Log weight of a nonempty configuration (sorted sites)."""
    sites = sorted(sites)
    if not sites:
        raise ValueError("weight undefined for the empty configuration")
    k = len(sites)
    if k == 1:
        return 0.0
    gaps = np.diff(sites)
    return (k - 1) * _log(lam) + float(np.sum(psi.log_values[gaps - 1]))


def enumerate_pi(N: int, lam: float, psi: PsiDensity) -> dict:
    """Brute-force ``pi`` over all ``2**N - 1`` nonempty subsets (bitstring -> prob)."""
    if N > 20:
        raise ValueError("enumeration limited to N <= 20")
    logs = {}
    for mask in range(1, 2 ** N):
        sites = [i + 1 for i in range(N) if mask >> i & 1]
        logs[Configuration(N, sites).to_bitstring()] = log_nu(sites, lam, psi)
    lk = logsumexp(list(logs.values()))
    return {k: math.exp(v - lk) for k, v in logs.items()}


def brute_force_log_K(N: int, lam: float, psi: PsiDensity) -> float:
    if N > 20:
        raise ValueError("enumeration limited to N <= 20")
    vals = []
    for k in range(1, N + 1):
        for comb in itertools.combinations(range(1, N + 1), k):
            vals.append(log_nu(comb, lam, psi))
    return float(logsumexp(vals))


@dataclass
class GrowthReport:
    lam: float
    Ns: np.ndarray
    log_K: np.ndarray
    ratio: np.ndarray = field(default=None)          # K_N / N^2 (lam == 1)
    renewal_limit: float = math.nan                  # 1 / (2 sum n psi(n))
    inf_ratio: float = math.nan
    band: float = math.nan                           # max/min of ratio over upper half of grid
    gamma_hat: np.ndarray = field(default=None)      # log K_N / N (lam > 1)
    gamma_increments: np.ndarray = field(default=None)
    passed: bool = False
    detail: str = ""

    def to_dict(self) -> dict:
        d = {"lambda": self.lam, "N": self.Ns.tolist(), "log_K": self.log_K.tolist(),
             "passed": self.passed, "detail": self.detail}
        if self.ratio is not None:
            d.update(ratio=self.ratio.tolist(), renewal_limit=self.renewal_limit,
                     inf_ratio=self.inf_ratio, band=self.band)
        if self.gamma_hat is not None:
            d.update(gamma_hat=self.gamma_hat.tolist(),
                     gamma_increments=self.gamma_increments.tolist())
        return d


def kn_growth_check(psi: PsiDensity, lam: float, N_grid) -> GrowthReport:
    """Growth of the partition function over an increasing grid of N.

    At ``lam == 1`` the ratio ``K_N / N**2`` should stay bounded away from zero
    and settle near ``1 / (2 sum n psi(n))``; the check requires a factor-2
    band over the upper half of the grid. For ``lam > 1`` the per-site free
    energy ``log K_N / N`` must be positive with shrinking increments.
    """
    if lam < 1:
        raise ValueError("growth check applies for lam >= 1")
    Ns = np.asarray(sorted(N_grid), dtype=int)
    logK = np.array([compute_weights(int(n), lam, psi).log_K for n in Ns])
    rep = GrowthReport(lam, Ns, logK)
    if lam == 1:
        ratio = np.exp(logK - 2 * np.log(Ns))
        upper = ratio[len(ratio) // 2:]
        rep.ratio = ratio
        rep.renewal_limit = 1.0 / (2.0 * psi.mean)
        rep.inf_ratio = float(ratio.min())
        rep.band = float(upper.max() / upper.min())
        rep.passed = bool(rep.inf_ratio > 0 and rep.band <= 2.0)
        rep.detail = f"inf K_N/N^2 = {rep.inf_ratio:.4g}, upper-half band {rep.band:.3f}"
    else:
        g = logK / Ns
        inc = np.abs(np.diff(g))
        rep.gamma_hat = g
        rep.gamma_increments = inc
        shrinking = bool(np.all(np.diff(inc) <= 1e-12)) if inc.size > 1 else True
        rep.passed = bool(g[-1] > 0 and shrinking)
        rep.detail = f"gamma_hat(N={Ns[-1]}) = {g[-1]:.5g}, increments shrinking: {shrinking}"
    return rep


def sample_renewal_halfline(psi: PsiDensity, W: int, rng: np.random.Generator,
                            N: int | None = None) -> Configuration:
    """Renewal configuration on ``{1..W}`` with a particle at W.

    Gaps are drawn i.i.d. from ``psi`` (conditioned on the truncation) going
    leftward from W until the window is exhausted. The result lives on
    ``{1..N}`` (default ``N = W``), leaving ``N - W`` vacant sites to the right.
    """
    N = W if N is None else N
    if W > psi.L_max:
        raise CutoffExceeded(f"W = {W} exceeds L_max = {psi.L_max}")
    if N < W:
        raise ValueError("N must be at least W")
    cdf = np.cumsum(psi.values)
    cdf /= cdf[-1]
    sites = [W]
    x = W
    # mean gap >= 1, so W draws always suffice
    batch = max(16, int(W / max(psi.mean, 1.0) * 1.2) + 16)
    while True:
        gaps = np.searchsorted(cdf, rng.random(batch), side="right") + 1
        for d in gaps:
            x -= int(d)
            if x < 1:
                return Configuration(N, sites)
            sites.append(x)


def write_kn_csv(rows, fh) -> None:
    """Rows of ``(N, lam, log_K)`` in round-trip precision."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["N", "lambda", "log_K"])
    for n, lam, lk in rows:
        w.writerow([int(n), repr(float(lam)), repr(float(lk))])
