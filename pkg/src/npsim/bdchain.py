"""Birth-death comparison chain on ``{0..N}``.

Death rate ``a_i = i`` and birth rate ``b_i = (i + 1) * alpha`` (no births from
N). The particle count of a nearest particle system with aggregate gap rate
at most ``M`` is dominated by this chain with ``alpha = M``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import _core

__all__ = [
    "ScaleExceeded",
    "BdSpec",
    "BdMoments",
    "BoundReport",
    "compute_moments",
    "moment_bounds",
    "regime_bound",
    "simulate_bd",
    "simulate_bd_many",
    "bd_survival",
    "write_moments_csv",
]

LD = np.longdouble


class ScaleExceeded(OverflowError):
    def __init__(self, msg, largest_N=None):
        super().__init__(msg)
        self.largest_N = largest_N


@dataclass(frozen=True)
class BdSpec:
    N: int
    alpha: float

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not self.alpha >= 0:
            raise ValueError("alpha must be >= 0")

    def death(self, i):
        return np.asarray(i, dtype=float)

    def birth(self, i):
        i = np.asarray(i)
        return np.where(i < self.N, (i + 1) * self.alpha, 0.0)


@dataclass
class BdMoments:
    e: np.ndarray
    eps: np.ndarray
    m: np.ndarray
    Etau: float
    Etau2: float


def _geom(alpha, n):
    """``1 + alpha + ... + alpha**(n-1)`` in extended precision, stable near alpha = 1."""
    n = np.asarray(n, dtype=LD)
    a = LD(alpha)
    if alpha == 1:
        return n
    if alpha == 0:
        return np.ones_like(n)
    d = a - LD(1)
    with np.errstate(divide="ignore"):   # alpha below extended epsilon behaves as 0
        return np.expm1(n * np.log1p(d)) / d


def _moments_ld(N: int, alpha: float):
    i = np.arange(1, N + 1)
    if alpha == 1:
        e = (LD(N) - i.astype(LD) + LD(1)) / i.astype(LD)
    else:
        e = _geom(alpha, N - i + 1) / i.astype(LD)
    m = np.cumsum(e)
    # eps_i = (2 / a_i) T_i with T_i = m_i + (b_i / a_{i+1}) T_{i+1}, T_{N+1} = 0
    T = np.zeros(N + 2, dtype=LD)
    # b_i / a_{i+1} = alpha for every i < N
    a_ld = LD(alpha)
    for k in range(N, 0, -1):
        T[k] = m[k - 1] + a_ld * T[k + 1]
    eps = LD(2) * T[1:N + 1] / i.astype(LD)
    return e, eps, m


def compute_moments(spec: BdSpec) -> BdMoments:
    """First two moments of the hitting time of 0 from N, with per-level terms.

    ``E tau = sum e_i`` and ``E tau**2 = sum eps_i``; ``m_i = E^i tau`` is the
    prefix sum of ``e``. Sums run in extended precision; overflow of the
    double-precision results raises :class:`ScaleExceeded`.
    """
    e, eps, m = _moments_ld(spec.N, spec.alpha)
    Etau, Etau2 = np.sum(e), np.sum(eps)
    with np.errstate(over="ignore"):
        out = [np.asarray(x, dtype=float) for x in (e, eps, m)]
    E1, E2 = float(Etau), float(Etau2)
    if not (np.isfinite(E2) and np.all(np.isfinite(out[1]))):
        raise ScaleExceeded(f"second moment overflows double precision at N={spec.N}, "
                            f"alpha={spec.alpha}", _largest_N(spec.alpha, spec.N))
    return BdMoments(out[0], out[1], out[2], E1, E2)


def _largest_N(alpha: float, upto: int) -> int:
    lo, hi = 1, upto
    while lo < hi:
        mid = (lo + hi + 1) // 2
        _, eps, _ = _moments_ld(mid, alpha)
        if np.isfinite(float(np.sum(eps))):
            lo = mid
        else:
            hi = mid - 1
    return lo


def regime_bound(alpha: float, N: int) -> float:
    """Upper bound on ``E tau`` for the regime of ``alpha``."""
    if alpha < 1:
        return 2 * math.log(N) / (1 - alpha)
    if alpha == 1:
        return 2 * N * math.log(N)
    return alpha ** (N + 1) / (alpha - 1) ** 2


@dataclass
class BoundReport:
    alpha: float
    N: int
    Etau: float
    Etau2: float
    regime: str
    bound: float
    holds: bool
    margin: float                     # bound - Etau
    onset: int | None                 # first n <= N at which the bound holds
    holds_after_onset: bool
    second_moment_holds: bool         # Etau2 <= 2 Etau^2
    second_moment_margin: float
    per_n: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("alpha", "N", "Etau", "Etau2", "regime", "bound",
                                              "holds", "margin", "onset", "holds_after_onset",
                                              "second_moment_holds", "second_moment_margin")}


def moment_bounds(spec: BdSpec) -> BoundReport:
    """Compare exact moments with the regime bound and ``E tau^2 <= 2 (E tau)^2``.

    The regime bounds hold only for large N, so the bound is evaluated at
    every ``n <= N`` and the first ``n`` where it holds is reported.
    """
    a = spec.alpha
    regime = "sub" if a < 1 else ("critical" if a == 1 else "super")
    holds_n = []
    for n in range(1, spec.N + 1):
        mo = compute_moments(BdSpec(n, a))
        b = regime_bound(a, n)
        holds_n.append(mo.Etau <= b)
    onset = next((n for n, h in enumerate(holds_n, start=1) if h), None)
    after = onset is not None and all(holds_n[onset - 1:])
    mo = compute_moments(spec)
    b = regime_bound(a, spec.N)
    sm = 2 * mo.Etau ** 2 - mo.Etau2
    return BoundReport(a, spec.N, mo.Etau, mo.Etau2, regime, b, mo.Etau <= b, b - mo.Etau,
                       onset, after, sm >= 0, sm, {"holds": holds_n})


def simulate_bd(spec: BdSpec, rng: np.random.Generator, t_cap: float = math.inf):
    """One exact sample of the hitting time of 0 from N: ``(tau, events, capped)``."""
    tau, ev, capped = _core.bd_hitting_time(rng, spec.N, float(spec.alpha), float(t_cap))
    return float(tau), int(ev), bool(capped)


def simulate_bd_many(spec: BdSpec, trials: int, master_seed: int, t_cap: float = math.inf,
                     key=()) -> np.ndarray:
    """Hitting-time samples with per-trial streams; capped trials hold ``t_cap``."""
    from .simulator import make_rng, trial_seed
    out = np.empty(trials)
    for k in range(trials):
        rng = make_rng(trial_seed(master_seed, k, *key))
        out[k] = _core.bd_hitting_time(rng, spec.N, float(spec.alpha), float(t_cap))[0]
    return out


def bd_survival(spec: BdSpec, ts) -> np.ndarray:
    """Exact ``P^N(tau > t)`` from the matrix exponential of the transient generator."""
    N, a = spec.N, spec.alpha
    Q = np.zeros((N, N))  # states 1..N
    for i in range(1, N + 1):
        d = float(i)
        b = (i + 1) * a if i < N else 0.0
        Q[i - 1, i - 1] = -(d + b)
        if i > 1:
            Q[i - 1, i - 2] = d
        if i < N:
            Q[i - 1, i] = b
    ones = np.ones(N)
    out = []
    for t in np.atleast_1d(ts):
        row = expm(Q * float(t))[N - 1]
        out.append(min(1.0, max(0.0, float(row @ ones))))
    return np.array(out)


def write_moments_csv(mo: BdMoments, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["i", "e_i", "m_i", "eps_i"])
    for i, (e, m, eps) in enumerate(zip(mo.e, mo.m, mo.eps), start=1):
        w.writerow([i, repr(float(e)), repr(float(m)), repr(float(eps))])
