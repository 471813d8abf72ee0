"""Exact event-driven simulation of nearest particle systems.

Every replica draws from its own Philox stream keyed by ``(master_seed, ...,
trial)``, so a replica is a pure function of kernel, initial state, seed and
cap, and serial and parallel runs agree bit for bit.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import stats

from . import _core
from .kernel import BirthKernel
from .state import Configuration, GapRateIndex, apply_birth, apply_death, rate_tables

__all__ = [
    "Absorbed",
    "RegimeTooSlow",
    "Event",
    "HittingSample",
    "TrajectoryProbe",
    "SigmaStats",
    "SurvivalCurve",
    "trial_seed",
    "make_rng",
    "next_event",
    "step",
    "run_hitting",
    "run_trials",
    "estimate_sigma",
    "summarize",
    "survival_curve",
    "write_trials_csv",
    "write_probe_csv",
]

DEFAULT_T_CAP = 1e6
QUANTILES = (0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95)


class Absorbed(RuntimeError):
    """Raised when stepping the empty configuration."""


class RegimeTooSlow(RuntimeError):
    """Every trial hit the time cap."""

    def __init__(self, msg, stats=None):
        super().__init__(msg)
        self.stats = stats


class Event(NamedTuple):
    kind: str   # "birth" or "death"
    site: int


@dataclass
class HittingSample:
    sigma: float
    events: int
    capped: bool
    seed: Optional[int] = None
    trial: Optional[int] = None


@dataclass
class TrajectoryProbe:
    """Cardinality and rightmost particle recorded at fixed times.

    Entries past a time cap are -1.
    """

    times: np.ndarray
    cardinality: np.ndarray = None
    rightmost: np.ndarray = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) < 0):
            raise ValueError("probe times must be sorted")
        if self.cardinality is None:
            self.cardinality = np.full(len(self.times), -1, dtype=np.int64)
        if self.rightmost is None:
            self.rightmost = np.full(len(self.times), -1, dtype=np.int64)

    def fresh(self) -> "TrajectoryProbe":
        return TrajectoryProbe(self.times)


def trial_seed(master_seed: int, trial: int, *key: int) -> int:
    """64-bit per-trial seed derived from the master seed, optional keys and trial index."""
    ss = np.random.SeedSequence([int(master_seed), *(int(k) for k in key), int(trial)])
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng, None
    return make_rng(rng), int(rng)


def next_event(index: GapRateIndex, rng: np.random.Generator) -> tuple[float, Event, int]:
    """Draw the next holding time and event without applying it.

    Returns ``(dt, event, owner)``; ``owner`` is the left owner of a birth's gap.
    """
    if index.total_death == 0:
        raise Absorbed("configuration is empty")
    t = index.tables
    dt, kind, x, a = _core.select_event(rng, index.N, index.nxt, index.occ, index.w, index.tree,
                                        index.meta, index.ftot, t.int_rate, t.int_cum,
                                        t.int_off, t.bnd_cum)
    return dt, Event("death" if kind == _core.DEATH else "birth", int(x)), int(a)


def step(config: Configuration, index: GapRateIndex, kernel: BirthKernel,
         rng: np.random.Generator) -> tuple[float, Event]:
    """Advance one event of the continuous-time chain in place."""
    if index.kernel is not kernel:
        raise ValueError("index was built for a different kernel")
    dt, ev, owner = next_event(index, rng)
    if ev.kind == "death":
        apply_death(config, index, ev.site)
    else:
        apply_birth(config, index, ev.site, owner=owner)
    return dt, ev


def _run(index: GapRateIndex, rng, t_cap: float, probe: Optional[TrajectoryProbe]):
    t = index.tables
    if probe is None:
        pt = np.empty(0)
        pc = np.empty(0, dtype=np.int64)
        pr = np.empty(0, dtype=np.int64)
    else:
        pt, pc, pr = probe.times, probe.cardinality, probe.rightmost
    return _core.run_until_empty(rng, float(t_cap), index.N, *index.state_args(),
                                 t.int_rate, t.int_cum, t.int_off, t.bnd_cum, pt, pc, pr)


def run_hitting(config0: Configuration, kernel: BirthKernel, rng, t_cap: float = DEFAULT_T_CAP,
                probe: Optional[TrajectoryProbe] = None,
                index: Optional[GapRateIndex] = None) -> HittingSample:
    """Simulate from ``config0`` until the empty set is hit or ``t_cap`` passes.

    ``rng`` is a Generator or an integer seed. ``config0`` is not modified. If
    a probe is given it is filled in place. A preallocated ``index`` may be
    passed to avoid reallocation across trials.
    """
    if not t_cap > 0:
        raise ValueError("t_cap must be positive")
    rng, seed = _as_rng(rng)
    if index is None:
        index = GapRateIndex(config0, kernel)
    else:
        index.reset(config0)
    if config0.empty:
        raise ValueError("initial configuration is empty")
    sigma, events, capped = _run(index, rng, t_cap, probe)
    return HittingSample(float(sigma), int(events), bool(capped), seed)


def run_trials(kernel: BirthKernel, N: int, trials: int, master_seed: int,
               start: str = "full", t_cap: float = DEFAULT_T_CAP, key: Sequence[int] = (),
               weights=None, probe_times=None, initial=None) -> tuple[list, list]:
    """Run independent replicas; returns (samples, probes).

    ``start`` is ``"full"`` or ``"pi"``; the latter draws each initial state
    from the reversible measure with the replica's own stream. ``initial``
    may instead be a callable ``rng -> Configuration``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    tables = rate_tables(kernel, N)
    if start == "pi" and initial is None:
        from .renewal import compute_weights, sample_pi
        if kernel.variant != "reversible":
            raise ValueError("start='pi' requires the reversible kernel")
        if weights is None:
            weights = compute_weights(N, kernel.lam, kernel.psi)
        if weights.N != N or weights.lam != kernel.lam:
            raise ValueError("renewal weights do not match the kernel")

        def initial(rng):
            return sample_pi(weights, kernel.psi, rng)
    elif start == "full" and initial is None:
        full = Configuration.full(N)

        def initial(rng):
            return full
    elif initial is None:
        raise ValueError(f"unknown start {start!r}")

    index = None
    samples, probes = [], []
    for i in range(trials):
        seed = trial_seed(master_seed, i, *key)
        rng = make_rng(seed)
        cfg = initial(rng)
        if index is None:
            index = GapRateIndex(cfg, kernel, tables)
        probe = TrajectoryProbe(probe_times) if probe_times is not None else None
        s = run_hitting(cfg, kernel, rng, t_cap, probe=probe, index=index)
        s.seed, s.trial = seed, i
        samples.append(s)
        probes.append(probe)
    return samples, probes


@dataclass
class SigmaStats:
    N: int
    trials: int
    n_capped: int
    t_cap: float
    mean: float               # NaN when any trial is capped
    se: float
    ci_mean: tuple
    median: float             # NaN when censoring reaches the median
    ci_median: tuple
    quantiles: dict
    mean_uncapped: float
    sigmas: np.ndarray = field(repr=False)
    samples: list = field(default_factory=list, repr=False)

    @property
    def capped_fraction(self) -> float:
        return self.n_capped / self.trials

    def prob_below(self, t: float) -> float:
        """Empirical P(sigma < t); capped trials count as exceeding the cap."""
        if t > self.t_cap and self.n_capped:
            return math.nan
        return float(np.mean(self.sigmas < t))

    def prob_above(self, t: float) -> float:
        if t >= self.t_cap and self.n_capped:
            return math.nan
        return float(np.mean(self.sigmas > t))

    def to_dict(self) -> dict:
        return {
            "N": self.N, "trials": self.trials, "n_capped": self.n_capped,
            "capped_fraction": self.capped_fraction, "t_cap": self.t_cap,
            "mean": self.mean, "se": self.se, "ci_mean": list(self.ci_mean),
            "median": self.median, "ci_median": list(self.ci_median),
            "quantiles": {repr(q): v for q, v in self.quantiles.items()},
            "mean_uncapped": self.mean_uncapped,
        }


def _censored_quantile(sorted_vals: np.ndarray, q: float) -> float:
    n = len(sorted_vals)
    k = max(int(math.ceil(q * n)) - 1, 0)   # inverted-CDF order statistic
    v = sorted_vals[k]
    return float(v) if np.isfinite(v) else math.nan


def summarize(samples: Sequence[HittingSample], N: int, t_cap: float) -> SigmaStats:
    """Summary statistics that never average capped trials silently."""
    sig = np.array([s.sigma for s in samples], dtype=float)
    capped = np.array([s.capped for s in samples], dtype=bool)
    n = len(sig)
    n_capped = int(capped.sum())
    cens = np.where(capped, np.inf, sig)
    srt = np.sort(cens)
    quants = {q: _censored_quantile(srt, q) for q in QUANTILES}
    med = _censored_quantile(srt, 0.5)
    # distribution-free order-statistic CI for the median
    lo_k = int(stats.binom.ppf(0.025, n, 0.5))
    hi_k = min(int(stats.binom.ppf(0.975, n, 0.5)), n - 1)
    lo_k = max(lo_k - 1, 0)
    ci_med = (float(srt[lo_k]) if np.isfinite(srt[lo_k]) else math.nan,
              float(srt[hi_k]) if np.isfinite(srt[hi_k]) else math.nan)
    unc = sig[~capped]
    mean_unc = float(unc.mean()) if unc.size else math.nan
    if n_capped == 0:
        mean = float(sig.mean())
        se = float(sig.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
        ci = (mean - 1.96 * se, mean + 1.96 * se)
    else:
        mean, se, ci = math.nan, math.nan, (math.nan, math.nan)
    return SigmaStats(N, n, n_capped, float(t_cap), mean, se, ci, med, ci_med, quants,
                      mean_unc, sig, list(samples))


def estimate_sigma(kernel: BirthKernel, N: int, start: str = "full", trials: int = 1000,
                   t_cap: float = DEFAULT_T_CAP, master_seed: int = 0, key: Sequence[int] = (),
                   weights=None) -> SigmaStats:
    """Monte Carlo estimate of the hitting time of the empty set on ``{1..N}``.

    Raises :class:`RegimeTooSlow` (carrying the partial statistics) if every
    trial is capped.
    """
    samples, _ = run_trials(kernel, N, trials, master_seed, start=start, t_cap=t_cap,
                            key=key, weights=weights)
    st = summarize(samples, N, t_cap)
    if st.n_capped == st.trials:
        raise RegimeTooSlow(f"all {trials} trials reached t_cap={t_cap:g} at N={N}", st)
    return st


@dataclass
class SurvivalCurve:
    ts: np.ndarray
    p: np.ndarray          # empirical P(sigma > t)
    se: np.ndarray
    lo: np.ndarray         # Wilson 95% interval
    hi: np.ndarray
    usable: np.ndarray     # False where a cap makes the estimate undefined
    n: int


def _wilson(k, n, z=1.96):
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return centre - half, centre + half


def survival_curve(samples, ts) -> SurvivalCurve:
    """Empirical survival function ``P(sigma > t)`` with binomial errors.

    ``samples`` may be HittingSample objects or plain floats. A capped sample
    counts as surviving for ``t <= cap``; beyond a cap the point is unusable.
    """
    if len(samples) == 0:
        raise ValueError("no samples")
    ts = np.asarray(ts, dtype=float)
    if np.any(ts < 0):
        raise ValueError("times must be nonnegative")
    if isinstance(samples[0], HittingSample):
        sig = np.array([s.sigma for s in samples])
        cap = np.array([s.capped for s in samples])
    else:
        sig = np.asarray(samples, dtype=float)
        cap = np.zeros(len(sig), dtype=bool)
    n = len(sig)
    min_cap = sig[cap].min() if cap.any() else np.inf
    k = np.array([np.count_nonzero(sig > t) + np.count_nonzero(cap & (sig <= t)) for t in ts], float)
    p = k / n
    se = np.sqrt(p * (1 - p) / n)
    lo, hi = _wilson(k, n)
    usable = ts <= min_cap
    p = np.where(usable, p, np.nan)
    return SurvivalCurve(ts, p, se, lo, hi, usable, n)


def write_trials_csv(samples: Sequence[HittingSample], fh, N: Optional[int] = None) -> None:
    """Per-trial rows ``[N,] trial, seed, sigma, events, capped`` in round-trip precision."""
    w = csv.writer(fh, lineterminator="\n")
    head = ["trial", "seed", "sigma", "events", "capped"]
    if N is not None:
        head = ["N"] + head
    w.writerow(head)
    for i, s in enumerate(samples):
        row = [s.trial if s.trial is not None else i, s.seed, repr(s.sigma), s.events, int(s.capped)]
        w.writerow(([N] if N is not None else []) + row)


def write_probe_csv(probes: Sequence[TrajectoryProbe], fh) -> None:
    """Long-format ``trial, t, cardinality, r_t`` rows."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["trial", "t", "cardinality", "r_t"])
    for i, pr in enumerate(probes):
        for t, c, r in zip(pr.times, pr.cardinality, pr.rightmost):
            w.writerow([i, repr(float(t)), int(c), int(r)])
