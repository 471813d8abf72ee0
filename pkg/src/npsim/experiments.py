"""Scaling studies: hitting-time sweeps, domination, tail bounds and edge diffusion."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .bdchain import BdSpec, bd_survival, simulate_bd_many
from .kernel import (BirthKernel, PsiDensity, beta, beta_boundary, build_power_law_psi,
                     compute_M, load_psi_csv, power_law_cutoff)
from .renewal import brute_force_log_K, compute_weights, sample_renewal_halfline
from .simulator import (DEFAULT_T_CAP, RegimeTooSlow, SigmaStats, TrajectoryProbe, make_rng,
                        run_hitting, run_trials, summarize, survival_curve, trial_seed)
from .state import GapRateIndex, rate_tables

__all__ = [
    "RegimeMismatch",
    "InvalidPlan",
    "KernelSpec",
    "ExperimentPlan",
    "LinearFit",
    "Check",
    "RegimeReport",
    "DominationReport",
    "TailBoundReport",
    "EdgeReport",
    "c_n",
    "contact_comparison",
    "fit_line",
    "run_sweep",
    "domination_test",
    "lower_bound_test",
    "edge_diffusion",
]

TAIL_TOL = 1e-9
REGIMES = ("subcritical", "critical", "supercritical", "auto")
M_ONE_TOL = 1e-9
CONTACT_BRACKET = (1.5, 2.0)    # known range of the contact-process critical value


class InvalidPlan(ValueError):
    pass


class RegimeMismatch(ValueError):
    pass


def c_n(N: float, rule: str = "loglog") -> float:
    """Slowly divergent sequence used in the in-probability bounds."""
    if rule == "loglog":
        return max(2.0, math.log(math.log(N))) if N > 1 else 2.0
    if rule == "log":
        return max(2.0, math.log(N))
    raise InvalidPlan(f"unknown C_N rule {rule!r}")


def contact_comparison(kernel: BirthKernel, n_max: int = 200) -> dict:
    """``max_n min(sum_{l=n}^{2n} beta(l, 3n-l) / 2, sum_{l=n}^{2n} beta(l, inf))``.

    The exponential lower bound needs this to exceed the contact-process
    critical value, which is only known to lie in ``CONTACT_BRACKET``; the
    verdict is "above", "below" or "undecided" relative to that bracket.
    """
    if kernel.variant == "reversible":
        n_max = min(n_max, kernel.psi.L_max // 3)
    best, arg = -math.inf, None
    for n in range(1, n_max + 1):
        ls = range(n, 2 * n + 1)
        v = min(0.5 * sum(beta(kernel, l, 3 * n - l) for l in ls),
                sum(beta_boundary(kernel, l) for l in ls))
        if v > best:
            best, arg = v, n
    lo, hi = CONTACT_BRACKET
    verdict = "above" if best > hi else ("below" if best <= lo else "undecided")
    return {"value": best, "argmax_n": arg, "bracket": list(CONTACT_BRACKET), "verdict": verdict}


@dataclass
class KernelSpec:
    variant: str = "reversible"
    lam: float = 1.0
    alpha: float = 4.0              # power-law exponent of psi
    L_max: Optional[int] = None     # None: max(4 N_max, tail cutoff)
    psi_csv: Optional[str] = None   # explicit psi table instead of the power law

    def psi(self, N_max: int) -> PsiDensity:
        if self.psi_csv:
            return load_psi_csv(self.psi_csv)
        L = self.L_max or max(4 * N_max, power_law_cutoff(self.alpha, TAIL_TOL))
        return build_power_law_psi(self.alpha, L)

    def build(self, N_max: int) -> BirthKernel:
        if self.variant == "reversible":
            return BirthKernel.reversible(self.lam, self.psi(N_max))
        if self.variant == "contact":
            return BirthKernel.contact(self.lam)
        if self.variant == "uniform":
            return BirthKernel.uniform(self.lam)
        raise InvalidPlan(f"unknown kernel variant {self.variant!r}")


@dataclass
class ExperimentPlan:
    kernel: KernelSpec
    N_grid: list
    start: str = "full"
    trials: int = 1000
    t_cap: float = DEFAULT_T_CAP
    master_seed: int = 0
    regime: str = "auto"
    cn_rule: str = "loglog"

    def validate(self) -> None:
        g = list(self.N_grid)
        if not g or any(int(n) != n or n < 1 for n in g):
            raise InvalidPlan("N_grid must be positive integers")
        if any(b <= a for a, b in zip(g, g[1:])):
            raise InvalidPlan("N_grid must be strictly increasing")
        if self.start not in ("full", "pi"):
            raise InvalidPlan(f"start must be 'full' or 'pi', got {self.start!r}")
        if self.start == "pi" and self.kernel.variant != "reversible":
            raise InvalidPlan("start='pi' requires the reversible kernel")
        if self.trials < 30:
            raise InvalidPlan("at least 30 trials are needed for interval estimates")
        if not self.t_cap > 0:
            raise InvalidPlan("t_cap must be positive")
        if self.regime not in REGIMES:
            raise InvalidPlan(f"regime must be one of {REGIMES}")
        c_n(10, self.cn_rule)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LinearFit:
    x_label: str
    y_label: str
    slope: float
    intercept: float
    slope_se: float
    slope_ci: tuple
    r2: float
    residuals: list
    n: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["slope_ci"] = list(self.slope_ci)
        return d


def fit_line(x, y, x_label="x", y_label="y", level=0.95) -> LinearFit:
    """Least-squares line with a t-interval on the slope."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if len(x) < 3:
        raise ValueError("need at least three finite points for a fit")
    res = stats.linregress(x, y)
    q = stats.t.ppf(0.5 + level / 2, len(x) - 2)
    resid = (y - (res.intercept + res.slope * x)).tolist()
    return LinearFit(x_label, y_label, float(res.slope), float(res.intercept),
                     float(res.stderr), (res.slope - q * res.stderr, res.slope + q * res.stderr),
                     float(res.rvalue ** 2), resid, len(x))


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    values: dict = field(default_factory=dict)


@dataclass
class RegimeReport:
    regime: str
    kernel: dict
    plan: dict
    stats: dict                 # N -> SigmaStats
    M: dict                     # N -> M used in bound checks
    fits: dict
    checks: list
    C_N: dict
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        return next(c for c in self.checks if c.name == name)

    def to_dict(self) -> dict:
        return {
            "regime": self.regime, "kernel": self.kernel, "plan": self.plan,
            "per_N": {str(n): s.to_dict() for n, s in self.stats.items()},
            "M": {str(n): m for n, m in self.M.items()},
            "fits": {k: f.to_dict() for k, f in self.fits.items()},
            "checks": [asdict(c) for c in self.checks],
            "C_N": {str(n): c for n, c in self.C_N.items()},
            "extras": self.extras,
            "passed": self.passed,
        }


def _resolve_regime(plan: ExperimentPlan, kernel: BirthKernel, M_max: float) -> str:
    r = plan.regime
    if r == "auto":
        if kernel.variant == "reversible" and kernel.lam == 1 and plan.start == "pi":
            return "critical"
        if M_max < 1:
            return "subcritical"
        if kernel.variant == "reversible" and kernel.lam > 1:
            return "supercritical"
        return "unclassified"
    if r == "subcritical" and not M_max < 1:
        raise RegimeMismatch(f"subcritical sweep requested but M = {M_max:.6g} >= 1")
    if r == "critical" and not (kernel.variant == "reversible" and kernel.lam == 1
                                and plan.start == "pi"):
        raise RegimeMismatch("critical sweep needs the reversible kernel at lambda = 1 started from pi")
    if r == "supercritical" and not (kernel.variant == "reversible" and kernel.lam > 1):
        raise RegimeMismatch("supercritical sweep needs the reversible kernel with lambda > 1")
    return r


def _m_bound(M: float, N: int) -> tuple[str, float]:
    if M < 1 - M_ONE_TOL:
        return "log", 2 * math.log(N) / (1 - M)
    if abs(M - 1) <= M_ONE_TOL:
        return "NlogN", N * math.log(N)
    try:
        return "exp", M ** (N + 1) / (M - 1) ** 2
    except OverflowError:
        return "exp", math.inf


def run_sweep(plan: ExperimentPlan) -> RegimeReport:
    """Hitting-time statistics over the N grid, scaling fits and regime checks."""
    plan.validate()
    Ns = [int(n) for n in plan.N_grid]
    kernel = plan.kernel.build(max(Ns))
    if kernel.variant == "reversible":
        if kernel.psi.L_max < max(Ns) - 1:
            raise InvalidPlan(f"L_max = {kernel.psi.L_max} too small for N = {max(Ns)}")
    Ms = {N: compute_M(kernel, N).M for N in Ns if N >= 2}
    M_max = max(Ms.values()) if Ms else 0.0
    regime = _resolve_regime(plan, kernel, M_max)

    per_N: dict[int, SigmaStats] = {}
    for N in Ns:
        try:
            per_N[N] = _estimate(kernel, N, plan)
        except RegimeTooSlow as exc:
            per_N[N] = exc.stats
    cns = {N: c_n(N, plan.cn_rule) for N in Ns}

    x_logN = np.log(Ns)
    means = np.array([per_N[N].mean for N in Ns])
    medians = np.array([per_N[N].median for N in Ns])
    fits = {}
    for name, x, y, xl, yl in (
            ("mean_vs_logN", x_logN, means, "log N", "mean sigma"),
            ("logmedian_vs_logN", x_logN, np.log(medians), "log N", "log median sigma"),
            ("logmedian_vs_N", np.array(Ns, float), np.log(medians), "N", "log median sigma")):
        try:
            fits[name] = fit_line(x, y, xl, yl)
        except ValueError:
            pass

    checks: list[Check] = []
    extras: dict = {}
    if plan.start == "full":
        ok, vals = True, {}
        for N in Ns:
            if N < 2:
                continue
            kind, b = _m_bound(Ms[N], N)
            st = per_N[N]
            hit = bool(st.n_capped == 0 and st.mean <= b + 3 * st.se)
            vals[str(N)] = {"mean": st.mean, "se": st.se, "bound": b, "kind": kind, "ok": hit}
            ok &= hit
        checks.append(Check("m_bound", ok, "mean sigma <= M-regime bound + 3 SE at every N", vals))

    Nmax = Ns[-1]
    top = per_N[Nmax]
    if regime == "subcritical":
        f = fits.get("mean_vs_logN")
        checks.append(Check("log_fit_r2", bool(f and f.r2 >= 0.95),
                            "mean sigma linear in log N with R^2 >= 0.95",
                            {"r2": f.r2 if f else math.nan, "slope": f.slope if f else math.nan}))
        p = top.prob_above(0.5 * math.log(Nmax))
        checks.append(Check("log_lower_bound", bool(p >= 0.99),
                            "P(sigma > 0.5 log N) >= 0.99 at the largest N", {"p": p}))
        t = cns[Nmax] * math.log(Nmax)
        checks.append(Check("log_in_probability", True,
                            "P(sigma <= C_N log N) at the largest N (reported)",
                            {"p": 1 - top.prob_above(t), "t": t}))
    elif regime == "critical":
        C = cns[Nmax]
        lo_t, hi_t = Nmax / C, C * Nmax ** 2
        p_lo, p_hi = top.prob_below(lo_t), top.prob_above(hi_t)
        if math.isnan(p_hi):
            # capped trials are counted as exceeding the threshold
            caps = np.array([s.capped for s in top.samples])
            p_hi = float(np.mean(caps | (top.sigmas > hi_t)))
        checks.append(Check("critical_lower_tail", bool(p_lo <= 0.1),
                            "P(sigma < N/C_N) <= 0.1 at the largest N", {"p": p_lo, "t": lo_t}))
        checks.append(Check("critical_upper_tail", bool(p_hi <= 0.1),
                            "P(sigma > C_N N^2) <= 0.1 at the largest N", {"p": p_hi, "t": hi_t}))
        f = fits.get("logmedian_vs_logN")
        s = f.slope if f else math.nan
        checks.append(Check("critical_slope", bool(1.0 <= s <= 2.2),
                            "log-log slope of median sigma in [1.0, 2.2]", {"slope": s}))
    elif regime == "supercritical":
        extras["contact_comparison"] = contact_comparison(kernel)
        f = fits.get("logmedian_vs_N")
        lo = f.slope_ci[0] if f else math.nan
        checks.append(Check("exp_slope", bool(f and f.slope > 0 and lo > 0),
                            "log median sigma vs N: positive slope, 95% CI excludes 0",
                            {"slope": f.slope if f else math.nan, "ci_low": lo}))

    bad = []
    for a, b in zip(Ns, Ns[1:]):
        ma, mb = per_N[a], per_N[b]
        if not (np.isfinite(ma.median) and np.isfinite(mb.median)):
            continue
        # overlap of order-statistic intervals counts as within MC error
        if mb.median < ma.median and mb.ci_median[1] < ma.ci_median[0]:
            bad.append([a, b])
    checks.append(Check("median_monotone", not bad, "median sigma nondecreasing in N within MC error",
                        {"violations": bad}))

    return RegimeReport(regime, kernel.describe(), plan.to_dict(), per_N, Ms, fits, checks, cns,
                        extras)


def _estimate(kernel, N, plan) -> SigmaStats:
    samples, _ = run_trials(kernel, N, plan.trials, plan.master_seed, start=plan.start,
                            t_cap=plan.t_cap, key=(N,))
    st = summarize(samples, N, plan.t_cap)
    if st.n_capped == st.trials:
        raise RegimeTooSlow(f"all trials capped at N={N}", st)
    return st


# -- domination by the birth-death chain -------------------------------------

@dataclass
class DominationReport:
    N: int
    M: float
    ts: np.ndarray
    p_nps: np.ndarray
    se_nps: np.ndarray
    p_bd: np.ndarray
    se_bd: np.ndarray
    p_bd_exact: np.ndarray
    ok_sim: np.ndarray
    ok_exact: np.ndarray
    trials: int
    nps_samples: list = field(default_factory=list, repr=False)
    bd_samples: np.ndarray = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return bool(np.all(self.ok_sim))

    @property
    def passed_exact(self) -> bool:
        return bool(np.all(self.ok_exact))

    def to_dict(self) -> dict:
        return {"N": self.N, "M": self.M, "trials": self.trials, "t": self.ts.tolist(),
                "p_nps": self.p_nps.tolist(), "se_nps": self.se_nps.tolist(),
                "p_bd": self.p_bd.tolist(), "se_bd": self.se_bd.tolist(),
                "p_bd_exact": self.p_bd_exact.tolist(), "ok_sim": self.ok_sim.tolist(),
                "ok_exact": self.ok_exact.tolist(), "passed": self.passed,
                "passed_exact": self.passed_exact}


def domination_test(kernel: BirthKernel, N: int, trials: int, ts=None, master_seed: int = 0,
                    n_points: int = 10, exact: bool = True) -> DominationReport:
    """Compare the survival of sigma_N (from the full interval) with that of
    the birth-death chain with ``alpha = M``.

    ``ts`` defaults to ``n_points`` quantiles of the simulated chain. The check
    at each t is ``P(sigma > t) <= P(tau >= t) + 3 * joint SE``; the exact
    chain survival (matrix exponential) is checked with the particle-system
    SE alone.
    """
    M = compute_M(kernel, N).M if N >= 2 else kernel.lam
    samples, _ = run_trials(kernel, N, trials, master_seed, start="full", t_cap=math.inf, key=(N, 0))
    tau = simulate_bd_many(BdSpec(N, M), trials, master_seed, key=(N, 1))
    if ts is None:
        levels = (np.arange(n_points) + 0.5) / n_points
        ts = np.quantile(tau, levels)
    ts = np.asarray(ts, float)
    nps = survival_curve(samples, ts)
    p_bd = np.array([np.mean(tau >= t) for t in ts])
    se_bd = np.sqrt(p_bd * (1 - p_bd) / len(tau))
    if exact and N <= 400:
        p_ex = bd_survival(BdSpec(N, M), ts)
    else:
        p_ex = np.full(len(ts), np.nan)
    ok_sim = nps.p <= p_bd + 3 * np.sqrt(nps.se ** 2 + se_bd ** 2)
    ok_ex = np.where(np.isnan(p_ex), True, nps.p <= p_ex + 3 * nps.se + 1e-12)
    return DominationReport(N, M, ts, nps.p, nps.se, p_bd, se_bd, p_ex, ok_sim, ok_ex, trials,
                            samples, tau)


# -- lower tail bound from the partition function -----------------------------

@dataclass
class TailBoundReport:
    N: int
    lam: float
    log_K: float
    ts: np.ndarray
    p_emp: np.ndarray
    bound: np.ndarray
    se: np.ndarray
    vacuous: np.ndarray
    ok: np.ndarray
    trials: int
    lower_tail_t: float
    lower_tail_p: float
    log_K_bruteforce: Optional[float] = None

    @property
    def passed(self) -> bool:
        usable = ~self.vacuous
        return bool(usable.any() and np.all(self.ok[usable]))

    def to_dict(self) -> dict:
        return {"N": self.N, "lambda": self.lam, "log_K": self.log_K, "t": self.ts.tolist(),
                "p_emp": self.p_emp.tolist(), "bound": self.bound.tolist(), "se": self.se.tolist(),
                "vacuous": self.vacuous.tolist(), "ok": self.ok.tolist(), "trials": self.trials,
                "lower_tail_t": self.lower_tail_t, "lower_tail_p": self.lower_tail_p,
                "log_K_bruteforce": self.log_K_bruteforce, "passed": self.passed}


def lower_bound_test(psi: PsiDensity, N: int, trials: int, t_grid=None, lam: float = 1.0,
                     master_seed: int = 0, level: float = 0.05, cn_rule: str = "loglog",
                     samples_out: Optional[list] = None) -> TailBoundReport:
    """Check ``P(sigma_N < t) <= 2 t N / K_N`` from the reversible measure.

    ``t_grid`` defaults to the single time where the bound equals ``level``.
    The SE is the binomial SE at the bound. Points where the bound is at least
    1 are flagged vacuous and excluded.
    """
    kernel = BirthKernel.reversible(lam, psi)
    w = compute_weights(N, lam, psi)
    K = w.K
    if t_grid is None:
        t_grid = [level * K / (2 * N)]
    ts = np.asarray(t_grid, float)
    if np.any(ts <= 0):
        raise ValueError("times must be positive")
    lt = N / c_n(N, cn_rule)
    t_cap = max(float(ts.max()), lt) * (1 + 1e-9)
    samples, _ = run_trials(kernel, N, trials, master_seed, start="pi", t_cap=t_cap,
                            key=(N,), weights=w)
    if samples_out is not None:
        samples_out.extend(samples)
    sig = np.array([s.sigma for s in samples])
    cap = np.array([s.capped for s in samples])
    below = lambda t: float(np.mean(~cap & (sig < t)))
    p = np.array([below(t) for t in ts])
    b = 2 * ts * N / K
    vac = b >= 1
    bb = np.clip(b, 0, 1)
    se = np.sqrt(bb * (1 - bb) / trials)
    ok = (p <= b + 3 * se) & ~vac
    lkb = brute_force_log_K(N, lam, psi) if N <= 12 else None
    return TailBoundReport(N, lam, w.log_K, ts, p, b, se, vac, ok, trials, lt, below(lt), lkb)


# -- edge diffusion at criticality -------------------------------------------

@dataclass
class EdgeReport:
    W: int
    x0: int
    T: float
    times: np.ndarray
    var: np.ndarray
    mean: np.ndarray
    D_hat: float
    fit: LinearFit
    drift_z: float           # mean(r_T - r_0) / sd(r_T - r_0)
    drift_band: float        # 3 / sqrt(trials)
    n_valid: int
    n_guard: int
    trials: int
    valid: bool
    displacements: np.ndarray = field(default=None, repr=False)
    probes: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return bool(self.valid and self.D_hat > 0 and self.fit.r2 >= 0.95
                    and abs(self.drift_z) <= self.drift_band)

    def to_dict(self) -> dict:
        return {"W": self.W, "x0": self.x0, "T": self.T, "t": self.times.tolist(),
                "var": self.var.tolist(), "mean": self.mean.tolist(), "D_hat": self.D_hat,
                "fit": self.fit.to_dict(), "drift_z": self.drift_z, "drift_band": self.drift_band,
                "n_valid": self.n_valid, "n_guard": self.n_guard, "trials": self.trials,
                "valid": self.valid, "passed": self.passed}


def edge_diffusion(psi: PsiDensity, W: int = 2000, T: float = 2000.0, trials: int = 100,
                   x0: Optional[int] = None, n_probes: int = 21, master_seed: int = 0,
                   lam: float = 1.0, guard: Optional[int] = None,
                   max_guard_fraction: float = 0.2) -> EdgeReport:
    """Rightmost-particle displacement from a half-line renewal start.

    The renewal configuration fills ``{1..x0}`` with its edge at ``x0``
    (default ``3W/4``); sites ``x0+1..W`` start vacant so the edge can move
    right. A trial is contaminated if its edge leaves ``[guard, W - guard/4]``
    (default ``guard = W/4``); more than ``max_guard_fraction`` contaminated
    trials invalidate the run.
    """
    x0 = int(3 * W // 4) if x0 is None else int(x0)
    guard = W // 4 if guard is None else int(guard)
    hi_guard = W - guard // 4
    if not guard < x0 < hi_guard:
        raise ValueError("x0 must lie strictly inside the guard bands")
    kernel = BirthKernel.reversible(lam, psi)
    tables = rate_tables(kernel, W)
    times = np.linspace(0.0, T, n_probes)
    index = None
    disp, probes, guard_hits = [], [], 0
    for i in range(trials):
        seed = trial_seed(master_seed, i, W)
        rng = make_rng(seed)
        cfg = sample_renewal_halfline(psi, x0, rng, N=W)
        if index is None:
            index = GapRateIndex(cfg, kernel, tables)
        pr = TrajectoryProbe(times)
        run_hitting(cfg, kernel, rng, t_cap=T, probe=pr, index=index)
        probes.append(pr)
        r = pr.rightmost
        if np.any(r < guard) or np.any(r > hi_guard):
            guard_hits += 1
            continue
        disp.append(r - x0)
    d = np.array(disp, float).reshape(-1, len(times))
    n_valid = len(d)
    valid = guard_hits <= max_guard_fraction * trials and n_valid >= 3
    if n_valid >= 2:
        var = d.var(axis=0, ddof=1)
        mean = d.mean(axis=0)
    else:
        var = mean = np.full(len(times), np.nan)
    fit = fit_line(times, var, "t", "Var(r_t - r_0)")
    sd_T = math.sqrt(var[-1]) if var[-1] > 0 else math.nan
    drift_z = float(mean[-1] / sd_T) if sd_T == sd_T else math.nan
    return EdgeReport(W, x0, float(T), times, var, mean, fit.slope, fit, drift_z,
                      3 / math.sqrt(max(n_valid, 1)), n_valid, guard_hits, trials, bool(valid),
                      d, probes)
