"""Renewal densities and birth-rate kernels.

A nearest particle system on ``{1..N}`` is specified by a birth kernel
``beta(l, r)``: the rate at which a vacant site whose nearest particles sit at
distances ``l`` (left) and ``r`` (right) becomes occupied. Distances to a
missing neighbour are infinite and handled by :func:`beta_boundary`.

Three kernel families are provided:

* ``reversible``: ``lam * psi(l) psi(r) / psi(l + r)`` with boundary rate
  ``lam * psi(l)``, built on a renewal density ``psi``;
* ``contact``: the one-dimensional contact process;
* ``uniform``: ``lam / (l + r - 1)`` with zero boundary rate.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "CutoffExceeded",
    "PsiDensity",
    "BirthKernel",
    "CheckResult",
    "ValidationReport",
    "MReport",
    "build_power_law_psi",
    "build_geometric_psi",
    "psi_from_values",
    "power_law_cutoff",
    "validate_psi",
    "beta",
    "beta_boundary",
    "compute_M",
    "subcritical_threshold",
    "load_psi_csv",
    "save_psi_csv",
]

EPS = np.finfo(float).eps
NORMALIZATION_TOL = 1e-12
VARIANTS = ("reversible", "contact", "uniform")


class CutoffExceeded(ValueError):
    """Raised when a kernel is evaluated beyond the truncation of its density."""


@dataclass(frozen=True)
class PsiDensity:
    """A renewal density on the positive integers, truncated at ``L_max``.

    ``values[n - 1]`` holds ``psi(n)``. The values are *not* renormalized after
    truncation; the mass beyond the cutoff is carried in ``tail_mass``.
    """

    values: np.ndarray
    tail_mass: float
    second_moment: float
    label: str = "custom"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def L_max(self) -> int:
        return len(self.values)

    def __call__(self, n):
        n = np.asarray(n)
        if np.any(n < 1) or np.any(n > self.L_max):
            raise CutoffExceeded(f"psi evaluated outside 1..{self.L_max}")
        return self.values[n - 1]

    @property
    def mean(self) -> float:
        """First moment ``sum n psi(n)`` over the support."""
        n = np.arange(1, self.L_max + 1)
        return float(np.sum(n * self.values))

    @property
    def log_values(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.values)

    def ratios(self) -> np.ndarray:
        """``psi(n) / psi(n + 1)`` for ``n = 1..L_max-1``."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.values[:-1] / self.values[1:]


@lru_cache(maxsize=32)
def _power_sum(alpha: float, start: int, n_terms: int) -> tuple[float, float]:
    """Sum ``n**-alpha`` over ``n >= start``; return (value, absolute error bound).

    Terms up to ``n_terms`` are summed directly (smallest first); the remainder
    is bracketed by the integrals over ``[K+1, inf)`` and ``[K, inf)`` and
    estimated by their midpoint.
    """
    k = float(max(n_terms, start - 1))
    lo = (k + 1.0) ** (1.0 - alpha) / (alpha - 1.0)
    hi = k ** (1.0 - alpha) / (alpha - 1.0)
    head = 0.0
    if start <= n_terms:
        n = np.arange(n_terms, start - 1, -1, dtype=float)
        head = float(np.sum(n ** -alpha))
    rounding = 4.0 * math.log2(n_terms + 1) * EPS * head
    return head + 0.5 * (lo + hi), 0.5 * (hi - lo) + rounding


def build_power_law_psi(alpha: float, L_max: int, tol: float = 1e-12,
                        n_terms: int = 10**7) -> PsiDensity:
    """Power-law density ``psi(n) = c n**-alpha`` truncated at ``L_max``.

    ``c`` normalizes the infinite sum; it is computed by direct summation of
    ``n_terms`` terms plus an integral tail estimate, and ``tol`` bounds the
    absolute error of that sum.
    """
    if not alpha > 3:
        raise ValueError(f"alpha must exceed 3 for a finite second moment, got {alpha}")
    if L_max < 2:
        raise ValueError("L_max must be at least 2")
    total, err = _power_sum(alpha, 1, max(n_terms, L_max))
    if err > tol:
        raise ValueError(
            f"normalization error {err:.3g} exceeds tol={tol:.3g}; "
            "tolerance unattainable in double precision")
    c = 1.0 / total
    n = np.arange(1, L_max + 1, dtype=float)
    values = c * n ** -alpha
    # tail computed directly rather than by 1 - sum(values) to avoid cancellation
    tail, _ = _power_sum(alpha, L_max + 1, max(n_terms, L_max))
    tail_mass = c * tail
    second = float(np.sum(n * n * values))
    return PsiDensity(values, tail_mass, second, label=f"power(alpha={alpha:g})")


def power_law_cutoff(alpha: float, tail_tol: float, at_least: int = 2) -> int:
    """Smallest convenient ``L_max`` whose power-law tail mass is below ``tail_tol``."""
    # tail ~ c L^(1-alpha)/(alpha-1) with c <= 1
    L = int(math.ceil((1.0 / ((alpha - 1.0) * tail_tol)) ** (1.0 / (alpha - 1.0))))
    return max(L, at_least)


def build_geometric_psi(p: float, L_max: int) -> PsiDensity:
    """Geometric density ``(1 - p) p**(n-1)``. Violates the ratio-to-one condition."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    n = np.arange(1, L_max + 1, dtype=float)
    values = (1.0 - p) * p ** (n - 1)
    tail = p ** L_max
    return PsiDensity(values, tail, float(np.sum(n * n * values)), label=f"geometric(p={p:g})")


def psi_from_values(values, tail_mass: Optional[float] = None, label: str = "custom") -> PsiDensity:
    """Wrap explicit ``psi(1..L)`` values; the tail defaults to ``1 - sum``."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or len(v) < 1:
        raise ValueError("psi values must be a non-empty 1-d array")
    if tail_mass is None:
        tail_mass = max(0.0, 1.0 - math.fsum(v))
    n = np.arange(1, len(v) + 1, dtype=float)
    return PsiDensity(v, float(tail_mass), float(np.sum(n * n * v)), label=label)


def load_psi_csv(path) -> PsiDensity:
    """Read a two-column ``n, psi(n)`` CSV (header optional, n must run 1..L)."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append((int(rec[0]), float(rec[1])))
            except ValueError:
                if rows:
                    raise
                continue  # header line
    rows.sort()
    ns = [r[0] for r in rows]
    if ns != list(range(1, len(ns) + 1)):
        raise ValueError(f"{path}: n must run contiguously from 1")
    return psi_from_values([r[1] for r in rows], label=Path(path).name)


def save_psi_csv(psi: PsiDensity, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "psi"])
        for n, v in enumerate(psi.values, start=1):
            w.writerow([n, repr(float(v))])


# -- validation ---------------------------------------------------------------

@dataclass
class CheckResult:
    passed: bool
    index: Optional[int] = None
    detail: str = ""


@dataclass
class ValidationReport:
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failures(self) -> list[str]:
        return [k for k, c in self.checks.items() if not c.passed]

    def to_dict(self) -> dict:
        return {k: {"passed": c.passed, "index": c.index, "detail": c.detail}
                for k, c in self.checks.items()}


def validate_psi(psi: PsiDensity, tail_tol: Optional[float] = None,
                 limit_fraction: float = 0.1, moment_tol: float = 1e-3) -> ValidationReport:
    """Check the standing assumptions on a truncated density.

    Failures are reported with the first violating ``n`` rather than raised.
    The ratio-to-one condition cannot be decided on a finite truncation; it is
    judged by requiring the last ratio excess ``r(L-1) - 1`` to have shrunk to
    at most ``limit_fraction`` of the first excess ``r(1) - 1``.
    """
    rep = ValidationReport()
    v = psi.values

    bad = np.flatnonzero(~(v > 0))
    rep.checks["positive"] = CheckResult(
        bad.size == 0, int(bad[0]) + 1 if bad.size else None,
        "" if bad.size == 0 else f"psi({bad[0] + 1}) = {v[bad[0]]!r}")

    total = math.fsum(v) + psi.tail_mass
    rep.checks["normalized"] = CheckResult(
        abs(total - 1.0) <= NORMALIZATION_TOL and psi.tail_mass >= 0,
        detail=f"sum + tail = {total!r}")

    r = psi.ratios()
    if len(r) < 2:
        rep.checks["ratio_monotone"] = CheckResult(False, detail="truncation too short")
        rep.checks["ratio_limit"] = CheckResult(False, detail="truncation too short")
    else:
        # r(n) >= r(n+1) >= 1, with a relative slack for rounding
        slack = 8 * EPS * np.abs(r[1:])
        viol = np.flatnonzero(~((r[:-1] + slack >= r[1:]) & (r[1:] >= 1 - slack)))
        if np.any(~(r[:1] >= 1)):
            viol = np.concatenate([[-1], viol])
        rep.checks["ratio_monotone"] = CheckResult(
            viol.size == 0, int(viol[0]) + 2 if viol.size else None,
            "" if viol.size == 0 else "psi(n)/psi(n+1) not nonincreasing to >= 1")
        first, last = r[0] - 1.0, r[-1] - 1.0
        ok = bool(np.isfinite(first) and first > 0 and last <= limit_fraction * first)
        rep.checks["ratio_limit"] = CheckResult(
            ok, None if ok else psi.L_max - 1,
            f"ratio excess {first:.4g} -> {last:.4g}")

    n = np.arange(1, psi.L_max + 1, dtype=float)
    last_term = n[-1] ** 2 * v[-1]
    ok = bool(psi.second_moment > 0 and last_term <= moment_tol * psi.second_moment)
    rep.checks["second_moment"] = CheckResult(
        ok, None if ok else psi.L_max,
        f"sum n^2 psi = {psi.second_moment:.6g}, last term {last_term:.3g}")

    if tail_tol is not None:
        rep.checks["tail"] = CheckResult(
            0 <= psi.tail_mass <= tail_tol,
            detail=f"tail_mass = {psi.tail_mass:.3g} (tol {tail_tol:.3g})")
    return rep


# -- kernels ------------------------------------------------------------------

@dataclass(frozen=True)
class BirthKernel:
    """Birth-rate kernel. Immutable, so safe to share between replicas."""

    variant: str
    lam: float
    psi: Optional[PsiDensity] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if self.variant == "reversible" and self.psi is None:
            raise ValueError("reversible kernel needs a psi density")

    @classmethod
    def reversible(cls, lam: float, psi: PsiDensity) -> "BirthKernel":
        return cls("reversible", float(lam), psi)

    @classmethod
    def contact(cls, lam: float) -> "BirthKernel":
        return cls("contact", float(lam))

    @classmethod
    def uniform(cls, lam: float) -> "BirthKernel":
        return cls("uniform", float(lam))

    def scaled(self, factor: float) -> "BirthKernel":
        return replace(self, lam=self.lam * factor)

    def with_lambda(self, lam: float) -> "BirthKernel":
        return replace(self, lam=float(lam))

    @property
    def max_distance(self) -> Optional[int]:
        return self.psi.L_max if self.variant == "reversible" else None

    def describe(self) -> dict:
        d = {"variant": self.variant, "lambda": self.lam}
        if self.psi is not None:
            d["psi"] = self.psi.label
            d["L_max"] = self.psi.L_max
        return d


def beta(kernel: BirthKernel, l: int, r: int) -> float:
    """Birth rate at a vacant site with nearest particles at distances ``l``, ``r``."""
    if l < 1 or r < 1:
        raise ValueError("distances must be >= 1")
    lam = kernel.lam
    if kernel.variant == "reversible":
        psi = kernel.psi
        if l + r > psi.L_max:
            raise CutoffExceeded(f"l + r = {l + r} exceeds L_max = {psi.L_max}")
        v = psi.values
        a, b = (l, r) if l <= r else (r, l)   # fixed order keeps the rate exactly symmetric
        return lam * v[a - 1] * v[b - 1] / v[l + r - 1]
    if kernel.variant == "contact":
        if l == 1 and r == 1:
            return 2.0 * lam
        if l == 1 or r == 1:
            return lam
        return 0.0
    return lam / (l + r - 1)


def beta_boundary(kernel: BirthKernel, l: int) -> float:
    """One-sided rate ``beta(l, inf)`` for a site with no particle on one side."""
    if l < 1:
        raise ValueError("distance must be >= 1")
    if kernel.variant == "reversible":
        if l > kernel.psi.L_max:
            raise CutoffExceeded(f"l = {l} exceeds L_max = {kernel.psi.L_max}")
        return kernel.lam * kernel.psi.values[l - 1]
    if kernel.variant == "contact":
        return kernel.lam if l == 1 else 0.0
    # limit of lam/(l + r - 1) as r -> inf
    return 0.0


def interior_weights(kernel: BirthKernel, g: int) -> np.ndarray:
    """Per-site rates ``beta(j, g + 1 - j)``, ``j = 1..g``, across an interior gap."""
    j = np.arange(1, g + 1)
    lam = kernel.lam
    if kernel.variant == "reversible":
        v = kernel.psi.values
        if g + 1 > kernel.psi.L_max:
            raise CutoffExceeded(f"gap {g} needs psi({g + 1}) beyond L_max = {kernel.psi.L_max}")
        a, b = np.minimum(j, g + 1 - j), np.maximum(j, g + 1 - j)
        return lam * v[a - 1] * v[b - 1] / v[g]
    if kernel.variant == "contact":
        w = np.zeros(g)
        if g == 1:
            w[0] = 2.0 * lam
        else:
            w[0] = w[-1] = lam
        return w
    return np.full(g, lam / g)


def boundary_weights(kernel: BirthKernel, n: int) -> np.ndarray:
    """``beta(d, inf)`` for ``d = 1..n``."""
    if kernel.variant == "reversible":
        if n > kernel.psi.L_max:
            raise CutoffExceeded(f"distance {n} exceeds L_max = {kernel.psi.L_max}")
        return kernel.lam * kernel.psi.values[:n].copy()
    w = np.zeros(n)
    if kernel.variant == "contact" and n >= 1:
        w[0] = kernel.lam
    return w


def pair_sums(kernel: BirthKernel, N: int) -> np.ndarray:
    """``S[n] = sum_{l + r = n} beta(l, r)`` for ``n = 2..N`` (index ``n - 2``)."""
    return np.array([interior_weights(kernel, n - 1).sum() for n in range(2, N + 1)])


@dataclass
class MReport:
    M: float
    interior_max: float
    argmax_n: int
    boundary_sum: float
    attained_by: str  # "interior" or "boundary"
    n_range: tuple

    def __float__(self):
        return float(self.M)


def compute_M(kernel: BirthKernel, N: int) -> MReport:
    """Largest per-gap aggregate birth rate, interior or boundary, on ``{1..N}``.

    Interior sums are scanned for ``2 <= n <= N`` and the boundary sum over
    ``l <= N``.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    if kernel.variant == "reversible" and N > kernel.psi.L_max:
        raise CutoffExceeded(f"N = {N} exceeds L_max = {kernel.psi.L_max}")
    s = pair_sums(kernel, N)
    k = int(np.argmax(s))
    bsum = float(boundary_weights(kernel, N).sum())
    imax = float(s[k])
    if imax >= bsum:
        return MReport(imax, imax, k + 2, bsum, "interior", (2, N))
    return MReport(bsum, imax, k + 2, bsum, "boundary", (2, N))


def subcritical_threshold(psi: PsiDensity, N: int, return_argmin: bool = False):
    """``min(1, min_n psi(n) / sum_{l+r=n} psi(l) psi(r))`` over ``2 <= n <= N``.

    Below this intensity the reversible kernel has ``M < 1``.
    """
    if N > psi.L_max:
        raise CutoffExceeded(f"N = {N} exceeds L_max = {psi.L_max}")
    v = psi.values
    conv = np.convolve(v[: N - 1], v[: N - 1])[: N - 1]  # conv[k] = sum_{l+r=k+2}
    ratio = v[1:N] / conv
    k = int(np.argmin(ratio))
    lam_star = min(1.0, float(ratio[k]))
    if return_argmin:
        return lam_star, k + 2
    return lam_star
