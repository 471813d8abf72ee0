"""Configurations on ``{1..N}`` and the per-gap birth-rate index.

The index aggregates birth rates over maximal vacant runs ("gaps"). A gap is
owned by the occupied site immediately to its left, or by the left wall
(owner 0) for the left-boundary gap, so that births and deaths touch at most
two owners and a Fenwick tree over owners gives logarithmic sampling.
"""
from __future__ import annotations

import json
import math
from bisect import bisect_left, insort
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from . import _core
from .kernel import BirthKernel, CutoffExceeded, beta, beta_boundary, boundary_weights, interior_weights

__all__ = [
    "IllegalEvent",
    "Configuration",
    "RateTables",
    "Gap",
    "GapRateIndex",
    "rate_tables",
    "gap_birth_rate",
    "build_index",
    "apply_death",
    "apply_birth",
    "brute_force_rates",
]

GAP_KINDS = ("left", "interior", "right")


class IllegalEvent(ValueError):
    """A birth on an occupied site or a death on a vacant one."""


class Configuration:
    """Occupied subset of ``{1..N}``, kept as a sorted list of sites.

    The empty configuration is valid and absorbing.
    """

    __slots__ = ("N", "sites")

    def __init__(self, N: int, sites: Iterable[int] = ()):
        sites = sorted(int(s) for s in sites)
        if N < 1:
            raise ValueError("N must be positive")
        if any(b <= a for a, b in zip(sites, sites[1:])):
            raise ValueError("sites must be distinct")
        if sites and (sites[0] < 1 or sites[-1] > N):
            raise ValueError(f"sites must lie in 1..{N}")
        self.N = int(N)
        self.sites = sites

    @classmethod
    def full(cls, N: int) -> "Configuration":
        return cls(N, range(1, N + 1))

    @classmethod
    def from_bitstring(cls, bits: str) -> "Configuration":
        if not bits or set(bits) - {"0", "1"}:
            raise ValueError(f"not a bitstring: {bits!r}")
        return cls(len(bits), [i + 1 for i, c in enumerate(bits) if c == "1"])

    @classmethod
    def from_mask(cls, mask) -> "Configuration":
        """From a boolean array of length N + 1 whose index 0 is ignored."""
        mask = np.asarray(mask, dtype=bool)
        return cls(len(mask) - 1, np.flatnonzero(mask[1:]) + 1)

    @classmethod
    def from_json(cls, text: str) -> "Configuration":
        d = json.loads(text)
        return cls(d["N"], d["sites"])

    def to_bitstring(self) -> str:
        bits = ["0"] * self.N
        for s in self.sites:
            bits[s - 1] = "1"
        return "".join(bits)

    def to_json(self) -> str:
        return json.dumps({"N": self.N, "sites": self.sites})

    def copy(self) -> "Configuration":
        c = Configuration.__new__(Configuration)
        c.N = self.N
        c.sites = list(self.sites)
        return c

    def __len__(self):
        return len(self.sites)

    def __contains__(self, x):
        i = bisect_left(self.sites, x)
        return i < len(self.sites) and self.sites[i] == x

    def __eq__(self, other):
        return isinstance(other, Configuration) and self.N == other.N and self.sites == other.sites

    def __hash__(self):
        return hash((self.N, tuple(self.sites)))

    def __repr__(self):
        return f"Configuration(N={self.N}, sites={self.sites})"

    @property
    def empty(self) -> bool:
        return not self.sites

    def neighbours(self, x: int) -> tuple[float, float]:
        """Distances from ``x`` to the nearest particle on each side (inf if none)."""
        i = bisect_left(self.sites, x)
        if i < len(self.sites) and self.sites[i] == x:
            i_right = i + 1
        else:
            i_right = i
        left = x - self.sites[i - 1] if i > 0 else math.inf
        right = self.sites[i_right] - x if i_right < len(self.sites) else math.inf
        return left, right


class Gap(NamedTuple):
    kind: str      # "left", "interior" or "right"
    start: int     # first vacant site
    length: int
    rate: float


@dataclass(frozen=True)
class RateTables:
    """Per-length gap rates for one kernel on ``{1..N}``; read-only and shareable."""

    N: int
    int_rate: np.ndarray   # index g = gap length
    int_cum: np.ndarray    # int_cum[int_off[g] + j - 1] = sum_{i<=j} beta(i, g+1-i)
    int_off: np.ndarray
    bnd_cum: np.ndarray    # bnd_cum[g] = sum_{d<=g} beta(d, inf)


_TABLE_CACHE: dict = {}


def rate_tables(kernel: BirthKernel, N: int) -> RateTables:
    """Precompute gap rates for every possible gap length on ``{1..N}``.

    O(N^2) time and memory. Interior gaps have length at most ``N - 2`` and
    boundary gaps at most ``N - 1``.
    """
    key = (id(kernel), kernel.variant, kernel.lam, N)
    hit = _TABLE_CACHE.get(key)
    if hit is not None and hit[0] is kernel:
        return hit[1]
    if kernel.variant == "reversible" and N - 1 > kernel.psi.L_max:
        raise CutoffExceeded(f"N = {N} needs psi up to {N - 1}, L_max = {kernel.psi.L_max}")
    int_off = np.zeros(N + 1, dtype=np.int64)
    for g in range(1, N + 1):
        int_off[g] = int_off[g - 1] + (g - 1)
    size = int(int_off[N] + N)
    int_cum = np.zeros(size)
    int_rate = np.zeros(N + 1)
    for g in range(1, max(N - 1, 1)):
        c = np.cumsum(interior_weights(kernel, g))
        int_cum[int_off[g]: int_off[g] + g] = c
        int_rate[g] = c[-1]
    bnd_cum = np.zeros(N + 1)
    if N > 1:
        bnd_cum[1:N] = np.cumsum(boundary_weights(kernel, N - 1))
        bnd_cum[N] = bnd_cum[N - 1]
    tables = RateTables(N, int_rate, int_cum, int_off, bnd_cum)
    for arr in (int_rate, int_cum, int_off, bnd_cum):
        arr.setflags(write=False)
    if len(_TABLE_CACHE) > 16:
        _TABLE_CACHE.clear()
    _TABLE_CACHE[key] = (kernel, tables)
    return tables


def gap_birth_rate(kernel: BirthKernel, gap_kind: str, g: int) -> float:
    """Aggregate birth rate over a vacant run of length ``g``.

    An interior run of length g lies between particles ``g + 1`` apart; a
    boundary run has a particle on one side only.
    """
    if g < 1:
        raise ValueError("gap length must be >= 1")
    if gap_kind == "interior":
        if kernel.variant == "reversible":
            psi = kernel.psi
            if g + 1 > psi.L_max:
                raise CutoffExceeded(f"gap {g} needs psi({g + 1}), L_max = {psi.L_max}")
            v = psi.values
            conv = float(np.dot(v[:g], v[g - 1::-1]))
            return kernel.lam * conv / v[g]
        return float(sum(beta(kernel, x, g + 1 - x) for x in range(1, g + 1)))
    if gap_kind in ("left", "right"):
        return float(sum(beta_boundary(kernel, j) for j in range(1, g + 1)))
    raise ValueError(f"unknown gap kind {gap_kind!r}")


class GapRateIndex:
    """Aggregated birth rates per gap with a Fenwick tree for sampling.

    Holds the compiled simulator's state arrays for one configuration. One
    index belongs to one replica; the rate tables it points to are shared.
    """

    def __init__(self, config: Configuration, kernel: BirthKernel, tables: RateTables | None = None):
        N = config.N
        self.N = N
        self.kernel = kernel
        self.tables = tables if tables is not None else rate_tables(kernel, N)
        if self.tables.N != N:
            raise ValueError("rate tables built for a different N")
        self.nxt = np.zeros(N + 2, dtype=np.int64)
        self.prv = np.zeros(N + 2, dtype=np.int64)
        self.occ = np.zeros(max(N, 1), dtype=np.int64)
        self.pos = np.full(N + 2, -1, dtype=np.int64)
        self.w = np.zeros(N + 1)
        self.tree = np.zeros(N + 2)
        self.meta = np.zeros(3, dtype=np.int64)
        self.ftot = np.zeros(1)
        self.reset(config)

    def reset(self, config: Configuration) -> None:
        t = self.tables
        _core.init_state(self.N, np.asarray(config.sites, dtype=np.int64), self.nxt, self.prv,
                         self.occ, self.pos, self.w, self.tree, self.meta, self.ftot,
                         t.int_rate, t.bnd_cum)

    def state_args(self):
        return (self.nxt, self.prv, self.occ, self.pos, self.w, self.tree, self.meta, self.ftot)

    @property
    def sum_index(self) -> np.ndarray:
        return self.tree

    @property
    def total_birth(self) -> float:
        return float(_core.total_birth(self.meta, self.ftot))

    @property
    def total_death(self) -> int:
        return int(self.meta[0])

    @property
    def total_rate(self) -> float:
        return self.total_death + self.total_birth

    def sites(self) -> list[int]:
        out = []
        x = int(self.nxt[0])
        while x != self.N + 1:
            out.append(x)
            x = int(self.nxt[x])
        return out

    def configuration(self) -> Configuration:
        return Configuration(self.N, self.sites())

    def gaps(self) -> list[Gap]:
        """All vacant runs of positive length, left to right."""
        out = []
        N = self.N
        if self.meta[0] == 0:
            return [Gap("left", 1, N, 0.0)] if N else []
        a = 0
        while a != N + 1:
            b = int(self.nxt[a])
            length = (b - a - 1) if b != N + 1 else (N - a)
            if length > 0:
                kind = "left" if a == 0 else ("right" if b == N + 1 else "interior")
                out.append(Gap(kind, a + 1, length, float(self.w[a])))
            a = b
        return out

    @property
    def gap_rates(self) -> list[float]:
        return [g.rate for g in self.gaps()]

    def owner_of(self, x: int) -> int:
        """Left owner (0 or an occupied site) of vacant site ``x``."""
        a = x - 1
        while a > 0 and self.pos[a] < 0:
            a -= 1
        return a

    def copy(self) -> "GapRateIndex":
        new = GapRateIndex.__new__(GapRateIndex)
        new.N, new.kernel, new.tables = self.N, self.kernel, self.tables
        for name in ("nxt", "prv", "occ", "pos", "w", "tree", "meta", "ftot"):
            setattr(new, name, getattr(self, name).copy())
        return new

    def equivalent(self, other: "GapRateIndex", rtol: float = 1e-9) -> bool:
        """Same gap structure, and rates equal within ``rtol``."""
        ga, gb = self.gaps(), other.gaps()
        if [(g.kind, g.start, g.length) for g in ga] != [(g.kind, g.start, g.length) for g in gb]:
            return False
        if self.total_death != other.total_death:
            return False
        ra = np.array([g.rate for g in ga])
        rb = np.array([g.rate for g in gb])
        scale = max(1.0, float(np.abs(rb).sum()))
        return (np.allclose(ra, rb, rtol=rtol, atol=rtol * scale)
                and math.isclose(self.total_birth, other.total_birth, rel_tol=rtol, abs_tol=rtol * scale))


def build_index(config: Configuration, kernel: BirthKernel, tables: RateTables | None = None) -> GapRateIndex:
    return GapRateIndex(config, kernel, tables)


def apply_death(config: Configuration, index: GapRateIndex, x: int) -> None:
    """Remove the particle at ``x``; its two flanking gaps merge."""
    if not 1 <= x <= index.N or index.pos[x] < 0:
        raise IllegalEvent(f"death at vacant site {x}")
    t = index.tables
    _core.do_death(x, index.N, *index.state_args(), t.int_rate, t.bnd_cum)
    i = bisect_left(config.sites, x)
    del config.sites[i]


def apply_birth(config: Configuration, index: GapRateIndex, x: int, owner: int | None = None) -> None:
    """Place a particle at vacant ``x``; its gap splits in two.

    Births into the empty configuration are rejected: the empty set is absorbing.
    """
    if not 1 <= x <= index.N or index.pos[x] >= 0:
        raise IllegalEvent(f"birth at occupied or out-of-range site {x}")
    if index.meta[0] == 0:
        raise IllegalEvent("no births from the empty configuration")
    a = index.owner_of(x) if owner is None else owner
    t = index.tables
    _core.do_birth(x, a, index.N, *index.state_args(), t.int_rate, t.bnd_cum)
    insort(config.sites, x)


def brute_force_rates(config: Configuration, kernel: BirthKernel) -> dict[int, float]:
    """Birth rate of every vacant site by direct nearest-particle scan."""
    if config.N > 1000:
        raise ValueError("brute-force oracle limited to N <= 1000")
    occupied = set(config.sites)
    out = {}
    if not occupied:
        return {x: 0.0 for x in range(1, config.N + 1)}
    for x in range(1, config.N + 1):
        if x in occupied:
            continue
        l = next((d for d in range(1, x) if x - d in occupied), None)
        r = next((d for d in range(1, config.N - x + 1) if x + d in occupied), None)
        if l is not None and r is not None:
            out[x] = beta(kernel, l, r)
        else:
            out[x] = beta_boundary(kernel, l if l is not None else r)
    return out
