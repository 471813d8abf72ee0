import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from npsim.kernel import BirthKernel, CutoffExceeded, beta, beta_boundary
from npsim.state import (Configuration, IllegalEvent, apply_birth, apply_death, brute_force_rates,
                         build_index, gap_birth_rate, rate_tables)


def kernels(psi):
    return [BirthKernel.reversible(1.0, psi), BirthKernel.reversible(0.37, psi),
            BirthKernel.contact(0.8), BirthKernel.uniform(1.3)]


# -- Configuration --------------------------------------------------------------

def test_configuration_serialisation():
    c = Configuration(6, [5, 2])
    assert c.sites == [2, 5] and len(c) == 2
    assert c.to_bitstring() == "010010"
    assert Configuration.from_bitstring("010010") == c
    assert Configuration.from_json(c.to_json()) == c
    assert Configuration(3).empty and Configuration(3).to_bitstring() == "000"


@pytest.mark.parametrize("sites", [[0], [7], [2, 2]])
def test_configuration_rejects_bad_sites(sites):
    with pytest.raises(ValueError):
        Configuration(6, sites)


def test_neighbour_distances():
    c = Configuration(6, [2, 5])
    assert c.neighbours(3) == (1, 2)
    assert c.neighbours(1) == (float("inf"), 1)
    assert c.neighbours(6) == (1, float("inf"))


# -- aggregated gap rates ---------------------------------------------------------

def test_gap_rate_examples(psi4):
    k = BirthKernel.reversible(1.0, psi4)
    assert gap_birth_rate(k, "interior", 1) == pytest.approx(16 * psi4(1), rel=1e-14)
    assert gap_birth_rate(k, "left", 2) == pytest.approx(psi4(1) + psi4(2), rel=1e-14)
    assert gap_birth_rate(k, "left", 2) == pytest.approx(0.981684, abs=1e-6)
    z = BirthKernel.reversible(0.0, psi4)
    assert gap_birth_rate(z, "interior", 5) == 0.0 and gap_birth_rate(z, "right", 5) == 0.0
    with pytest.raises(CutoffExceeded):
        gap_birth_rate(k, "interior", 64)


def test_boundary_gap_any_kernel(psi4):
    for k in kernels(psi4):
        assert gap_birth_rate(k, "left", 2) == pytest.approx(beta_boundary(k, 2) + beta_boundary(k, 1))


def test_reversible_interior_matches_termwise(psi4):
    k = BirthKernel.reversible(2.2, psi4)
    for g in range(1, 62):
        termwise = sum(beta(k, x, g + 1 - x) for x in range(1, g + 1))
        assert gap_birth_rate(k, "interior", g) == pytest.approx(termwise, rel=1e-12)


def test_rate_tables_cumulative(psi4):
    k = BirthKernel.reversible(1.0, psi4)
    t = rate_tables(k, 20)
    for g in range(1, 19):
        seg = t.int_cum[t.int_off[g]: t.int_off[g] + g]
        assert np.all(np.diff(seg) >= 0)
        assert seg[-1] == pytest.approx(t.int_rate[g])
    assert t.bnd_cum[3] == pytest.approx(sum(beta_boundary(k, d) for d in (1, 2, 3)))


# -- index construction --------------------------------------------------------------

def test_full_configuration_index(psi4):
    idx = build_index(Configuration.full(10), BirthKernel.reversible(1.0, psi4))
    assert idx.total_birth == 0.0 and idx.total_death == 10 and idx.gaps() == []


def test_singleton_gaps(psi4):
    idx = build_index(Configuration(9, [4]), BirthKernel.reversible(1.0, psi4))
    gaps = idx.gaps()
    assert [(g.kind, g.length) for g in gaps] == [("left", 3), ("right", 5)]


def test_empty_index_has_no_rates(psi4):
    idx = build_index(Configuration(5), BirthKernel.reversible(1.0, psi4))
    assert idx.total_birth == 0.0 and idx.total_death == 0


def test_brute_force_examples(psi4):
    k = BirthKernel.reversible(1.0, psi4)
    rates = brute_force_rates(Configuration(6, [2, 5]), k)
    assert set(rates) == {1, 3, 4, 6}
    assert rates[3] == beta(k, 1, 2)
    assert rates[1] == beta_boundary(k, 1)
    idx = build_index(Configuration(6, [2, 5]), k)
    assert idx.total_birth == pytest.approx(sum(rates.values()), rel=1e-12)


config_st = st.integers(1, 2 ** 12 - 1).map(lambda m: Configuration(12, [i + 1 for i in range(12) if m >> i & 1]))


@settings(max_examples=80, deadline=None)
@given(config=config_st, which=st.integers(0, 3))
def test_total_birth_matches_brute_force(psi4, config, which):
    k = kernels(psi4)[which]
    idx = build_index(config, k)
    bf = brute_force_rates(config, k)
    assert idx.total_birth == pytest.approx(sum(bf.values()), rel=1e-9, abs=1e-12)
    assert idx.total_death == len(config)
    # gaps partition the vacant sites
    assert len(config) + sum(g.length for g in idx.gaps()) == 12
    assert idx.sites() == config.sites


# -- births and deaths ---------------------------------------------------------------

def test_death_to_empty(psi4):
    c = Configuration(9, [5])
    idx = build_index(c, BirthKernel.reversible(1.0, psi4))
    apply_death(c, idx, 5)
    assert c.empty and idx.total_birth == 0.0 and idx.total_death == 0


def test_death_merges_gaps(psi4):
    c = Configuration(10, [3, 7])
    idx = build_index(c, BirthKernel.reversible(1.0, psi4))
    apply_death(c, idx, 7)
    assert c.sites == [3]
    assert [(g.kind, g.length) for g in idx.gaps()] == [("left", 2), ("right", 7)]


def test_birth_splits_gap(psi4):
    c = Configuration(6, [3])
    idx = build_index(c, BirthKernel.reversible(1.0, psi4))
    apply_birth(c, idx, 5)
    assert c.sites == [3, 5]
    assert [(g.kind, g.length) for g in idx.gaps()] == [("left", 2), ("interior", 1), ("right", 1)]


def test_illegal_events(psi4):
    k = BirthKernel.reversible(1.0, psi4)
    c = Configuration(6, [3])
    idx = build_index(c, k)
    with pytest.raises(IllegalEvent):
        apply_death(c, idx, 4)
    with pytest.raises(IllegalEvent):
        apply_birth(c, idx, 3)
    e = Configuration(6)
    with pytest.raises(IllegalEvent):
        apply_birth(e, build_index(e, k), 2)


def _random_walk(config, idx, rng, steps):
    N = config.N
    for _ in range(steps):
        x = int(rng.integers(1, N + 1))
        if x in config:
            apply_death(config, idx, x)
        elif not config.empty:
            apply_birth(config, idx, x)
        else:
            # empty set is absorbing; restart from a singleton
            config.sites.append(x)
            idx.reset(config)


@settings(max_examples=40, deadline=None)
@given(config=config_st, seed=st.integers(0, 2 ** 32), steps=st.integers(1, 300),
       which=st.integers(0, 3))
def test_incremental_equals_rebuild(psi4, config, seed, steps, which):
    k = kernels(psi4)[which]
    idx = build_index(config, k)
    _random_walk(config, idx, np.random.default_rng(seed), steps)
    assert idx.equivalent(build_index(config, k))
    assert idx.total_birth == pytest.approx(sum(brute_force_rates(config, k).values()),
                                            rel=1e-9, abs=1e-12)


def test_long_sequence_equals_rebuild(psi4_long):
    # 10^4 updates, enough to pass through periodic tree rebuilds
    k = BirthKernel.reversible(1.0, psi4_long)
    c = Configuration(200, range(1, 201, 3))
    idx = build_index(c, k)
    _random_walk(c, idx, np.random.default_rng(5), 10_000)
    assert idx.equivalent(build_index(c, k))
    tree = idx.sum_index
    # Fenwick prefix over all owners equals the gap-rate sum
    assert idx.total_birth == pytest.approx(sum(idx.gap_rates), rel=1e-9)
    assert tree.shape[0] == 202


def test_copy_is_independent(psi4):
    k = BirthKernel.reversible(1.0, psi4)
    c = Configuration(8, [2, 6])
    idx = build_index(c, k)
    dup = idx.copy()
    apply_death(c, idx, 2)
    assert dup.sites() == [2, 6] and idx.sites() == [6]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=70), st.floats(0.0, 1.0))
def test_fenwick_prefix_search_matches_cumsum(w, frac):
    from npsim import _core
    w = np.array(w)
    tree = np.zeros(len(w) + 1)
    _core.fw_build(tree, w)
    c = np.cumsum(w)
    for k in range(len(w)):
        s, i = 0.0, k + 1
        while i > 0:
            s += tree[i]
            i -= i & (-i)
        assert s == pytest.approx(c[k], rel=1e-12, abs=1e-12)
    if c[-1] > 0:
        u = frac * c[-1] * (1 - 1e-12)
        k = _core.fw_search(tree, u)
        assert k < len(w) and w[k] > 0
        assert (c[k - 1] if k else 0.0) <= u * (1 + 1e-12) + 1e-12 and u < c[k] * (1 + 1e-12)
