"""Compiled kernels for the event-driven simulator.

State layout for a system on ``{1..N}`` (all arrays owned by one replica):

``nxt``, ``prv``
    doubly linked list over occupied sites with sentinels ``0`` and ``N + 1``.
``occ``, ``pos``
    dense list of occupied sites and each site's slot in it (-1 if vacant),
    for O(1) uniform selection of the dying particle.
``w``, ``tree``
    birth rate of the vacant run to the right of each *owner* (site 0 or an
    occupied site) and a Fenwick tree over those rates.
``meta``
    ``[n_occupied, n_positive_gaps, updates_since_rebuild]``.
``ftot``
    running total of ``w``.

Rate tables are per kernel and N and shared read-only:
``int_rate[g]`` aggregate rate of an interior gap of length g,
``int_cum[int_off[g] + j - 1]`` cumulative per-site rate within it, and
``bnd_cum[g]`` cumulative one-sided rate ``sum_{d<=g} beta(d, inf)``.
"""
import numpy as np
from numba import njit

REBUILD_EVERY = 8192

DEATH = 0
BIRTH = 1


@njit(cache=True, inline="always")
def fw_add(tree, i, delta):
    n = tree.shape[0] - 1
    while i <= n:
        tree[i] += delta
        i += i & (-i)


@njit(cache=True)
def fw_build(tree, w):
    n = tree.shape[0] - 1
    tree[0] = 0.0
    for i in range(1, n + 1):
        tree[i] = w[i - 1]
    for i in range(1, n + 1):
        j = i + (i & (-i))
        if j <= n:
            tree[j] += tree[i]


@njit(cache=True, inline="always")
def fw_search(tree, u):
    """Zero-based k with prefix(k) <= u < prefix(k + 1); k == n if u >= total."""
    n = tree.shape[0] - 1
    step = 1
    while step * 2 <= n:
        step *= 2
    pos = 0
    while step > 0:
        nx = pos + step
        if nx <= n and tree[nx] <= u:
            pos = nx
            u -= tree[nx]
        step //= 2
    return pos


@njit(cache=True, inline="always")
def first_greater(arr, lo, hi, v):
    """Smallest k in [lo, hi) with arr[k] > v, or hi - 1 if none."""
    a = lo
    b = hi - 1
    while a < b:
        m = (a + b) >> 1
        if arr[m] > v:
            b = m
        else:
            a = m + 1
    return a


@njit(cache=True, inline="always")
def owner_rate(a, nxt, N, int_rate, bnd_cum):
    b = nxt[a]
    if a == 0:
        if b == N + 1:
            return 0.0
        return bnd_cum[b - 1]
    if b == N + 1:
        return bnd_cum[N - a]
    return int_rate[b - a - 1]


@njit(cache=True, inline="always")
def set_weight(a, val, w, tree, meta, ftot):
    old = w[a]
    if val == old:
        return
    w[a] = val
    fw_add(tree, a + 1, val - old)
    ftot[0] += val - old
    if old > 0.0 and not val > 0.0:
        meta[1] -= 1
    elif val > 0.0 and not old > 0.0:
        meta[1] += 1
    meta[2] += 1
    if meta[2] >= REBUILD_EVERY:
        fw_build(tree, w)
        ftot[0] = np.sum(w)
        meta[2] = 0


@njit(cache=True)
def init_state(N, sites, nxt, prv, occ, pos, w, tree, meta, ftot, int_rate, bnd_cum):
    """Populate state arrays from a sorted array of occupied sites."""
    for i in range(N + 2):
        pos[i] = -1
    last = 0
    k = 0
    for s in sites:
        nxt[last] = s
        prv[s] = last
        occ[k] = s
        pos[s] = k
        k += 1
        last = s
    nxt[last] = N + 1
    prv[N + 1] = last
    meta[0] = k
    for i in range(N + 1):
        w[i] = 0.0
    w[0] = owner_rate(0, nxt, N, int_rate, bnd_cum)
    for i in range(k):
        w[occ[i]] = owner_rate(occ[i], nxt, N, int_rate, bnd_cum)
    npos = 0
    for i in range(N + 1):
        if w[i] > 0.0:
            npos += 1
    meta[1] = npos
    meta[2] = 0
    fw_build(tree, w)
    ftot[0] = np.sum(w)


@njit(cache=True, inline="always")
def do_death(x, N, nxt, prv, occ, pos, w, tree, meta, ftot, int_rate, bnd_cum):
    a = prv[x]
    b = nxt[x]
    nxt[a] = b
    prv[b] = a
    set_weight(x, 0.0, w, tree, meta, ftot)
    set_weight(a, owner_rate(a, nxt, N, int_rate, bnd_cum), w, tree, meta, ftot)
    k = pos[x]
    last = occ[meta[0] - 1]
    occ[k] = last
    pos[last] = k
    pos[x] = -1
    meta[0] -= 1


@njit(cache=True, inline="always")
def do_birth(x, a, N, nxt, prv, occ, pos, w, tree, meta, ftot, int_rate, bnd_cum):
    """Occupy vacant ``x`` whose left owner is ``a``."""
    b = nxt[a]
    nxt[a] = x
    prv[x] = a
    nxt[x] = b
    prv[b] = x
    set_weight(a, owner_rate(a, nxt, N, int_rate, bnd_cum), w, tree, meta, ftot)
    set_weight(x, owner_rate(x, nxt, N, int_rate, bnd_cum), w, tree, meta, ftot)
    occ[meta[0]] = x
    pos[x] = meta[0]
    meta[0] += 1


@njit(cache=True, inline="always")
def total_birth(meta, ftot):
    if meta[1] == 0:
        return 0.0
    t = ftot[0]
    return t if t > 0.0 else 0.0


@njit(cache=True, inline="always")
def select_event(rng, N, nxt, occ, w, tree, meta, ftot, int_rate, int_cum, int_off, bnd_cum):
    """Draw the next holding time and event. Returns (dt, kind, site, owner)."""
    n_occ = meta[0]
    tb = total_birth(meta, ftot)
    total = n_occ + tb
    dt = rng.standard_exponential() / total
    u = rng.random() * total
    if u < n_occ:
        i = int(u)
        if i >= n_occ:
            i = n_occ - 1
        return dt, DEATH, occ[i], -1
    v = u - n_occ
    while True:
        a = fw_search(tree, v)
        if a <= N and w[a] > 0.0:
            break
        # rounding drift put us on an empty slot; redraw
        v = rng.random() * tb
    b = nxt[a]
    if a == 0:
        g = b - 1
        d = first_greater(bnd_cum, 1, g + 1, rng.random() * bnd_cum[g])
        return dt, BIRTH, b - d, a
    if b == N + 1:
        g = N - a
        d = first_greater(bnd_cum, 1, g + 1, rng.random() * bnd_cum[g])
        return dt, BIRTH, a + d, a
    g = b - a - 1
    off = int_off[g]
    j = first_greater(int_cum, off, off + g, rng.random() * int_rate[g]) - off + 1
    return dt, BIRTH, a + j, a


@njit(cache=True)
def run_until_empty(rng, t_cap, N, nxt, prv, occ, pos, w, tree, meta, ftot,
                    int_rate, int_cum, int_off, bnd_cum, probe_t, probe_card, probe_r):
    """Simulate until absorption or ``t_cap``.

    Probe times must be sorted; each probe records the state in force at that
    time (cardinality and rightmost site). Probes past a cap stay at -1.
    Returns (time, events, capped).
    """
    t = 0.0
    events = 0
    npr = probe_t.shape[0]
    ip = 0
    capped = False
    while meta[0] > 0:
        dt, kind, x, a = select_event(rng, N, nxt, occ, w, tree, meta, ftot,
                                      int_rate, int_cum, int_off, bnd_cum)
        tn = t + dt
        if tn > t_cap:
            while ip < npr and probe_t[ip] <= t_cap:
                probe_card[ip] = meta[0]
                probe_r[ip] = prv[N + 1]
                ip += 1
            t = t_cap
            capped = True
            break
        while ip < npr and probe_t[ip] < tn:
            probe_card[ip] = meta[0]
            probe_r[ip] = prv[N + 1]
            ip += 1
        if kind == DEATH:
            do_death(x, N, nxt, prv, occ, pos, w, tree, meta, ftot, int_rate, bnd_cum)
        else:
            do_birth(x, a, N, nxt, prv, occ, pos, w, tree, meta, ftot, int_rate, bnd_cum)
        t = tn
        events += 1
    if not capped:
        while ip < npr:
            probe_card[ip] = 0
            probe_r[ip] = 0
            ip += 1
    return t, events, capped


@njit(cache=True)
def bd_hitting_time(rng, N, alpha, t_cap):
    """Birth-death chain on {0..N} with death rate i and birth rate (i+1)alpha,
    started at N; returns (hitting time of 0, events, capped).

    Without a cap only the jump chain is simulated: the holding times at level
    i are i.i.d. Exp(q_i), so their total over k visits is Gamma(k)/q_i.
    """
    if t_cap == np.inf:
        return _bd_uncapped(rng, N, alpha)
    i = N
    t = 0.0
    events = 0
    while i > 0:
        b = (i + 1) * alpha if i < N else 0.0
        total = i + b
        tn = t + rng.standard_exponential() / total
        if tn > t_cap:
            return t_cap, events, True
        t = tn
        if rng.random() * total < i:
            i -= 1
        else:
            i += 1
        events += 1
    return t, events, False


@njit(cache=True)
def _bd_uncapped(rng, N, alpha):
    visits = np.zeros(N + 1, dtype=np.int64)
    p_up = np.zeros(N + 1)
    for j in range(1, N):
        p_up[j] = (j + 1) * alpha / (j + (j + 1) * alpha)
    i = N
    events = 0
    while i > 0:
        visits[i] += 1
        i += 2 * np.int64(rng.random() < p_up[i]) - 1
        events += 1
    t = 0.0
    for j in range(1, N + 1):
        if visits[j] > 0:
            q = j + ((j + 1) * alpha if j < N else 0.0)
            t += rng.standard_gamma(visits[j]) / q
    return t, events, False


@njit(cache=True)
def sample_renewal_chain(rng, log_h, log_psi, log_lam, N):
    """Draw one configuration from the renewal weights (leftmost first).

    ``log_h[x - 1]`` is the log weight of configurations with leftmost site x;
    returns a boolean occupancy array of length N + 1 (index 0 unused).
    """
    out = np.zeros(N + 1, dtype=np.bool_)
    # leftmost ~ h(x)/K
    m = np.max(log_h)
    p = np.exp(log_h - m)
    c = np.cumsum(p)
    x = first_greater(c, 0, N, rng.random() * c[N - 1]) + 1
    out[x] = True
    while x < N:
        u = rng.random()
        stop = np.exp(-log_h[x - 1])
        if u < stop:
            break
        u -= stop
        acc = 0.0
        y = N
        for yy in range(x + 1, N + 1):
            acc += np.exp(log_lam + log_psi[yy - x - 1] + log_h[yy - 1] - log_h[x - 1])
            if u < acc:
                y = yy
                break
        x = y
        out[x] = True
    return out
