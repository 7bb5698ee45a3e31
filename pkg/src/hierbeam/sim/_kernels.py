"""Compiled event loops.

Work inside a beam is processor-shared: all flows of beam ``v`` receive the
same service rate, so each beam keeps a virtual clock ``S[v]`` (service
received per flow) and a min-heap of the clock values at which its flows
finish.
"""
import numba as nb
import numpy as np

DIST_EXPONENTIAL = 0
DIST_DETERMINISTIC = 1
DIST_HYPEREXPONENTIAL = 2

POLICY_PF = 0
POLICY_MT = 1


@nb.njit(cache=True)
def _size(kind, p, m1, m2):
    if kind == DIST_EXPONENTIAL:
        return np.random.exponential(1.0)
    if kind == DIST_DETERMINISTIC:
        return 1.0
    if np.random.random() < p:
        return np.random.exponential(m1)
    return np.random.exponential(m2)


@nb.njit(cache=True)
def _grow(h, need):
    if need < h.shape[1]:
        return h
    g = np.empty((h.shape[0], 2 * h.shape[1]))
    g[:, :h.shape[1]] = h
    return g


@nb.njit(cache=True)
def _push(h, size, v, x):
    i = size[v]
    h[v, i] = x
    size[v] += 1
    while i > 0:
        up = (i - 1) // 2
        if h[v, up] <= h[v, i]:
            break
        tmp = h[v, up]
        h[v, up] = h[v, i]
        h[v, i] = tmp
        i = up


@nb.njit(cache=True)
def _pop(h, size, v):
    top = h[v, 0]
    size[v] -= 1
    m = size[v]
    h[v, 0] = h[v, m]
    i = 0
    while True:
        a = 2 * i + 1
        if a >= m:
            break
        b = a + 1
        c = a if (b >= m or h[v, a] <= h[v, b]) else b
        if h[v, i] <= h[v, c]:
            break
        tmp = h[v, c]
        h[v, c] = h[v, i]
        h[v, i] = tmp
        i = c
    return top


@nb.njit(cache=True)
def _activity(parent, n, policy, gamma, sub, free):
    V = n.shape[0]
    for v in range(V):
        sub[v] = n[v]
    for v in range(V - 1, 0, -1):
        sub[parent[v]] += sub[v]
    if policy == POLICY_PF:
        for v in range(V):
            above = 1.0 if v == 0 else free[parent[v]]
            k = n[v] / sub[v] if sub[v] > 0 else 0.0
            gamma[v] = k * above
            free[v] = above * (1.0 - k)
    else:
        for v in range(V):
            gamma[v] = 1.0 if sub[v] == n[v] else 0.0


@nb.njit(cache=True)
def _violates(parent, n, policy, gamma, free):
    V = n.shape[0]
    if policy == POLICY_PF:
        for v in range(V):
            free[v] = gamma[v] + (0.0 if v == 0 else free[parent[v]])
            if free[v] > 1.0 + 1e-9 or gamma[v] < -1e-12:
                return True
        return False
    # active beams with flows must not have an active ancestor
    for v in range(V):
        on = 1.0 if (gamma[v] == 1.0 and n[v] > 0) else 0.0
        above = 0.0 if v == 0 else free[parent[v]]
        if on > 0 and above > 0:
            return True
        free[v] = above + on
    return False


@nb.njit(cache=True)
def elastic_kernel(parent, lam, r, policy, dist, p, m1, m2, n_events, warmup, n_batches,
                   seed, check, max_flows, max_cycles):
    """Simulate the flow-level process.

    Returns per-batch time, per-batch area under ``n_v(t)``, arrival counts,
    arrival-sampled sums of ``n`` and departures, the number of
    feasibility violations, an overflow flag, the number of events run, and
    (when ``max_cycles > 0``) the lengths of completed system busy periods.
    """
    np.random.seed(seed)
    V = lam.shape[0]
    total_lam = lam.sum()
    cum = np.cumsum(lam) / total_lam if total_lam > 0 else np.ones(V)
    n = np.zeros(V, dtype=np.int64)
    clock = np.zeros(V)
    h = np.empty((V, 64))
    size = np.zeros(V, dtype=np.int64)
    gamma = np.zeros(V)
    sub = np.zeros(V, dtype=np.int64)
    free = np.zeros(V)
    u = np.zeros(V)

    btime = np.zeros(n_batches)
    area = np.zeros((n_batches, V))
    arrivals = np.zeros((n_batches, V))
    seen = np.zeros((n_batches, V))
    departures = np.zeros((n_batches, V))
    cycles = np.zeros(max(max_cycles, 1))
    n_cycles = 0
    violations = 0
    overflow = False
    post = max(n_events - warmup, 1)
    t = 0.0
    busy_start = 0.0
    in_system = 0
    ev = 0
    while ev < n_events:
        _activity(parent, n, policy, gamma, sub, free)
        if check and _violates(parent, n, policy, gamma, free):
            violations += 1
        best_dt = np.inf
        best_v = -1
        for v in range(V):
            u[v] = 0.0
            if n[v] > 0:
                u[v] = r[v] * gamma[v] / n[v]
                if u[v] > 0.0:
                    dt = (h[v, 0] - clock[v]) / u[v]
                    if dt < best_dt:
                        best_dt = dt
                        best_v = v
        ta = np.random.exponential(1.0 / total_lam) if total_lam > 0 else np.inf
        arrival = ta < best_dt
        dt = ta if arrival else best_dt
        if dt < 0.0:
            dt = 0.0
        if dt == np.inf:
            break
        t += dt
        b = -1
        if ev >= warmup:
            b = (ev - warmup) * n_batches // post
            btime[b] += dt
            for v in range(V):
                area[b, v] += n[v] * dt
        for v in range(V):
            if n[v] > 0:
                clock[v] += u[v] * dt
        if arrival:
            x = np.random.random()
            v = 0
            while v < V - 1 and cum[v] <= x:
                v += 1
            if b >= 0:
                arrivals[b, v] += 1.0
                for w in range(V):
                    seen[b, w] += n[w]
            h = _grow(h, size[v] + 1)
            _push(h, size, v, clock[v] + _size(dist, p, m1, m2))
            n[v] += 1
            if in_system == 0:
                busy_start = t
            in_system += 1
            if in_system > max_flows:
                overflow = True
                ev += 1
                break
        else:
            v = best_v
            clock[v] = _pop(h, size, v)
            n[v] -= 1
            if n[v] == 0:
                clock[v] = 0.0
            if b >= 0:
                departures[b, v] += 1.0
            in_system -= 1
            if in_system == 0 and max_cycles > 0:
                cycles[n_cycles] = t - busy_start
                n_cycles += 1
                if n_cycles >= max_cycles:
                    ev += 1
                    break
        ev += 1
    return (btime, area, arrivals, seen, departures, violations, overflow, ev,
            cycles[:n_cycles])


@nb.njit(cache=True)
def _hpush(ht, hv, m, x, v):
    i = m
    ht[i] = x
    hv[i] = v
    while i > 0:
        up = (i - 1) // 2
        if ht[up] <= ht[i]:
            break
        ht[up], ht[i] = ht[i], ht[up]
        hv[up], hv[i] = hv[i], hv[up]
        i = up


@nb.njit(cache=True)
def _hpop(ht, hv, m):
    # m is the size before removal
    t0 = ht[0]
    v0 = hv[0]
    m -= 1
    ht[0] = ht[m]
    hv[0] = hv[m]
    i = 0
    while True:
        a = 2 * i + 1
        if a >= m:
            break
        b = a + 1
        c = a if (b >= m or ht[a] <= ht[b]) else b
        if ht[i] <= ht[c]:
            break
        ht[c], ht[i] = ht[i], ht[c]
        hv[c], hv[i] = hv[i], hv[c]
        i = c
    return t0, v0


@nb.njit(cache=True)
def streaming_kernel(parent, s, xi, lam, r, dist, p, m1, m2, n_events, warmup, n_batches, seed):
    """Loss-network simulation with path admission control.

    Returns per-batch time, area under ``n_v(t)``, arrivals and blocked
    arrivals per beam, and the number of events run.
    """
    np.random.seed(seed)
    V = lam.shape[0]
    total_lam = lam.sum()
    cum = np.cumsum(lam) / total_lam
    n = np.zeros(V, dtype=np.int64)
    load = np.zeros(V, dtype=np.int64)
    worst = np.zeros(V, dtype=np.int64)
    # at most xi flows can be present (every demand is >= 1)
    cap = xi * V + 1
    ht = np.empty(cap)
    hv = np.empty(cap, dtype=np.int64)
    m = 0
    btime = np.zeros(n_batches)
    area = np.zeros((n_batches, V))
    arrivals = np.zeros((n_batches, V))
    blocked = np.zeros((n_batches, V))
    post = max(n_events - warmup, 1)
    t = 0.0
    for ev in range(n_events):
        ta = t + np.random.exponential(1.0 / total_lam)
        departure = m > 0 and ht[0] < ta
        t_next = ht[0] if departure else ta
        dt = t_next - t
        b = -1
        if ev >= warmup:
            b = (ev - warmup) * n_batches // post
            btime[b] += dt
            for v in range(V):
                area[b, v] += n[v] * dt
        t = t_next
        if departure:
            _, v = _hpop(ht, hv, m)
            m -= 1
            n[v] -= 1
            continue
        x = np.random.random()
        v = 0
        while v < V - 1 and cum[v] <= x:
            v += 1
        if b >= 0:
            arrivals[b, v] += 1.0
        for w in range(V):
            load[w] = n[w] * s[w] + (0 if w == 0 else load[parent[w]])
            worst[w] = load[w]
        for w in range(V - 1, 0, -1):
            if worst[w] > worst[parent[w]]:
                worst[parent[w]] = worst[w]
        if worst[v] + s[v] > xi:
            if b >= 0:
                blocked[b, v] += 1.0
            continue
        n[v] += 1
        _hpush(ht, hv, m, t + _size(dist, p, m1, m2) / r[v], v)
        m += 1
    return btime, area, arrivals, blocked, n_events
