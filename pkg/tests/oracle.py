"""Reference implementations used as test oracles.

Plain Python, no numba: the graphical construction is replayed from the
public event queries, so these share nothing with the kernels except the
event streams themselves.
"""
import math

from contactshape.field import events_on_edge, events_on_site


def _events(f, window, t0, t1, deaths=True, edge_query=None):
    evs = []
    if deaths:
        for z in window.coords():
            z = tuple(int(c) for c in z)
            for t in events_on_site(f, z, t0, t1):
                evs.append((float(t), "d", z))
    for z, a in window.edges():
        z2 = tuple(c + (1 if i == a else 0) for i, c in enumerate(z))
        ts = edge_query(z, a) if edge_query else events_on_edge(f, (z, z2), t0, t1)
        for t in ts:
            evs.append((float(t), "a", (z, z2)))
    evs.sort(key=lambda e: e[0])
    return [e for e in evs if t0 < e[0] <= t1]


def simulate(f, window, initial, t0, t1, deaths=True, edge_query=None):
    """Return (log, tau): log is [(t, site, '+'|'-')], tau the extinction time or None."""
    state = set(tuple(z) for z in initial)
    if not state:
        return [], t0
    log = []
    for t, kind, obj in _events(f, window, t0, t1, deaths, edge_query):
        if kind == "d":
            if obj in state:
                state.discard(obj)
                log.append((t, obj, "-"))
                if not state:
                    return log, t
        else:
            a, b = obj
            if (a in state) != (b in state):
                new = b if a in state else a
                state.add(new)
                log.append((t, new, "+"))
    return log, None


def state_at(initial, log, t):
    s = set(tuple(z) for z in initial)
    for tt, z, op in log:
        if tt > t:
            break
        if op == "+":
            s.add(z)
        else:
            s.discard(z)
    return s


def ladder(f, window, x, horizon, T_surv):
    """u/v ladder by repeated oracle runs: (u, v, K, sigma, status)."""
    x = tuple(x)
    origin = (0,) * window.d
    log, tau0 = simulate(f, window, [origin], 0.0, horizon)
    infected_x = [(t, op) for t, z, op in log if z == x]

    def next_inf(v):
        if x in state_at([origin], log, v):
            return v
        for t, op in infected_x:
            if t > v and op == "+":
                return t
        return math.nan

    u_list, v_list = [0.0], [0.0]
    u = next_inf(0.0)
    while True:
        if math.isnan(u):
            k = len(u_list) - 1
            if tau0 is not None:
                return u_list, v_list, k, u_list[-1], "resolved-death"
            return u_list, v_list, k, None, "censored-horizon"
        u_list.append(u)
        k = len(u_list) - 1
        if u > horizon - T_surv:
            return u_list, v_list, k, None, "censored-horizon"
        _, tau = simulate(f, window, [x], u, horizon)
        if tau is None:
            v_list.append(math.inf)
            return u_list, v_list, k, u, "resolved-survival"
        v_list.append(tau)
        u = next_inf(tau)
