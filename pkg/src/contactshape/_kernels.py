"""Compiled event loops.

Parameter packing shared by every kernel (built by ``field._KernelArgs``):

ip (int64)   d, L, env_kind, deaths_on, fixture_mode, weak_on
fp (float64) slab, ceiling, lam, lo, hi, p, lam_min, rate_override
up (uint64)  site_base, edge_base, env_base, thin_base

Local objects: sites ``0 .. n_site-1`` then edge slots ``n_site + i*d + a``
(edge from local site ``i`` in direction ``+e_a``).  Heap ties are broken on
``(time, object id)``.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from ._rng import absorb, poisson_count, to_unit

ENV_CONSTANT = 0
ENV_UNIFORM = 1
ENV_TWO_POINT = 2

OP_INFECT = 1
OP_CURE = -1


# ----------------------------------------------------------------------------
# geometry


@njit(cache=True)
def _powers(d, W):
    pw = np.empty(d, np.int64)
    v = 1
    for a in range(d):
        pw[a] = v
        v *= W
    return pw


@njit(cache=True)
def _coord(i, a, pw, W, L):
    return (i // pw[a]) % W - L


@njit(cache=True)
def _on_boundary(i, d, pw, W, L):
    for a in range(d):
        c = (i // pw[a]) % W - L
        if c == L or c == -L:
            return True
    return False


# ----------------------------------------------------------------------------
# object hashes and rates


@njit(cache=True)
def _site_hash(i, d, pw, W, L, offset, base):
    h = base
    for a in range(d):
        h = absorb(h, _coord(i, a, pw, W, L) + offset[a])
    return h


@njit(cache=True)
def _edge_hash(i, axis, d, pw, W, L, offset, base):
    h = base
    for a in range(d):
        h = absorb(h, _coord(i, a, pw, W, L) + offset[a])
    return absorb(h, axis)


@njit(cache=True)
def _env_value(kind, lam, lo, hi, p, u):
    if kind == ENV_CONSTANT:
        return lam
    if kind == ENV_UNIFORM:
        return lo + (hi - lo) * u
    if u < p:
        return hi
    return lo


@njit(cache=True)
def env_rates(kind, lam, lo, hi, p, env_base, coords, axes):
    """Rates of the edges (coords[k], coords[k] + e_axes[k]) in environment coordinates."""
    n = coords.shape[0]
    out = np.empty(n)
    for k in range(n):
        if kind == ENV_CONSTANT:
            out[k] = lam
            continue
        h = env_base
        for a in range(coords.shape[1]):
            h = absorb(h, coords[k, a])
        out[k] = _env_value(kind, lam, lo, hi, p, to_unit(absorb(h, axes[k])))
    return out


@njit(cache=True)
def _edge_rate(i, axis, ip, fp, up, offset, env_shift, pw, W, L):
    if fp[7] >= 0.0:
        return fp[7]
    if ip[2] == ENV_CONSTANT:
        return fp[2]
    h = up[2]
    for a in range(ip[0]):
        h = absorb(h, _coord(i, a, pw, W, L) + offset[a] + env_shift[a])
    u = to_unit(absorb(h, axis))
    return _env_value(ip[2], fp[2], fp[3], fp[4], fp[5], u)


# ----------------------------------------------------------------------------
# Poisson streams


@njit(cache=True)
def slab_times(h_obj, k, mean, slab, out):
    """Write the unsorted event times of slab ``k`` into ``out``; return count."""
    hs = absorb(h_obj, k)
    n = poisson_count(to_unit(absorb(hs, 0)), mean)
    if n > out.shape[0]:
        n = out.shape[0]
    for j in range(n):
        out[j] = (k + to_unit(absorb(hs, 2 * j + 1))) * slab
    return n


@njit(cache=True)
def _kept(h_obj, h_thin, k, j, thr1, thr2, weak):
    hs = absorb(h_obj, k)
    if to_unit(absorb(hs, 2 * j + 2)) >= thr1:
        return False
    if weak:
        if to_unit(absorb(absorb(h_thin, k), j)) >= thr2:
            return False
    return True


@njit(cache=True)
def _next_hashed(h_obj, h_thin, is_edge, after, limit, slab, mean, thr1, thr2, weak):
    """First event strictly after ``after`` (global time), or inf past ``limit``."""
    k = np.int64(np.floor(after / slab))
    if k < 0:
        k = 0
    while k * slab <= limit:
        hs = absorb(h_obj, k)
        n = poisson_count(to_unit(absorb(hs, 0)), mean)
        best = np.inf
        for j in range(n):
            t = (k + to_unit(absorb(hs, 2 * j + 1))) * slab
            if t > after and t < best:
                if is_edge and not _kept(h_obj, h_thin, k, j, thr1, thr2, weak):
                    continue
                best = t
        if best < np.inf:
            return best
        k += 1
    return np.inf


@njit(cache=True)
def _prev_hashed(h_obj, h_thin, is_edge, before, limit, slab, mean, thr1, thr2, weak):
    """Last event strictly before ``before`` (global time), or -inf below ``limit``."""
    k = np.int64(np.floor(before / slab))
    while k >= 0 and (k + 1) * slab >= limit:
        hs = absorb(h_obj, k)
        n = poisson_count(to_unit(absorb(hs, 0)), mean)
        best = -np.inf
        for j in range(n):
            t = (k + to_unit(absorb(hs, 2 * j + 1))) * slab
            if t < before and t > best:
                if is_edge and not _kept(h_obj, h_thin, k, j, thr1, thr2, weak):
                    continue
                best = t
        if best > -np.inf:
            return best
        k -= 1
    return -np.inf


@njit(cache=True)
def _fx_kept(h_thin, j, thr2, weak):
    if not weak:
        return True
    return to_unit(absorb(absorb(h_thin, 0), j)) < thr2


@njit(cache=True)
def _next_fixture(o, fx_ptr, fx_t, after, h_thin, is_edge, thr2, weak):
    lo = fx_ptr[o]
    hi = fx_ptr[o + 1]
    j = lo + np.searchsorted(fx_t[lo:hi], after, side="right")
    while j < hi:
        if not is_edge or _fx_kept(h_thin, j - lo, thr2, weak):
            return fx_t[j]
        j += 1
    return np.inf


@njit(cache=True)
def _prev_fixture(o, fx_ptr, fx_t, before, h_thin, is_edge, thr2, weak):
    lo = fx_ptr[o]
    hi = fx_ptr[o + 1]
    j = lo + np.searchsorted(fx_t[lo:hi], before, side="left") - 1
    while j >= lo:
        if not is_edge or _fx_kept(h_thin, j - lo, thr2, weak):
            return fx_t[j]
        j -= 1
    return -np.inf


@njit(cache=True)
def _object_time(o, t, forward, bound, ip, fp, up, offset, env_shift, pw, W, L, nsite, fx_ptr, fx_t):
    d = ip[0]
    weak = ip[5] == 1
    is_edge = o >= nsite
    thr1 = 1.0
    thr2 = 1.0
    h_thin = up[3]
    if is_edge:
        e = o - nsite
        i = e // d
        axis = e % d
        rate = _edge_rate(i, axis, ip, fp, up, offset, env_shift, pw, W, L)
        if fp[1] > 0.0:
            thr1 = rate / fp[1]
        if weak:
            thr2 = fp[6] / rate if rate > 0.0 else 0.0
            h_thin = _edge_hash(i, axis, d, pw, W, L, offset, up[3])
        if ip[4] == 1:
            if forward:
                return _next_fixture(o, fx_ptr, fx_t, t, h_thin, True, thr2, weak)
            return _prev_fixture(o, fx_ptr, fx_t, t, h_thin, True, thr2, weak)
        h = _edge_hash(i, axis, d, pw, W, L, offset, up[1])
        mean = fp[1] * fp[0]
    else:
        if ip[4] == 1:
            if forward:
                return _next_fixture(o, fx_ptr, fx_t, t, h_thin, False, thr2, weak)
            return _prev_fixture(o, fx_ptr, fx_t, t, h_thin, False, thr2, weak)
        h = _site_hash(o, d, pw, W, L, offset, up[0])
        mean = fp[0]
    if forward:
        return _next_hashed(h, h_thin, is_edge, t, bound, fp[0], mean, thr1, thr2, weak)
    return _prev_hashed(h, h_thin, is_edge, t, bound, fp[0], mean, thr1, thr2, weak)


# ----------------------------------------------------------------------------
# binary heap on (time, object)


@njit(cache=True)
def _less(t1, o1, t2, o2):
    return t1 < t2 or (t1 == t2 and o1 < o2)


@njit(cache=True)
def _push(ht, ho, size, t, o, sign):
    # sign = +1 min-heap, -1 max-heap (times negated)
    k = size
    ht[k] = sign * t
    ho[k] = o
    while k > 0:
        parent = (k - 1) >> 1
        if _less(ht[k], ho[k], ht[parent], ho[parent]):
            ht[k], ht[parent] = ht[parent], ht[k]
            ho[k], ho[parent] = ho[parent], ho[k]
            k = parent
        else:
            break
    return size + 1


@njit(cache=True)
def _pop(ht, ho, size):
    size -= 1
    ht[0] = ht[size]
    ho[0] = ho[size]
    k = 0
    while True:
        left = 2 * k + 1
        if left >= size:
            break
        best = left
        right = left + 1
        if right < size and _less(ht[right], ho[right], ht[left], ho[left]):
            best = right
        if _less(ht[best], ho[best], ht[k], ho[k]):
            ht[k], ht[best] = ht[best], ht[k]
            ho[k], ho[best] = ho[best], ho[k]
            k = best
        else:
            break
    return size


@njit(cache=True)
def _grow(a, n):
    b = np.empty(max(2 * a.shape[0], n + 16), a.dtype)
    b[: a.shape[0]] = a
    return b


# ----------------------------------------------------------------------------
# forward contact / Richardson dynamics


@njit(cache=True)
def forward(ip, fp, up, offset, env_shift, toff, t0, t1, init, record, fx_ptr, fx_t):
    """Run from the sites ``init`` over global times (toff+t0, toff+t1].

    Returns (log_t, log_site, log_op, n_log, tau, truncated, final_count);
    times are local (global - toff); ``tau`` is NaN when alive at ``t1``.
    """
    d = ip[0]
    L = ip[1]
    W = 2 * L + 1
    pw = _powers(d, W)
    nsite = W ** d
    nobj = nsite * (1 + d)
    deaths = ip[3] == 1
    lo_g = toff + t0
    hi_g = toff + t1

    inf_ = np.zeros(nsite, np.bool_)
    pend = np.full(nobj, -1.0)
    ht = np.empty(nobj)
    ho = np.empty(nobj, np.int64)
    size = 0
    cap = 1024 if record else 1
    log_t = np.empty(cap)
    log_s = np.empty(cap, np.int64)
    log_o = np.empty(cap, np.int8)
    n_log = 0
    truncated = False
    count = 0

    for s in init:
        if not inf_[s]:
            inf_[s] = True
            count += 1
            if _on_boundary(s, d, pw, W, L):
                truncated = True
    if count == 0:
        return log_t[:0], log_s[:0], log_o[:0], 0, t0, truncated, 0

    for s in init:
        if deaths and pend[s] < 0.0:
            t = _object_time(s, lo_g, True, hi_g, ip, fp, up, offset, env_shift, pw, W, L, nsite, fx_ptr, fx_t)
            if t <= hi_g:
                pend[s] = t
                size = _push(ht, ho, size, t, s, 1.0)
        for a in range(d):
            c = _coord(s, a, pw, W, L)
            for side in range(2):
                if side == 0:
                    if c >= L:
                        continue
                    j = s + pw[a]
                    o = nsite + s * d + a
                else:
                    if c <= -L:
                        continue
                    j = s - pw[a]
                    o = nsite + j * d + a
                if inf_[j] or pend[o] >= 0.0:
                    continue
                t = _object_time(o, lo_g, True, hi_g, ip, fp, up, offset, env_shift, pw, W, L, nsite, fx_ptr, fx_t)
                if t <= hi_g:
                    pend[o] = t
                    size = _push(ht, ho, size, t, o, 1.0)

    tau = np.nan
    while size > 0:
        t = ht[0]
        o = ho[0]
        if t > hi_g:
            break
        size = _pop(ht, ho, size)
        pend[o] = -1.0
        if o < nsite:
            if not inf_[o]:
                continue
            inf_[o] = False
            count -= 1
            if record:
                if n_log >= log_t.shape[0]:
                    log_t = _grow(log_t, n_log)
                    log_s = _grow(log_s, n_log)
                    log_o = _grow(log_o, n_log)
                log_t[n_log] = t - toff
                log_s[n_log] = o
                log_o[n_log] = -1
                n_log += 1
            if count == 0:
                tau = t - toff
                break
            # edges of o towards infected neighbours become active
            for a in range(d):
                c = _coord(o, a, pw, W, L)
                for side in range(2):
                    if side == 0:
                        if c >= L:
                            continue
                        j = o + pw[a]
                        oe = nsite + o * d + a
                    else:
                        if c <= -L:
                            continue
                        j = o - pw[a]
                        oe = nsite + j * d + a
                    if not inf_[j] or pend[oe] >= 0.0:
                        continue
                    te = _object_time(oe, t, True, hi_g, ip, fp, up, offset, env_shift, pw, W, L, nsite, fx_ptr, fx_t)
                    if te <= hi_g:
                        pend[oe] = te
                        size = _push(ht, ho, size, te, oe, 1.0)
        else:
            e = o - nsite
            i = e // d
            j = i + pw[e % d]
            if inf_[i] == inf_[j]:
                continue
            new = j if inf_[i] else i
            inf_[new] = True
            count += 1
            if not truncated and _on_boundary(new, d, pw, W, L):
                truncated = True
            if record:
                if n_log >= log_t.shape[0]:
                    log_t = _grow(log_t, n_log)
                    log_s = _grow(log_s, n_log)
                    log_o = _grow(log_o, n_log)
                log_t[n_log] = t - toff
                log_s[n_log] = new
                log_o[n_log] = 1
                n_log += 1
            if deaths and pend[new] < 0.0:
                td = _object_time(new, t, True, hi_g, ip, fp, up, offset, env_shift, pw, W, L, nsite, fx_ptr, fx_t)
                if td <= hi_g:
                    pend[new] = td
                    size = _push(ht, ho, size, td, new, 1.0)
            for a in range(d):
                c = _coord(new, a, pw, W, L)
                for side in range(2):
                    if side == 0:
                        if c >= L:
                            continue
                        jj = new + pw[a]
                        oe = nsite + new * d + a
                    else:
                        if c <= -L:
                            continue
                        jj = new - pw[a]
                        oe = nsite + jj * d + a
                    if inf_[jj] or pend[oe] >= 0.0:
                        continue
                    te = _object_time(oe, t, True, hi_g, ip, fp, up, offset, env_shift, pw, W, L, nsite, fx_ptr, fx_t)
                    if te <= hi_g:
                        pend[oe] = te
                        size = _push(ht, ho, size, te, oe, 1.0)

    return log_t[:n_log], log_s[:n_log], log_o[:n_log], n_log, tau, truncated, count


# ----------------------------------------------------------------------------
# backward (dual) sweep


@njit(cache=True)
def dual(ip, fp, up, offset, env_shift, toff, t0, t1, init, fx_ptr, fx_t):
    """Backward sweep from the sites ``init`` at time t1 down to t0.

    Site x belongs to the swept set at local time u iff an open path joins
    (x, u) to (init, t1) using events in (u, t1].  Returns the toggle log
    (local times, descending) and the final set size.
    """
    d = ip[0]
    L = ip[1]
    W = 2 * L + 1
    pw = _powers(d, W)
    nsite = W ** d
    nobj = nsite * (1 + d)
    lo_g = toff + t0
    hi_g = toff + t1
    start = np.nextafter(hi_g, np.inf)
    return _dual_impl(ip, fp, up, offset, env_shift, toff, lo_g, start, init, d, L, W, pw, nsite, nobj, fx_ptr, fx_t)


@njit(cache=True)
def _dual_impl(ip, fp, up, offset, env_shift, toff, lo_g, start, init, d, L, W, pw, nsite, nobj, fx_ptr, fx_t):
    inn = np.zeros(nsite, np.bool_)
    pend = np.full(nobj, np.nan)
    ht = np.empty(nobj)
    ho = np.empty(nobj, np.int64)
    size = 0
    log_t = np.empty(1024)
    log_s = np.empty(1024, np.int64)
    log_o = np.empty(1024, np.int8)
    n_log = 0
    count = 0
    for s in init:
        if not inn[s]:
            inn[s] = True
            count += 1
    for s in init:
        if np.isnan(pend[s]):
            t = _object_time(s, start, False, lo_g, ip, fp, up, offset, env_shift, pw, W, L, nsite, fx_ptr, fx_t)
            if t > lo_g:
                pend[s] = t
                size = _push(ht, ho, size, t, s, -1.0)
        for a in range(d):
            c = _coord(s, a, pw, W, L)
            for side in range(2):
                if side == 0:
                    if c >= L:
                        continue
                    j = s + pw[a]
                    o = nsite + s * d + a
                else:
                    if c <= -L:
                        continue
                    j = s - pw[a]
                    o = nsite + j * d + a
                if inn[j] or not np.isnan(pend[o]):
                    continue
                t = _object_time(o, start, False, lo_g, ip, fp, up, offset, env_shift, pw, W, L, nsite, fx_ptr, fx_t)
                if t > lo_g:
                    pend[o] = t
                    size = _push(ht, ho, size, t, o, -1.0)

    while size > 0 and count > 0:
        t = -ht[0]
        o = ho[0]
        if t <= lo_g:
            break
        size = _pop(ht, ho, size)
        pend[o] = np.nan
        if o < nsite:
            if not inn[o]:
                continue
            inn[o] = False
            count -= 1
            if n_log >= log_t.shape[0]:
                log_t = _grow(log_t, n_log)
                log_s = _grow(log_s, n_log)
                log_o = _grow(log_o, n_log)
            log_t[n_log] = t - toff
            log_s[n_log] = o
            log_o[n_log] = -1
            n_log += 1
            for a in range(d):
                c = _coord(o, a, pw, W, L)
                for side in range(2):
                    if side == 0:
                        if c >= L:
                            continue
                        j = o + pw[a]
                        oe = nsite + o * d + a
                    else:
                        if c <= -L:
                            continue
                        j = o - pw[a]
                        oe = nsite + j * d + a
                    if not inn[j] or not np.isnan(pend[oe]):
                        continue
                    te = _object_time(oe, t, False, lo_g, ip, fp, up, offset, env_shift, pw, W, L, nsite, fx_ptr, fx_t)
                    if te > lo_g:
                        pend[oe] = te
                        size = _push(ht, ho, size, te, oe, -1.0)
        else:
            e = o - nsite
            i = e // d
            j = i + pw[e % d]
            if inn[i] == inn[j]:
                continue
            new = j if inn[i] else i
            inn[new] = True
            count += 1
            if n_log >= log_t.shape[0]:
                log_t = _grow(log_t, n_log)
                log_s = _grow(log_s, n_log)
                log_o = _grow(log_o, n_log)
            log_t[n_log] = t - toff
            log_s[n_log] = new
            log_o[n_log] = 1
            n_log += 1
            if np.isnan(pend[new]):
                td = _object_time(new, t, False, lo_g, ip, fp, up, offset, env_shift, pw, W, L, nsite, fx_ptr, fx_t)
                if td > lo_g:
                    pend[new] = td
                    size = _push(ht, ho, size, td, new, -1.0)
            for a in range(d):
                c = _coord(new, a, pw, W, L)
                for side in range(2):
                    if side == 0:
                        if c >= L:
                            continue
                        jj = new + pw[a]
                        oe = nsite + new * d + a
                    else:
                        if c <= -L:
                            continue
                        jj = new - pw[a]
                        oe = nsite + jj * d + a
                    if inn[jj] or not np.isnan(pend[oe]):
                        continue
                    te = _object_time(oe, t, False, lo_g, ip, fp, up, offset, env_shift, pw, W, L, nsite, fx_ptr, fx_t)
                    if te > lo_g:
                        pend[oe] = te
                        size = _push(ht, ho, size, te, oe, -1.0)
    return log_t[:n_log], log_s[:n_log], log_o[:n_log], n_log, count


# ----------------------------------------------------------------------------
# log post-processing


@njit(cache=True)
def group_by_site(log_s, n_site):
    """Stable counting sort of log entries by site; returns (ptr, order)."""
    n = log_s.shape[0]
    ptr = np.zeros(n_site + 1, np.int64)
    for k in range(n):
        ptr[log_s[k] + 1] += 1
    for i in range(n_site):
        ptr[i + 1] += ptr[i]
    fill = ptr[:-1].copy()
    order = np.empty(n, np.int64)
    for k in range(n):
        s = log_s[k]
        order[fill[s]] = k
        fill[s] += 1
    return ptr, order


@njit(cache=True)
def state_after(ptr, times, ops, init, x, u):
    """Forward log state of x after all toggles with time <= u."""
    lo = ptr[x]
    hi = ptr[x + 1]
    m = np.searchsorted(times[lo:hi], u, side="right")
    if m == 0:
        return init[x]
    return ops[lo + m - 1] == 1


@njit(cache=True)
def dual_state(ptr, times, ops, init, x, u):
    """Dual log state of x at u: after all (descending) toggles with time > u."""
    lo = ptr[x]
    hi = ptr[x + 1]
    # times[lo:hi] is descending; count entries > u
    a = lo
    b = hi
    while a < b:
        mid = (a + b) >> 1
        if times[mid] > u:
            a = mid + 1
        else:
            b = mid
    if a == lo:
        return init[x]
    return ops[a - 1] == 1


@njit(cache=True)
def _next_infection(ptr, times, ops, init, x, v):
    if state_after(ptr, times, ops, init, x, v):
        return v
    lo = ptr[x]
    hi = ptr[x + 1]
    m = lo + np.searchsorted(times[lo:hi], v, side="right")
    while m < hi:
        if ops[m] == 1:
            return times[m]
        m += 1
    return np.nan


@njit(cache=True)
def first_hits(ptr, times, ops, init, t0):
    n = ptr.shape[0] - 1
    out = np.full(n, np.nan)
    for x in range(n):
        if init[x]:
            out[x] = t0
            continue
        for m in range(ptr[x], ptr[x + 1]):
            if ops[m] == 1:
                out[x] = times[m]
                break
    return out


STATUS_SURVIVAL = 0
STATUS_DEATH = 1
STATUS_CENSORED = 2


@njit(cache=True)
def ladders(ip, fp, up, offset, env_shift, toff, t0, t1, t_surv, targets,
            o_ptr, o_t, o_op, o_init, origin_dead,
            d_ptr, d_t, d_op, d_init, fx_ptr, fx_t, t_cap):
    """Essential hitting ladders for many targets on one realization.

    Restarted lifetimes are recomputed forward; survival of a restart at u is
    read from the dual log.  Ladders stop (censored) once u exceeds ``t_cap``.
    Returns K, sigma, t_first, status, last_u.
    """
    n = targets.shape[0]
    K = np.zeros(n, np.int64)
    sigma = np.full(n, np.nan)
    tfirst = np.full(n, np.nan)
    status = np.full(n, STATUS_CENSORED, np.int64)
    last_u = np.full(n, np.nan)
    one = np.empty(1, np.int64)
    for k in range(n):
        x = targets[k]
        if o_init[x]:
            u = t0
        else:
            u = _next_infection(o_ptr, o_t, o_op, o_init, x, t0)
        tfirst[k] = u
        if np.isnan(u):
            K[k] = 0
            if origin_dead:
                status[k] = STATUS_DEATH
                sigma[k] = t0
            continue
        kk = 0
        while True:
            kk += 1
            last_u[k] = u
            if u > t1 - t_surv or u > t_cap:
                status[k] = STATUS_CENSORED
                break
            if dual_state(d_ptr, d_t, d_op, d_init, x, u):
                status[k] = STATUS_SURVIVAL
                sigma[k] = u
                break
            one[0] = x
            res = forward(ip, fp, up, offset, env_shift, toff, u, t1, one, False, fx_ptr, fx_t)
            tau = res[4]
            if np.isnan(tau):
                # forward and dual disagree only on exact time ties
                status[k] = STATUS_SURVIVAL
                sigma[k] = u
                break
            nu = _next_infection(o_ptr, o_t, o_op, o_init, x, tau)
            if np.isnan(nu):
                if origin_dead:
                    status[k] = STATUS_DEATH
                    sigma[k] = u
                else:
                    status[k] = STATUS_CENSORED
                break
            u = nu
        K[k] = kk
    return K, sigma, tfirst, status, last_u


@njit(cache=True)
def agreement_start(a_ptr, a_t, a_op, a_init, b_ptr, b_t, b_op, b_init, t_start):
    """Per site, the earliest time from which both logs agree until the end.

    inf when the two states differ at the end of the logs.
    """
    n = a_ptr.shape[0] - 1
    out = np.empty(n)
    for x in range(n):
        sa = a_init[x]
        sb = b_init[x]
        start = t_start if sa == sb else np.inf
        i = a_ptr[x]
        j = b_ptr[x]
        ie = a_ptr[x + 1]
        je = b_ptr[x + 1]
        while i < ie or j < je:
            if j >= je or (i < ie and a_t[i] <= b_t[j]):
                s = a_t[i]
            else:
                s = b_t[j]
            while i < ie and a_t[i] == s:
                sa = a_op[i] == 1
                i += 1
            while j < je and b_t[j] == s:
                sb = b_op[j] == 1
                j += 1
            if sa == sb:
                if start == np.inf:
                    start = s
            else:
                start = np.inf
        out[x] = start
    return out


# ----------------------------------------------------------------------------
# Python-facing stream queries (global coordinates)


@njit(cache=True)
def key_hash(base, coords, axis):
    """Hash of a site (axis < 0) or of the edge (coords, coords + e_axis)."""
    h = base
    for a in range(coords.shape[0]):
        h = absorb(h, coords[a])
    if axis >= 0:
        h = absorb(h, axis)
    return h


@njit(cache=True)
def stream_events(h_obj, h_thin, is_edge, t0, t1, slab, mean, thr1, thr2, weak):
    """Sorted kept event times of one object inside [t0, t1)."""
    out = np.empty(64)
    n = 0
    buf = np.empty(4096)
    k0 = np.int64(np.floor(t0 / slab))
    if k0 < 0:
        k0 = 0
    k = k0
    while k * slab < t1:
        m = slab_times(h_obj, k, mean, slab, buf)
        for j in range(m):
            t = buf[j]
            if t < t0 or t >= t1:
                continue
            if is_edge and not _kept(h_obj, h_thin, k, j, thr1, thr2, weak):
                continue
            if n >= out.shape[0]:
                out = _grow(out, n)
            out[n] = t
            n += 1
        k += 1
    res = out[:n].copy()
    res.sort()
    return res


@njit(cache=True)
def states_at(ptr, times, ops, init, u):
    n = ptr.shape[0] - 1
    out = np.empty(n, np.bool_)
    for x in range(n):
        out[x] = state_after(ptr, times, ops, init, x, u)
    return out
