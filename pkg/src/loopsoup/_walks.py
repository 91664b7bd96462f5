"""numba kernels for random-walk paths.

Steps are coded as ``2*axis`` for ``+e_axis`` and ``2*axis + 1`` for
``-e_axis``. Each path ``i`` draws from its own hashed counter stream
``subkey(key, ids[i])`` so results do not depend on batching.
"""

from __future__ import annotations

import numba as nb
import numpy as np

from .rng import subkey, uniform, uniform_open


@nb.njit(cache=True, inline="always")
def _lookup(pos, lo, dims, index):
    flat = 0
    for c in range(pos.shape[0]):
        r = pos[c] - lo[c]
        if r < 0 or r >= dims[c]:
            return -1
        flat = flat * dims[c] + r
    return index[flat]


@nb.njit(cache=True, inline="always")
def _apply(pos, code):
    axis = code >> 1
    if code & 1:
        pos[axis] -= 1
    else:
        pos[axis] += 1


@nb.njit(cache=True)
def _bridge_into(sk, count_row, duration, tbuf, sbuf, rem):
    """Generate one bridge into scratch buffers; returns the number of jumps."""
    d = count_row.shape[0]
    m = 0
    for c in range(d):
        m += 2 * count_row[c]
    acc = 0.0
    for r in range(m):
        acc += -np.log(uniform_open(sk, r))
        tbuf[r] = acc
    acc += -np.log(uniform_open(sk, m))
    scale = duration / acc
    for r in range(m):
        tbuf[r] *= scale
    total = m
    for c in range(d):
        rem[2 * c] = count_row[c]
        rem[2 * c + 1] = count_row[c]
    for r in range(m):
        u = uniform(sk, m + 1 + r) * total
        cum = 0
        pick = 2 * d - 1
        for c in range(2 * d):
            cum += rem[c]
            if u < cum:
                pick = c
                break
        while rem[pick] == 0:
            pick -= 1
        sbuf[r] = pick
        rem[pick] -= 1
        total -= 1
    return m


@nb.njit(cache=True)
def fill_bridges(counts, durations, key, ids, offsets, times, steps):
    """Exact bridge skeletons given the per-axis numbers of +/- jumps.

    Jump times are the order statistics of uniforms on ``[0, duration)``
    (normalised exponential spacings); the step sequence is a uniformly
    random arrangement of the multiset of steps.
    """
    n, d = counts.shape
    rem = np.empty(2 * d, np.int64)
    for i in range(n):
        lo = offsets[i]
        hi = offsets[i + 1]
        _bridge_into(subkey(key, ids[i]), counts[i], durations[i], times[lo:hi], steps[lo:hi], rem)


@nb.njit(cache=True)
def holding_intervals(starts, durations, offsets, times, steps, t0):
    """Flatten paths into holding intervals: (path index, site, start time, length)."""
    n, d = starts.shape
    total = offsets[n] + n
    owner = np.empty(total, np.int64)
    sites = np.empty((total, d), np.int64)
    tstart = np.empty(total, np.float64)
    dt = np.empty(total, np.float64)
    pos = np.empty(d, np.int64)
    k = 0
    for i in range(n):
        for c in range(d):
            pos[c] = starts[i, c]
        prev = 0.0
        for r in range(offsets[i], offsets[i + 1]):
            owner[k] = i
            sites[k] = pos
            tstart[k] = t0[i] + prev
            dt[k] = times[r] - prev
            k += 1
            prev = times[r]
            _apply(pos, steps[r])
        owner[k] = i
        sites[k] = pos
        tstart[k] = t0[i] + prev
        dt[k] = durations[i] - prev
        k += 1
    return owner, sites, tstart, dt


@nb.njit(cache=True)
def local_times_at(starts, durations, offsets, times, steps, x):
    n, d = starts.shape
    out = np.zeros(n)
    pos = np.empty(d, np.int64)
    for i in range(n):
        # a path with m jumps stays within l1-distance m of its start
        dist = 0
        for c in range(d):
            dist += abs(starts[i, c] - x[c])
        m = offsets[i + 1] - offsets[i]
        if dist > m:
            continue
        for c in range(d):
            pos[c] = starts[i, c]
        prev = 0.0
        for r in range(offsets[i], offsets[i + 1] + 1):
            end = times[r] if r < offsets[i + 1] else durations[i]
            same = True
            for c in range(d):
                if pos[c] != x[c]:
                    same = False
                    break
            if same:
                out[i] += end - prev
            if r < offsets[i + 1]:
                prev = end
                _apply(pos, steps[r])
    return out


@nb.njit(cache=True)
def loop_window_stats(bases, counts, durations, key, ids, lo, dims, index, n_k,
                      marked, tau):
    """Window observables of loops relative to a finite set K, without storing paths.

    Loops are generated exactly as :func:`fill_bridges` would (same streams).
    For each loop returns: whether it hits K, the K-index of the canonical
    entrance (end of the longest K-avoiding stretch), the number of distinct
    K sites visited, D_K, and the local time at K-site ``marked`` during the
    first ``tau`` time units after the canonical entrance. Also returns the
    circular holding-interval index of the entrance (0 is the interval
    straddling the base time) and its start time.
    """
    n, d = counts.shape
    hit = np.zeros(n, np.bool_)
    entry = -np.ones(n, np.int64)
    visited = np.zeros(n, np.int64)
    dk = np.zeros(n)
    lt = np.zeros(n)
    entry_interval = -np.ones(n, np.int64)
    entry_time = np.zeros(n)
    maxm = 0
    for i in range(n):
        m = 0
        for c in range(d):
            m += 2 * counts[i, c]
        if m > maxm:
            maxm = m
    tbuf = np.empty(maxm + 1)
    sbuf = np.empty(maxm + 1, np.int8)
    kin = np.empty(maxm + 1, np.int64)
    cstart = np.empty(maxm + 1)
    clen = np.empty(maxm + 1)
    rem = np.empty(2 * d, np.int64)
    seen = np.zeros(n_k, np.bool_)
    pos = np.empty(d, np.int64)
    for i in range(n):
        sk = subkey(key, ids[i])
        m = _bridge_into(sk, counts[i], durations[i], tbuf, sbuf, rem)
        ell = durations[i]
        for c in range(d):
            pos[c] = bases[i, c]
        any_hit = False
        for r in range(m + 1):
            kin[r] = _lookup(pos, lo, dims, index)
            if kin[r] >= 0:
                any_hit = True
            if r < m:
                _apply(pos, sbuf[r])
        if not any_hit:
            continue
        hit[i] = True
        for q in range(n_k):
            seen[q] = False
        nvis = 0
        for r in range(m + 1):
            if kin[r] >= 0 and not seen[kin[r]]:
                seen[kin[r]] = True
                nvis += 1
        visited[i] = nvis
        # circular holding intervals: c = 0 wraps [t_{m-1}, ell) + [0, t_0), c >= 1 is [t_{c-1}, t_c)
        nc = m if m > 0 else 1
        for c in range(nc):
            cstart[c] = tbuf[c - 1] if c > 0 else (tbuf[m - 1] if m > 0 else 0.0)
            if m == 0:
                clen[c] = ell
            elif c == 0:
                clen[c] = ell - tbuf[m - 1] + tbuf[0]
            else:
                clen[c] = tbuf[c] - tbuf[c - 1]
        # longest circular K-avoiding stretch, entrance = first K interval after it
        first_k = -1
        for c in range(nc):
            if kin[c] >= 0:
                first_k = c
                break
        best = 0.0
        best_entry = first_k
        run = 0.0
        for q in range(1, nc + 1):
            c = (first_k + q) % nc
            if kin[c] < 0:
                run += clen[c]
            else:
                if run > best:
                    best = run
                    best_entry = c
                run = 0.0
        entry[i] = kin[best_entry]
        entry_interval[i] = best_entry
        entry_time[i] = cstart[best_entry]
        dk[i] = ell - best
        if tau > 0:
            acc = 0.0
            elapsed = 0.0
            c = best_entry
            while elapsed < tau:
                seg = min(clen[c], tau - elapsed)
                if kin[c] == marked:
                    acc += seg
                elapsed += seg
                c = (c + 1) % nc
            lt[i] = acc
    return hit, entry, visited, dk, lt, entry_interval, entry_time


@nb.njit(cache=True)
def loops_hit(bases, counts, durations, key, ids, lo, dims, index):
    """Whether each loop visits the lookup set (generated as in :func:`fill_bridges`)."""
    n, d = counts.shape
    hit = np.zeros(n, np.bool_)
    rem = np.empty(2 * d, np.int64)
    pos = np.empty(d, np.int64)
    reach = 0
    for c in range(d):
        reach = max(reach, dims[c])
    for i in range(n):
        sk = subkey(key, ids[i])
        m = 0
        dist = 0
        for c in range(d):
            m += 2 * counts[i, c]
            pos[c] = bases[i, c]
            r = bases[i, c] - lo[c]
            if r < 0:
                dist += -r
            elif r >= dims[c]:
                dist += r - dims[c] + 1
        if dist > m // 2 + 1:
            continue
        if _lookup(pos, lo, dims, index) >= 0:
            hit[i] = True
            continue
        total = m
        for c in range(d):
            rem[2 * c] = counts[i, c]
            rem[2 * c + 1] = counts[i, c]
        for r in range(m):
            u = uniform(sk, m + 1 + r) * total
            cum = 0
            pick = 2 * d - 1
            for c in range(2 * d):
                cum += rem[c]
                if u < cum:
                    pick = c
                    break
            while rem[pick] == 0:
                pick -= 1
            rem[pick] -= 1
            total -= 1
            _apply(pos, pick)
            if _lookup(pos, lo, dims, index) >= 0:
                hit[i] = True
                break
    return hit


@nb.njit(cache=True)
def escape_walks(starts, n_walks, lo, dims, index, center, radius, key, id0):
    """Discrete-time walks from each start: take one step, then run until K is
    hit or the Euclidean distance to ``center`` exceeds ``radius``.

    Returns per start: number of escapes and the escape positions (flattened,
    one row per escaped walk, with the start index).
    """
    ns, d = starts.shape
    escaped = np.zeros(ns, np.int64)
    cap = ns * n_walks
    exit_pos = np.empty((cap, d), np.int64)
    exit_owner = np.empty(cap, np.int64)
    ne = 0
    pos = np.empty(d, np.int64)
    r2max = radius * radius
    for s in range(ns):
        for w in range(n_walks):
            sk = subkey(key, id0 + s * n_walks + w)
            for c in range(d):
                pos[c] = starts[s, c]
            ctr = 0
            while True:
                code = int(uniform(sk, ctr) * 2 * d)
                ctr += 1
                _apply(pos, code)
                if _lookup(pos, lo, dims, index) >= 0:
                    break
                r2 = 0.0
                for c in range(d):
                    dx = pos[c] - center[c]
                    r2 += dx * dx
                if r2 > r2max:
                    escaped[s] += 1
                    exit_pos[ne] = pos
                    exit_owner[ne] = s
                    ne += 1
                    break
    return escaped, exit_pos[:ne], exit_owner[:ne]


@nb.njit(cache=True)
def first_hits(x, n_walks, lo, dims, index, t_max, cut_r2, key, id0):
    """Continuous-time walks from ``x`` (rate 1). Returns the first time after
    the first jump at which K is hit (``inf`` if not before ``t_max``) and the
    K-index hit. Walks farther than ``sqrt(cut_r2)`` from the lookup box are
    abandoned."""
    d = x.shape[0]
    t_hit = np.full(n_walks, np.inf)
    where = -np.ones(n_walks, np.int64)
    pos = np.empty(d, np.int64)
    for w in range(n_walks):
        sk = subkey(key, id0 + w)
        for c in range(d):
            pos[c] = x[c]
        t = 0.0
        ctr = 0
        while True:
            t += -np.log(uniform_open(sk, ctr))
            if t > t_max:
                break
            code = int(uniform(sk, ctr + 1) * 2 * d)
            ctr += 2
            _apply(pos, code)
            k = _lookup(pos, lo, dims, index)
            if k >= 0:
                t_hit[w] = t
                where[w] = k
                break
            r2 = 0.0
            for c in range(d):
                dx = 0
                if pos[c] < lo[c]:
                    dx = lo[c] - pos[c]
                elif pos[c] >= lo[c] + dims[c]:
                    dx = pos[c] - lo[c] - dims[c] + 1
                r2 += dx * dx
            if r2 > cut_r2:
                break
    return t_hit, where


@nb.njit(cache=True)
def walk_skeleton(start, horizon, lo, dims, index, avoid, key, wid, max_tries):
    """One continuous-time walk on ``[0, horizon)``.

    With ``avoid`` set, the walk is redrawn (fresh counters) until it does not
    return to K after its first jump within the horizon. Returns jump times,
    step codes and the number of attempts; attempts == max_tries + 1 signals
    failure.
    """
    d = start.shape[0]
    cap = int(horizon * 2 + 50 * np.sqrt(horizon + 1) + 100)
    tbuf = np.empty(cap)
    sbuf = np.empty(cap, np.int8)
    pos = np.empty(d, np.int64)
    for attempt in range(max_tries):
        sk = subkey(key, wid * 1000003 + attempt)
        for c in range(d):
            pos[c] = start[c]
        t = 0.0
        m = 0
        ctr = 0
        ok = True
        while True:
            t += -np.log(uniform_open(sk, ctr))
            if t >= horizon:
                break
            code = int(uniform(sk, ctr + 1) * 2 * d)
            ctr += 2
            if m >= tbuf.shape[0]:
                nt = np.empty(2 * tbuf.shape[0])
                ns = np.empty(2 * tbuf.shape[0], np.int8)
                nt[:m] = tbuf[:m]
                ns[:m] = sbuf[:m]
                tbuf = nt
                sbuf = ns
            tbuf[m] = t
            sbuf[m] = code
            m += 1
            _apply(pos, code)
            if avoid and _lookup(pos, lo, dims, index) >= 0:
                ok = False
                break
        if ok:
            return tbuf[:m].copy(), sbuf[:m].copy(), attempt + 1
    return tbuf[:0].copy(), sbuf[:0].copy(), max_tries + 1


@nb.njit(cache=True)
def forward_window_stats(entries, lo, dims, index, n_k, marked, tau, center, r_far, t_max, key, id0):
    """Continuous-time walks started at K-sites ``entries`` (K-indices), run until
    farther than ``r_far`` from ``center`` or past ``t_max``.

    Returns per walk: distinct K sites visited, time of the last exit from K,
    local time at K-site ``marked`` during ``[0, tau)``, and whether the walk
    was stopped by ``t_max`` rather than by distance.
    """
    nw = entries.shape[0]
    d = lo.shape[0]
    sites = np.empty((n_k, d), np.int64)
    # recover the coordinates of every K-index from the dense grid
    total = 1
    for c in range(d):
        total *= dims[c]
    for flat in range(total):
        k = index[flat]
        if k >= 0:
            rem = flat
            for c in range(d - 1, -1, -1):
                sites[k, c] = lo[c] + rem % dims[c]
                rem //= dims[c]
    visited = np.zeros(nw, np.int64)
    last_exit = np.zeros(nw)
    lt = np.zeros(nw)
    timed_out = np.zeros(nw, np.bool_)
    seen = np.zeros(n_k, np.bool_)
    pos = np.empty(d, np.int64)
    r2max = r_far * r_far
    for w in range(nw):
        sk = subkey(key, id0 + w)
        for q in range(n_k):
            seen[q] = False
        for c in range(d):
            pos[c] = sites[entries[w], c]
        cur = entries[w]
        seen[cur] = True
        nvis = 1
        t = 0.0
        ctr = 0
        acc = 0.0
        while True:
            hold = -np.log(uniform_open(sk, ctr))
            if cur == marked and t < tau:
                acc += min(hold, tau - t)
            t += hold
            if cur >= 0:
                last_exit[w] = t
            if t > t_max:
                timed_out[w] = True
                break
            code = int(uniform(sk, ctr + 1) * 2 * d)
            ctr += 2
            _apply(pos, code)
            cur = _lookup(pos, lo, dims, index)
            if cur >= 0:
                if not seen[cur]:
                    seen[cur] = True
                    nvis += 1
            else:
                r2 = 0.0
                for c in range(d):
                    dx = pos[c] - center[c]
                    r2 += dx * dx
                if r2 > r2max:
                    break
        visited[w] = nvis
        lt[w] = acc
    return visited, last_exit, lt, timed_out
