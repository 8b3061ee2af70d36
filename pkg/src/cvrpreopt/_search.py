"""Numba kernel for the ruin-and-recreate improvement loop.

The solver flattens a solution into arrays over "visit units" (free
clients and forced segments, each atomic). A unit u has endpoint nodes
ua[u]/ub[u], a demand, an internal traversal cost, and optional depot
anchors on its endpoints (the anchored endpoint must sit adjacent to
the depot in every route). Routes live in one flat `seq` array with
boundary offsets `rb`; `flip` marks units traversed b->a.

All randomness is consumed from a pre-generated float64 stream, so the
kernel is a pure function of its inputs and safe to run concurrently.
fastmath stays off: rounded-mode costs are integers and comparisons
must be exact.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _route_cost_span(D, ua, ub, uinternal, seq, flip, s, e):
    c = 0.0
    prev = 0
    for idx in range(s, e):
        u = seq[idx]
        if flip[idx]:
            ein = ub[u]
            eout = ua[u]
        else:
            ein = ua[u]
            eout = ub[u]
        c += D[prev, ein] + uinternal[u]
        prev = eout
    return c + D[prev, 0]


@njit(cache=True, nogil=True)
def total_cost(D, ua, ub, uinternal, seq, flip, rb, nr):
    c = 0.0
    for r in range(nr):
        c += _route_cost_span(D, ua, ub, uinternal, seq, flip, rb[r], rb[r + 1])
    return c


@njit(cache=True, nogil=True)
def _unit_ok_at(u, f, first, last, ua, ub, anch_a, anch_b):
    # Anchored endpoints must face the depot. Singletons (ua == ub) only
    # need one face at the depot, so head or tail both satisfy them.
    if ua[u] == ub[u]:
        return anch_a[u] == 0 or first or last
    ea = anch_b[u] if f else anch_a[u]
    eb = anch_a[u] if f else anch_b[u]
    if ea != 0 and not first:
        return False
    if eb != 0 and not last:
        return False
    return True


@njit(cache=True, nogil=True)
def _displaced_head_ok(u, f, route_len, ua, ub, anch_a, anch_b):
    # Current head unit gets pushed to index 1 by an insertion at p == 0.
    if ua[u] == ub[u]:
        return anch_a[u] == 0 or route_len == 1
    ea = anch_b[u] if f else anch_a[u]
    return ea == 0


@njit(cache=True, nogil=True)
def _displaced_tail_ok(u, f, route_len, ua, ub, anch_a, anch_b):
    # Current tail unit stops being last when inserting at p == len.
    if ua[u] == ub[u]:
        return anch_a[u] == 0 or route_len == 1
    eb = anch_a[u] if f else anch_b[u]
    return eb == 0


@njit(cache=True, nogil=True)
def _remove_unit(u, seq, flip, rb, nr, rload, fill, udem):
    g = -1
    for idx in range(fill):
        if seq[idx] == u:
            g = idx
            break
    r = 0
    while rb[r + 1] <= g:
        r += 1
    for idx in range(g, fill - 1):
        seq[idx] = seq[idx + 1]
        flip[idx] = flip[idx + 1]
    fill -= 1
    for q in range(r + 1, nr + 1):
        rb[q] -= 1
    rload[r] -= udem[u]
    if rb[r] == rb[r + 1]:
        for q in range(r, nr):
            rb[q] = rb[q + 1]
            rload[q] = rload[q + 1] if q + 1 < nr else 0
        nr -= 1
    return nr, fill


@njit(cache=True, nogil=True)
def _insert_unit(u, f, r, p, seq, flip, rb, nr, rload, fill, udem):
    if r == nr:
        # open a fresh route at the end
        rb[nr + 1] = rb[nr]
        nr += 1
        rload[nr - 1] = 0
        p = 0
    g = rb[r] + p
    for idx in range(fill, g, -1):
        seq[idx] = seq[idx - 1]
        flip[idx] = flip[idx - 1]
    seq[g] = u
    flip[g] = 1 if f else 0
    fill += 1
    for q in range(r + 1, nr + 1):
        rb[q] += 1
    rload[r] += udem[u]
    return nr, fill


@njit(cache=True, nogil=True)
def _best_insertion(u, D, ua, ub, udem, anch_a, anch_b, Q, seq, flip, rb, nr, rload):
    """Cheapest feasible (route, position, flip); route == nr means a new route.

    Scan order (routes asc, positions asc) plus strict improvement makes
    the choice deterministic; the new-route option is considered last.
    Segment orientation at a gap is greedy: the cheaper endpoint
    attachment wins (forward on ties), anchors permitting.
    """
    best_delta = np.inf
    best_r = nr
    best_p = 0
    best_f = False
    dem = udem[u]
    is_single = ua[u] == ub[u]
    na, nb = ua[u], ub[u]
    for r in range(nr):
        if rload[r] + dem > Q:
            continue
        s = rb[r]
        L = rb[r + 1] - s
        for p in range(L + 1):
            if p == 0:
                a = 0
            else:
                idx = s + p - 1
                a = ua[seq[idx]] if flip[idx] else ub[seq[idx]]
            if p == L:
                b = 0
            else:
                idx = s + p
                b = ub[seq[idx]] if flip[idx] else ua[seq[idx]]
            if p == 0 and L > 0:
                h = seq[s]
                if not _displaced_head_ok(h, flip[s] != 0, L, ua, ub, anch_a, anch_b):
                    continue
            if p == L and L > 0:
                t = seq[s + L - 1]
                if not _displaced_tail_ok(t, flip[s + L - 1] != 0, L, ua, ub, anch_a, anch_b):
                    continue
            first = p == 0
            last = p == L
            if is_single:
                if not _unit_ok_at(u, False, first, last, ua, ub, anch_a, anch_b):
                    continue
                f = False
                delta = D[a, na] + D[na, b] - D[a, b]
            else:
                ok_f = _unit_ok_at(u, False, first, last, ua, ub, anch_a, anch_b)
                ok_r = _unit_ok_at(u, True, first, last, ua, ub, anch_a, anch_b)
                if not ok_f and not ok_r:
                    continue
                if ok_f and (not ok_r or D[a, na] <= D[a, nb]):
                    f = False
                    delta = D[a, na] + D[nb, b] - D[a, b]
                else:
                    f = True
                    delta = D[a, nb] + D[na, b] - D[a, b]
            if delta < best_delta:
                best_delta = delta
                best_r = r
                best_p = p
                best_f = f
    new_delta = D[0, na] + D[0, nb]
    if new_delta < best_delta:
        return nr, 0, False
    return best_r, best_p, best_f


@njit(cache=True, nogil=True)
def run_improve(D, ua, ub, udem, uinternal, anch_a, anch_b, Q,
                seq, flip, rb, nr, rload, nn, nnk, ruin_max, rnd, patience):
    """Ruin-and-recreate with strict record-to-record acceptance.

    Mutates the passed state arrays; returns (nr, best_cost) with the
    arrays holding the best solution found. rnd has one row per
    iteration and 2 * ruin_max columns (ruin size, walk start, walk
    steps, reinsertion shuffle). patience > 0 stops the loop after that
    many consecutive non-improving iterations; 0 runs the full budget.
    """
    m = seq.shape[0]
    budget = rnd.shape[0]
    best_seq = seq.copy()
    best_flip = flip.copy()
    best_rb = rb.copy()
    best_rload = rload.copy()
    best_nr = nr
    best_cost = total_cost(D, ua, ub, uinternal, seq, flip, rb, nr)
    removed = np.empty(ruin_max, dtype=np.int64)
    stall = 0

    for it in range(budget):
        if patience > 0 and stall >= patience:
            break
        k = 1 + int(rnd[it, 0] * ruin_max)
        if k > m:
            k = m
        cur = int(rnd[it, 1] * m)
        removed[0] = cur
        cnt = 1
        for step in range(1, k):
            cur = nn[cur, int(rnd[it, 1 + step] * nnk)]
            seen = False
            for q in range(cnt):
                if removed[q] == cur:
                    seen = True
                    break
            if not seen:
                removed[cnt] = cur
                cnt += 1

        fill = m
        for q in range(cnt):
            nr, fill = _remove_unit(removed[q], seq, flip, rb, nr, rload, fill, udem)

        # reinsertion order: per-iteration shuffle of the ruined units
        for t in range(cnt - 1, 0, -1):
            j = int(rnd[it, 1 + ruin_max + (cnt - 1 - t)] * (t + 1))
            tmp = removed[t]
            removed[t] = removed[j]
            removed[j] = tmp
        for q in range(cnt):
            u = removed[q]
            r, p, f = _best_insertion(u, D, ua, ub, udem, anch_a, anch_b, Q,
                                      seq, flip, rb, nr, rload)
            nr, fill = _insert_unit(u, f, r, p, seq, flip, rb, nr, rload, fill, udem)

        c = total_cost(D, ua, ub, uinternal, seq, flip, rb, nr)
        if c < best_cost:
            best_cost = c
            best_nr = nr
            best_seq[:] = seq
            best_flip[:] = flip
            best_rb[:] = rb
            best_rload[:] = rload
            stall = 0
        else:
            nr = best_nr
            seq[:] = best_seq
            flip[:] = best_flip
            rb[:] = best_rb
            rload[:] = best_rload
            stall += 1

    return best_nr, best_cost
