"""CVRP solving: savings construction, ruin-and-recreate improvement,
a brute-force oracle for tiny instances, and solution (de)serialization.

Routes are sequences of atomic *visit units*: plain client ids or
forced Segments. A Segment is traversed endpoint to endpoint and is
never split; `anchored` endpoints must additionally sit adjacent to
the depot. The improvement loop accepts strictly better solutions
only, so the incumbent cost is non-increasing; diversification comes
from the per-run random streams of best_of_k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import json
import numpy as np

from . import _search
from .instance import Instance, distance, distance_matrix


@dataclass(frozen=True)
class Segment:
    """Forced contiguous client run, traversed as one unit."""

    sid: int
    clients: tuple
    demand: int
    internal_cost: float
    anchored: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.clients:
            raise ValueError("segment needs at least one client")
        if len(set(self.clients)) != len(self.clients):
            raise ValueError("segment clients must be distinct")
        ends = {self.clients[0], self.clients[-1]}
        if not frozenset(self.anchored) <= ends:
            raise ValueError("anchored ids must be segment endpoints")
        object.__setattr__(self, "clients", tuple(int(c) for c in self.clients))
        object.__setattr__(self, "anchored", frozenset(int(c) for c in self.anchored))

    @property
    def endpoint_a(self) -> int:
        return self.clients[0]

    @property
    def endpoint_b(self) -> int:
        return self.clients[-1]


def make_segment(inst: Instance, sid: int, clients, anchored=()) -> Segment:
    """Segment with demand and internal cost computed from the instance."""
    clients = tuple(int(c) for c in clients)
    dem = int(sum(int(inst.demands[c]) for c in clients))
    if dem > inst.capacity:
        raise ValueError(f"segment demand {dem} exceeds capacity {inst.capacity}")
    cost = 0.0
    for a, b in zip(clients, clients[1:]):
        cost += distance(inst, a, b)
    return Segment(sid=sid, clients=clients, demand=dem, internal_cost=cost, anchored=frozenset(anchored))


@dataclass(frozen=True)
class Route:
    """Ordered stops; each stop is (unit, flipped) with unit a client id
    or a Segment. Depot at both ends is implicit."""

    stops: tuple

    def clients(self) -> tuple:
        out = []
        for unit, flipped in self.stops:
            if isinstance(unit, Segment):
                out.extend(reversed(unit.clients) if flipped else unit.clients)
            else:
                out.append(int(unit))
        return tuple(out)

    def demand(self, inst: Instance) -> int:
        return int(sum(int(inst.demands[c]) for c in self.clients()))


@dataclass(frozen=True)
class Solution:
    routes: tuple
    cost: float


def _unit_ends(unit, flipped):
    if isinstance(unit, Segment):
        a, b = unit.endpoint_a, unit.endpoint_b
    else:
        a = b = int(unit)
    return (b, a) if flipped else (a, b)


def route_cost(inst: Instance, route: Route) -> float:
    """Depot -> first entry, internal segment costs, inter-unit legs,
    last exit -> depot."""
    if not route.stops:
        return 0.0
    total = 0.0
    prev = 0
    for unit, flipped in route.stops:
        entry, exit_ = _unit_ends(unit, flipped)
        total += distance(inst, prev, entry)
        if isinstance(unit, Segment):
            total += unit.internal_cost
        prev = exit_
    total += distance(inst, prev, 0)
    return total


def make_solution(inst: Instance, stop_lists) -> Solution:
    routes = tuple(Route(stops=tuple(stops)) for stops in stop_lists if stops)
    cost = sum(route_cost(inst, r) for r in routes)
    return Solution(routes=routes, cost=cost)


def _anchors_ok(stops) -> bool:
    k = len(stops)
    for idx, (unit, flipped) in enumerate(stops):
        if not isinstance(unit, Segment) or not unit.anchored:
            continue
        entry, exit_ = _unit_ends(unit, flipped)
        if len(unit.clients) == 1:
            if not (idx == 0 or idx == k - 1):
                return False
            continue
        for c in unit.anchored:
            ok = (idx == 0 and c == entry) or (idx == k - 1 and c == exit_)
            if not ok:
                return False
    return True


def verify_solution(inst: Instance, sol: Solution, forced=()):
    """Raise ValueError unless sol is feasible, covers every client
    exactly once, keeps forced segments intact and anchored, and has a
    consistent cached cost."""
    seen = []
    for r in sol.routes:
        cl = r.clients()
        seen.extend(cl)
        load = sum(int(inst.demands[c]) for c in cl)
        if load > inst.capacity:
            raise ValueError(f"route load {load} exceeds capacity {inst.capacity}")
        if not _anchors_ok(r.stops):
            raise ValueError("depot-anchored endpoint not adjacent to the depot")
    if sorted(seen) != list(range(1, inst.n + 1)):
        raise ValueError("solution does not cover every client exactly once")
    total = sum(route_cost(inst, r) for r in sol.routes)
    if abs(total - sol.cost) > 1e-6:
        raise ValueError(f"cached cost {sol.cost} != recomputed {total}")
    if forced:
        present = {}
        for r in sol.routes:
            for unit, _f in r.stops:
                if isinstance(unit, Segment):
                    present[unit.clients] = unit
        for seg in forced:
            if seg.clients not in present:
                raise ValueError(f"forced segment {seg.clients} missing from solution")


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def _collect_units(inst: Instance, forced):
    """All visit units: forced segments plus the leftover clients."""
    covered = set()
    for seg in forced:
        for c in seg.clients:
            if c in covered:
                raise ValueError(f"client {c} appears in two forced segments")
            if not 1 <= c <= inst.n:
                raise ValueError(f"segment client {c} out of range")
            covered.add(c)
    units = list(forced)
    units.extend(c for c in range(1, inst.n + 1) if c not in covered)
    return units


def _ends_of(unit):
    if isinstance(unit, Segment):
        return unit.endpoint_a, unit.endpoint_b
    return int(unit), int(unit)


def _unit_demand(inst, unit):
    if isinstance(unit, Segment):
        return unit.demand
    return int(inst.demands[int(unit)])


def savings_construct(inst: Instance, forced=(), seed: int = 0) -> Solution:
    """Clarke-Wright savings over visit units.

    Savings s_ij = c(0,i) + c(0,j) - c(i,j) for endpoint clients of
    distinct units, processed in decreasing order with lexicographic
    (i, j) tie-breaks; merges are applied only while the saving is
    positive and capacity, segment integrity and depot anchors permit.
    The seed parameter is accepted for interface symmetry; construction
    is deterministic.
    """
    del seed
    units = _collect_units(inst, forced)
    if not units:
        return Solution(routes=(), cost=0.0)
    D = distance_matrix(inst)

    routes = [[(u, False)] for u in units]
    loads = [_unit_demand(inst, u) for u in units]
    route_of = {}
    for ridx, u in enumerate(units):
        a, b = _ends_of(u)
        route_of[a] = ridx
        route_of[b] = ridx

    pairs = []
    for i1, u in enumerate(units):
        for u2 in units[i1 + 1:]:
            for e1 in set(_ends_of(u)):
                for e2 in set(_ends_of(u2)):
                    i, j = (e1, e2) if e1 < e2 else (e2, e1)
                    s = D[0, i] + D[0, j] - D[i, j]
                    pairs.append((s, i, j))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))

    def head_entry(stops):
        return _unit_ends(*stops[0])[0]

    def tail_exit(stops):
        return _unit_ends(*stops[-1])[1]

    def reverse(stops):
        return [(u, not f) for u, f in reversed(stops)]

    for s, i, j in pairs:
        if s <= 0:
            break
        ri, rj = route_of.get(i), route_of.get(j)
        if ri is None or rj is None or ri == rj:
            continue
        if routes[ri] is None or routes[rj] is None:
            continue
        if loads[ri] + loads[rj] > inst.capacity:
            continue
        left = routes[ri]
        if tail_exit(left) != i:
            if head_entry(left) == i:
                left = reverse(left)
            else:
                continue  # i is an interior junction already
        right = routes[rj]
        if head_entry(right) != j:
            if tail_exit(right) == j:
                right = reverse(right)
            else:
                continue
        merged = left + right
        if not _anchors_ok(merged):
            continue
        routes[ri] = merged
        loads[ri] += loads[rj]
        routes[rj] = None
        for e in (head_entry(merged), tail_exit(merged)):
            route_of[e] = ri
        route_of[i] = ri
        route_of[j] = ri

    final = [r for r in routes if r]
    final.sort(key=lambda stops: Route(stops=tuple(stops)).clients()[0])
    return make_solution(inst, final)


# ---------------------------------------------------------------------------
# improvement
# ---------------------------------------------------------------------------


def _ruin_max(m: int) -> int:
    return max(1, min(max(3, m // 10), m))


def _kernel_state(inst, sol):
    """Flatten a solution into the kernel's array representation."""
    unit_objs = []
    seq = []
    flips = []
    bounds = [0]
    loads = []
    for r in sol.routes:
        if not r.stops:
            continue
        for unit, f in r.stops:
            seq.append(len(unit_objs))
            unit_objs.append(unit)
            flips.append(1 if f else 0)
        bounds.append(len(seq))
        loads.append(r.demand(inst))
    m = len(unit_objs)
    ua = np.empty(m, dtype=np.int64)
    ub = np.empty(m, dtype=np.int64)
    udem = np.empty(m, dtype=np.int64)
    uinternal = np.zeros(m, dtype=np.float64)
    anch_a = np.zeros(m, dtype=np.uint8)
    anch_b = np.zeros(m, dtype=np.uint8)
    for t, unit in enumerate(unit_objs):
        a, b = _ends_of(unit)
        ua[t], ub[t] = a, b
        udem[t] = _unit_demand(inst, unit)
        if isinstance(unit, Segment):
            uinternal[t] = unit.internal_cost
            if len(unit.clients) == 1:
                flag = 1 if unit.anchored else 0
                anch_a[t] = flag
                anch_b[t] = flag
            else:
                anch_a[t] = 1 if unit.endpoint_a in unit.anchored else 0
                anch_b[t] = 1 if unit.endpoint_b in unit.anchored else 0
    seq_arr = np.array(seq, dtype=np.int64)
    flip_arr = np.array(flips, dtype=np.uint8)
    rb = np.zeros(m + 2, dtype=np.int64)
    rb[: len(bounds)] = bounds
    rload = np.zeros(m + 1, dtype=np.int64)
    rload[: len(loads)] = loads
    return unit_objs, ua, ub, udem, uinternal, anch_a, anch_b, seq_arr, flip_arr, rb, len(loads), rload


def _nearest_units(D, ua, ub, walk_neighbors):
    m = ua.shape[0]
    nnk = max(1, min(walk_neighbors, m - 1)) if m > 1 else 1
    if m == 1:
        return np.zeros((1, 1), dtype=np.int64), 1
    # unit-to-unit distance: closest endpoint pair, ties by unit index
    pair = np.minimum(
        np.minimum(D[np.ix_(ua, ua)], D[np.ix_(ua, ub)]),
        np.minimum(D[np.ix_(ub, ua)], D[np.ix_(ub, ub)]),
    )
    np.fill_diagonal(pair, np.inf)
    order = np.lexsort((np.broadcast_to(np.arange(m), (m, m)), pair), axis=1)
    return np.ascontiguousarray(order[:, :nnk], dtype=np.int64), nnk


def improve(inst: Instance, sol: Solution, forced=(), budget: int = 10_000,
            seed: int = 0, walk_neighbors: int = 5,
            patience: int | None = None) -> Solution:
    """Ruin-and-recreate for `budget` iterations; never returns a worse
    solution than its input and replays exactly for a fixed seed.

    patience (optional) stops a run after that many consecutive
    non-improving iterations; None runs the full budget.
    """
    verify_solution(inst, sol, forced)
    if budget <= 0 or inst.n == 0 or not sol.routes:
        return sol
    (unit_objs, ua, ub, udem, uinternal, anch_a, anch_b,
     seq, flip, rb, nr, rload) = _kernel_state(inst, sol)
    m = len(unit_objs)
    if m <= 1:
        return sol
    D = distance_matrix(inst)
    nn, nnk = _nearest_units(D, ua, ub, walk_neighbors)
    ruin_max = _ruin_max(m)
    rng = np.random.Generator(np.random.PCG64(seed))
    rnd = rng.random((budget, 2 * ruin_max))
    nr, best_cost = _search.run_improve(
        D, ua, ub, udem, uinternal, anch_a, anch_b, int(inst.capacity),
        seq, flip, rb, nr, rload, nn, nnk, ruin_max, rnd,
        0 if patience is None else int(patience),
    )
    stop_lists = []
    for r in range(nr):
        stops = [(unit_objs[seq[g]], bool(flip[g])) for g in range(rb[r], rb[r + 1])]
        stop_lists.append(stops)
    out = make_solution(inst, stop_lists)
    if abs(out.cost - best_cost) > 1e-6:
        raise RuntimeError(f"kernel cost {best_cost} disagrees with recomputation {out.cost}")
    if out.cost > sol.cost:
        return sol
    return out


def best_of_k(inst: Instance, forced=(), k: int = 10, budget: int = 10_000,
              seed: int = 0, walk_neighbors: int = 5,
              patience: int | None = None) -> Solution:
    """Construct + improve k times with derived seeds; keep the cheapest.

    Run seeds are the first k 64-bit words of SeedSequence(seed), so the
    first run of best_of_k(k) matches best_of_k(1) for the same seed.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    run_seeds = np.random.SeedSequence(seed).generate_state(k, dtype=np.uint64)
    base = savings_construct(inst, forced)
    best = None
    for i in range(k):
        cand = improve(inst, base, forced, budget=budget, seed=int(run_seeds[i]),
                       walk_neighbors=walk_neighbors, patience=patience)
        if best is None or cand.cost < best.cost:
            best = cand
    return best


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------


def brute_force_optimal(inst: Instance, forced=()) -> Solution:
    """Provably optimal solution by subset dynamic programming.

    Enumerates capacity-feasible unit subsets, solves each subset's
    cheapest open-and-close route by Held-Karp over (visited set, last
    unit, orientation) states, then partitions the full unit set
    optimally. Limited to 10 visit units.
    """
    units = _collect_units(inst, forced)
    m = len(units)
    if m == 0:
        return Solution(routes=(), cost=0.0)
    if m > 10:
        raise ValueError(f"instance too large for brute force: {m} visit units > 10")
    D = distance_matrix(inst)
    ends = [_ends_of(u) for u in units]
    dems = [_unit_demand(inst, u) for u in units]
    internal = [u.internal_cost if isinstance(u, Segment) else 0.0 for u in units]
    single = [ends[t][0] == ends[t][1] for t in range(m)]

    def anch(t):
        u = units[t]
        if not isinstance(u, Segment):
            return False, False
        if len(u.clients) == 1:
            flag = bool(u.anchored)
            return flag, flag
        return u.endpoint_a in u.anchored, u.endpoint_b in u.anchored

    anchors = [anch(t) for t in range(m)]

    def oriented(t, f):
        a, b = ends[t]
        aa, ab = anchors[t]
        if f:
            return b, a, ab, aa
        return a, b, aa, ab

    full = 1 << m
    subset_dem = [0] * full
    for mask in range(1, full):
        low = (mask & -mask).bit_length() - 1
        subset_dem[mask] = subset_dem[mask ^ (1 << low)] + dems[low]

    INF = float("inf")
    nstate = 2 * m
    dp = [[INF] * nstate for _ in range(full)]
    par = [[-1] * nstate for _ in range(full)]
    for t in range(m):
        fs = (False,) if single[t] else (False, True)
        for f in fs:
            ein, _eout, _ea, _eb = oriented(t, f)
            dp[1 << t][2 * t + int(f)] = D[0, ein] + internal[t]

    order = sorted(range(1, full), key=lambda x: bin(x).count("1"))
    for mask in order:
        if subset_dem[mask] > inst.capacity:
            continue
        row = dp[mask]
        for st in range(nstate):
            cur = row[st]
            if cur == INF:
                continue
            t, f = st // 2, bool(st % 2)
            _ein, eout, _ea, eb = oriented(t, f)
            if single[t]:
                # anchored singleton may move inward only off the route head
                if anchors[t][0] and mask != (1 << t):
                    continue
            elif eb:  # anchored exit endpoint: t must stay last
                continue
            for v in range(m):
                if mask & (1 << v):
                    continue
                nmask = mask | (1 << v)
                if subset_dem[nmask] > inst.capacity:
                    continue
                fs = (False,) if single[v] else (False, True)
                for fv in fs:
                    vin, _vout, va, _vb = oriented(v, fv)
                    if va:  # entry anchored units can only start a route
                        continue
                    nst = 2 * v + int(fv)
                    cand = cur + D[eout, vin] + internal[v]
                    if cand < dp[nmask][nst]:
                        dp[nmask][nst] = cand
                        par[nmask][nst] = st

    route_best = [INF] * full
    route_arg = [-1] * full
    for mask in range(1, full):
        if subset_dem[mask] > inst.capacity:
            continue
        for st in range(nstate):
            if dp[mask][st] == INF:
                continue
            t, f = st // 2, bool(st % 2)
            _ein, eout, _ea, _eb = oriented(t, f)
            cand = dp[mask][st] + D[eout, 0]
            if cand < route_best[mask]:
                route_best[mask] = cand
                route_arg[mask] = st

    best = [INF] * full
    choice = [0] * full
    best[0] = 0.0
    for mask in range(1, full):
        low = 1 << ((mask & -mask).bit_length() - 1)
        sub = mask
        while sub:
            if sub & low and route_best[sub] < INF and best[mask ^ sub] < INF:
                cand = route_best[sub] + best[mask ^ sub]
                if cand < best[mask]:
                    best[mask] = cand
                    choice[mask] = sub
            sub = (sub - 1) & mask
    if best[full - 1] == INF:
        raise ValueError("no feasible partition (check segment demands and anchors)")

    stop_lists = []
    mask = full - 1
    while mask:
        sub = choice[mask]
        st = route_arg[sub]
        seq = []
        cur_mask = sub
        while st != -1:
            t, f = st // 2, bool(st % 2)
            seq.append((units[t], f))
            nxt = par[cur_mask][st]
            cur_mask ^= 1 << t
            st = nxt
        seq.reverse()
        stop_lists.append(seq)
        mask ^= sub
    stop_lists.sort(key=lambda stops: Route(stops=tuple(stops)).clients()[0])
    sol = make_solution(inst, stop_lists)
    verify_solution(inst, sol, forced)
    return sol


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def format_solution(sol: Solution) -> str:
    """CVRPLIB-style text: one "Route #k:" line per route plus "Cost"."""
    lines = []
    for idx, r in enumerate(sol.routes, start=1):
        lines.append(f"Route #{idx}: " + " ".join(str(c) for c in r.clients()))
    cost = sol.cost
    lines.append(f"Cost {int(cost) if float(cost).is_integer() else cost}")
    return "\n".join(lines) + "\n"


def parse_solution(text: str, inst: Instance | None = None) -> Solution:
    """Parse the text form (plain client stops). With an instance the
    cost is recomputed and checked against the declared value."""
    routes = []
    declared = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.lower().startswith("route"):
            _, _, rest = line.partition(":")
            clients = [int(v) for v in rest.split()]
            routes.append([(c, False) for c in clients])
        elif line.lower().startswith("cost"):
            declared = float(line.split()[1])
    if declared is None:
        raise ValueError("solution text missing Cost line")
    if inst is not None:
        sol = make_solution(inst, routes)
        if abs(sol.cost - declared) > 1e-6:
            raise ValueError(f"declared cost {declared} != recomputed {sol.cost}")
        return sol
    return Solution(routes=tuple(Route(stops=tuple(r)) for r in routes), cost=declared)


def solution_to_json(sol: Solution) -> str:
    segs = {}
    routes = []
    for r in sol.routes:
        stops = []
        for unit, f in r.stops:
            if isinstance(unit, Segment):
                segs[unit.sid] = unit
                stops.append({"segment": unit.sid, "reversed": bool(f)})
            else:
                stops.append({"client": int(unit)})
        routes.append(stops)
    return json.dumps(
        {
            "cost": sol.cost,
            "routes": routes,
            "segments": {
                str(s.sid): {
                    "clients": list(s.clients),
                    "demand": s.demand,
                    "internal_cost": s.internal_cost,
                    "anchored": sorted(s.anchored),
                }
                for s in segs.values()
            },
        }
    )


def solution_from_json(text: str) -> Solution:
    obj = json.loads(text)
    segs = {
        int(sid): Segment(
            sid=int(sid),
            clients=tuple(rec["clients"]),
            demand=int(rec["demand"]),
            internal_cost=float(rec["internal_cost"]),
            anchored=frozenset(rec.get("anchored", ())),
        )
        for sid, rec in obj.get("segments", {}).items()
    }
    routes = []
    for stops in obj["routes"]:
        parsed = []
        for stop in stops:
            if "client" in stop:
                parsed.append((int(stop["client"]), False))
            else:
                parsed.append((segs[int(stop["segment"])], bool(stop.get("reversed", False))))
        routes.append(Route(stops=tuple(parsed)))
    return Solution(routes=tuple(routes), cost=float(obj["cost"]))
