"""Edge fixing: from per-edge predictions to a solved, expanded solution.

Pipeline: keep the edges predicted to survive (the fixed graph), repair
it so client degrees stay <= 2 and no client-only cycles or
over-capacity sequences remain (always dropping the lowest-probability
edge), contract maximal client sequences into forced segments, and
re-solve with those segments as atomic visit units. Every surviving
fixed edge is asserted to carry flow in the expanded solution.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .features import edge_key
from .instance import Instance
from .solver import (
    Segment,
    Solution,
    best_of_k,
    brute_force_optimal,
    make_segment,
    verify_solution,
)


@dataclass
class FixedGraph:
    """Undirected graph of fixed edges, each carrying its probability
    estimate. Node 0 is the depot; its degree is unconstrained."""

    edges: dict  # canonical EdgeKey -> p_hat

    def adjacency(self) -> dict:
        adj = {}
        for (i, j) in self.edges:
            adj.setdefault(i, set()).add(j)
            adj.setdefault(j, set()).add(i)
        return adj

    def nodes(self) -> frozenset:
        return frozenset(n for e in self.edges for n in e)

    def copy(self) -> "FixedGraph":
        return FixedGraph(edges=dict(self.edges))


def build_fixed_graph(predictions) -> FixedGraph:
    """Graph over the positively predicted edges.

    predictions: iterable of (edge, y_hat, p_hat) with canonical edges;
    duplicates are an error, p_hat must lie in (0, 1).
    """
    edges = {}
    for e, yhat, phat in predictions:
        key = edge_key(*e)
        if key in edges:
            raise ValueError(f"duplicate edge {key}")
        if not 0.0 < phat < 1.0:
            raise ValueError(f"p_hat for {key} must lie in (0, 1), got {phat}")
        if yhat:
            edges[key] = float(phat)
    return FixedGraph(edges=edges)


def _client_degree(graph: FixedGraph) -> dict:
    deg = {}
    for (i, j) in graph.edges:
        for n in (i, j):
            if n != 0:
                deg[n] = deg.get(n, 0) + 1
    return deg


def _lowest_edge(graph: FixedGraph, keys) -> tuple:
    return min(keys, key=lambda e: (graph.edges[e], e))


def sanitize(graph: FixedGraph):
    """Make sequences well-defined: every client keeps degree <= 2 and no
    client-only cycle survives; offending structures lose their
    lowest-probability edge (ties by edge key). Returns the cleaned
    graph and a removal log of (edge, reason)."""
    g = graph.copy()
    log = []
    while True:
        deg = _client_degree(g)
        offenders = sorted(c for c, d in deg.items() if d > 2)
        if not offenders:
            break
        c = offenders[0]
        incident = [e for e in g.edges if c in e]
        victim = _lowest_edge(g, incident)
        del g.edges[victim]
        log.append((victim, "degree"))
    while True:
        cycle = _find_client_cycle(g)
        if cycle is None:
            break
        victim = _lowest_edge(g, cycle)
        del g.edges[victim]
        log.append((victim, "cycle"))
    return g, log


def _client_adjacency(graph: FixedGraph) -> dict:
    adj = {}
    for (i, j) in graph.edges:
        if i == 0:
            continue
        adj.setdefault(i, []).append(j)
        adj.setdefault(j, []).append(i)
    return adj


def _find_client_cycle(graph: FixedGraph):
    """Edges of the first client-only cycle (client degrees are <= 2, so
    components are paths or simple cycles); None when acyclic."""
    adj = _client_adjacency(graph)
    seen = set()
    for start in sorted(adj):
        if start in seen:
            continue
        comp_nodes = []
        stack = [start]
        comp_seen = {start}
        while stack:
            v = stack.pop()
            comp_nodes.append(v)
            for w in adj[v]:
                if w not in comp_seen:
                    comp_seen.add(w)
                    stack.append(w)
        seen |= comp_seen
        comp_edges = {edge_key(v, w) for v in comp_nodes for w in adj[v]}
        if len(comp_edges) == len(comp_nodes):  # path has n-1 edges, cycle has n
            return sorted(comp_edges)
    return None


def client_sequences(graph: FixedGraph) -> list:
    """Maximal client paths (>= 2 nodes) of a sanitized graph, each
    oriented from its smaller endpoint, listed in ascending order of
    that endpoint."""
    adj = _client_adjacency(graph)
    sequences = []
    visited = set()
    for start in sorted(adj):
        if start in visited or len(adj[start]) != 1:
            continue
        path = [start]
        visited.add(start)
        cur, prev = start, None
        while True:
            nxt = [w for w in adj[cur] if w != prev]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            path.append(cur)
            visited.add(cur)
        if path[0] > path[-1]:
            path.reverse()
        sequences.append(tuple(path))
    sequences.sort(key=lambda p: p[0])
    return sequences


def resolve_infeasibility(graph: FixedGraph, inst: Instance):
    """Unfix the lowest-probability edge of every over-capacity client
    sequence, recomputing sequences each pass, until all sequences fit
    the vehicle capacity. Returns (graph, per-pass removal lists)."""
    g = graph.copy()
    passes = []
    while True:
        removed = []
        for p in client_sequences(g):
            if sum(int(inst.demands[c]) for c in p) > inst.capacity:
                seq_edges = [edge_key(a, b) for a, b in zip(p, p[1:])]
                victim = _lowest_edge(g, seq_edges)
                del g.edges[victim]
                removed.append(victim)
        if not removed:
            break
        passes.append(removed)
    return g, passes


@dataclass(frozen=True)
class ContractedInstance:
    """Network-reduction artifact: the renumbered reduced instance plus
    the forced structure expressed over original client ids."""

    reduced: Instance
    segments: tuple            # one Segment per sequence of >= 3 nodes
    forced_pairs: tuple        # 2-node sequences kept as fixed single edges
    depot_anchors: frozenset   # clients whose depot edge is fixed
    solver_segments: tuple     # every forced unit for the solver
    expansion: dict            # segment sid -> original client tuple
    removed_nodes: frozenset
    to_reduced_id: dict
    to_original_id: dict

    @property
    def nodes_before(self) -> int:
        return len(self.to_reduced_id) + len(self.removed_nodes) + 1

    @property
    def nodes_after(self) -> int:
        return len(self.to_reduced_id) + 1


def contract(inst: Instance, graph: FixedGraph) -> ContractedInstance:
    """Shrink every client sequence of >= 3 nodes into one forced
    segment: intermediate nodes leave the instance, the new edge costs
    the whole sequence, and the absorbed demand lands on the first
    endpoint. 2-node sequences stay as forced edges; fixed depot edges
    become depot anchors of the adjacent endpoint (the depot itself is
    never contracted away)."""
    sequences = client_sequences(graph)
    depot_anchors = frozenset(j for (i, j) in graph.edges if i == 0)
    in_sequence = {c for p in sequences for c in p}
    for p in sequences:
        if sum(int(inst.demands[c]) for c in p) > inst.capacity:
            raise ValueError(f"sequence {p} exceeds capacity; repair before contracting")

    solver_segments = []
    segments = []
    forced_pairs = []
    expansion = {}
    sid = 0
    for p in sequences:
        sid += 1
        anchored = frozenset(c for c in (p[0], p[-1]) if c in depot_anchors)
        seg = make_segment(inst, sid, p, anchored=anchored)
        solver_segments.append(seg)
        expansion[sid] = tuple(p)
        if len(p) >= 3:
            segments.append(seg)
        else:
            forced_pairs.append(edge_key(p[0], p[1]))
    for c in sorted(depot_anchors - in_sequence):
        sid += 1
        seg = make_segment(inst, sid, (c,), anchored=(c,))
        solver_segments.append(seg)
        expansion[sid] = (c,)

    removed = frozenset(c for p in sequences if len(p) >= 3 for c in p[1:-1])
    keep = [c for c in range(1, inst.n + 1) if c not in removed]
    to_reduced = {c: k + 1 for k, c in enumerate(keep)}
    to_original = {v: k for k, v in to_reduced.items()}

    demands = inst.demands.copy()
    for p in sequences:
        if len(p) >= 3:
            demands[p[0]] += sum(int(inst.demands[c]) for c in p[1:-1])
    coords = np.vstack([inst.coords[0:1], inst.coords[keep]])
    dem = np.concatenate([[0], demands[keep]])
    reduced = Instance(
        name=f"{inst.name}-contracted",
        capacity=inst.capacity,
        coords=coords,
        demands=dem,
        rounding=inst.rounding,
        changed=frozenset(to_reduced[c] for c in inst.changed if c in to_reduced),
    )
    return ContractedInstance(
        reduced=reduced,
        segments=tuple(segments),
        forced_pairs=tuple(forced_pairs),
        depot_anchors=depot_anchors,
        solver_segments=tuple(solver_segments),
        expansion=expansion,
        removed_nodes=removed,
        to_reduced_id=to_reduced,
        to_original_id=to_original,
    )


def edge_flow(sol: Solution, e) -> int:
    """Times the solution traverses the edge; 2 only happens for the
    depot edge of a single-client route."""
    key = edge_key(*e)
    flow = 0
    for route in sol.routes:
        clients = route.clients()
        if not clients:
            continue
        path = (0,) + clients + (0,)
        for a, b in zip(path, path[1:]):
            if edge_key(a, b) == key:
                flow += 1
    return flow


@dataclass(frozen=True)
class SolveConfig:
    """Knobs for the reduced-problem solve."""

    k: int = 5
    budget: int = 5000
    seed: int = 0
    walk_neighbors: int = 5
    exact_below: int = 0  # brute-force when the unit count is at most this
    patience: int | None = None  # per-run stall cap; None runs the full budget


@dataclass
class FixDiagnostics:
    fixed_count: int
    repaired_count: int
    nodes_before: int
    nodes_after: int
    cost: float
    time_ms: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "fixed_count": self.fixed_count,
            "repaired_count": self.repaired_count,
            "nodes_before": self.nodes_before,
            "nodes_after": self.nodes_after,
            "cost": self.cost,
            "time_ms": self.time_ms,
            "seed": self.seed,
        }


def fix_and_solve(pm: Instance, graph: FixedGraph, cfg: SolveConfig = SolveConfig()):
    """Repair the fixed graph, contract it, solve the reduced problem
    with the forced segments, and expand back.

    Returns (solution, diagnostics). The solution is expressed over the
    original clients (segments are solver stops; Route.clients expands
    them) and every post-repair fixed edge is guaranteed flow >= 1.
    """
    t0 = time.perf_counter()
    g1, san_log = sanitize(graph)
    g2, passes = resolve_infeasibility(g1, pm)
    cont = contract(pm, g2)
    forced = cont.solver_segments
    free_clients = pm.n - sum(len(s.clients) for s in forced)
    units = free_clients + len(forced)
    if cfg.exact_below and units <= cfg.exact_below:
        sol = brute_force_optimal(pm, forced)
    else:
        sol = best_of_k(pm, forced, k=cfg.k, budget=cfg.budget, seed=cfg.seed,
                        walk_neighbors=cfg.walk_neighbors, patience=cfg.patience)
    verify_solution(pm, sol, forced)
    for e in g2.edges:
        if edge_flow(sol, e) < 1:
            raise RuntimeError(f"fixed edge {e} missing from the expanded solution")
    elapsed_ms = (time.perf_counter() - t0) * 1000.0
    diag = FixDiagnostics(
        fixed_count=len(g2.edges),
        repaired_count=len(san_log) + sum(len(p) for p in passes),
        nodes_before=cont.nodes_before,
        nodes_after=cont.nodes_after,
        cost=sol.cost,
        time_ms=elapsed_ms,
        seed=cfg.seed,
    )
    return sol, diag


def predictions_for_solution(po: Instance, pm: Instance, so: Solution, net, scaler,
                             threshold: float = 0.5):
    """Classifier predictions for every edge of the old solution:
    list of (edge, y_hat, p_hat) ready for build_fixed_graph."""
    from .classifier import predict_proba
    from .features import extract_features, neighbor_ranks, solution_edges

    ranks = neighbor_ranks(po)
    edges = sorted(solution_edges(so))
    X = np.stack([extract_features(po, pm, e, ranks=ranks) for e in edges])
    p = predict_proba(net, scaler.transform(X))
    p = np.clip(p, 1e-9, 1.0 - 1e-9)
    return [(e, 1 if p[k] > threshold else 0, float(p[k])) for k, e in enumerate(edges)]
