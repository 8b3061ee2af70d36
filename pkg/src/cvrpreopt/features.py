"""Labeled edge datasets from (original, modified) instance/solution tuples.

Every edge of the old solution gets a 16-entry feature vector and a
binary label saying whether it survives in the new solution. Edges are
canonical undirected pairs (i, j) with i < j; the depot id 0 may appear
as i. Datasets are split by source instance (no instance contributes
to two splits) and standardized with statistics fit on the training
split only; the three boolean features pass through raw.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .instance import Instance, distance, distance_matrix
from .solver import Solution

FEATURE_NAMES = (
    "x_i",
    "y_i",
    "x_j",
    "y_j",
    "edge_cost",
    "demand_i_old",
    "demand_j_old",
    "demand_i_new",
    "demand_j_new",
    "depot_dist_i",
    "depot_dist_j",
    "is_depot_edge",
    "demand_changed_i",
    "demand_changed_j",
    "rank_j_from_i",
    "rank_i_from_j",
)
N_FEATURES = len(FEATURE_NAMES)
BOOLEAN_FEATURES = (11, 12, 13)


def edge_key(i: int, j: int) -> tuple:
    """Canonical undirected edge (i, j) with i < j."""
    i, j = int(i), int(j)
    if i == j:
        raise ValueError(f"self-loop ({i}, {j}) is not an edge")
    return (i, j) if i < j else (j, i)


def solution_edges(sol: Solution) -> frozenset:
    """E(S): canonical edges traversed by the solution, depot legs included.

    Duplicates collapse (an out-and-back route contributes its depot
    edge once)."""
    edges = set()
    for route in sol.routes:
        clients = route.clients()
        if not clients:
            continue
        path = (0,) + clients + (0,)
        for a, b in zip(path, path[1:]):
            edges.add(edge_key(a, b))
    return frozenset(edges)


def neighbor_ranks(inst: Instance) -> np.ndarray:
    """ranks[i, j]: 1-based position of j when i's neighbors (all other
    nodes, depot included) are sorted by distance, ties by node id."""
    D = distance_matrix(inst)
    n1 = inst.n + 1
    ranks = np.zeros((n1, n1), dtype=np.int64)
    ids = np.arange(n1)
    for i in range(n1):
        others = ids[ids != i]
        order = others[np.lexsort((others, D[i, others]))]
        ranks[i, order] = np.arange(1, n1)
    return ranks


def extract_features(po: Instance, pm: Instance, e, ranks: np.ndarray | None = None) -> np.ndarray:
    """16-entry feature vector for a canonical edge of the old solution.

    po and pm share coordinates; old demands come from po, new demands
    and changed flags from pm. Depot entries use demand 0 and the depot
    coordinates.
    """
    i, j = edge_key(*e)
    if not (0 <= i <= po.n and 0 < j <= po.n):
        raise ValueError(f"edge ({i}, {j}) out of range")
    if ranks is None:
        ranks = neighbor_ranks(po)
    return np.array(
        [
            po.coords[i, 0],
            po.coords[i, 1],
            po.coords[j, 0],
            po.coords[j, 1],
            distance(po, i, j),
            float(po.demands[i]),
            float(po.demands[j]),
            float(pm.demands[i]),
            float(pm.demands[j]),
            distance(po, 0, i),
            distance(po, 0, j),
            1.0 if i == 0 else 0.0,
            1.0 if i in pm.changed else 0.0,
            1.0 if j in pm.changed else 0.0,
            float(ranks[i, j]),
            float(ranks[j, i]),
        ],
        dtype=np.float64,
    )


def make_labels(so: Solution, sm: Solution) -> dict:
    """Label every edge of the old solution: 1 iff it also appears in
    the new one."""
    new_edges = solution_edges(sm)
    return {e: (1 if e in new_edges else 0) for e in sorted(solution_edges(so))}


def similarity(so: Solution, sm: Solution) -> float:
    """Fraction of old-solution edges surviving in the new solution."""
    old = solution_edges(so)
    if not old:
        raise ValueError("old solution has no edges")
    return len(old & solution_edges(sm)) / len(old)


@dataclass
class Scaler:
    """Per-feature standardization fit on the training split; boolean and
    constant features pass through unchanged (mean 0, std 1)."""

    means: np.ndarray
    stds: np.ndarray
    constant: tuple = ()

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.means) / self.stds

    def to_json(self) -> str:
        return json.dumps({"means": self.means.tolist(), "stds": self.stds.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "Scaler":
        obj = json.loads(text)
        return cls(
            means=np.asarray(obj["means"], dtype=np.float64),
            stds=np.asarray(obj["stds"], dtype=np.float64),
        )

    @classmethod
    def fit(cls, X: np.ndarray) -> "Scaler":
        X = np.asarray(X, dtype=np.float64)
        means = X.mean(axis=0)
        stds = X.std(axis=0)
        constant = tuple(int(k) for k in np.flatnonzero(stds == 0.0))
        skip = set(BOOLEAN_FEATURES) | set(constant)
        for k in skip:
            means[k] = 0.0
            stds[k] = 1.0
        return cls(means=means, stds=stds, constant=constant)


@dataclass
class EdgeSample:
    key: tuple
    features: np.ndarray  # raw (unscaled) 16-vector
    label: int
    instance_id: str


@dataclass
class Dataset:
    samples: list
    split_of: dict  # instance_id -> "train" | "val" | "test"
    scaler: Scaler
    feature_names: tuple = FEATURE_NAMES

    def instance_ids(self, split: str) -> list:
        return sorted(i for i, s in self.split_of.items() if s == split)

    def matrices(self, split: str, scaled: bool = True):
        """(X, y) for one split; X standardized unless scaled=False."""
        rows = [s for s in self.samples if self.split_of[s.instance_id] == split]
        if not rows:
            return np.zeros((0, N_FEATURES)), np.zeros(0, dtype=np.int64)
        X = np.stack([s.features for s in rows])
        y = np.array([s.label for s in rows], dtype=np.int64)
        return (self.scaler.transform(X) if scaled else X), y


def _split_counts(n: int, ratios) -> tuple:
    """Instances per split: floor on cumulative boundaries, remainder to
    the last split (95 @ 70/15/15 -> 66/14/15). The training split is
    never starved: too few tuples degenerate to train-only."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    b1 = int(np.floor(n * ratios[0]))
    b2 = int(np.floor(n * (ratios[0] + ratios[1])))
    if b1 == 0:
        return n, 0, 0
    return b1, b2 - b1, n - b2


def build_dataset(tuples, ratios=(0.7, 0.15, 0.15), seed: int = 0, ids=None) -> Dataset:
    """Dataset from (P_o, S_o, P_m, S_m) tuples.

    Instances are shuffled with the seed and assigned whole to train /
    val / test so no source instance leaks across splits. The scaler is
    fit on the training rows only.
    """
    tuples = list(tuples)
    if not tuples:
        raise ValueError("no tuples to build a dataset from")
    if ids is None:
        ids = [f"tuple-{k}" for k in range(len(tuples))]
    ids = [str(s) for s in ids]
    if len(ids) != len(tuples) or len(set(ids)) != len(ids):
        raise ValueError("instance ids must be unique, one per tuple")

    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(tuples))
    n_train, n_val, _ = _split_counts(len(tuples), ratios)
    split_of = {}
    for pos, idx in enumerate(order):
        split = "train" if pos < n_train else ("val" if pos < n_train + n_val else "test")
        split_of[ids[idx]] = split
    if n_train == 0 or n_val == 0 or len(tuples) - n_train - n_val == 0:
        warnings.warn("a split is empty at this tuple count", stacklevel=2)

    samples = []
    rank_cache = {}
    for (po, so, pm, sm), inst_id in zip(tuples, ids):
        key = id(po)
        if key not in rank_cache:
            rank_cache[key] = neighbor_ranks(po)
        ranks = rank_cache[key]
        for e, label in make_labels(so, sm).items():
            samples.append(
                EdgeSample(
                    key=e,
                    features=extract_features(po, pm, e, ranks=ranks),
                    label=label,
                    instance_id=inst_id,
                )
            )

    train_rows = [s.features for s in samples if split_of[s.instance_id] == "train"]
    scaler = Scaler.fit(np.stack(train_rows))
    return Dataset(samples=samples, split_of=split_of, scaler=scaler)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def dataset_to_csv(ds: Dataset) -> str:
    """Raw (unscaled) features; apply ds.scaler when loading."""
    header = ",".join(FEATURE_NAMES + ("label", "instance_id", "i", "j"))
    lines = [header]
    for s in ds.samples:
        feats = ",".join(repr(float(v)) for v in s.features)
        lines.append(f"{feats},{s.label},{s.instance_id},{s.key[0]},{s.key[1]}")
    return "\n".join(lines) + "\n"


def dataset_from_csv(text: str, split_of: dict, scaler: Scaler) -> Dataset:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if lines[0].split(",")[: N_FEATURES] != list(FEATURE_NAMES):
        raise ValueError("unexpected CSV header")
    samples = []
    for ln in lines[1:]:
        parts = ln.split(",")
        feats = np.array([float(v) for v in parts[:N_FEATURES]])
        label = int(parts[N_FEATURES])
        inst_id = parts[N_FEATURES + 1]
        i, j = int(parts[N_FEATURES + 2]), int(parts[N_FEATURES + 3])
        samples.append(EdgeSample(key=(i, j), features=feats, label=label, instance_id=inst_id))
    return Dataset(samples=samples, split_of=dict(split_of), scaler=scaler)
