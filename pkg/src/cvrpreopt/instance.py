"""CVRP instance model, CVRPLIB text I/O and demand-perturbation scenarios.

Node 0 is always the depot; clients carry the dense ids 1..n. Distances
default to nearest-integer Euclidean (the convention of the X benchmark
files); an exact mode exists for synthetic tests. All randomness flows
through numpy's PCG64 generator so perturbations replay bit-identically
for a fixed seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

ROUNDED_EUCLIDEAN = "rounded-euclidean"
EXACT_EUCLIDEAN = "exact-euclidean"

_CHANGED_COMMENT = "changed_clients"


class InstanceFormatError(ValueError):
    """Raised for malformed CVRPLIB documents; message names the offending line."""


class DemandDistribution(Enum):
    """How the benchmark drew client demands (drives the perturbation width)."""

    U1_100 = "1-100"
    U50_100 = "50-100"
    U5_10 = "5-10"
    QUADRANT = "quadrant"
    U1_10 = "1-10"


# Perturbation half-widths per demand distribution and interval class.
_DELTA_TABLE = {
    DemandDistribution.U1_100: {"S": 5, "M": 10, "L": 15},
    DemandDistribution.U50_100: {"S": 5, "M": 10, "L": 15},
    DemandDistribution.U5_10: {"S": 1, "M": 2, "L": 3},
    DemandDistribution.QUADRANT: {"S": 5, "M": 10, "L": 15},
    DemandDistribution.U1_10: {"S": 2, "M": 3, "L": 4},
}

INTERVAL_CLASSES = ("S", "M", "L")
NC_PERCENTS = (10, 20, 30)


def resolve_delta(tag: DemandDistribution, interval_class: str) -> int:
    """Half-width of the demand redraw interval for (distribution, class)."""
    if interval_class not in INTERVAL_CLASSES:
        raise ValueError(f"unknown interval class {interval_class!r}")
    return _DELTA_TABLE[DemandDistribution(tag)][interval_class]


@dataclass(frozen=True, eq=False)
class Instance:
    """Immutable CVRP instance.

    coords has shape (n+1, 2) with row 0 the depot; demands has shape
    (n+1,) with demands[0] == 0. `changed` records which clients had
    their demand redrawn by perturb (selection, not necessarily a
    different value).
    """

    name: str
    capacity: int
    coords: np.ndarray
    demands: np.ndarray
    rounding: str = ROUNDED_EUCLIDEAN
    changed: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        demands = np.asarray(self.demands, dtype=np.int64)
        if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 2:
            raise ValueError("coords must have shape (n+1, 2) with n >= 1")
        if demands.shape != (coords.shape[0],):
            raise ValueError("demands must have one entry per node")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if demands[0] != 0:
            raise ValueError("depot demand must be 0")
        if np.any(demands[1:] < 1) or np.any(demands[1:] > self.capacity):
            raise ValueError("client demands must lie in [1, capacity]")
        if self.rounding not in (ROUNDED_EUCLIDEAN, EXACT_EUCLIDEAN):
            raise ValueError(f"unknown rounding mode {self.rounding!r}")
        coords.setflags(write=False)
        demands.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "demands", demands)
        object.__setattr__(self, "changed", frozenset(int(c) for c in self.changed))
        for c in self.changed:
            if not 1 <= c <= self.n:
                raise ValueError(f"changed client id {c} out of range")

    @property
    def n(self) -> int:
        """Number of clients (depot excluded)."""
        return self.coords.shape[0] - 1

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.name == other.name
            and self.capacity == other.capacity
            and self.rounding == other.rounding
            and self.changed == other.changed
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.demands, other.demands)
        )


def distance(inst: Instance, a: int, b: int) -> float:
    """Distance between nodes a and b (symmetric, 0 on the diagonal).

    Rounded mode follows the TSPLIB EUC_2D convention: nearest integer,
    halves rounded up (never banker's rounding).
    """
    if not (0 <= a <= inst.n and 0 <= b <= inst.n):
        raise ValueError(f"node id out of range: {a}, {b}")
    dx = float(inst.coords[a, 0] - inst.coords[b, 0])
    dy = float(inst.coords[a, 1] - inst.coords[b, 1])
    d = math.sqrt(dx * dx + dy * dy)
    if inst.rounding == ROUNDED_EUCLIDEAN:
        return float(math.floor(d + 0.5))
    return d


def distance_matrix(inst: Instance) -> np.ndarray:
    """Full (n+1, n+1) node distance matrix as float64."""
    diff = inst.coords[:, None, :] - inst.coords[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    if inst.rounding == ROUNDED_EUCLIDEAN:
        d = np.floor(d + 0.5)
    return d


@dataclass(frozen=True)
class Scenario:
    """One demand-perturbation setting: change nc_percent% of the clients,
    redrawing each selected demand uniformly in [d - delta_d, d + delta_d]
    clamped to [1, Q]."""

    nc_percent: int
    interval_class: str
    delta_d: int
    seed: int

    def __post_init__(self):
        if self.nc_percent not in NC_PERCENTS:
            raise ValueError(f"nc_percent must be one of {NC_PERCENTS}")
        if self.interval_class not in INTERVAL_CLASSES:
            raise ValueError(f"interval_class must be one of {INTERVAL_CLASSES}")
        if self.delta_d < 1:
            raise ValueError("delta_d must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_tag(cls, tag: DemandDistribution, nc_percent: int, interval_class: str, seed: int) -> "Scenario":
        return cls(nc_percent, interval_class, resolve_delta(tag, interval_class), seed)

    @property
    def label(self) -> str:
        return f"{self.nc_percent}{self.interval_class}"


def scenario_to_json(scn: Scenario) -> str:
    return json.dumps(
        {"nc": scn.nc_percent, "class": scn.interval_class, "delta_d": scn.delta_d, "seed": scn.seed}
    )


def scenario_from_json(text: str) -> Scenario:
    """Parse {nc, class, delta_d?, seed}; without delta_d a "tag" field
    naming the demand distribution is required."""
    obj = json.loads(text)
    nc = int(obj["nc"])
    cls_ = str(obj["class"])
    seed = int(obj["seed"])
    if "delta_d" in obj and obj["delta_d"] is not None:
        return Scenario(nc, cls_, int(obj["delta_d"]), seed)
    if "tag" not in obj:
        raise ValueError("scenario JSON needs either delta_d or a demand-distribution tag")
    return Scenario.from_tag(DemandDistribution(obj["tag"]), nc, cls_, seed)


def changed_client_count(n: int, nc_percent: int) -> int:
    # round(nc% * n), halves up
    return int(math.floor(n * nc_percent / 100.0 + 0.5))


def perturb(inst: Instance, scn: Scenario) -> Instance:
    """Redraw the demands of exactly round(nc% * n) clients.

    The selection and every redraw come from a PCG64 stream seeded with
    scn.seed, so the result is a pure function of (inst, scn). Selected
    clients are recorded in the result's `changed` set even when the
    redraw equals the original demand.
    """
    rng = np.random.Generator(np.random.PCG64(scn.seed))
    count = changed_client_count(inst.n, scn.nc_percent)
    chosen = rng.choice(np.arange(1, inst.n + 1), size=count, replace=False)
    chosen = np.sort(chosen)
    demands = inst.demands.copy()
    for c in chosen:
        d = int(demands[c])
        lo = max(1, d - scn.delta_d)
        hi = min(inst.capacity, d + scn.delta_d)
        demands[c] = int(rng.integers(lo, hi + 1))
    return replace(inst, demands=demands, changed=frozenset(int(c) for c in chosen))


# ---------------------------------------------------------------------------
# CVRPLIB / TSPLIB text format
# ---------------------------------------------------------------------------


def _fmt_coord(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def write_instance(inst: Instance) -> str:
    """Render as a CVRPLIB document (depot written as node 1)."""
    lines = [f"NAME : {inst.name}"]
    if inst.changed:
        ids = " ".join(str(c) for c in sorted(inst.changed))
        lines.append(f"COMMENT : {_CHANGED_COMMENT} {ids}")
    lines.append("TYPE : CVRP")
    lines.append(f"DIMENSION : {inst.n + 1}")
    weight = "EUC_2D" if inst.rounding == ROUNDED_EUCLIDEAN else "EXACT_2D"
    lines.append(f"EDGE_WEIGHT_TYPE : {weight}")
    lines.append(f"CAPACITY : {inst.capacity}")
    lines.append("NODE_COORD_SECTION")
    for node in range(inst.n + 1):
        x, y = inst.coords[node]
        lines.append(f"{node + 1} {_fmt_coord(x)} {_fmt_coord(y)}")
    lines.append("DEMAND_SECTION")
    for node in range(inst.n + 1):
        lines.append(f"{node + 1} {int(inst.demands[node])}")
    lines.append("DEPOT_SECTION")
    lines.append("1")
    lines.append("-1")
    lines.append("EOF")
    return "\n".join(lines) + "\n"


def parse_instance(text: str) -> Instance:
    """Parse a CVRPLIB document into an Instance.

    The depot named by DEPOT_SECTION becomes node 0 (its demand is forced
    to 0) and the remaining nodes become clients 1..n in file order.
    Every diagnostic names the offending line.
    """
    lines = text.splitlines()
    name = None
    capacity = None
    dimension = None
    weight_type = "EUC_2D"
    coords = {}
    file_demands = {}
    depot_file_id = None
    changed_ids = []

    i = 0
    n_lines = len(lines)

    def parse_kv(line):
        if ":" in line:
            key, _, value = line.partition(":")
            return key.strip().upper(), value.strip()
        parts = line.split(None, 1)
        return parts[0].strip().upper(), (parts[1].strip() if len(parts) > 1 else "")

    while i < n_lines:
        raw = lines[i]
        line = raw.strip()
        i += 1
        if not line or line == "EOF":
            continue
        key, value = parse_kv(line)
        if key == "NAME":
            name = value
        elif key == "COMMENT":
            if value.startswith(_CHANGED_COMMENT):
                try:
                    changed_ids = [int(v) for v in value.split()[1:]]
                except ValueError:
                    raise InstanceFormatError(f"line {i}: malformed {_CHANGED_COMMENT} comment: {raw!r}")
        elif key == "DIMENSION":
            try:
                dimension = int(value)
            except ValueError:
                raise InstanceFormatError(f"line {i}: malformed DIMENSION: {raw!r}")
        elif key == "CAPACITY":
            try:
                capacity = int(value)
            except ValueError:
                raise InstanceFormatError(f"line {i}: malformed CAPACITY: {raw!r}")
        elif key == "EDGE_WEIGHT_TYPE":
            weight_type = value.upper()
        elif key == "NODE_COORD_SECTION":
            if dimension is None:
                raise InstanceFormatError(f"line {i}: NODE_COORD_SECTION before DIMENSION")
            for _ in range(dimension):
                if i >= n_lines:
                    raise InstanceFormatError(f"line {i}: truncated NODE_COORD_SECTION")
                row = lines[i].split()
                i += 1
                if len(row) != 3:
                    raise InstanceFormatError(f"line {i}: malformed coordinate row: {lines[i - 1]!r}")
                try:
                    nid, x, y = int(row[0]), float(row[1]), float(row[2])
                except ValueError:
                    raise InstanceFormatError(f"line {i}: malformed coordinate row: {lines[i - 1]!r}")
                if nid in coords:
                    raise InstanceFormatError(f"line {i}: duplicate node id {nid}")
                coords[nid] = (x, y)
        elif key == "DEMAND_SECTION":
            if dimension is None:
                raise InstanceFormatError(f"line {i}: DEMAND_SECTION before DIMENSION")
            for _ in range(dimension):
                if i >= n_lines:
                    raise InstanceFormatError(f"line {i}: truncated DEMAND_SECTION")
                row = lines[i].split()
                i += 1
                if len(row) != 2:
                    raise InstanceFormatError(f"line {i}: malformed demand row: {lines[i - 1]!r}")
                try:
                    nid, dem = int(row[0]), int(row[1])
                except ValueError:
                    raise InstanceFormatError(f"line {i}: malformed demand row: {lines[i - 1]!r}")
                if nid in file_demands:
                    raise InstanceFormatError(f"line {i}: duplicate demand for node id {nid}")
                file_demands[nid] = dem
        elif key == "DEPOT_SECTION":
            while i < n_lines:
                entry = lines[i].strip()
                i += 1
                if not entry:
                    continue
                if entry == "-1":
                    break
                try:
                    depot_file_id = int(entry.split()[0])
                except ValueError:
                    raise InstanceFormatError(f"line {i}: malformed DEPOT_SECTION entry: {entry!r}")

    if capacity is None:
        raise InstanceFormatError("missing CAPACITY line")
    if not coords:
        raise InstanceFormatError("missing NODE_COORD_SECTION")
    if not file_demands:
        raise InstanceFormatError("missing DEMAND_SECTION")
    if depot_file_id is None:
        raise InstanceFormatError("missing DEPOT_SECTION")
    if depot_file_id not in coords:
        raise InstanceFormatError(f"DEPOT_SECTION names unknown node {depot_file_id}")
    if set(coords) != set(file_demands):
        raise InstanceFormatError("NODE_COORD_SECTION and DEMAND_SECTION name different node ids")

    client_file_ids = sorted(fid for fid in coords if fid != depot_file_id)
    order = [depot_file_id] + client_file_ids
    coord_arr = np.array([coords[fid] for fid in order], dtype=np.float64)
    demand_arr = np.array([file_demands[fid] for fid in order], dtype=np.int64)
    demand_arr[0] = 0  # depot demand forced to 0
    for pos, fid in enumerate(order[1:], start=1):
        if demand_arr[pos] < 1:
            raise InstanceFormatError(f"node {fid}: client demand {demand_arr[pos]} must be >= 1")
        if demand_arr[pos] > capacity:
            raise InstanceFormatError(
                f"node {fid}: demand {demand_arr[pos]} exceeds capacity {capacity}"
            )

    rounding = EXACT_EUCLIDEAN if weight_type == "EXACT_2D" else ROUNDED_EUCLIDEAN
    return Instance(
        name=name or "unnamed",
        capacity=capacity,
        coords=coord_arr,
        demands=demand_arr,
        rounding=rounding,
        changed=frozenset(changed_ids),
    )
