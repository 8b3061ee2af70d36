"""Instances, distances, and demand-perturbation scenarios.

Builds a small instance, writes and re-reads the CVRPLIB text form,
and shows how a scenario redraws a controlled share of the demands.
"""

import numpy as np

from cvrpreopt.instance import (
    DemandDistribution,
    Instance,
    Scenario,
    distance,
    parse_instance,
    perturb,
    resolve_delta,
    write_instance,
)

rng = np.random.default_rng(7)
coords = rng.integers(0, 101, size=(11, 2)).astype(float)
demands = np.concatenate([[0], rng.integers(5, 11, size=10)])
inst = Instance(name="demo-n10", capacity=30, coords=coords, demands=demands)

print(f"{inst.name}: {inst.n} clients, capacity {inst.capacity}")
print("depot ->", {c: distance(inst, 0, c) for c in range(1, 4)}, "(rounded Euclidean)")

text = write_instance(inst)
print("\nCVRPLIB form (first lines):")
print("\n".join(text.splitlines()[:8]))
assert parse_instance(text) == inst  # round trip

# a "20M" scenario for a [5-10] demand distribution: 20% of clients,
# each redrawn within +-2 of its old demand (clamped to [1, Q])
delta = resolve_delta(DemandDistribution.U5_10, "M")
scn = Scenario(nc_percent=20, interval_class="M", delta_d=delta, seed=42)
pert = perturb(inst, scn)
print(f"\nscenario {scn.label}: delta_d={scn.delta_d}, changed clients {sorted(pert.changed)}")
for c in sorted(pert.changed):
    print(f"  client {c}: demand {inst.demands[c]} -> {pert.demands[c]}")

assert perturb(inst, scn) == pert  # same seed, same result
print("\nreplay with the same seed is identical")
