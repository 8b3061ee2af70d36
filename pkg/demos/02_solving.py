"""Solving: savings construction, ruin-and-recreate, and the exact oracle.

On small instances the heuristic provably reaches the optimum; forced
segments stay contiguous through every search move.
"""

import numpy as np

from cvrpreopt.instance import Instance
from cvrpreopt.solver import (
    best_of_k,
    brute_force_optimal,
    format_solution,
    improve,
    make_segment,
    savings_construct,
)

rng = np.random.default_rng(3)
coords = rng.integers(0, 101, size=(9, 2)).astype(float)
demands = np.concatenate([[0], rng.integers(1, 10, size=8)])
inst = Instance(name="demo-n8", capacity=25, coords=coords, demands=demands)

start = savings_construct(inst)
print(f"savings construction: cost {start.cost}")

better = improve(inst, start, budget=20_000, seed=0)
print(f"after 20k ruin-and-recreate iterations: cost {better.cost}")

opt = brute_force_optimal(inst)
print(f"exact optimum (subset DP oracle): cost {opt.cost}")
assert best_of_k(inst, k=5, budget=20_000, seed=0).cost == opt.cost

print("\nbest solution:")
print(format_solution(opt))

# forced segment: clients 2-5-7 must stay contiguous (either direction)
seg = make_segment(inst, sid=1, clients=(2, 5, 7))
constrained = best_of_k(inst, forced=[seg], k=5, budget=20_000, seed=1)
print(f"with forced segment (2,5,7): cost {constrained.cost} "
      f"(>= {opt.cost} unconstrained)")
for r in constrained.routes:
    print("  route:", r.clients())
