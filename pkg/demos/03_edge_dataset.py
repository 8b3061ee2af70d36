"""Edge features, labels, and dataset assembly.

Each edge of the old solution becomes one labeled sample: 16 features,
label 1 iff the edge survives in the modified instance's solution.
"""

import numpy as np

from cvrpreopt import features
from cvrpreopt.instance import Instance, Scenario, perturb
from cvrpreopt.solver import best_of_k

rng = np.random.default_rng(11)
coords = rng.integers(0, 201, size=(21, 2)).astype(float)
demands = np.concatenate([[0], rng.integers(5, 11, size=20)])
inst = Instance(name="demo-n20", capacity=40, coords=coords, demands=demands)

so = best_of_k(inst, k=3, budget=4000, seed=0)
print(f"original solution: cost {so.cost}, {len(features.solution_edges(so))} edges")

tuples, ids = [], []
for r in range(12):
    pm = perturb(inst, Scenario(20, "M", 2, seed=100 + r))
    sm = best_of_k(pm, k=3, budget=4000, seed=200 + r)
    tuples.append((inst, so, pm, sm))
    ids.append(f"replica-{r}")
    if r < 3:
        print(f"  replica {r}: similarity {features.similarity(so, sm):.2f}")

ds = features.build_dataset(tuples, ratios=(0.7, 0.15, 0.15), seed=5, ids=ids)
for split in ("train", "val", "test"):
    X, y = ds.matrices(split)
    print(f"{split}: {len(ds.instance_ids(split))} replicas, {len(y)} edge samples, "
          f"positive share {y.mean():.2f}" if len(y) else f"{split}: empty")

X, y = ds.matrices("train")
print("\nfeature names:", ", ".join(features.FEATURE_NAMES[:8]), "...")
scaled_cols = [k for k in range(16) if k not in features.BOOLEAN_FEATURES]
print("train means after standardization (non-boolean):",
      np.round(X[:, scaled_cols].mean(axis=0), 12).max())
print("boolean columns stay 0/1:",
      sorted(float(v) for v in np.unique(X[:, list(features.BOOLEAN_FEATURES)])))
