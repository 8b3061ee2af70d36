"""The whole experiment loop on one scenario, desk scale.

Perturb -> solve replicas -> learn edge survival -> fix and re-solve
held-out replicas -> report. Writes the same artifacts as the `grid`
CLI subcommand into ./demo_grid_out/.
"""

import numpy as np

from cvrpreopt.classifier import TrainConfig
from cvrpreopt.harness import GridConfig, ScenarioGrid, run_grid
from cvrpreopt.instance import Instance

rng = np.random.default_rng(99)
coords = rng.integers(0, 1001, size=(26, 2)).astype(float)
demands = np.concatenate([[0], rng.integers(1, 101, size=25)])
inst = Instance(name="demo-n25", capacity=400, coords=coords, demands=demands)

grid = ScenarioGrid(
    scenarios=("20M",),
    replicas=25,
    held_out=5,
    deltas={"S": 5, "M": 10, "L": 15},
)
cfg = GridConfig(solver_k=3, solver_budget=3000, train=TrainConfig(epochs=150))

report = run_grid(inst, grid, cfg, "demo_grid_out", master_seed=7)

print(f"{inst.name}, scenario 20M, {grid.replicas} replicas "
      f"({grid.replicas - grid.held_out} train / {grid.held_out} held out)\n")
ml = report.ml_rows[0]
print(f"model: {ml.train_edges} training edges, "
      f"val balanced accuracy {ml.val_accuracy:.2f} (best epoch {ml.best_epoch})\n")
print(f"{'replica':<28}{'S_m cost':>9}{'sim':>6}{'acc':>6}{'fix cost':>10}{'gap':>8}")
for r in report.rows:
    print(f"{r.instance_id:<28}{r.sm_cost:>9.0f}{r.similarity:>6.2f}"
          f"{r.accuracy:>6.2f}{r.fix_cost:>10.0f}{r.gap:>8.2%}")
agg = report.aggregate("20M")
print(f"\naverage gap {agg['gap']:.2%}, average similarity {agg['similarity']:.2f}")
print("artifacts in demo_grid_out/: report.csv, report.md, model_20M.json, ...")
