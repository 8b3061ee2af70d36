"""Experiment orchestration: scenario grids, metrics, and report tables.

One grid run takes an original instance through every configured
scenario: generate demand-perturbed replicas, solve everything, build
an edge dataset from the training replicas, train one classifier per
scenario, then fix-and-solve the held-out replicas and score them.
Every random decision descends from the master seed through documented
SeedSequence spawns, so a replay is bit-identical (measured wall times
excepted; disable timing to freeze report bytes).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import classifier, features
from .edgefix import SolveConfig, build_fixed_graph, fix_and_solve, predictions_for_solution
from .instance import Instance, Scenario, perturb, write_instance
from .solver import best_of_k, format_solution

ALL_SCENARIOS = ("10S", "10M", "10L", "20S", "20M", "20L", "30S", "30M", "30L")


class ConfusionMetrics(NamedTuple):
    tnr: float
    tpr: float
    balanced_accuracy: float
    tnr_defined: bool
    tpr_defined: bool


def confusion_metrics(labels, predictions) -> ConfusionMetrics:
    """TNR, TPR and their mean. An absent class reports rate 1.0 with
    its defined-flag cleared so tiny instances do not poison averages."""
    y = np.asarray(labels)
    yhat = np.asarray(predictions)
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {yhat.shape}")
    neg = y == 0
    pos = y == 1
    tnr_defined = bool(neg.any())
    tpr_defined = bool(pos.any())
    tnr = float((yhat[neg] == 0).mean()) if tnr_defined else 1.0
    tpr = float((yhat[pos] == 1).mean()) if tpr_defined else 1.0
    return ConfusionMetrics(tnr, tpr, 0.5 * (tnr + tpr), tnr_defined, tpr_defined)


def gap(cost_fix: float, cost_ref: float) -> float:
    """Relative cost excess of the fixed solve over the reference; may
    be negative when the restricted solve wins."""
    if cost_ref <= 0:
        raise ValueError(f"reference cost must be positive, got {cost_ref}")
    return (cost_fix - cost_ref) / cost_ref


@dataclass(frozen=True)
class ScenarioGrid:
    """Which scenarios to run and how many replicas each gets."""

    scenarios: tuple = ALL_SCENARIOS
    replicas: int = 100
    held_out: int = 5
    deltas: dict = field(default_factory=dict)  # interval class -> delta_d
    split_ratios: tuple = (0.7, 0.15, 0.15)

    def __post_init__(self):
        for label in self.scenarios:
            nc, cls = int(label[:-1]), label[-1]
            if nc not in (10, 20, 30) or cls not in "SML":
                raise ValueError(f"unknown scenario label {label!r}")
            if cls not in self.deltas:
                raise ValueError(f"no delta_d configured for interval class {cls!r}")
        if not 0 <= self.held_out <= self.replicas:
            raise ValueError("held_out must lie in [0, replicas]")

    @classmethod
    def from_json(cls, text: str) -> "ScenarioGrid":
        obj = json.loads(text)
        return cls(
            scenarios=tuple(obj.get("scenarios", ALL_SCENARIOS)),
            replicas=int(obj.get("replicas", 100)),
            held_out=int(obj.get("held_out", 5)),
            deltas={str(k): int(v) for k, v in obj["deltas"].items()},
            split_ratios=tuple(obj.get("split_ratios", (0.7, 0.15, 0.15))),
        )


@dataclass
class RunRow:
    """One held-out modified instance."""

    scenario: str
    instance_id: str
    sm_cost: float
    similarity: float
    tnr: float
    tpr: float
    accuracy: float
    fix_cost: float
    fix_time_s: float
    gap: float
    error: str | None = None


@dataclass
class MLRow:
    """Per-scenario training summary."""

    scenario: str
    train_edges: int
    val_edges: int
    val_tnr: float
    val_tpr: float
    val_accuracy: float
    best_epoch: int


@dataclass
class RunReport:
    instance_name: str
    master_seed: int
    rows: list = field(default_factory=list)
    ml_rows: list = field(default_factory=list)

    def aggregate(self, scenario: str) -> dict:
        rows = [r for r in self.rows if r.scenario == scenario and r.error is None]
        if not rows:
            return {}
        mean = lambda key: float(np.mean([getattr(r, key) for r in rows]))
        return {
            "scenario": scenario,
            "rows": len(rows),
            "sm_cost": mean("sm_cost"),
            "similarity": mean("similarity"),
            "tnr": mean("tnr"),
            "tpr": mean("tpr"),
            "accuracy": mean("accuracy"),
            "fix_cost": mean("fix_cost"),
            "fix_time_s": mean("fix_time_s"),
            "gap": mean("gap"),
        }


_COLUMNS = ("scenario", "instance_id", "sm_cost", "similarity", "tnr", "tpr",
            "accuracy", "fix_cost", "fix_time_s", "gap")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 10))
    return str(v)


def render_report(report: RunReport, fmt: str = "csv") -> str:
    """Per-row table in the summary-table column order plus one aggregate
    row per scenario (arithmetic means of its member rows)."""
    rows = []
    for r in report.rows:
        rows.append([_fmt(getattr(r, c)) for c in _COLUMNS] + [r.error or ""])
    for scenario in dict.fromkeys(r.scenario for r in report.rows):
        agg = report.aggregate(scenario)
        if agg:
            rows.append(
                [scenario, "AVERAGE"] + [_fmt(agg[c]) for c in _COLUMNS[2:]] + [""]
            )
    header = list(_COLUMNS) + ["error"]
    if fmt == "csv":
        lines = [",".join(header)] + [",".join(row) for row in rows]
        return "\n".join(lines) + "\n"
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |",
                 "|" + "|".join("---" for _ in header) + "|"]
        lines += ["| " + " | ".join(row) + " |" for row in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


@dataclass(frozen=True)
class GridConfig:
    """End-to-end run settings: solver effort, training, timing."""

    solver_k: int = 3
    solver_budget: int = 2000
    train: classifier.TrainConfig = field(default_factory=classifier.TrainConfig)
    timing: bool = True
    threads: int = 1


def _scenario_of(label: str, grid: ScenarioGrid, seed: int) -> Scenario:
    nc, cls = int(label[:-1]), label[-1]
    return Scenario(nc, cls, grid.deltas[cls], seed)


def _run_scenario(original, so, label, seed_seq, grid: ScenarioGrid, cfg: GridConfig):
    """All work for one scenario; returns (MLRow, rows, diagnostics, artifacts)."""
    words = seed_seq.generate_state(2 * grid.replicas + 2 + grid.held_out, dtype=np.uint64)
    perturb_seeds = words[: grid.replicas]
    solver_seeds = words[grid.replicas: 2 * grid.replicas]
    dataset_seed = int(words[2 * grid.replicas])
    train_seed = int(words[2 * grid.replicas + 1])
    fix_seeds = words[2 * grid.replicas + 2:]

    replicas = []
    for k in range(grid.replicas):
        pm = perturb(original, _scenario_of(label, grid, int(perturb_seeds[k])))
        sm = best_of_k(pm, k=cfg.solver_k, budget=cfg.solver_budget,
                       seed=int(solver_seeds[k]))
        replicas.append((pm, sm))

    n_train = grid.replicas - grid.held_out
    tuples = [(original, so, pm, sm) for pm, sm in replicas[:n_train]]
    ids = [f"{original.name}_{label}_{k}" for k in range(n_train)]
    dataset = features.build_dataset(tuples, ratios=grid.split_ratios,
                                     seed=dataset_seed, ids=ids)
    train_cfg = replace(cfg.train, seed=train_seed)
    net, hist = classifier.train(classifier.init_network(train_seed), dataset, train_cfg)

    xval, yval = dataset.matrices("val")
    if yval.shape[0]:
        vm = confusion_metrics(yval, classifier.predict(net, xval))
    else:
        vm = ConfusionMetrics(1.0, 1.0, 1.0, False, False)
    ml_row = MLRow(
        scenario=label,
        train_edges=int(dataset.matrices("train")[1].shape[0]),
        val_edges=int(yval.shape[0]),
        val_tnr=vm.tnr, val_tpr=vm.tpr, val_accuracy=vm.balanced_accuracy,
        best_epoch=hist.best_epoch,
    )
    artifacts = {
        f"model_{label}.json": classifier.network_to_json(
            net, scaler_ref=f"scaler_{label}.json",
            metadata={"scenario": label, "best_epoch": hist.best_epoch}),
        f"scaler_{label}.json": dataset.scaler.to_json(),
        f"dataset_{label}.csv": features.dataset_to_csv(dataset),
    }

    rows = []
    diagnostics = []
    for h, (pm, sm) in enumerate(replicas[n_train:]):
        row_id = f"{original.name}_{label}_heldout_{h}"
        try:
            preds = predictions_for_solution(original, pm, so, net, dataset.scaler)
            labels = features.make_labels(so, sm)
            cm = confusion_metrics(
                [labels[e] for e, _, _ in preds], [yh for _, yh, _ in preds]
            )
            solve_cfg = SolveConfig(k=cfg.solver_k, budget=cfg.solver_budget,
                                    seed=int(fix_seeds[h]))
            t0 = time.perf_counter()
            fixed_sol, diag = fix_and_solve(pm, build_fixed_graph(preds), solve_cfg)
            elapsed = (time.perf_counter() - t0) if cfg.timing else 0.0
            diag.time_ms = diag.time_ms if cfg.timing else 0.0
            rows.append(RunRow(
                scenario=label,
                instance_id=row_id,
                sm_cost=sm.cost,
                similarity=features.similarity(so, sm),
                tnr=cm.tnr, tpr=cm.tpr, accuracy=cm.balanced_accuracy,
                fix_cost=fixed_sol.cost,
                fix_time_s=elapsed,
                gap=gap(fixed_sol.cost, sm.cost),
            ))
            diagnostics.append({"instance_id": row_id, **diag.to_dict()})
        except Exception as exc:  # isolate row failures
            rows.append(RunRow(scenario=label, instance_id=row_id, sm_cost=float("nan"),
                               similarity=float("nan"), tnr=float("nan"), tpr=float("nan"),
                               accuracy=float("nan"), fix_cost=float("nan"),
                               fix_time_s=0.0, gap=float("nan"), error=str(exc)))
    return ml_row, rows, diagnostics, artifacts


def run_grid(original: Instance, grid: ScenarioGrid, cfg: GridConfig,
             out_dir, master_seed: int = 0) -> RunReport:
    """Run every scenario of the grid on one original instance.

    Seed fan-out: SeedSequence(master) spawns one child per scenario
    plus one for the original solve; scenario children yield per-replica
    perturbation seeds, per-replica solver seeds, a dataset seed, a
    training seed, and per-held-out fix seeds, in that order. Scenarios
    are independent and run on a thread pool when cfg.threads > 1;
    results assemble in scenario order either way. A failed held-out row
    is recorded with its error and skipped in aggregates.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(instance_name=original.name, master_seed=master_seed)

    root = np.random.SeedSequence(master_seed)
    children = root.spawn(len(grid.scenarios) + 1)
    so_seed = int(children[0].generate_state(1, dtype=np.uint64)[0])
    so = best_of_k(original, k=cfg.solver_k, budget=cfg.solver_budget, seed=so_seed)
    (out / f"{original.name}.vrp").write_text(write_instance(original))
    (out / f"{original.name}.sol").write_text(format_solution(so))

    def job(idx_label):
        s_idx, label = idx_label
        return _run_scenario(original, so, label, children[s_idx + 1], grid, cfg)

    indexed = list(enumerate(grid.scenarios))
    if cfg.threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(job, indexed))
    else:
        results = [job(pair) for pair in indexed]

    diagnostics = []
    for ml_row, rows, diags, artifacts in results:
        report.ml_rows.append(ml_row)
        report.rows.extend(rows)
        diagnostics.extend(diags)
        for name, content in artifacts.items():
            (out / name).write_text(content)

    (out / "report.csv").write_text(render_report(report, "csv"))
    (out / "report.md").write_text(render_report(report, "markdown"))
    (out / "diagnostics.jsonl").write_text(
        "".join(json.dumps(d) + "\n" for d in diagnostics)
    )
    (out / "ml_summary.json").write_text(json.dumps(
        [row.__dict__ for row in report.ml_rows], indent=2
    ))
    return report
