"""Command-line front end.

Subcommands: perturb, solve, dataset, train, fix, evaluate, grid.
Results go to --out (files) or stdout (JSON); failures print a
machine-readable JSON error on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import classifier, features, harness
from .edgefix import SolveConfig, build_fixed_graph, fix_and_solve, predictions_for_solution
from .instance import parse_instance, perturb, scenario_from_json, write_instance
from .solver import (
    best_of_k,
    format_solution,
    parse_solution,
    solution_to_json,
)


def _read(path) -> str:
    return Path(path).read_text()


def _load_instance(path):
    return parse_instance(_read(path))


def _load_solution(path, inst=None):
    return parse_solution(_read(path), inst)


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_perturb(args) -> int:
    inst = _load_instance(args.instance)
    scn = scenario_from_json(_read(args.scenario))
    _emit(write_instance(perturb(inst, scn)), args.out)
    return 0


def cmd_solve(args) -> int:
    inst = _load_instance(args.instance)
    sol = best_of_k(inst, k=args.k, budget=args.budget, seed=args.seed)
    _emit(format_solution(sol), args.out)
    if args.json:
        Path(args.json).write_text(solution_to_json(sol))
    return 0


def cmd_dataset(args) -> int:
    pairs = json.loads(_read(args.pairs))
    tuples, ids = [], []
    for k, rec in enumerate(pairs):
        po = _load_instance(rec["po"])
        pm = _load_instance(rec["pm"])
        so = _load_solution(rec["so"], po)
        sm = _load_solution(rec["sm"], pm)
        tuples.append((po, so, pm, sm))
        ids.append(rec.get("id", f"tuple-{k}"))
    ds = features.build_dataset(tuples, ratios=tuple(args.ratios), seed=args.seed, ids=ids)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "dataset.csv").write_text(features.dataset_to_csv(ds))
    (out / "scaler.json").write_text(ds.scaler.to_json())
    (out / "splits.json").write_text(json.dumps(ds.split_of, indent=2, sort_keys=True))
    print(f"wrote {len(ds.samples)} samples to {out}")
    return 0


def cmd_train(args) -> int:
    data = Path(args.data)
    scaler = features.Scaler.from_json((data / "scaler.json").read_text())
    split_of = json.loads((data / "splits.json").read_text())
    ds = features.dataset_from_csv((data / "dataset.csv").read_text(), split_of, scaler)
    cfg = classifier.TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batches_per_epoch=args.batches_per_epoch,
        batch_size=args.batch_size,
        patience=args.patience,
        seed=args.seed,
    )
    net, hist = classifier.train(classifier.init_network(args.seed), ds, cfg)
    meta = {"best_epoch": hist.best_epoch, "epochs_run": len(hist.train_loss)}
    Path(args.out).write_text(classifier.network_to_json(net, scaler_ref=str(data / "scaler.json"), metadata=meta))
    final = hist.val_balanced_accuracy[hist.best_epoch] if hist.val_balanced_accuracy else None
    print(json.dumps({"best_epoch": hist.best_epoch, "val_balanced_accuracy": final}))
    return 0


def cmd_fix(args) -> int:
    po = _load_instance(args.original)
    pm = _load_instance(args.modified)
    so = _load_solution(args.solution, po)
    net = classifier.network_from_json(_read(args.model))
    scaler = features.Scaler.from_json(_read(args.scaler))
    preds = predictions_for_solution(po, pm, so, net, scaler)
    cfg = SolveConfig(k=args.k, budget=args.budget, seed=args.seed,
                      exact_below=args.exact_below)
    sol, diag = fix_and_solve(pm, build_fixed_graph(preds), cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "solution.sol").write_text(format_solution(sol))
    (out / "solution.json").write_text(solution_to_json(sol))
    (out / "predictions.json").write_text(json.dumps(
        [[e[0], e[1], yh, ph] for e, yh, ph in preds]
    ))
    (out / "diagnostics.json").write_text(json.dumps(diag.to_dict(), indent=2))
    print(json.dumps(diag.to_dict()))
    return 0


def cmd_evaluate(args) -> int:
    po = _load_instance(args.original)
    so = _load_solution(args.old_solution, po)
    sm = _load_solution(args.new_solution)
    result = {"similarity": features.similarity(so, sm)}
    if args.predictions:
        preds = json.loads(_read(args.predictions))
        labels = features.make_labels(so, sm)
        y = [labels[features.edge_key(i, j)] for i, j, _, _ in preds]
        yhat = [yh for _, _, yh, _ in preds]
        m = harness.confusion_metrics(y, yhat)
        result.update(tnr=m.tnr, tpr=m.tpr, balanced_accuracy=m.balanced_accuracy,
                      tnr_defined=m.tnr_defined, tpr_defined=m.tpr_defined)
    if args.fix_cost is not None:
        result["gap"] = harness.gap(args.fix_cost, sm.cost)
    print(json.dumps(result, indent=2))
    return 0


def cmd_grid(args) -> int:
    inst = _load_instance(args.instance)
    obj = json.loads(_read(args.config))
    grid = harness.ScenarioGrid(
        scenarios=tuple(obj.get("scenarios", harness.ALL_SCENARIOS)),
        replicas=int(obj.get("replicas", 20)),
        held_out=int(obj.get("held_out", 5)),
        deltas={str(k): int(v) for k, v in obj["deltas"].items()},
        split_ratios=tuple(obj.get("split_ratios", (0.7, 0.15, 0.15))),
    )
    train_obj = obj.get("train", {})
    train_cfg = classifier.TrainConfig(
        learning_rate=float(train_obj.get("learning_rate", 1e-3)),
        epochs=int(train_obj.get("epochs", 1000)),
        batches_per_epoch=int(train_obj.get("batches_per_epoch", 64)),
        batch_size=int(train_obj.get("batch_size", 32)),
        patience=train_obj.get("patience"),
    )
    solver_obj = obj.get("solver", {})
    cfg = harness.GridConfig(
        solver_k=args.k if args.k is not None else int(solver_obj.get("k", 3)),
        solver_budget=args.budget if args.budget is not None else int(solver_obj.get("budget", 2000)),
        train=train_cfg,
        timing=not args.no_timing,
        threads=args.threads,
    )
    report = harness.run_grid(inst, grid, cfg, args.out, master_seed=args.seed)
    failures = [r.instance_id for r in report.rows if r.error]
    summary = {
        "rows": len(report.rows),
        "failed_rows": failures,
        "aggregates": [report.aggregate(s) for s in grid.scenarios],
        "out": str(args.out),
    }
    print(json.dumps(summary, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvrpreopt",
        description="Learning-guided reoptimization of CVRP instances under demand changes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def shared(p, budget=10_000, k=5, need_out=False):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--budget", type=int, default=budget)
        p.add_argument("--k", type=int, default=k)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", required=need_out, default=None)

    p = sub.add_parser("perturb", help="apply a demand-perturbation scenario")
    p.add_argument("--instance", required=True)
    p.add_argument("--scenario", required=True, help="JSON: {nc, class, delta_d?, seed, tag?}")
    shared(p)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("solve", help="construct + improve, best of k runs")
    p.add_argument("--instance", required=True)
    p.add_argument("--json", default=None, help="also write the JSON solution form here")
    shared(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("dataset", help="build a labeled edge dataset from solved tuples")
    p.add_argument("--pairs", required=True,
                   help="JSON list of {po, so, pm, sm, id?} file paths")
    p.add_argument("--ratios", type=float, nargs=3, default=(0.7, 0.15, 0.15))
    shared(p, need_out=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="train the edge classifier on a dataset directory")
    p.add_argument("--data", required=True, help="directory from the dataset subcommand")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--batches-per-epoch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=None)
    shared(p, need_out=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fix", help="predict, fix, contract, and re-solve a modified instance")
    p.add_argument("--original", required=True)
    p.add_argument("--solution", required=True, help="solution of the original instance")
    p.add_argument("--modified", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--scaler", required=True)
    p.add_argument("--exact-below", type=int, default=0)
    shared(p, budget=5000, need_out=True)
    p.set_defaults(func=cmd_fix)

    p = sub.add_parser("evaluate", help="similarity / confusion / gap metrics")
    p.add_argument("--original", required=True)
    p.add_argument("--old-solution", required=True)
    p.add_argument("--new-solution", required=True)
    p.add_argument("--predictions", default=None,
                   help="JSON list of [i, j, y_hat, p_hat] (from fix)")
    p.add_argument("--fix-cost", type=float, default=None)
    shared(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid", help="full experiment over a scenario grid")
    p.add_argument("--instance", required=True)
    p.add_argument("--config", required=True, help="JSON grid configuration")
    p.add_argument("--no-timing", action="store_true",
                   help="zero wall-time fields so artifacts replay byte-identically")
    shared(p, need_out=True)
    # grid-level overrides: None means take the config file's value
    p.set_defaults(func=cmd_grid, budget=None, k=None)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        sys.stderr.write(json.dumps({"error": str(exc), "type": type(exc).__name__}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
