"""Command-line entry point: ``gkcoarsen {train,sweep-t,sweep-ratio,convert-dataset,eval}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .config import ConfigError, RunConfig, config_from_dict, load_config
from .datasets import DatasetError, convert_planetoid, convert_webkb, load_dataset
from .gnn import forward, load_model, save_model
from .io import atomic_write_text, write_assignment, write_csv, write_embeddings, write_history, write_json
from .linalg import ContractError
from .trainer import (
    TrainingError,
    TrainReport,
    evaluate,
    propagation_operator,
    train_baseline_static,
    train_full,
    train_gk,
)

log = logging.getLogger("gkcoarsen")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TRAINING = 3


def run_method(method: str, g, train_cfg) -> TrainReport:
    if method == "gk":
        return train_gk(g, train_cfg)
    if method == "full":
        return train_full(g, train_cfg)
    if method.startswith("static_"):
        return train_baseline_static(g, train_cfg, method[len("static_"):])
    raise ConfigError(f"unknown method {method!r}")


def _mean_std(values) -> dict[str, float]:
    arr = np.asarray(values, dtype=float)
    return {"mean": float(np.mean(arr)), "std": float(np.std(arr))}


def _seed_metrics(seed: int, report: TrainReport, k: int | None) -> dict:
    last = report.history[-1]
    return {
        "seed": seed,
        "best_epoch": report.best_epoch,
        "best_val_acc": report.best_val_acc,
        "test_acc": report.test_acc,
        "final_val_acc": last.val_acc,
        "final_test_acc": last.test_acc,
        "final_loss": last.loss,
        "epochs_run": last.epoch,
        "n_coarsenings": report.n_coarsenings,
        "k": k,
    }


def aggregate(cfg: RunConfig, method: str, graph_name: str, n_nodes: int, results, train_cfg) -> tuple[dict, dict]:
    """Split results into deterministic metrics and run-dependent timings."""
    k = None if method == "full" else train_cfg.resolve_k(n_nodes)
    metrics = {
        "dataset": graph_name,
        "n_nodes": n_nodes,
        "method": method,
        "arch": train_cfg.arch,
        "k": k,
        "ratio": 1.0 if method == "full" else (k / n_nodes),
        "seeds": [s for s, _ in results],
        "val_acc": _mean_std([r.best_val_acc for _, r in results]),
        "test_acc": _mean_std([r.test_acc for _, r in results]),
        "per_seed": [_seed_metrics(s, r, k) for s, r in results],
    }
    timing = {
        "method": method,
        "seconds": _mean_std([r.wall_seconds for _, r in results]),
        "per_iteration_seconds": _mean_std([np.mean(r.step_seconds) for _, r in results]),
        "cluster_seconds": _mean_std([r.cluster_seconds for _, r in results]),
        "per_seed": [
            {"seed": s, "seconds": r.wall_seconds, "cluster_seconds": r.cluster_seconds,
             "per_iteration_seconds": float(np.mean(r.step_seconds))}
            for s, r in results
        ],
    }
    return metrics, timing


def _write_seed_outputs(out: Path, seed: int, g, report: TrainReport, train_cfg, plots: bool):
    seed_dir = out / f"seed_{seed}"
    write_history(seed_dir / "history.csv", report.history)
    ckpt = seed_dir / "checkpoint.npz"
    seed_dir.mkdir(parents=True, exist_ok=True)
    tmp = seed_dir / ".checkpoint.npz.tmp"
    save_model(report.best_model, tmp)
    tmp.replace(ckpt)
    z = forward(report.best_model, g.features, propagation_operator(g.adjacency, train_cfg.propagation))
    write_embeddings(seed_dir / "embeddings.csv", z)
    if report.partition is not None:
        write_assignment(seed_dir / "assignment.csv", report.partition)
    if plots:
        plotting.plot_history(report.history, seed_dir / "history.png", title=f"{report.method}, seed {seed}")


def run_seeds(cfg: RunConfig, base, method: str, out: Path | None, **overrides):
    results = []
    train_cfg = None
    for seed in cfg.seeds:
        g = cfg.data.for_seed(base, seed)
        train_cfg = cfg.train_config(seed, **overrides)
        report = run_method(method, g, train_cfg)
        log.info("%s seed %d: best val %.4f test %.4f (%.2fs)", method, seed,
                 report.best_val_acc, report.test_acc, report.wall_seconds)
        if out is not None:
            _write_seed_outputs(out, seed, g, report, train_cfg, cfg.plots)
        results.append((seed, report))
    return results, train_cfg


def cmd_train(cfg: RunConfig) -> int:
    out = cfg.output_dir()
    base = cfg.data.load_base()
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "config.resolved.toml", cfg.to_toml())
    results, train_cfg = run_seeds(cfg, base, cfg.method, out)
    metrics, timing = aggregate(cfg, cfg.method, base.name, base.n_nodes, results, train_cfg)
    write_json(out / "metrics.json", metrics)
    write_json(out / "timing.json", timing)
    print(f"{cfg.method}: test_acc {metrics['test_acc']['mean']:.4f} +- {metrics['test_acc']['std']:.4f} "
          f"over {len(results)} seeds -> {out / 'metrics.json'}")
    return EXIT_OK


def cmd_sweep_t(cfg: RunConfig, t_values: list[float], with_full: bool = False,
                delta_values: list[float] | None = None) -> int:
    """GK once per (delta, T) pair; long-format trajectories for plotting.

    ``delta_values`` defaults to ``[inf]``: with the drift trigger off, the
    period is the only thing that differs between groups and ``T = inf``
    coarsens exactly once.
    """
    deltas = [math.inf] if delta_values is None else list(delta_values)
    out = cfg.output_dir()
    base = cfg.data.load_base()
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "config.resolved.toml", cfg.to_toml())
    rows, summary = [], []
    for d in deltas:
        for t in t_values:
            results, _ = run_seeds(cfg, base, "gk", None, period=t, delta=d)
            for seed, r in results:
                rows.extend((t, d, seed, rec.epoch, rec.val_acc) for rec in r.history)
                summary.append([t, d, seed, r.best_val_acc, r.history[-1].val_acc, r.test_acc, r.n_coarsenings])
    write_csv(out / "sweep_t.csv", ["T", "delta", "seed", "epoch", "val_acc"], rows)
    write_csv(out / "sweep_t_summary.csv",
              ["T", "delta", "seed", "best_val_acc", "final_val_acc", "test_acc", "n_coarsenings"], summary)
    reference = None
    if with_full:
        results, _ = run_seeds(cfg, base, "full", None)
        reference = [(math.nan, s, rec.epoch, rec.val_acc) for s, r in results for rec in r.history]
        write_csv(out / "sweep_t_full.csv", ["T", "seed", "epoch", "val_acc"], reference)
    if cfg.plots:
        for d in deltas:
            name = "sweep_t.png" if len(deltas) == 1 else f"sweep_t_delta_{d:g}.png"
            plotting.plot_sweep_t([(t, s, e, v) for t, dd, s, e, v in rows if dd == d], out / name, reference)
    for d in deltas:
        for t in t_values:
            best = [s[3] for s in summary if s[0] == t and s[1] == d]
            print(f"delta={d:g} T={t:g}: mean best val acc {np.mean(best):.4f}")
    return EXIT_OK


def format_ratio_table(dataset: str, summary: list[dict]) -> str:
    header = f"{'Dataset':<12} {'r':>6} | {'Val. acc.':>13} {'Test acc.':>13} {'Time (sec)':>17}"
    lines = [header, "-" * len(header)]
    for i, s in enumerate(summary):
        name = dataset if i == 0 else ""
        lines.append(
            f"{name:<12} {s['ratio']:>6.3g} | "
            f"{s['val_acc_mean']:.2f} +- {s['val_acc_std']:.2f} "
            f"{s['test_acc_mean']:.2f} +- {s['test_acc_std']:.2f} "
            f"{s['seconds_mean']:>8.2f} +- {s['seconds_std']:.2f}"
        )
    return "\n".join(lines) + "\n"


def cmd_sweep_ratio(cfg: RunConfig, r_values: list[float]) -> int:
    """Aggregate accuracy and time per coarsening ratio; ``r = 1`` is full-graph training."""
    out = cfg.output_dir()
    base = cfg.data.load_base()
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "config.resolved.toml", cfg.to_toml())
    summary = []
    for r in sorted(set(r_values)):
        if not 0 < r <= 1:
            raise ConfigError(f"coarsening ratio must lie in (0, 1], got {r}")
        method = "full" if r == 1.0 else cfg.method
        results, train_cfg = run_seeds(cfg, base, method, None, ratio=r, k=None)
        metrics, timing = aggregate(cfg, method, base.name, base.n_nodes, results, train_cfg)
        write_json(out / f"r_{r:g}" / "metrics.json", metrics)
        write_json(out / f"r_{r:g}" / "timing.json", timing)
        summary.append({
            "ratio": r,
            "method": method,
            "k": metrics["k"] if metrics["k"] is not None else base.n_nodes,
            "val_acc_mean": metrics["val_acc"]["mean"],
            "val_acc_std": metrics["val_acc"]["std"],
            "test_acc_mean": metrics["test_acc"]["mean"],
            "test_acc_std": metrics["test_acc"]["std"],
            "seconds_mean": timing["seconds"]["mean"],
            "seconds_std": timing["seconds"]["std"],
            "n_seeds": len(results),
        })
    keys = list(summary[0])
    write_csv(out / "sweep_ratio.csv", keys, ([s[k] for k in keys] for s in summary))
    table = format_ratio_table(base.name, summary)
    atomic_write_text(out / "sweep_ratio.txt", table)
    if cfg.plots:
        plotting.plot_sweep_ratio(summary, out / "sweep_ratio.png")
    print(table, end="")
    return EXIT_OK


def cmd_convert(fmt: str, raw: str, name: str, out: str, split_index: int = 0) -> int:
    if not Path(raw).is_dir():
        raise DatasetError(f"dataset not found: {raw}")
    if fmt == "planetoid":
        g = convert_planetoid(raw, name, out)
    else:
        g = convert_webkb(raw, name, out, split_index=split_index)
    print(f"wrote {out}: N={g.n_nodes} M={g.n_features} C={g.n_classes} edges={g.n_edges}")
    return EXIT_OK


def cmd_eval(checkpoint: str, dataset: str, propagation: str = "normalized") -> int:
    g = load_dataset(dataset)
    if not Path(checkpoint).is_file():
        raise DatasetError(f"checkpoint not found: {checkpoint}")
    model = load_model(checkpoint)
    accs = evaluate(model, g, propagation_operator(g.adjacency, propagation))
    print(json.dumps(accs, sort_keys=True))
    return EXIT_OK


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _run_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--dataset", help="canonical dataset directory (overrides data.path)")
    p.add_argument("--seed", "--seeds", dest="seeds", type=_ints, help="seed or comma-separated seeds")
    p.add_argument("--method", choices=["gk", "full", "static_random", "static_feature_kmeans"])
    p.add_argument("--arch", choices=["gcn", "fbgcn"])
    p.add_argument("--ratio", type=float, help="coarsening ratio r = K/N")
    p.add_argument("--k", type=int, help="cluster count K (overrides --ratio)")
    p.add_argument("--T", dest="period", type=float, help="recoarsening period (inf allowed)")
    p.add_argument("--delta", type=float, help="drift threshold (inf allowed)")
    p.add_argument("--epochs", dest="max_epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--output", help="output directory")
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gkcoarsen", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _run_args(sub.add_parser("train", help="train one method over one or more seeds"))
    p = sub.add_parser("sweep-t", help="GK validation trajectories for several recoarsening periods")
    _run_args(p)
    p.add_argument("--T-values", dest="t_values", type=_floats, default=[10, 50, 200, math.inf])
    p.add_argument("--delta-values", dest="delta_values", type=_floats, default=None,
                   help="drift thresholds to cross with the periods (default: inf, drift trigger off)")
    p.add_argument("--with-full", action="store_true", help="also run full-graph training as a reference")
    p = sub.add_parser("sweep-ratio", help="accuracy/time table over coarsening ratios")
    _run_args(p)
    p.add_argument("--ratios", dest="r_values", type=_floats, default=[0.05, 0.1, 0.25, 1.0])
    p = sub.add_parser("convert-dataset", help="convert a Planetoid or geom-gcn WebKB dump")
    p.add_argument("--format", choices=["planetoid", "webkb"], required=True)
    p.add_argument("--raw", required=True, help="directory with the raw dump")
    p.add_argument("--name", required=True, help="dataset name, e.g. cora, citeseer, wisconsin")
    p.add_argument("--out", required=True, help="output directory (canonical format)")
    p.add_argument("--split-index", type=int, default=0)
    p = sub.add_parser("eval", help="accuracy of a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--propagation", choices=["normalized", "raw"], default="normalized")
    return parser


def resolve_run_config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
        raw = cfg.to_dict()
    else:
        if not args.dataset:
            raise ConfigError("either --config or --dataset is required")
        raw = {"data": {"path": args.dataset}, "train": {}}
    if args.dataset:
        raw["data"].pop("synthetic", None)
        raw["data"]["path"] = args.dataset
    for key in ("seeds", "method", "output"):
        if getattr(args, key) is not None:
            raw[key] = getattr(args, key)
    if args.no_plots:
        raw["plots"] = False
    for key in ("arch", "ratio", "k", "period", "delta", "max_epochs", "lr", "optimizer"):
        if getattr(args, key) is not None:
            raw["train"][key] = getattr(args, key)
    if args.k is not None:
        raw["train"].pop("ratio", None)
    elif args.ratio is not None:
        raw["train"].pop("k", None)
    return config_from_dict(raw)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "convert-dataset":
            return cmd_convert(args.format, args.raw, args.name, args.out, args.split_index)
        if args.command == "eval":
            return cmd_eval(args.checkpoint, args.dataset, args.propagation)
        cfg = resolve_run_config(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "sweep-t":
            return cmd_sweep_t(cfg, args.t_values, args.with_full, args.delta_values)
        return cmd_sweep_ratio(cfg, args.r_values)
    except (ConfigError, DatasetError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
