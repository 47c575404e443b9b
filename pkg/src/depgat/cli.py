"""Command-line workflows: simulate, train, eval, export-graph, baseline.

Every run takes a declarative JSON config and/or flags (flags win), writes a
MetricReport JSON to stdout and into the output directory, and renders the
training report (delimited histories plus matplotlib figures) next to the
checkpoint. The default output directory comes from $DEPGAT_OUT.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import mlp_baseline, qda_fit_predict
from .dataio import (CLASSIFICATION, ConfigError, Dataset, load_csv, load_dataset,
                     load_schema, save_dataset, split_standardize)
from .metrics import (MetricReport, accuracy, aggregate_reports, graph_auc,
                      mean_graph_auc, rmse, roc_auc)
from .report import (export_heatmap, training_figures, write_history_csv,
                     write_valid_history_csv)
from .simulator import PRESETS, PrecisionPair, SimConfig, make_dataset
from .structure import undirected_scores
from .trainer import HyperParams, load_checkpoint, run_training, save_checkpoint

ENV_OUT = "DEPGAT_OUT"

HP_FLOAT_FIELDS = ("lambda_struct", "lambda_sparse", "lambda_dag", "tau", "lr",
                   "struct_dropout", "task_dropout", "grad_clip")
HP_INT_FIELDS = ("epochs", "pretrain_epochs", "batch_size", "struct_H", "task_H",
                 "task_L", "d_pos", "nheads", "seed")
HP_BOOL_FIELDS = ("multi_graph", "y_node", "include_full_x")


def default_out() -> str:
    return os.environ.get(ENV_OUT, "depgat-out")


def add_hyperparam_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("hyperparameters (override config file)")
    for name in HP_FLOAT_FIELDS:
        group.add_argument(f"--{name.lower().replace('_', '-')}", dest=name,
                           type=float, default=None)
    for name in HP_INT_FIELDS:
        group.add_argument(f"--{name.lower().replace('_', '-')}", dest=name,
                           type=int, default=None)
    for name in HP_BOOL_FIELDS:
        group.add_argument(f"--{name.lower().replace('_', '-')}", dest=name,
                           default=None, action=argparse.BooleanOptionalAction)


def add_dataset_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("dataset")
    group.add_argument("--data", help="feature CSV file")
    group.add_argument("--sidecar", help="dataset sidecar JSON written by this tool")
    group.add_argument("--schema", help="schema JSON declaring per-column kinds")
    group.add_argument("--split", help="train,valid,test fractions (default 0.8,0.1,0.1)")
    group.add_argument("--split-counts", help="exact train,valid,test row counts")
    group.add_argument("--split-seed", type=int, default=None)
    group.add_argument("--standardize", default=None, action=argparse.BooleanOptionalAction)


def resolve_hyperparams(args, config: dict) -> HyperParams:
    hp = HyperParams.from_dict(config.get("hyperparams", {}))
    overrides = {}
    for name in HP_FLOAT_FIELDS + HP_INT_FIELDS + HP_BOOL_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return replace(hp, **overrides) if overrides else hp


def setting(args, config: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return config.get(name, default)


def parse_triple(text: str, caster) -> tuple:
    parts = [caster(x) for x in str(text).split(",")]
    if len(parts) != 3:
        raise ConfigError(f"expected three comma-separated values, got {text!r}")
    return tuple(parts)


def resolve_dataset(args, config: dict) -> Dataset:
    data = setting(args, config, "data")
    sidecar = setting(args, config, "sidecar")
    schema_path = setting(args, config, "schema")
    if sidecar:
        if not data:
            raise ConfigError("--sidecar requires --data")
        return load_dataset(data, sidecar)
    if not data or not schema_path:
        raise ConfigError("need --data with either --sidecar or --schema")
    ds = load_csv(data, load_schema(schema_path))
    split = setting(args, config, "split")
    counts = setting(args, config, "split_counts")
    fractions = parse_triple(split, float) if split else (0.8, 0.1, 0.1)
    count_triple = parse_triple(counts, int) if counts else None
    standardize = setting(args, config, "standardize")
    return split_standardize(ds, fractions=fractions,
                             seed=setting(args, config, "split_seed", 0),
                             counts=count_triple,
                             standardize=True if standardize is None else bool(standardize))


def truth_from_dataset(ds: Dataset) -> PrecisionPair | None:
    payload = ds.extras.get("precisions")
    return PrecisionPair.from_dict(payload) if payload else None


def prediction_reports(ds: Dataset, scores_fn, seed: int,
                       splits=("valid", "test")) -> list[MetricReport]:
    out = []
    for split in splits:
        X, y = ds.rows(split)
        if X.shape[0] == 0:
            continue
        if ds.task == CLASSIFICATION and ds.n_classes == 2:
            out.append(MetricReport("auc", roc_auc(scores_fn(X), y), split, seed))
        elif ds.task == CLASSIFICATION:
            out.append(MetricReport("accuracy", accuracy(y, scores_fn(X)), split, seed))
        else:
            out.append(MetricReport("rmse", rmse(y, scores_fn(X)), split, seed))
    return out


def graph_reports(probs_per_graph: list[np.ndarray], truth: PrecisionPair,
                  n_feature_nodes: int, seed: int) -> list[MetricReport]:
    """Graph-recovery AUC of exported probabilities against the ground truth.

    Probability matrices may cover more nodes than the truth (appended noise
    features are true non-edges; a trailing label node is excluded), so the
    truth is zero-padded to the feature block before scoring.
    """
    p_true = truth.true_graph_a.shape[0]
    k = min(n_feature_nodes, probs_per_graph[0].shape[0])
    if p_true > k:
        return []

    def pad(g: np.ndarray) -> np.ndarray:
        out = np.zeros((k, k), dtype=np.int64)
        out[:p_true, :p_true] = g
        return out

    scored = [undirected_scores(g[:k, :k]) for g in probs_per_graph]
    out = []
    if len(scored) == 2:
        truths = [pad(truth.true_graph_a), pad(truth.true_graph_b)]
        out.append(MetricReport("graph_auc", mean_graph_auc(scored, truths), "graph", seed))
        out.append(MetricReport("graph_auc_class_a", graph_auc(scored[0], truths[0]),
                                "graph", seed))
        out.append(MetricReport("graph_auc_class_b", graph_auc(scored[1], truths[1]),
                                "graph", seed))
    else:
        out.append(MetricReport("graph_auc", graph_auc(scored[0], pad(truth.union_graph)),
                                "graph", seed))
    return out


def emit_metrics(reports: list[MetricReport], out_dir: Path, extra: dict | None = None) -> dict:
    payload = {
        "reports": [r.to_dict() for r in reports],
        "aggregates": aggregate_reports(reports),
    }
    if extra:
        payload.update(extra)
    text = json.dumps(payload, indent=2)
    (out_dir / "metrics.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return payload


# ------------------------------------------------------------------ commands


def cmd_simulate(args) -> int:
    if args.preset:
        overrides = {}
        for name in ("p", "p_d", "p_i", "edge_weight", "delta_d", "n_train", "n_valid",
                     "n_test", "seed", "noise_features"):
            value = getattr(args, name)
            if value is not None:
                overrides[name] = value
        cfg = SimConfig.preset_config(args.preset, **overrides)
    else:
        cfg = SimConfig(
            p=args.p if args.p is not None else 10,
            p_d=args.p_d if args.p_d is not None else 0.3,
            p_i=args.p_i if args.p_i is not None else 0.2,
            edge_weight=args.edge_weight if args.edge_weight is not None else 0.5,
            delta_d=args.delta_d,
            n_train=args.n_train if args.n_train is not None else 8000,
            n_valid=args.n_valid if args.n_valid is not None else 1600,
            n_test=args.n_test if args.n_test is not None else 1600,
            seed=args.seed if args.seed is not None else 0,
            noise_features=args.noise_features or 0,
        )
    ds, pair = make_dataset(cfg)
    out_dir = Path(args.out or default_out())
    out_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out_dir / "data.csv", out_dir / "data.json")
    summary = {
        "rows": ds.n_rows,
        "features": ds.spec.n_features,
        "counts": ds.counts(),
        "delta_d": pair.delta_d,
        "true_edges_class_a": int(pair.true_graph_a.sum() // 2),
        "true_edges_class_b": int(pair.true_graph_b.sum() // 2),
        "data": str(out_dir / "data.csv"),
        "sidecar": str(out_dir / "data.json"),
    }
    print(json.dumps(summary, indent=2))
    return 0


def run_one_seed(ds: Dataset, hp: HyperParams, out_dir: Path,
                 truth: PrecisionPair | None) -> list[MetricReport]:
    model, state = run_training(ds, hp)
    final_probs = ([g.copy() for g in state.edge_prob_history[-1]]
                   if state.edge_prob_history else
                   [model.structure.edge_probs(c) for c in range(model.n_graphs)])

    extra = {
        "final_edge_probs": [g.tolist() for g in final_probs],
        "dataset_meta": {
            "task": ds.task, "n_classes": ds.n_classes,
            "target_levels": ds.target_levels,
            "standardization": None if ds.mean is None else
                {"mean": ds.mean.tolist(), "std": ds.std.tolist()},
        },
        "best_valid": {"metric": state.metric_name, "value": state.best_metric},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "checkpoint.json", model, hp, state.epoch, extra=extra)
    if state.history:
        write_history_csv(state.history, out_dir / "history.csv")
    if state.valid_history:
        write_valid_history_csv(state.valid_history, state.metric_name,
                                out_dir / "valid_history.csv")
    figures_dir = out_dir / "figures"
    figures_dir.mkdir(exist_ok=True)
    true_graphs = None
    if truth is not None:
        per_graph = ([truth.true_graph_a, truth.true_graph_b]
                     if model.n_graphs == 2 else [truth.union_graph])
        nodes = model.structure.n_nodes
        true_graphs = []
        for g in per_graph:
            padded = np.zeros((nodes, nodes), dtype=np.int64)
            padded[:g.shape[0], :g.shape[1]] = g
            true_graphs.append(padded)
    training_figures(state.history, state.valid_history, state.metric_name,
                     state.edge_prob_history, figures_dir, true_graphs)

    reports = prediction_reports(ds, model.scores, hp.seed)
    if truth is not None:
        reports.extend(graph_reports(final_probs, truth, model.spec.n_features, hp.seed))
    return reports


def cmd_train(args) -> int:
    config = json.loads(Path(args.config).read_text()) if args.config else {}
    hp = resolve_hyperparams(args, config)
    ds = resolve_dataset(args, config)
    truth = truth_from_dataset(ds)
    out_dir = Path(setting(args, config, "out") or default_out())
    out_dir.mkdir(parents=True, exist_ok=True)

    n_seeds = setting(args, config, "seeds", 1)
    reports: list[MetricReport] = []
    for offset in range(n_seeds):
        hp_seed = replace(hp, seed=hp.seed + offset)
        seed_dir = out_dir / f"seed_{hp_seed.seed}" if n_seeds > 1 else out_dir
        reports.extend(run_one_seed(ds, hp_seed, seed_dir, truth))
    emit_metrics(reports, out_dir, extra={"hyperparams": hp.to_dict(), "seeds": n_seeds})
    return 0


def eval_dataset_for_checkpoint(args, model, extra) -> tuple[Dataset, str]:
    meta = extra.get("dataset_meta", {})
    if args.sidecar:
        return load_dataset(args.data, args.sidecar), args.split or "test"
    if not args.schema:
        raise ConfigError("eval needs --sidecar or --schema alongside --data")
    schema = load_schema(args.schema)
    ds = load_csv(args.data, schema, spec=model.spec,
                  target_levels=meta.get("target_levels"))
    tag = args.split or "all"
    X, mean, std = ds.X, None, None
    norm = meta.get("standardization")
    if norm:
        mean, std = np.asarray(norm["mean"]), np.asarray(norm["std"])
        X = (X - mean) / std
    ds = Dataset(X=X, y=ds.y, task=ds.task, n_classes=ds.n_classes, spec=ds.spec,
                 split=np.array([tag] * ds.n_rows), target_levels=ds.target_levels,
                 mean=mean, std=std)
    return ds, tag


def cmd_eval(args) -> int:
    model, hp, extra = load_checkpoint(args.checkpoint)
    ds, split = eval_dataset_for_checkpoint(args, model, extra)
    truth = truth_from_dataset(ds)
    out_dir = Path(args.out or default_out())
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = prediction_reports(ds, model.scores, hp.seed, splits=(split,))
    if truth is not None:
        probs = extra.get("final_edge_probs")
        per_graph = ([np.asarray(g) for g in probs] if probs else
                     [model.structure.edge_probs(c) for c in range(model.n_graphs)])
        reports.extend(graph_reports(per_graph, truth, model.spec.n_features, hp.seed))
    emit_metrics(reports, out_dir, extra={"checkpoint": str(args.checkpoint)})
    return 0


def cmd_export_graph(args) -> int:
    model, hp, extra = load_checkpoint(args.checkpoint)
    out_dir = Path(args.out or default_out())
    out_dir.mkdir(parents=True, exist_ok=True)
    names = list(model.spec.names)
    if model.structure.n_nodes > model.spec.n_features:
        names.append("label")
    stored = extra.get("final_edge_probs")
    written = []
    for c in range(model.n_graphs):
        if args.which == "final" and stored is not None:
            probs = np.asarray(stored[c])
        else:
            probs = model.structure.edge_probs(c)
        matrix = probs if args.directed else undirected_scores(probs)
        base = out_dir / (f"graph_class{c}" if model.n_graphs > 1 else "graph")
        written.extend(export_heatmap(matrix, names, base))
    print(json.dumps({"written": written}, indent=2))
    return 0


def cmd_baseline(args) -> int:
    config = json.loads(Path(args.config).read_text()) if args.config else {}
    ds = resolve_dataset(args, config)
    out_dir = Path(setting(args, config, "out") or default_out())
    out_dir.mkdir(parents=True, exist_ok=True)
    reports: list[MetricReport] = []
    n_seeds = args.seeds or 1
    base_seed = args.seed if args.seed is not None else 0

    if args.kind == "qda":
        if ds.task != CLASSIFICATION:
            raise ConfigError("QDA baseline needs a classification dataset")
        X_train, y_train = ds.rows("train")
        for split in ("valid", "test"):
            X, y = ds.rows(split)
            scores = qda_fit_predict(X_train, y_train, X, ds.n_classes)
            if ds.n_classes == 2:
                reports.append(MetricReport("auc", roc_auc(scores, y), split, base_seed))
            else:
                reports.append(MetricReport("accuracy",
                                            accuracy(y, scores.argmax(axis=1)), split,
                                            base_seed))
    else:
        for offset in range(n_seeds):
            result = mlp_baseline(ds, hidden=args.hidden, layers=args.layers,
                                  lr=args.lr, epochs=args.epochs,
                                  batch_size=args.batch_size, seed=base_seed + offset)
            reports.append(MetricReport(result.metric_name, result.valid_metric,
                                        "valid", base_seed + offset))
            reports.append(MetricReport(result.metric_name, result.test_metric,
                                        "test", base_seed + offset))
    emit_metrics(reports, out_dir, extra={"baseline": args.kind})
    return 0


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depgat",
        description="Learn feature dependency graphs jointly with a graph-attention predictor.")
    parser.add_argument("--version", action="version", version=f"depgat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a two-class Gaussian MRF dataset")
    sim.add_argument("--preset", choices=sorted(PRESETS))
    sim.add_argument("--p", type=int, default=None)
    sim.add_argument("--p-d", dest="p_d", type=float, default=None)
    sim.add_argument("--p-i", dest="p_i", type=float, default=None)
    sim.add_argument("--edge-weight", dest="edge_weight", type=float, default=None)
    sim.add_argument("--delta-d", dest="delta_d", type=float, default=None)
    sim.add_argument("--n-train", dest="n_train", type=int, default=None)
    sim.add_argument("--n-valid", dest="n_valid", type=int, default=None)
    sim.add_argument("--n-test", dest="n_test", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--noise-features", dest="noise_features", type=int, default=None)
    sim.add_argument("--out")
    sim.set_defaults(func=cmd_simulate)

    train = sub.add_parser("train", help="train the joint model")
    train.add_argument("--config", help="declarative JSON config")
    train.add_argument("--out")
    train.add_argument("--seeds", type=int, default=None,
                       help="run this many consecutive seeds and aggregate")
    add_dataset_flags(train)
    add_hyperparam_flags(train)
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--sidecar")
    ev.add_argument("--schema")
    ev.add_argument("--split", help="split tag to evaluate (default test)")
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_eval)

    ex = sub.add_parser("export-graph", help="write edge-probability CSV and SVG heatmaps")
    ex.add_argument("--checkpoint", required=True)
    ex.add_argument("--out")
    ex.add_argument("--which", choices=("final", "best"), default="final",
                    help="final-epoch probabilities or the best-validation snapshot")
    ex.add_argument("--directed", action="store_true",
                    help="export raw directed probabilities instead of pairwise max")
    ex.set_defaults(func=cmd_export_graph)

    base = sub.add_parser("baseline", help="run the QDA or MLP baseline")
    base.add_argument("kind", choices=("qda", "mlp"))
    base.add_argument("--config")
    base.add_argument("--out")
    base.add_argument("--hidden", type=int, default=32)
    base.add_argument("--layers", type=int, default=2)
    base.add_argument("--lr", type=float, default=1e-3)
    base.add_argument("--epochs", type=int, default=30)
    base.add_argument("--batch-size", dest="batch_size", type=int, default=128)
    base.add_argument("--seed", type=int, default=None)
    base.add_argument("--seeds", type=int, default=None)
    add_dataset_flags(base)
    base.set_defaults(func=cmd_baseline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError, ArithmeticError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
