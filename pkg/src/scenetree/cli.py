"""Command line front end.

Subcommands: ``split``, ``train``, ``evaluate``, ``predict``, ``silhouette``
and ``fixtures``. Every command is deterministic given its inputs and
``--seed``; JSON outputs use sorted keys and 12-significant-digit floats so
repeated runs are byte-identical. Exit codes: 0 success, 1 computation
failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .classifiers import ClassifierError, TrainConfig
from .dataset import (
    Dataset,
    DatasetError,
    Sample,
    kfold_by_events,
    load_dataset,
    load_split,
    save_dataset,
    save_split,
    split_by_events,
)
from .fixtures import generate_fixture
from .hierarchy import (
    ModelFormatError,
    load_model,
    save_model,
    train_flat,
    train_hierarchical,
)
from .metrics import (
    MetricsError,
    leaf_confusion,
    model_report,
    render_report,
    silhouette_score,
)
from .taxonomy import TaxonomyError, default_taxonomy, load_taxonomy

REPORT_SIGNIFICANT_DIGITS = 12


def _round_floats(obj, digits: int = REPORT_SIGNIFICANT_DIGITS):
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, float):
        return float(f"{obj:.{digits}g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v, digits) for v in obj]
    return obj


def write_json(doc: dict, path: Path) -> None:
    path.write_text(
        json.dumps(_round_floats(doc), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_taxonomy_arg(args):
    if getattr(args, "taxonomy", None):
        return load_taxonomy(args.taxonomy)
    return default_taxonomy()


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        l2_penalty=args.l2,
        batch_size=args.batch_size,
        seed=args.seed,
    )


def _select_split(dataset: Dataset, split_path: str | None, name: str) -> list[Sample]:
    if split_path is None:
        return list(dataset.samples)
    mapping = load_split(split_path)
    for ev in dataset.events:
        if ev not in mapping:
            raise DatasetError(f"event {ev!r} missing from split file {split_path}")
    return [s for s in dataset.samples if mapping[s.event_id] == name]


def _train_model(taxonomy, samples, cfg, args):
    if args.flat:
        model = train_flat(taxonomy, samples, cfg, classifier=args.classifier, knn_k=args.k)
    else:
        model = train_hierarchical(
            taxonomy, samples, cfg, classifier=args.classifier, knn_k=args.k,
            jobs=args.jobs,
        )
    model.root_prior = args.root_prior
    return model


def _leaf_accuracy(model, samples) -> float:
    preds = model.infer_batch(np.stack([s.features for s in samples]))
    hits = sum(p.leaf_argmax == s.label for p, s in zip(preds, samples))
    return hits / len(samples)


def cmd_split(args) -> int:
    dataset = load_dataset(args.data)
    try:
        parts = [float(v) for v in args.ratios.split(",")]
    except ValueError:
        raise DatasetError(f"cannot parse --ratios {args.ratios!r}") from None
    if len(parts) != 3:
        raise DatasetError("--ratios needs exactly three comma-separated values")
    assignment = split_by_events(dataset, (parts[0], parts[1], parts[2]), args.seed)
    out = _out_dir(args)
    save_split(assignment, str(out / "splits.csv"))
    counts = {
        name: {
            "events": len(assignment.events_for(name)),
            "samples": sum(len(dataset.events[ev]) for ev in assignment.events_for(name)),
        }
        for name in ("train", "validation", "test")
    }
    summary = {
        "seed": args.seed,
        "target_ratios": parts,
        "achieved_ratios": list(assignment.achieved_ratios),
        "counts": counts,
    }
    write_json(summary, out / "split_summary.json")
    achieved = ", ".join(f"{r:.3f}" for r in assignment.achieved_ratios)
    print(f"split {len(dataset.events)} events -> "
          f"{counts['train']['events']}/{counts['validation']['events']}"
          f"/{counts['test']['events']} (achieved image ratios: {achieved})")
    print(f"wrote {out / 'splits.csv'}")
    return 0


def _node_training_stats(model) -> dict:
    """Per-node log entries recomputed from the trained model."""
    if model.kind == "flat":
        clf = model.classifier
        entry = {"children": list(model.taxonomy.leaves), "type": type(clf).__name__}
        if getattr(clf, "epoch_losses", None):
            entry["epoch_losses"] = list(clf.epoch_losses)
        return {"flat": entry}
    stats = {}
    for nid, clf in model.node_classifiers.items():
        entry = {
            "children": list(model.taxonomy.nodes[nid].children),
            "type": type(clf).__name__,
        }
        if getattr(clf, "epoch_losses", None):
            entry["epoch_losses"] = list(clf.epoch_losses)
        stats[nid] = entry
    return stats


def cmd_train(args) -> int:
    taxonomy = _load_taxonomy_arg(args)
    dataset = load_dataset(args.data)
    train_samples = _select_split(dataset, args.splits, "train")
    val_samples = (
        _select_split(dataset, args.splits, "validation") if args.splits else []
    )
    if not train_samples:
        raise DatasetError("no training samples selected")
    cfg = _train_config(args)
    model = _train_model(taxonomy, train_samples, cfg, args)
    out = _out_dir(args)
    model_path = out / "model.json"
    save_model(model, str(model_path))

    log = {
        "kind": model.kind,
        "classifier": args.classifier,
        "config": {
            "epochs": cfg.epochs,
            "learning_rate": cfg.learning_rate,
            "l2_penalty": cfg.l2_penalty,
            "batch_size": cfg.batch_size,
            "seed": cfg.seed,
        },
        "n_train_samples": len(train_samples),
        "nodes": _node_training_stats(model),
        "warnings": list(model.warnings),
    }
    if val_samples:
        log["validation"] = {
            "n_samples": len(val_samples),
            "leaf_accuracy": _leaf_accuracy(model, val_samples),
        }
    write_json(log, out / "training_log.json")
    for w in model.warnings:
        print(f"warning: {w}", file=sys.stderr)
    msg = f"trained {model.kind} model on {len(train_samples)} samples"
    if val_samples:
        msg += f"; validation leaf accuracy {log['validation']['leaf_accuracy']:.4f}"
    print(msg)
    print(f"wrote {model_path}")
    return 0


def _evaluate_to_files(model, samples, out: Path, prefix: str = "report") -> dict:
    doc = model_report(model, samples)
    write_json(doc, out / f"{prefix}.json")
    (out / f"{prefix}.txt").write_text(render_report(_round_floats(doc)), encoding="utf-8")
    cm = leaf_confusion(model, samples)
    (out / f"{prefix}_confusion.csv").write_text(cm.to_csv(), encoding="utf-8")
    return doc


def cmd_evaluate(args) -> int:
    dataset = load_dataset(args.data)
    out = _out_dir(args)
    if args.kfold:
        taxonomy = _load_taxonomy_arg(args)
        cfg = _train_config(args)
        folds = kfold_by_events(dataset, args.kfold, args.seed)
        fold_docs = []
        for i, (train_ev, test_ev) in enumerate(folds, start=1):
            model = _train_model(
                taxonomy, dataset.samples_for_events(train_ev), cfg, args
            )
            doc = _evaluate_to_files(
                model, dataset.samples_for_events(test_ev), out, f"report_fold{i}"
            )
            fold_docs.append(doc)
            print(
                f"fold {i}: leaf accuracy {doc['leaf']['accuracy']:.4f}, "
                f"weighted {doc['leaf']['weighted_accuracy']:.4f}"
            )
        def _mean(path_get):
            return sum(path_get(d) for d in fold_docs) / len(fold_docs)
        summary = {
            "k": args.kfold,
            "seed": args.seed,
            "mean": {
                "accuracy": _mean(lambda d: d["leaf"]["accuracy"]),
                "weighted_accuracy": _mean(lambda d: d["leaf"]["weighted_accuracy"]),
                "macro_f1": _mean(lambda d: d["leaf"]["macro"]["f1"]),
                "weighted_f1": _mean(lambda d: d["leaf"]["weighted"]["f1"]),
            },
            "per_fold_accuracy": [d["leaf"]["accuracy"] for d in fold_docs],
        }
        write_json(summary, out / "kfold_summary.json")
        print(
            f"{args.kfold}-fold mean leaf accuracy "
            f"{summary['mean']['accuracy']:.4f}"
        )
        return 0

    if not args.model:
        raise DatasetError("either --model or --kfold is required")
    taxonomy = load_taxonomy(args.taxonomy) if args.taxonomy else None
    model = load_model(args.model, taxonomy=taxonomy)
    samples = _select_split(dataset, args.splits, args.split)
    if not samples:
        raise DatasetError(f"no samples in split {args.split!r}")
    doc = _evaluate_to_files(model, samples, out)
    print(
        f"leaf accuracy {doc['leaf']['accuracy']:.4f}, "
        f"weighted {doc['leaf']['weighted_accuracy']:.4f}, "
        f"macro F1 {doc['leaf']['macro']['f1']:.4f}"
    )
    for row in doc["levels"]:
        print(
            f"  level {row['level']}: direct {row['direct']['accuracy']:.4f}, "
            f"from-leaf {row['from_leaf']['accuracy']:.4f}"
        )
    print(f"wrote {out / 'report.json'}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.data)
    if dataset.dimension != model.feature_dim:
        for i, s in enumerate(dataset.samples[:5]):
            print(
                f"row {i + 1} ({s.sample_id}): expected {model.feature_dim} "
                f"features, got {dataset.dimension}",
                file=sys.stderr,
            )
        if len(dataset.samples) > 5:
            print(f"... and {len(dataset.samples) - 5} more rows", file=sys.stderr)
        raise ClassifierError(
            f"input dimension {dataset.dimension} does not match model "
            f"dimension {model.feature_dim}"
        )
    preds = model.infer_batch(np.stack([s.features for s in dataset.samples]))
    t = model.taxonomy
    out = _out_dir(args)
    path = out / "predictions.csv"
    levels = list(range(1, t.max_depth + 1))
    header = (
        ["sample_id", "prediction", "probability"]
        + [f"level_{k}" for k in levels]
        + [f"top{args.top_k}"]
        + [f"p_{leaf}" for leaf in t.leaves]
    )
    lines = [",".join(header)]
    for s, p in zip(dataset.samples, preds):
        ranked = sorted(
            range(len(t.leaves)), key=lambda i: (-p.joint[t.leaves[i]], i)
        )[: args.top_k]
        top = ";".join(
            f"{t.leaves[i]}:{p.joint[t.leaves[i]]:.12g}" for i in ranked
        )
        row = (
            [s.sample_id, p.leaf_argmax, f"{p.joint[p.leaf_argmax]:.12g}"]
            + [p.per_level_argmax[k] for k in levels]
            + [top]
            + [f"{p.joint[leaf]:.12g}" for leaf in t.leaves]
        )
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"predicted {len(preds)} samples")
    print(f"wrote {path}")
    return 0


def cmd_silhouette(args) -> int:
    dataset = load_dataset(args.data)
    for s in dataset.samples:
        if not s.label:
            raise DatasetError(f"sample {s.sample_id!r} has no label")
    if args.splits:
        mapping = load_split(args.splits)
        for ev in dataset.events:
            if ev not in mapping:
                raise DatasetError(f"event {ev!r} missing from split file {args.splits}")
        groups = {
            name: [s for s in dataset.samples if mapping[s.event_id] == name]
            for name in ("train", "validation", "test")
        }
        groups = {name: ss for name, ss in groups.items() if ss}
    else:
        groups = {"all": list(dataset.samples)}

    doc = {}
    for name, samples in groups.items():
        mean, per_class = silhouette_score(
            np.stack([s.features for s in samples]), [s.label for s in samples]
        )
        doc[name] = {"mean": mean, "per_class": per_class}
        print(f"{name}: mean silhouette {mean:+.3f} ({len(samples)} samples)")
        width = max(len(c) for c in per_class)
        for cls, score in per_class.items():
            bar = "#" * int(round(max(score, 0.0) * 40))
            print(f"  {cls:<{width}}  {score:+.3f}  {bar}")
    out = _out_dir(args)
    write_json(doc, out / "silhouette.json")
    print(f"wrote {out / 'silhouette.json'}")
    return 0


def cmd_fixtures(args) -> int:
    taxonomy = _load_taxonomy_arg(args)
    dataset = generate_fixture(
        taxonomy,
        samples_per_leaf=args.samples_per_leaf,
        dim=args.dim,
        event_size=args.event_size,
        noise=args.noise,
        seed=args.seed,
    )
    out = _out_dir(args)
    path = out / "fixture.csv"
    save_dataset(dataset, str(path))
    print(
        f"generated {len(dataset)} samples ({len(taxonomy.leaves)} leaves x "
        f"{args.samples_per_leaf}, {len(dataset.events)} events, D={args.dim})"
    )
    print(f"wrote {path}")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=42, help="RNG seed (default 42)")
    p.add_argument("--out", default=".", help="output directory (default .)")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker threads for per-node training")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--taxonomy", help="taxonomy file (default: built-in food scenes)")
    p.add_argument("--flat", action="store_true",
                   help="train a flat classifier over the leaves instead")
    p.add_argument("--classifier", choices=("softmax", "knn"), default="softmax")
    p.add_argument("--k", type=int, default=3, help="neighbours for --classifier knn")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--root-prior", type=float, default=1.0,
                   help="probability that inputs belong to the root class")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenetree",
        description="Hierarchical scene classification over a semantic taxonomy.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="event-aware train/validation/test split")
    p.add_argument("--data", required=True)
    p.add_argument("--ratios", default="0.7,0.1,0.2",
                   help="train,validation,test image ratios (default 0.7,0.1,0.2)")
    _add_common(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a hierarchical (or flat) model")
    p.add_argument("--data", required=True)
    p.add_argument("--splits", help="splits.csv from the split command")
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a model, or run k-fold CV")
    p.add_argument("--data", required=True)
    p.add_argument("--model", help="model.json from the train command")
    p.add_argument("--splits", help="splits.csv; restricts evaluation to --split")
    p.add_argument("--split", choices=("train", "validation", "test"),
                   default="test")
    p.add_argument("--kfold", type=int,
                   help="train and evaluate k event-level folds instead")
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="per-sample predictions CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--top-k", type=int, default=5)
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("silhouette", help="silhouette analysis of descriptors")
    p.add_argument("--data", required=True)
    p.add_argument("--splits", help="score each split separately")
    _add_common(p)
    p.set_defaults(func=cmd_silhouette)

    p = sub.add_parser("fixtures", help="generate a synthetic descriptor dataset")
    p.add_argument("--taxonomy", help="taxonomy file (default: built-in food scenes)")
    p.add_argument("--samples-per-leaf", type=int, default=200)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--event-size", type=int, default=10)
    p.add_argument("--noise", type=float, default=0.3)
    _add_common(p)
    p.set_defaults(func=cmd_fixtures)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        TaxonomyError,
        DatasetError,
        MetricsError,
        ModelFormatError,
        FileNotFoundError,
        IsADirectoryError,
        PermissionError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ClassifierError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
