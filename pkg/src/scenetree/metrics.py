"""Evaluation suite: confusion matrices, precision/recall/F1 with macro and
weighted averaging, accuracy and balanced accuracy, per-level reports for
hierarchical models, and silhouette analysis of descriptor sets.

Conventions: weighted averages use true-instance counts as weights; any
metric whose denominator is zero is reported as 0 and the class is flagged;
weighted accuracy means balanced accuracy, the unweighted mean of per-class
recalls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Sample
from .taxonomy import Taxonomy

WEIGHTED_ACCURACY_DEFINITION = "balanced accuracy (mean of per-class recalls)"


class MetricsError(ValueError):
    """Invalid metric input (empty, mismatched, or unknown labels)."""


@dataclass(eq=False)
class ConfusionMatrix:
    """Counts matrix, rows are true classes, columns are predicted."""

    classes: tuple[str, ...]
    counts: np.ndarray  # (K, K) int64

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def supports(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def to_csv(self) -> str:
        lines = ["true\\predicted," + ",".join(self.classes)]
        for i, cls in enumerate(self.classes):
            lines.append(cls + "," + ",".join(str(int(v)) for v in self.counts[i]))
        return "\n".join(lines) + "\n"


def confusion_matrix(
    truths: Sequence[str], preds: Sequence[str], classes: Sequence[str]
) -> ConfusionMatrix:
    if len(truths) != len(preds):
        raise MetricsError(
            f"{len(truths)} truths but {len(preds)} predictions"
        )
    if not truths:
        raise MetricsError("empty evaluation input")
    classes = tuple(classes)
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truths, preds):
        if t not in index:
            raise MetricsError(f"unknown true label {t!r}")
        if p not in index:
            raise MetricsError(f"unknown predicted label {p!r}")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(classes=classes, counts=counts)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    zero_division: bool = False


@dataclass(frozen=True)
class Prf:
    precision: float
    recall: float
    f1: float


def per_class_metrics(cm: ConfusionMatrix) -> dict[str, ClassMetrics]:
    if cm.total == 0:
        raise MetricsError("empty confusion matrix")
    out: dict[str, ClassMetrics] = {}
    col_sums = cm.counts.sum(axis=0)
    row_sums = cm.counts.sum(axis=1)
    for i, cls in enumerate(cm.classes):
        tp = int(cm.counts[i, i])
        fp = int(col_sums[i]) - tp
        fn = int(row_sums[i]) - tp
        zero = False
        if tp + fp > 0:
            precision = tp / (tp + fp)
        else:
            precision, zero = 0.0, True
        if tp + fn > 0:
            recall = tp / (tp + fn)
        else:
            recall, zero = 0.0, True
        if precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        else:
            f1, zero = 0.0, True
        out[cls] = ClassMetrics(
            precision=precision,
            recall=recall,
            f1=f1,
            support=int(row_sums[i]),
            zero_division=zero,
        )
    return out


def precision_recall_f1(cm: ConfusionMatrix, averaging: str = "macro"):
    """Precision, recall and F1 from a confusion matrix.

    ``averaging`` is ``per_class`` (dict of :class:`ClassMetrics`),
    ``macro`` (unweighted mean over classes) or ``weighted``
    (true-instance-count weighted mean).
    """
    per_class = per_class_metrics(cm)
    if averaging == "per_class":
        return per_class
    values = list(per_class.values())
    if averaging == "macro":
        k = len(values)
        return Prf(
            precision=sum(v.precision for v in values) / k,
            recall=sum(v.recall for v in values) / k,
            f1=sum(v.f1 for v in values) / k,
        )
    if averaging == "weighted":
        total = cm.total
        return Prf(
            precision=sum(v.precision * v.support for v in values) / total,
            recall=sum(v.recall * v.support for v in values) / total,
            f1=sum(v.f1 * v.support for v in values) / total,
        )
    raise MetricsError(f"unknown averaging {averaging!r}")


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise MetricsError("empty confusion matrix")
    return float(np.trace(cm.counts)) / cm.total


def weighted_accuracy(cm: ConfusionMatrix) -> float:
    """Balanced accuracy: unweighted mean of per-class recalls.

    Classes with zero support contribute recall 0; they are flagged in
    :class:`EvaluationReport` rather than silently dropped.
    """
    per_class = per_class_metrics(cm)
    return sum(v.recall for v in per_class.values()) / len(per_class)


@dataclass(eq=False)
class EvaluationReport:
    """Leaf-level evaluation: per-class and averaged metrics."""

    classes: tuple[str, ...]
    confusion: ConfusionMatrix
    per_class: dict[str, ClassMetrics]
    macro: Prf
    weighted: Prf
    accuracy: float
    weighted_accuracy: float
    zero_support_classes: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "accuracy": self.accuracy,
            "weighted_accuracy": self.weighted_accuracy,
            "macro": vars(self.macro).copy(),
            "weighted": vars(self.weighted).copy(),
            "per_class": {
                cls: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                    "zero_division": m.zero_division,
                }
                for cls, m in self.per_class.items()
            },
            "zero_support_classes": list(self.zero_support_classes),
            "metadata": {
                "weighted_accuracy_definition": WEIGHTED_ACCURACY_DEFINITION,
                "zero_division_convention": "metric reported as 0 and flagged",
            },
        }


def evaluate_predictions(
    truths: Sequence[str], preds: Sequence[str], classes: Sequence[str]
) -> EvaluationReport:
    cm = confusion_matrix(truths, preds, classes)
    per_class = per_class_metrics(cm)
    return EvaluationReport(
        classes=cm.classes,
        confusion=cm,
        per_class=per_class,
        macro=precision_recall_f1(cm, "macro"),
        weighted=precision_recall_f1(cm, "weighted"),
        accuracy=accuracy(cm),
        weighted_accuracy=weighted_accuracy(cm),
        zero_support_classes=tuple(
            cls for cls, m in per_class.items() if m.support == 0
        ),
    )


@dataclass(frozen=True)
class LevelRow:
    """Accuracy at one taxonomy level, for both prediction modes."""

    level: int
    classes: tuple[str, ...]
    direct_accuracy: float
    direct_weighted_accuracy: float
    from_leaf_accuracy: float
    from_leaf_weighted_accuracy: float
    disagreements: int  # samples where the two modes pick different classes

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "classes": list(self.classes),
            "direct": {
                "accuracy": self.direct_accuracy,
                "weighted_accuracy": self.direct_weighted_accuracy,
            },
            "from_leaf": {
                "accuracy": self.from_leaf_accuracy,
                "weighted_accuracy": self.from_leaf_weighted_accuracy,
            },
            "mode_disagreements": self.disagreements,
        }


def per_level_report(model, samples: Sequence[Sample]) -> list[LevelRow]:
    """Accuracy and weighted accuracy per taxonomy level, in both modes.

    Ground truth at each level is the carried-down ancestor of the sample's
    leaf label. ``direct`` evaluates the model's per-level argmax, while
    ``from_leaf`` maps the predicted leaf up the tree.
    """
    samples = list(samples)
    if not samples:
        raise MetricsError("no samples to evaluate")
    t: Taxonomy = model.taxonomy
    preds = model.infer_batch(np.stack([s.features for s in samples]))
    rows = []
    for level in range(t.max_depth + 1):
        classes = tuple(t.nodes_at_level(level))
        truths = [t.label_at_level(s.label, level) for s in samples]
        direct = [p.per_level_argmax[level] for p in preds]
        from_leaf = [t.label_at_level(p.leaf_argmax, level) for p in preds]
        cm_direct = confusion_matrix(truths, direct, classes)
        cm_from_leaf = confusion_matrix(truths, from_leaf, classes)
        rows.append(
            LevelRow(
                level=level,
                classes=classes,
                direct_accuracy=accuracy(cm_direct),
                direct_weighted_accuracy=weighted_accuracy(cm_direct),
                from_leaf_accuracy=accuracy(cm_from_leaf),
                from_leaf_weighted_accuracy=weighted_accuracy(cm_from_leaf),
                disagreements=sum(d != f for d, f in zip(direct, from_leaf)),
            )
        )
    return rows


def model_report(model, samples: Sequence[Sample]) -> dict:
    """Full JSON-ready evaluation of a model on labeled samples: leaf-level
    metrics plus the per-level accuracy table in both modes."""
    samples = list(samples)
    if not samples:
        raise MetricsError("no samples to evaluate")
    t: Taxonomy = model.taxonomy
    preds = model.infer_batch(np.stack([s.features for s in samples]))
    truths = [s.label for s in samples]
    leaf_preds = [p.leaf_argmax for p in preds]
    leaf_report = evaluate_predictions(truths, leaf_preds, t.leaves)
    level_rows = per_level_report(model, samples)
    return {
        "model_kind": model.kind,
        "n_samples": len(samples),
        "root_prior": float(model.root_prior),
        "leaf": leaf_report.to_dict(),
        "levels": [row.to_dict() for row in level_rows],
        "mode_disagreements_total": sum(row.disagreements for row in level_rows),
    }


def leaf_confusion(model, samples: Sequence[Sample]) -> ConfusionMatrix:
    samples = list(samples)
    preds = model.infer_batch(np.stack([s.features for s in samples]))
    return confusion_matrix(
        [s.label for s in samples],
        [p.leaf_argmax for p in preds],
        model.taxonomy.leaves,
    )


def render_report(doc: dict) -> str:
    """Aligned plain-text rendering of a :func:`model_report` document."""
    leaf = doc["leaf"]
    width = max(len(c) for c in leaf["classes"] + ["weighted avg"])
    lines = [
        f"model: {doc['model_kind']}   samples: {doc['n_samples']}",
        "",
        f"{'class':<{width}}  precision  recall    f1        support",
    ]
    for cls in leaf["classes"]:
        m = leaf["per_class"][cls]
        flag = " *" if m["zero_division"] else ""
        lines.append(
            f"{cls:<{width}}  {m['precision']:<9.4f}  {m['recall']:<8.4f}"
            f"  {m['f1']:<8.4f}  {m['support']}{flag}"
        )
    lines.append("")
    for name in ("macro", "weighted"):
        avg = leaf[name]
        lines.append(
            f"{name + ' avg':<{width}}  {avg['precision']:<9.4f}"
            f"  {avg['recall']:<8.4f}  {avg['f1']:<8.4f}"
        )
    lines.append("")
    lines.append(f"accuracy:          {leaf['accuracy']:.4f}")
    lines.append(f"weighted accuracy: {leaf['weighted_accuracy']:.4f}")
    lines.append("")
    lines.append("level  direct acc  direct w-acc  from-leaf acc  from-leaf w-acc  disagree")
    for row in doc["levels"]:
        d, f = row["direct"], row["from_leaf"]
        lines.append(
            f"{row['level']:<5}  {d['accuracy']:<10.4f}  {d['weighted_accuracy']:<12.4f}"
            f"  {f['accuracy']:<13.4f}  {f['weighted_accuracy']:<15.4f}"
            f"  {row['mode_disagreements']}"
        )
    if leaf["zero_support_classes"]:
        lines.append("")
        lines.append(
            "* zero-division flagged; no support: "
            + ", ".join(leaf["zero_support_classes"])
        )
    return "\n".join(lines) + "\n"


def silhouette_score(
    descriptors, labels: Sequence[str]
) -> tuple[float, dict[str, float]]:
    """Mean silhouette coefficient and per-class means.

    Per sample, a is the mean distance to its own class (excluding itself),
    b is the smallest mean distance to any other class, and the score is
    (b - a) / max(a, b). Samples alone in their class score 0. Distances are
    Euclidean. Values lie in [-1, 1]; high values mean dense, well-separated
    classes and 0 means overlapping ones.
    """
    X = np.asarray(descriptors, dtype=np.float64)
    labels = list(labels)
    if X.ndim != 2 or X.shape[0] == 0:
        raise MetricsError("descriptors must be a non-empty 2-D array")
    if len(labels) != X.shape[0]:
        raise MetricsError(f"{X.shape[0]} descriptors but {len(labels)} labels")
    class_ids = list(dict.fromkeys(labels))
    if len(class_ids) < 2:
        raise MetricsError("silhouette needs at least 2 classes")
    n = X.shape[0]
    if n < 2:
        raise MetricsError("silhouette needs at least 2 samples")

    masks = {c: np.array([lab == c for lab in labels]) for c in class_ids}
    sizes = {c: int(m.sum()) for c, m in masks.items()}

    scores = np.zeros(n)
    for i in range(n):
        dists = np.sqrt(((X - X[i]) ** 2).sum(axis=1))
        own = labels[i]
        if sizes[own] == 1:
            scores[i] = 0.0
            continue
        a = dists[masks[own]].sum() / (sizes[own] - 1)  # excludes self, d=0
        b = min(dists[masks[c]].mean() for c in class_ids if c != own)
        scores[i] = (b - a) / max(a, b)

    per_class = {c: float(scores[masks[c]].mean()) for c in class_ids}
    return float(scores.mean()), per_class
