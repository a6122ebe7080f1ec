"""Hierarchical model: one classifier per internal taxonomy node, chained
conditional probabilities for inference.

The joint probability of a node given an input is the product of the
conditional probabilities along its path from the root, times the root
prior. A node's conditional comes from the classifier of its parent (trained
over that parent's children); single-child nodes contribute a conditional of
exactly 1. A flat baseline model lives here too: one softmax over the
leaves, with meta-class probabilities obtained by summing leaf joints up the
same tree.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .classifiers import (
    ClassifierError,
    KnnClassifier,
    SoftmaxClassifier,
    TrainConfig,
    train_knn,
    train_softmax,
    uniform_classifier,
)
from .dataset import Sample, features_matrix, oversample_balance
from .taxonomy import Taxonomy, TaxonomyError, parse_taxonomy

MODEL_FORMAT_VERSION = 1

MODES = ("direct", "from_leaf")


class ModelFormatError(ValueError):
    """Model file is corrupted, has the wrong version, or mismatched taxonomy."""


@dataclass(frozen=True)
class HierarchicalPrediction:
    """Joint probabilities for every node plus argmax labels per level."""

    joint: dict[str, float]
    per_level_argmax: dict[int, str]
    leaf_argmax: str


@dataclass(eq=False)
class HierarchicalModel:
    """Taxonomy plus one classifier per internal node with >= 2 children."""

    taxonomy: Taxonomy
    node_classifiers: dict[str, SoftmaxClassifier | KnnClassifier]
    feature_dim: int
    root_prior: float = 1.0
    warnings: tuple[str, ...] = ()

    kind = "hierarchical"

    def infer(self, x) -> HierarchicalPrediction:
        return self.infer_batch(np.asarray(x, dtype=np.float64)[None, :])[0]

    def infer_batch(self, X) -> list[HierarchicalPrediction]:
        """Top-down chained inference for a batch of feature vectors."""
        X = _checked_batch(X, self.feature_dim)
        n = X.shape[0]
        joints: dict[str, np.ndarray] = {
            self.taxonomy.root: np.full(n, float(self.root_prior))
        }
        conditionals_cache: dict[str, np.ndarray] = {}
        for nid in self.taxonomy.preorder():
            node = self.taxonomy.nodes[nid]
            if not node.children:
                continue
            if len(node.children) == 1:
                joints[node.children[0]] = joints[nid]
                continue
            probs = self.node_classifiers[nid].predict_proba_batch(X)
            conditionals_cache[nid] = probs
            for i, child in enumerate(node.children):
                joints[child] = joints[nid] * probs[:, i]
        return _assemble_predictions(self.taxonomy, joints, n)

    def conditionals(self, x) -> dict[str, np.ndarray]:
        """Per-node child distributions for one input (diagnostic helper)."""
        x = np.asarray(x, dtype=np.float64)
        out = {}
        for nid, clf in self.node_classifiers.items():
            out[nid] = clf.predict_proba(x)
        return out


@dataclass(eq=False)
class FlatModel:
    """Single softmax/kNN over the leaves; meta-class joints are sums of
    descendant leaf joints, so evaluation at any level works unchanged."""

    taxonomy: Taxonomy
    classifier: SoftmaxClassifier | KnnClassifier
    feature_dim: int
    root_prior: float = 1.0
    warnings: tuple[str, ...] = ()

    kind = "flat"

    def infer(self, x) -> HierarchicalPrediction:
        return self.infer_batch(np.asarray(x, dtype=np.float64)[None, :])[0]

    def infer_batch(self, X) -> list[HierarchicalPrediction]:
        X = _checked_batch(X, self.feature_dim)
        n = X.shape[0]
        probs = self.classifier.predict_proba_batch(X) * float(self.root_prior)
        joints: dict[str, np.ndarray] = {}
        leaf_col = {leaf: i for i, leaf in enumerate(self.taxonomy.leaves)}
        # Bottom-up: leaves take their own mass, internal nodes sum children.
        for nid in reversed(self.taxonomy.preorder()):
            node = self.taxonomy.nodes[nid]
            if node.is_leaf:
                joints[nid] = probs[:, leaf_col[nid]]
            else:
                joints[nid] = np.sum([joints[c] for c in node.children], axis=0)
        return _assemble_predictions(self.taxonomy, joints, n)


Model = HierarchicalModel | FlatModel


def _checked_batch(X, dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ClassifierError("expected a 2-D batch of feature vectors")
    if X.shape[1] != dim:
        raise ClassifierError(
            f"model expects dimension {dim}, got {X.shape[1]}"
        )
    if not np.all(np.isfinite(X)):
        raise ClassifierError("non-finite value in feature batch")
    return X


def _assemble_predictions(
    taxonomy: Taxonomy, joints: dict[str, np.ndarray], n: int
) -> list[HierarchicalPrediction]:
    level_candidates = [
        taxonomy.nodes_at_level(level) for level in range(taxonomy.max_depth + 1)
    ]
    # argmax over document-ordered candidates; np.argmax keeps first maximum,
    # which realises the taxonomy-order tie rule.
    level_winners = []
    for cands in level_candidates:
        stacked = np.stack([joints[c] for c in cands])
        level_winners.append(np.argmax(stacked, axis=0))
    leaf_stack = np.stack([joints[leaf] for leaf in taxonomy.leaves])
    leaf_winners = np.argmax(leaf_stack, axis=0)

    node_order = taxonomy.preorder()
    out = []
    for s in range(n):
        out.append(
            HierarchicalPrediction(
                joint={nid: float(joints[nid][s]) for nid in node_order},
                per_level_argmax={
                    level: level_candidates[level][int(level_winners[level][s])]
                    for level in range(taxonomy.max_depth + 1)
                },
                leaf_argmax=taxonomy.leaves[int(leaf_winners[s])],
            )
        )
    return out


def predict_at_level(model: Model, x, level: int, mode: str = "direct") -> str:
    """Class id predicted at a taxonomy level.

    ``direct`` takes the argmax of the (carried-down) joints at that level;
    ``from_leaf`` maps the argmax leaf up the tree instead. The two can
    disagree: a branch can win on total mass while no single leaf of it does.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    t = model.taxonomy
    if not 0 <= level <= t.max_depth:
        raise TaxonomyError(f"level {level} outside [0, {t.max_depth}]")
    pred = model.infer(x)
    if mode == "direct":
        return pred.per_level_argmax[level]
    return t.label_at_level(pred.leaf_argmax, level)


def _node_seed(base_seed: int, node_index: int) -> int:
    # Distinct, deterministic stream per node.
    return int(np.random.SeedSequence([base_seed, node_index]).generate_state(1)[0])


def train_hierarchical(
    taxonomy: Taxonomy,
    train: Sequence[Sample],
    cfg: TrainConfig,
    classifier: str = "softmax",
    knn_k: int = 3,
    jobs: int = 1,
) -> HierarchicalModel:
    """Train one classifier per internal node with >= 2 children.

    Each node trains on the samples whose leaf label descends from it, with
    the child subtree containing the leaf as the target class, oversampled
    to balance the children. A node where some child has no samples at all
    cannot learn that conditional and falls back to a uniform-output
    classifier, recording a warning. Single-child nodes need no classifier
    (their conditional is exactly 1).

    Node training sets are independent, so ``jobs`` > 1 trains nodes on a
    thread pool; results do not depend on the worker count.
    """
    if classifier not in ("softmax", "knn"):
        raise ClassifierError(f"unknown classifier kind {classifier!r}")
    samples = list(train)
    if not samples:
        raise ClassifierError("empty training set")
    leaf_set = set(taxonomy.leaves)
    for s in samples:
        if s.label not in leaf_set:
            raise TaxonomyError(
                f"sample {s.sample_id!r} label {s.label!r} is not a taxonomy leaf"
            )
    dim = samples[0].features.shape[0]

    # child_of[(leaf, ancestor)] = the ancestor's child on the path to leaf
    child_of: dict[tuple[str, str], str] = {}
    for leaf in taxonomy.leaves:
        path = taxonomy.path_to_root(leaf)
        for below, above in zip(path, path[1:]):
            child_of[(leaf, above)] = below

    members: dict[str, list[Sample]] = {nid: [] for nid in taxonomy.preorder()}
    for s in samples:
        for nid in taxonomy.path_to_root(s.label):
            members[nid].append(s)

    node_classifiers: dict[str, SoftmaxClassifier | KnnClassifier] = {}
    warnings: list[str] = []
    trainable: list[tuple[int, str]] = []
    for node_index, nid in enumerate(taxonomy.preorder()):
        node = taxonomy.nodes[nid]
        if len(node.children) < 2:
            continue
        covered = {child_of[(s.label, nid)] for s in members[nid]}
        missing = [c for c in node.children if c not in covered]
        if missing:
            node_classifiers[nid] = uniform_classifier(node.children, dim)
            warnings.append(
                f"node {nid!r}: no training samples for "
                f"{', '.join(repr(m) for m in missing)}; using uniform fallback"
            )
        else:
            trainable.append((node_index, nid))

    def _train_node(task: tuple[int, str]):
        node_index, nid = task
        target = lambda s: child_of[(s.label, nid)]
        balanced = oversample_balance(members[nid], cfg.seed, key=target)
        X = features_matrix(balanced)
        y = [target(s) for s in balanced]
        if classifier == "softmax":
            seed = _node_seed(cfg.seed, node_index)
            return train_softmax(
                X, y, replace(cfg, seed=seed), class_ids=taxonomy.nodes[nid].children
            )
        return train_knn(X, y, knn_k, class_ids=taxonomy.nodes[nid].children)

    if jobs > 1 and len(trainable) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trained = list(pool.map(_train_node, trainable))
    else:
        trained = [_train_node(task) for task in trainable]
    for (_, nid), clf in zip(trainable, trained):
        node_classifiers[nid] = clf

    return HierarchicalModel(
        taxonomy=taxonomy,
        node_classifiers=node_classifiers,
        feature_dim=dim,
        warnings=tuple(warnings),
    )


def train_flat(
    taxonomy: Taxonomy,
    train: Sequence[Sample],
    cfg: TrainConfig,
    classifier: str = "softmax",
    knn_k: int = 3,
) -> FlatModel:
    """Train the flat baseline: one classifier over all leaves, globally
    oversampled to balance the leaf classes."""
    if classifier not in ("softmax", "knn"):
        raise ClassifierError(f"unknown classifier kind {classifier!r}")
    samples = list(train)
    if not samples:
        raise ClassifierError("empty training set")
    leaf_set = set(taxonomy.leaves)
    for s in samples:
        if s.label not in leaf_set:
            raise TaxonomyError(
                f"sample {s.sample_id!r} label {s.label!r} is not a taxonomy leaf"
            )
    dim = samples[0].features.shape[0]
    present = {s.label for s in samples}
    missing = [leaf for leaf in taxonomy.leaves if leaf not in present]
    warnings: list[str] = []
    if missing:
        clf: SoftmaxClassifier | KnnClassifier = uniform_classifier(
            taxonomy.leaves, dim
        )
        warnings.append(
            f"flat: no training samples for {', '.join(repr(m) for m in missing)}; "
            "using uniform fallback"
        )
    else:
        balanced = oversample_balance(samples, cfg.seed)
        X = features_matrix(balanced)
        y = [s.label for s in balanced]
        if classifier == "softmax":
            clf = train_softmax(X, y, cfg, class_ids=taxonomy.leaves)
        else:
            clf = train_knn(X, y, knn_k, class_ids=taxonomy.leaves)
    return FlatModel(
        taxonomy=taxonomy,
        classifier=clf,
        feature_dim=dim,
        warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# Serialization. Versioned JSON with a taxonomy content hash; numbers keep
# full round-trip precision so a reloaded model reproduces every prediction
# bit-exactly. New classifier types can be registered with a codec.

_CODECS: dict[str, tuple[type, Callable, Callable]] = {}


def register_classifier_codec(
    tag: str, cls: type, encode: Callable[[object], dict], decode: Callable[[dict], object]
) -> None:
    _CODECS[tag] = (cls, encode, decode)


def _encode_classifier(clf) -> dict:
    for tag, (cls, encode, _) in _CODECS.items():
        if type(clf) is cls:
            doc = encode(clf)
            doc["type"] = tag
            return doc
    raise ModelFormatError(f"no codec registered for {type(clf).__name__}")


def _decode_classifier(doc: dict):
    tag = doc.get("type")
    if tag not in _CODECS:
        raise ModelFormatError(f"unknown classifier type tag {tag!r}")
    return _CODECS[tag][2](doc)


register_classifier_codec(
    "softmax",
    SoftmaxClassifier,
    lambda c: {
        "class_ids": list(c.class_ids),
        "weights": c.weights.tolist(),
        "bias": c.bias.tolist(),
    },
    lambda d: SoftmaxClassifier(
        weights=np.array(d["weights"], dtype=np.float64).reshape(
            len(d["class_ids"]), -1
        ),
        bias=np.array(d["bias"], dtype=np.float64),
        class_ids=tuple(d["class_ids"]),
    ),
)

register_classifier_codec(
    "knn",
    KnnClassifier,
    lambda c: {
        "class_ids": list(c.class_ids),
        "k": c.k,
        "features": c.features.tolist(),
        "labels": c.label_idx.tolist(),
    },
    lambda d: KnnClassifier(
        features=np.array(d["features"], dtype=np.float64),
        label_idx=np.array(d["labels"], dtype=np.intp),
        class_ids=tuple(d["class_ids"]),
        k=int(d["k"]),
    ),
)


def model_to_dict(model: Model) -> dict:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "feature_dim": model.feature_dim,
        "root_prior": float(model.root_prior),
        "taxonomy_text": model.taxonomy.serialize(),
        "taxonomy_sha256": model.taxonomy.content_hash(),
        "warnings": list(model.warnings),
    }
    if isinstance(model, HierarchicalModel):
        doc["nodes"] = {
            nid: _encode_classifier(clf)
            for nid, clf in model.node_classifiers.items()
        }
    else:
        doc["leaf_classifier"] = _encode_classifier(model.classifier)
    return doc


def model_from_dict(doc: dict, taxonomy: Taxonomy | None = None) -> Model:
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelFormatError("not a model file")
    if doc["format_version"] != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported format version {doc['format_version']!r}, "
            f"expected {MODEL_FORMAT_VERSION}"
        )
    try:
        embedded = parse_taxonomy(doc["taxonomy_text"])
        stored_hash = doc["taxonomy_sha256"]
        kind = doc["kind"]
        feature_dim = int(doc["feature_dim"])
        root_prior = float(doc["root_prior"])
        warnings = tuple(doc.get("warnings", []))
    except (KeyError, TypeError, TaxonomyError) as exc:
        raise ModelFormatError(f"corrupted model file: {exc}") from exc
    if embedded.content_hash() != stored_hash:
        raise ModelFormatError("corrupted model file: taxonomy hash mismatch")
    if taxonomy is not None and taxonomy.content_hash() != stored_hash:
        raise ModelFormatError(
            "model was saved with a different taxonomy than the one supplied"
        )
    use_taxonomy = taxonomy if taxonomy is not None else embedded
    try:
        if kind == "hierarchical":
            return HierarchicalModel(
                taxonomy=use_taxonomy,
                node_classifiers={
                    nid: _decode_classifier(cdoc)
                    for nid, cdoc in doc["nodes"].items()
                },
                feature_dim=feature_dim,
                root_prior=root_prior,
                warnings=warnings,
            )
        if kind == "flat":
            return FlatModel(
                taxonomy=use_taxonomy,
                classifier=_decode_classifier(doc["leaf_classifier"]),
                feature_dim=feature_dim,
                root_prior=root_prior,
                warnings=warnings,
            )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"corrupted model file: {exc}") from exc
    raise ModelFormatError(f"unknown model kind {kind!r}")


def save_model(model: Model, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_model(path: str, taxonomy: Taxonomy | None = None) -> Model:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: corrupted model file: {exc}") from exc
    return model_from_dict(doc, taxonomy=taxonomy)
