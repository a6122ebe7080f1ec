"""Shared generators for the test suite: random taxonomies and models,
fixed-probability classifiers, and an independent chain-rule oracle."""

import numpy as np

from scenetree.classifiers import SoftmaxClassifier
from scenetree.dataset import Dataset, Sample
from scenetree.hierarchy import HierarchicalModel
from scenetree.taxonomy import Taxonomy, parse_taxonomy


def random_taxonomy(rng, max_depth=4, max_nodes=20) -> Taxonomy:
    """Random rooted tree emitted as an indented document and re-parsed."""
    n_nodes = int(rng.integers(1, max_nodes + 1))
    depths = {0: 0}
    children = {0: []}
    for i in range(1, n_nodes):
        candidates = [j for j in range(i) if depths[j] < max_depth]
        parent = int(rng.choice(candidates))
        depths[i] = depths[parent] + 1
        children[parent].append(i)
        children[i] = []
    lines = []

    def emit(j):
        lines.append("  " * depths[j] + f"n{j}")
        for c in children[j]:
            emit(c)

    emit(0)
    return parse_taxonomy("\n".join(lines))


def random_hierarchical_model(rng, taxonomy, dim, root_prior=1.0) -> HierarchicalModel:
    """Random softmax weights at every multi-child internal node."""
    clfs = {}
    for nid in taxonomy.internal_nodes():
        kids = taxonomy.nodes[nid].children
        if len(kids) < 2:
            continue
        clfs[nid] = SoftmaxClassifier(
            weights=rng.normal(size=(len(kids), dim)),
            bias=rng.normal(size=len(kids)),
            class_ids=kids,
        )
    return HierarchicalModel(
        taxonomy=taxonomy,
        node_classifiers=clfs,
        feature_dim=dim,
        root_prior=root_prior,
    )


def fixed_classifier(children, probs, dim=1) -> SoftmaxClassifier:
    """Input-independent classifier emitting exactly ``probs``."""
    probs = np.asarray(probs, dtype=np.float64)
    return SoftmaxClassifier(
        weights=np.zeros((len(children), dim)),
        bias=np.log(probs),
        class_ids=tuple(children),
    )


def oracle_joint(model: HierarchicalModel, x, node_id: str) -> float:
    """Independent path-product: walk parent links from the node to the
    root, multiplying the conditional from each parent's classifier."""
    t = model.taxonomy
    joint = float(model.root_prior)
    path = t.path_to_root(node_id)
    for child, parent in zip(path, path[1:]):
        kids = t.nodes[parent].children
        if len(kids) == 1:
            continue
        probs = model.node_classifiers[parent].predict_proba(np.asarray(x, dtype=np.float64))
        joint *= float(probs[kids.index(child)])
    return joint


def make_samples(labels, events=None, dim=2, rng=None, ids=None):
    """Quick sample list; features are seeded noise unless a generator is given."""
    rng = rng or np.random.default_rng(0)
    events = events or [f"ev{i}" for i in range(len(labels))]
    ids = ids or [f"s{i}" for i in range(len(labels))]
    return [
        Sample(
            sample_id=ids[i],
            event_id=events[i],
            label=labels[i],
            features=rng.normal(size=dim),
        )
        for i in range(len(labels))
    ]


def dataset_of(labels, events, dim=2, rng=None) -> Dataset:
    return Dataset.from_samples(make_samples(labels, events, dim=dim, rng=rng))
