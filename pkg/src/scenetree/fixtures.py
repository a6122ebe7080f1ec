"""Synthetic descriptor datasets whose cluster geometry follows a taxonomy.

Each taxonomy node gets a centre: children scatter around their parent with
a spread that shrinks with depth, so sibling leaves end up closer together
than leaves from different branches. Leaf samples are Gaussian around the
leaf centre and grouped into fixed-size events. This gives an end-to-end
pipeline something realistic to chew on without any image data.
"""

from __future__ import annotations

import numpy as np

from .dataset import Dataset, Sample
from .taxonomy import Taxonomy

DEFAULT_LEVEL_SPREADS = (8.0, 3.0, 1.2)


def taxonomy_centers(
    taxonomy: Taxonomy,
    dim: int,
    seed: int,
    level_spreads: tuple[float, ...] = DEFAULT_LEVEL_SPREADS,
) -> dict[str, np.ndarray]:
    """Centre per node: root at the origin, children offset from the parent
    by a random direction scaled by the spread for their depth. Depths past
    the configured spreads keep halving the last one."""
    rng = np.random.default_rng(seed)
    centers = {taxonomy.root: np.zeros(dim)}
    for nid in taxonomy.preorder():
        node = taxonomy.nodes[nid]
        for child in node.children:
            depth = taxonomy.nodes[child].depth
            if depth - 1 < len(level_spreads):
                spread = level_spreads[depth - 1]
            else:
                spread = level_spreads[-1] * 0.5 ** (depth - len(level_spreads))
            direction = rng.standard_normal(dim)
            direction /= np.linalg.norm(direction)
            centers[child] = centers[nid] + spread * direction
    return centers


def generate_fixture(
    taxonomy: Taxonomy,
    samples_per_leaf: int = 200,
    dim: int = 16,
    event_size: int = 10,
    noise: float = 0.3,
    seed: int = 42,
    level_spreads: tuple[float, ...] = DEFAULT_LEVEL_SPREADS,
) -> Dataset:
    """Gaussian cluster per leaf, grouped into events of ``event_size``."""
    if samples_per_leaf < 1 or dim < 1 or event_size < 1:
        raise ValueError("samples_per_leaf, dim and event_size must be >= 1")
    centers = taxonomy_centers(taxonomy, dim, seed, level_spreads)
    rng = np.random.default_rng(seed)
    samples = []
    for leaf in taxonomy.leaves:
        feats = centers[leaf] + noise * rng.standard_normal((samples_per_leaf, dim))
        for i in range(samples_per_leaf):
            samples.append(
                Sample(
                    sample_id=f"{leaf}-{i:05d}",
                    event_id=f"{leaf}-e{i // event_size:04d}",
                    label=leaf,
                    features=feats[i],
                )
            )
    return Dataset.from_samples(samples)
