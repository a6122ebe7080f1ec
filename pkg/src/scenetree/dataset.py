"""Descriptor dataset ingestion, event-aware splitting and oversampling.

Samples are grouped into events (contiguous recordings of one scene); the
event is the unit of every split so that no scene leaks across train,
validation and test. All operations here are pure functions of their inputs
and a seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

SPLIT_NAMES = ("train", "validation", "test")

FIXED_COLUMNS = ("sample_id", "event_id", "label", "timestamp")


class DatasetError(ValueError):
    """Malformed dataset file or invalid split/balance request."""


@dataclass(frozen=True, eq=False)
class Sample:
    """One image descriptor: feature vector, leaf label and event id."""

    sample_id: str
    event_id: str
    label: str
    features: np.ndarray
    timestamp: str | None = None


@dataclass(eq=False)
class Dataset:
    samples: list[Sample]
    dimension: int
    events: dict[str, list[int]]

    def __len__(self) -> int:
        return len(self.samples)

    def samples_for_events(self, event_ids: Iterable[str]) -> list[Sample]:
        out = []
        for ev in event_ids:
            out.extend(self.samples[i] for i in self.events[ev])
        return out

    @staticmethod
    def from_samples(samples: Sequence[Sample]) -> "Dataset":
        samples = list(samples)
        if not samples:
            raise DatasetError("dataset has no samples")
        dim = samples[0].features.shape[0]
        events: dict[str, list[int]] = {}
        for i, s in enumerate(samples):
            if s.features.shape != (dim,):
                raise DatasetError(
                    f"sample {s.sample_id!r} has dimension {s.features.shape[0]}, "
                    f"expected {dim}"
                )
            if not np.all(np.isfinite(s.features)):
                raise DatasetError(f"non-finite feature in sample {s.sample_id!r}")
            events.setdefault(s.event_id, []).append(i)
        return Dataset(samples=samples, dimension=dim, events=events)


def features_matrix(samples: Sequence[Sample]) -> np.ndarray:
    return np.stack([s.features for s in samples]).astype(np.float64)


def labels_list(samples: Sequence[Sample]) -> list[str]:
    return [s.label for s in samples]


def load_dataset(path: str) -> Dataset:
    """Load a descriptor CSV.

    Schema: header ``sample_id,event_id,label,timestamp,f0,...,f{D-1}``,
    ``.`` decimal mark, one sample per row. The feature dimension is
    inferred from the header and row order is preserved. Labels and
    timestamps may be empty (labels are validated against a taxonomy only
    where one is bound, e.g. at training time).
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty dataset file") from None
        header = [h.strip() for h in header]
        if tuple(header[: len(FIXED_COLUMNS)]) != FIXED_COLUMNS:
            raise DatasetError(
                f"{path}: header must start with {','.join(FIXED_COLUMNS)}"
            )
        feature_cols = header[len(FIXED_COLUMNS):]
        dim = len(feature_cols)
        expected = [f"f{i}" for i in range(dim)]
        if dim == 0 or feature_cols != expected:
            raise DatasetError(
                f"{path}: feature columns must be f0..f{{D-1}} in order"
            )

        samples: list[Sample] = []
        for rowno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DatasetError(
                    f"{path}: row {rowno} has {len(row)} cells, expected {len(header)}"
                )
            sid, eid, label, ts = (c.strip() for c in row[:4])
            try:
                feats = np.array([float(c) for c in row[4:]], dtype=np.float64)
            except ValueError:
                raise DatasetError(
                    f"{path}: non-numeric feature at row {rowno}"
                ) from None
            if not np.all(np.isfinite(feats)):
                raise DatasetError(f"{path}: non-finite feature at row {rowno}")
            samples.append(
                Sample(
                    sample_id=sid,
                    event_id=eid,
                    label=label,
                    features=feats,
                    timestamp=ts or None,
                )
            )
    if not samples:
        raise DatasetError(f"{path}: empty dataset file")
    return Dataset.from_samples(samples)


def save_dataset(dataset: Dataset, path: str) -> None:
    """Write a dataset back out in the CSV schema used by :func:`load_dataset`."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(FIXED_COLUMNS) + [f"f{i}" for i in range(dataset.dimension)])
        for s in dataset.samples:
            writer.writerow(
                [s.sample_id, s.event_id, s.label, s.timestamp or ""]
                + [repr(float(v)) for v in s.features]
            )


@dataclass(frozen=True)
class SplitAssignment:
    """Disjoint event sets covering a dataset, with achieved image ratios."""

    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]
    seed: int
    achieved_ratios: tuple[float, float, float]

    def events_for(self, split: str) -> tuple[str, ...]:
        if split not in SPLIT_NAMES:
            raise DatasetError(f"unknown split {split!r}")
        return getattr(self, split)

    def as_mapping(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for name in SPLIT_NAMES:
            for ev in getattr(self, name):
                out[ev] = name
        return out


def split_by_events(
    dataset: Dataset,
    ratios: tuple[float, float, float],
    seed: int,
) -> SplitAssignment:
    """Greedy event packing towards the target train/validation/test ratios.

    Events are shuffled by a seeded RNG, then each event goes to the split
    whose image-count deficit against its target is currently largest (ties
    broken in train, validation, test order). Events are indivisible, so the
    achieved ratios only approximate the targets; they are reported in the
    result. Deterministic for a fixed seed.
    """
    if len(ratios) != 3:
        raise DatasetError("exactly three ratios required (train, validation, test)")
    if any(r <= 0 for r in ratios):
        raise DatasetError("all split ratios must be positive")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DatasetError(f"ratios must sum to 1, got {sum(ratios)}")
    event_ids = list(dataset.events)
    if len(event_ids) < 3:
        raise DatasetError(
            f"need at least 3 events to split, dataset has {len(event_ids)}"
        )

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(event_ids))
    total = len(dataset.samples)
    targets = np.array(ratios, dtype=np.float64) * total
    counts = np.zeros(3, dtype=np.int64)
    assigned: tuple[list[str], list[str], list[str]] = ([], [], [])

    for idx in order:
        ev = event_ids[idx]
        deficits = targets - counts
        slot = int(np.argmax(deficits))
        assigned[slot].append(ev)
        counts[slot] += len(dataset.events[ev])

    achieved = tuple(float(c) / total for c in counts)
    return SplitAssignment(
        train=tuple(assigned[0]),
        validation=tuple(assigned[1]),
        test=tuple(assigned[2]),
        seed=seed,
        achieved_ratios=achieved,  # type: ignore[arg-type]
    )


def kfold_by_events(
    dataset: Dataset, k: int, seed: int
) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    """Partition events into k folds by seeded shuffle.

    Returns k (train_events, test_events) pairs; fold i's test set is fold i
    and its train set is everything else. Folds are disjoint and cover all
    events.
    """
    if k < 2:
        raise DatasetError("k must be at least 2")
    event_ids = list(dataset.events)
    if k > len(event_ids):
        raise DatasetError(
            f"k={k} exceeds the number of events ({len(event_ids)})"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(event_ids))
    shuffled = [event_ids[i] for i in order]
    folds = [list(part) for part in np.array_split(np.array(shuffled, dtype=object), k)]
    out = []
    for i in range(k):
        test = tuple(folds[i])
        train = tuple(ev for j in range(k) if j != i for ev in folds[j])
        out.append((train, test))
    return out


def oversample_balance(
    samples: Sequence[Sample],
    seed: int,
    key: Callable[[Sample], str] | None = None,
) -> list[Sample]:
    """Balance classes by duplicating minority-class samples.

    Every class is brought up to the size of the largest class by drawing
    seeded-random duplicates (the same sample objects, so duplicates share
    their original sample_id) from that class's existing samples. All
    originals are retained and the result is shuffled with the same seed.

    ``key`` selects the grouping label and defaults to the sample's leaf
    label; node-level training passes the classification target at that node
    instead, so each node classifier sees balanced children.
    """
    samples = list(samples)
    if not samples:
        raise DatasetError("cannot balance an empty sample list")
    if key is None:
        key = lambda s: s.label
    groups: dict[str, list[Sample]] = {}
    for s in samples:
        label = key(s)
        if not label:
            raise DatasetError(f"sample {s.sample_id!r} has no label")
        groups.setdefault(label, []).append(s)

    rng = np.random.default_rng(seed)
    target = max(len(g) for g in groups.values())
    out = list(samples)
    for label in groups:
        group = groups[label]
        need = target - len(group)
        if need > 0:
            picks = rng.integers(0, len(group), size=need)
            out.extend(group[i] for i in picks)
    perm = rng.permutation(len(out))
    return [out[i] for i in perm]


def save_split(assignment: SplitAssignment, path: str) -> None:
    """Write the event-to-split table as CSV (``event_id,split``)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["event_id", "split"])
        for name in SPLIT_NAMES:
            for ev in assignment.events_for(name):
                writer.writerow([ev, name])


def load_split(path: str) -> dict[str, str]:
    """Read an ``event_id,split`` CSV into a mapping."""
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["event_id", "split"]:
            raise DatasetError(f"{path}: expected header event_id,split")
        for rowno, row in enumerate(reader, start=2):
            if len(row) < 2:
                raise DatasetError(f"{path}: row {rowno} is incomplete")
            ev, split = row[0].strip(), row[1].strip()
            if split not in SPLIT_NAMES:
                raise DatasetError(f"{path}: row {rowno}: unknown split {split!r}")
            if ev in mapping:
                raise DatasetError(f"{path}: row {rowno}: duplicate event {ev!r}")
            mapping[ev] = split
    if not mapping:
        raise DatasetError(f"{path}: no split rows")
    return mapping
