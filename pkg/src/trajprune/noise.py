"""Label-noise injection. All injectors flip exact counts, seeded.

Only ``noisy_labels`` in the returned dataset differs from the input;
features and true labels are never touched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset

KINDS = ("none", "symmetric_consecutive", "pairflip", "uniform_symmetric", "asymmetric_superclass")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"
    rate: float = 0.0
    superclass_group_size: int = 2
    superclass_map: dict | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"noise rate must be in [0, 1), got {self.rate}")
        if self.kind != "none" and self.rate == 0.0:
            # rate 0 is legal; it just flips nothing
            pass
        if self.superclass_group_size < 2:
            raise ValueError("superclass groups need at least 2 members")


def consecutive_superclass_map(num_classes: int, group_size: int = 2) -> dict[int, int]:
    """Assign consecutive class indices to groups of ``group_size``.

    A trailing singleton is merged into the previous group so every group
    keeps at least two members.
    """
    if num_classes < 2:
        raise ValueError("superclass grouping needs at least 2 classes")
    if group_size < 2:
        raise ValueError("group_size must be >= 2")
    mapping = {c: c // group_size for c in range(num_classes)}
    last_group = mapping[num_classes - 1]
    if sum(1 for g in mapping.values() if g == last_group) < 2:
        for c in range(num_classes):
            if mapping[c] == last_group:
                mapping[c] = last_group - 1
    return mapping


def _flip_count(rate: float, count: int) -> int:
    return int(round(rate * count))


def _require_rate(rate: float) -> None:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"noise rate must be in [0, 1), got {rate}")


def inject_symmetric_consecutive(dataset: Dataset, rate: float, seed: int) -> Dataset:
    """Flip round(rate * n_c) samples of each class c to class (c+1) mod C."""
    _require_rate(rate)
    if rate > 0.0 and dataset.num_classes < 2:
        raise ValueError("cannot flip labels with fewer than 2 classes")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    labels = dataset.noisy_labels.copy()
    for c in range(dataset.num_classes):
        members = np.flatnonzero(dataset.noisy_labels == c)
        k = _flip_count(rate, members.size)
        chosen = rng.permutation(members)[:k]
        labels[chosen] = (c + 1) % dataset.num_classes
    return dataset.with_noisy_labels(labels)


def inject_pairflip(dataset: Dataset, rate: float, seed: int) -> Dataset:
    """Benchmark-convention alias: each class flips to its consecutive pair."""
    return inject_symmetric_consecutive(dataset, rate, seed)


def inject_uniform_symmetric(dataset: Dataset, rate: float, seed: int) -> Dataset:
    """Flip round(rate * n) samples to a uniformly random *other* class."""
    _require_rate(rate)
    if rate > 0.0 and dataset.num_classes < 2:
        raise ValueError("cannot flip labels with fewer than 2 classes")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    k = _flip_count(rate, dataset.n)
    chosen = rng.permutation(dataset.n)[:k]
    labels = dataset.noisy_labels.copy()
    # Uniform over the C-1 other classes: draw in [0, C-1) and skip the
    # current label by shifting draws at or above it.
    draw = rng.integers(0, dataset.num_classes - 1, size=k)
    labels[chosen] = draw + (draw >= labels[chosen])
    return dataset.with_noisy_labels(labels)


def inject_asymmetric_superclass(
    dataset: Dataset, rate: float, seed: int, superclass_map: dict | None = None
) -> Dataset:
    """Flip round(rate * n) samples within their superclass group."""
    _require_rate(rate)
    if superclass_map is None:
        superclass_map = consecutive_superclass_map(dataset.num_classes)
    _validate_superclass_map(superclass_map, dataset.num_classes)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    k = _flip_count(rate, dataset.n)
    chosen = rng.permutation(dataset.n)[:k]
    labels = dataset.noisy_labels.copy()
    members: dict[int, list[int]] = {}
    for c, g in sorted(superclass_map.items()):
        members.setdefault(g, []).append(c)
    groups = {g: np.array(cs, dtype=np.int64) for g, cs in members.items()}
    for i in chosen:
        current = labels[i]
        peers = groups[superclass_map[int(current)]]
        others = peers[peers != current]
        labels[i] = others[rng.integers(0, others.size)]
    return dataset.with_noisy_labels(labels)


def _validate_superclass_map(mapping: dict, num_classes: int) -> None:
    if set(mapping.keys()) != set(range(num_classes)):
        raise ValueError("superclass_map must cover every class exactly once")
    sizes: dict[int, int] = {}
    for g in mapping.values():
        sizes[g] = sizes.get(g, 0) + 1
    small = [g for g, s in sizes.items() if s < 2]
    if small:
        raise ValueError(f"superclass groups {small} have fewer than 2 members")


def apply_noise(dataset: Dataset, spec: NoiseSpec, seed: int) -> Dataset:
    if spec.kind == "none" or spec.rate == 0.0:
        return dataset.with_noisy_labels(dataset.noisy_labels)
    if spec.kind == "symmetric_consecutive":
        return inject_symmetric_consecutive(dataset, spec.rate, seed)
    if spec.kind == "pairflip":
        return inject_pairflip(dataset, spec.rate, seed)
    if spec.kind == "uniform_symmetric":
        return inject_uniform_symmetric(dataset, spec.rate, seed)
    if spec.kind == "asymmetric_superclass":
        mapping = spec.superclass_map
        if mapping is None:
            mapping = consecutive_superclass_map(dataset.num_classes, spec.superclass_group_size)
        return inject_asymmetric_superclass(dataset, spec.rate, seed, mapping)
    raise ValueError(f"unknown noise kind {spec.kind!r}")
