"""Datasets: synthetic Gaussian blobs, CSV ingestion, reference carving."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .validation import check_features, check_fraction, check_labels, check_positive_int

# Tuned so a linear softmax trained on clean labels lands near 0.9 test
# accuracy at the default blob geometry (n=2000, d=32, C=10).
DEFAULT_CLUSTER_STD = 1.25


@dataclass(frozen=True)
class Sample:
    """One record. ``is_flipped`` compares the observed label to the truth."""

    id: int
    features: np.ndarray
    noisy_label: int
    true_label: int

    @property
    def is_flipped(self) -> bool:
        return self.noisy_label != self.true_label


@dataclass
class Dataset:
    """Array-backed dataset. Ids are implicit positions 0..n-1.

    ``origin`` tracks each row's index in the dataset it was carved from so
    split disjointness stays checkable after re-indexing.
    """

    features: np.ndarray
    noisy_labels: np.ndarray
    true_labels: np.ndarray
    num_classes: int
    split_tag: str = "train"
    origin: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.features = check_features(self.features, "features")
        n = self.features.shape[0]
        self.noisy_labels = check_labels(self.noisy_labels, n, self.num_classes, "noisy_labels")
        self.true_labels = check_labels(self.true_labels, n, self.num_classes, "true_labels")
        check_positive_int(self.num_classes, "num_classes")
        if self.origin is None:
            self.origin = np.arange(n, dtype=np.int64)
        else:
            self.origin = np.asarray(self.origin, dtype=np.int64)
            if self.origin.shape != (n,):
                raise ValueError("origin must have one entry per row")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def is_flipped(self) -> np.ndarray:
        return self.noisy_labels != self.true_labels

    @property
    def noise_rate(self) -> float:
        return float(np.mean(self.is_flipped))

    def sample(self, i: int) -> Sample:
        if not 0 <= i < self.n:
            raise IndexError(f"sample id {i} out of range for dataset of size {self.n}")
        return Sample(
            id=i,
            features=self.features[i],
            noisy_label=int(self.noisy_labels[i]),
            true_label=int(self.true_labels[i]),
        )

    def subset(self, indices: np.ndarray, split_tag: str | None = None) -> "Dataset":
        """New re-indexed dataset from the given row positions."""
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size == 0:
            raise ValueError("subset indices must be non-empty")
        if indices.min() < 0 or indices.max() >= self.n:
            raise ValueError("subset indices out of range")
        if np.unique(indices).size != indices.size:
            raise ValueError("subset indices must be unique")
        return Dataset(
            features=self.features[indices],
            noisy_labels=self.noisy_labels[indices].copy(),
            true_labels=self.true_labels[indices].copy(),
            num_classes=self.num_classes,
            split_tag=split_tag if split_tag is not None else self.split_tag,
            origin=self.origin[indices].copy(),
        )

    def with_noisy_labels(self, noisy_labels: np.ndarray) -> "Dataset":
        return replace(self, noisy_labels=np.asarray(noisy_labels, dtype=np.int64).copy())


def make_blobs(
    n: int,
    dim: int = 32,
    num_classes: int = 10,
    cluster_std: float = DEFAULT_CLUSTER_STD,
    seed: int = 0,
    test_n: int | None = None,
) -> tuple[Dataset, Dataset]:
    """Balanced Gaussian mixture train/test pair drawn from one seed.

    Class centers are standard normal; both splits share them. Labels start
    clean (noisy == true). ``test_n`` defaults to n // 4.
    """
    n = check_positive_int(n, "n")
    dim = check_positive_int(dim, "dim")
    num_classes = check_positive_int(num_classes, "num_classes")
    if n < num_classes:
        raise ValueError("need at least one sample per class")
    if cluster_std <= 0:
        raise ValueError("cluster_std must be positive")
    test_n = n // 4 if test_n is None else check_positive_int(test_n, "test_n")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    centers = rng.normal(0.0, 1.0, size=(num_classes, dim))

    def draw(count: int, tag: str) -> Dataset:
        # Balanced counts: the first count % C classes get one extra sample.
        base, extra = divmod(count, num_classes)
        labels = np.concatenate(
            [np.full(base + (1 if c < extra else 0), c, dtype=np.int64) for c in range(num_classes)]
        )
        points = centers[labels] + cluster_std * rng.normal(0.0, 1.0, size=(count, dim))
        return Dataset(
            features=points,
            noisy_labels=labels.copy(),
            true_labels=labels.copy(),
            num_classes=num_classes,
            split_tag=tag,
        )

    return draw(n, "train"), draw(test_n, "test")


def load_csv(path: str | Path, num_classes: int | None = None, split_tag: str = "train") -> Dataset:
    """Read ``id,label,f0,f1,...`` rows; a non-numeric first row is a header."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ValueError(f"{path} is empty")
    try:
        float(rows[0][1])
    except (ValueError, IndexError):
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path} has a header but no data rows")
    ids = np.array([int(float(r[0])) for r in rows], dtype=np.int64)
    labels = np.array([int(float(r[1])) for r in rows], dtype=np.int64)
    feats = np.array([[float(v) for v in r[2:]] for r in rows], dtype=np.float64)
    if feats.shape[1] == 0:
        raise ValueError(f"{path} rows carry no feature columns")
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    return Dataset(
        features=feats,
        noisy_labels=labels.copy(),
        true_labels=labels.copy(),
        num_classes=num_classes,
        split_tag=split_tag,
        origin=ids,
    )


@dataclass(frozen=True)
class ReferenceSpec:
    """How to carve the reference split used for trajectory alignment.

    kind:
        held_out_clean    random subset with true labels restored
        pseudo_small_loss probe-model small-loss subset, noisy labels kept
        noisy_random      random subset, noisy labels kept
        reference_noise   held_out_clean with ``rate`` of labels re-flipped
    """

    kind: str = "held_out_clean"
    fraction: float = 0.1
    probe_epochs: int = 5
    rate: float = 0.0

    KINDS = ("held_out_clean", "pseudo_small_loss", "noisy_random", "reference_noise")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown reference kind {self.kind!r}")
        check_fraction(self.fraction, "reference fraction", allow_one=False)
        check_positive_int(self.probe_epochs, "probe_epochs")
        check_fraction(self.rate, "reference_noise rate", allow_zero=True, allow_one=False)


def carve_reference(
    dataset: Dataset,
    spec: ReferenceSpec,
    seed: int = 0,
    probe_loss_fn=None,
) -> tuple[Dataset, Dataset]:
    """Split ``dataset`` into (train, reference), both re-indexed.

    ``probe_loss_fn(dataset, probe_epochs, seed) -> per-sample losses`` is
    injected by the harness for pseudo_small_loss; a linear-probe default is
    used when omitted.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    m = int(round(spec.fraction * dataset.n))
    if m == 0:
        raise ValueError("reference fraction selects no samples")
    if m >= dataset.n:
        raise ValueError("reference fraction would consume the whole training set")

    if spec.kind == "pseudo_small_loss":
        if probe_loss_fn is None:
            probe_loss_fn = _default_probe_losses
        losses = np.asarray(probe_loss_fn(dataset, spec.probe_epochs, seed), dtype=np.float64)
        if losses.shape != (dataset.n,):
            raise ValueError("probe losses must align with the dataset")
        ref_idx = np.argsort(losses, kind="stable")[:m]
    else:
        ref_idx = rng.permutation(dataset.n)[:m]
    ref_idx = np.sort(ref_idx)
    train_idx = np.setdiff1d(np.arange(dataset.n), ref_idx, assume_unique=True)

    train = dataset.subset(train_idx, "train")
    reference = dataset.subset(ref_idx, "reference")

    if spec.kind in ("held_out_clean", "reference_noise"):
        reference = reference.with_noisy_labels(reference.true_labels)
    if spec.kind == "reference_noise" and spec.rate > 0.0:
        k = int(round(spec.rate * reference.n))
        flip_idx = rng.permutation(reference.n)[:k]
        labels = reference.noisy_labels.copy()
        draw = rng.integers(0, reference.num_classes - 1, size=k)
        labels[flip_idx] = draw + (draw >= labels[flip_idx])
        reference = reference.with_noisy_labels(labels)
    return train, reference


def _default_probe_losses(dataset: Dataset, probe_epochs: int, seed: int) -> np.ndarray:
    """Linear softmax probe trained on the noisy labels; end-of-run losses."""
    from .nnet import build_model, per_sample_losses, sgd_epoch

    init_rng, shuffle_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence([seed, 7]).spawn(2)
    )
    model = build_model(dataset.dim, dataset.num_classes, None, init_rng)
    ids = np.arange(dataset.n)
    weights = np.ones(dataset.n)
    for epoch in range(1, probe_epochs + 1):
        sgd_epoch(
            model, dataset.features, dataset.noisy_labels, weights, ids,
            batch_size=64, lr=0.1, rng=shuffle_rng, epoch=epoch,
        )
    return per_sample_losses(model, dataset.features, dataset.noisy_labels)
