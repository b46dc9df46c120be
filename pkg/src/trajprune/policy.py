"""Epoch-wise pruning policies.

Every policy consumes a score vector (or nothing, for the random baselines)
and emits an EpochPlan: which ids train next epoch and at what gradient
weight. Scores are pure data here; swapping epoch-loss scores for alignment
scores changes no policy logic (the score-substitution contract).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .validation import check_fraction, check_positive_int

POLICIES = ("static_random", "dynamic_random", "infobatch", "seta")
SCORE_SOURCES = ("epoch_loss", "das")
# seta here is a simplified reconstruction, labeled as such in every output.
POLICY_LABELS = {"seta": "seta-simplified"}


@dataclass(frozen=True)
class PolicyConfig:
    policy: str = "infobatch"
    score_source: str = "das"
    r: float = 0.5
    delta: float = 0.875
    seta_alpha: float = 0.9
    seta_k: int = 5
    threshold: str | float = "mean"
    rescale: bool = True

    def __post_init__(self) -> None:
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.score_source not in SCORE_SOURCES:
            raise ValueError(f"unknown score_source {self.score_source!r}")
        if not 0.0 <= self.r < 1.0:
            raise ValueError(f"prune probability r must be in [0, 1), got {self.r}")
        check_fraction(self.delta, "delta")
        if not 0.0 < self.seta_alpha <= 1.0:
            raise ValueError(f"seta_alpha must be in (0, 1], got {self.seta_alpha}")
        check_positive_int(self.seta_k, "seta_k")
        if isinstance(self.threshold, str):
            if self.threshold != "mean" and not self.threshold.startswith("quantile:"):
                raise ValueError(
                    "threshold must be 'mean', 'quantile:Q', or a float,"
                    f" got {self.threshold!r}"
                )
            if self.threshold.startswith("quantile:"):
                q = float(self.threshold.split(":", 1)[1])
                check_fraction(q, "threshold quantile", allow_zero=True)

    @property
    def label(self) -> str:
        return POLICY_LABELS.get(self.policy, self.policy)


@dataclass
class EpochPlan:
    """Kept ids and their gradient weights for one training epoch.

    ``scores_epoch`` is the trajectory epoch the driving scores were computed
    at (None for score-free plans); the harness asserts the loop-order
    contract with it. ``source`` names what drove the plan: "epoch_loss",
    "das", or "none".
    """

    epoch: int
    n_total: int
    kept_ids: np.ndarray
    weights: np.ndarray
    scores_epoch: int | None = None
    source: str = "none"

    def __post_init__(self) -> None:
        self.kept_ids = np.asarray(self.kept_ids, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.kept_ids.size == 0:
            raise ValueError("a plan must keep at least one sample")
        if self.kept_ids.shape != self.weights.shape:
            raise ValueError("kept_ids and weights must align")
        if self.kept_ids.min() < 0 or self.kept_ids.max() >= self.n_total:
            raise ValueError("kept id out of range")
        if np.unique(self.kept_ids).size != self.kept_ids.size:
            raise ValueError("kept_ids must be unique")
        if np.any(self.weights <= 0.0):
            raise ValueError("weights must be positive")

    @property
    def pruned_count(self) -> int:
        return self.n_total - self.kept_ids.size

    @property
    def pruned_fraction(self) -> float:
        return self.pruned_count / self.n_total

    def weight_array(self) -> np.ndarray:
        """Full-length weight vector: plan weight for kept ids, 0 for pruned."""
        w = np.zeros(self.n_total)
        w[self.kept_ids] = self.weights
        return w


def anneal_cutoff(delta: float, total_epochs: int) -> int:
    """Last epoch with pruning enabled; later epochs keep everything."""
    return math.ceil(delta * total_epochs)


def full_keep_plan(epoch: int, n: int, scores_epoch: int | None = None, source: str = "none") -> EpochPlan:
    return EpochPlan(
        epoch=epoch,
        n_total=n,
        kept_ids=np.arange(n, dtype=np.int64),
        weights=np.ones(n),
        scores_epoch=scores_epoch,
        source=source,
    )


def resolve_threshold(scores: np.ndarray, threshold: str | float) -> float:
    if isinstance(threshold, str):
        if threshold == "mean":
            return float(scores.mean())
        if threshold.startswith("quantile:"):
            return float(np.quantile(scores, float(threshold.split(":", 1)[1])))
        raise ValueError(f"unknown threshold spec {threshold!r}")
    return float(threshold)


def _stochastic_prune(
    candidates: np.ndarray, r: float, rescale: bool, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Prune each candidate with probability r; weight kept candidates.

    One uniform is drawn per sample regardless of candidacy so plans with the
    same rng state and the same candidate set coincide across policies.
    """
    n = candidates.size
    u = rng.random(n)
    pruned = candidates & (u < r)
    kept_mask = ~pruned
    weights = np.ones(n)
    if rescale:
        weights[candidates & kept_mask] = 1.0 / (1.0 - r)
    kept_ids = np.flatnonzero(kept_mask)
    return kept_ids, weights[kept_ids]


def infobatch_plan(
    scores: np.ndarray,
    cfg: PolicyConfig,
    epoch: int,
    total_epochs: int,
    rng: np.random.Generator,
    scores_epoch: int | None = None,
    source: str | None = None,
) -> EpochPlan:
    """Mean-threshold pruning with expectation rescaling.

    Samples scoring strictly below the threshold are pruning candidates;
    each is dropped independently with probability r and survivors are
    up-weighted by 1/(1-r). At or above the threshold: kept at weight 1.
    After ceil(delta * total_epochs) epochs, pruning is annealed away.
    """
    scores = _check_scores(scores)
    source = cfg.score_source if source is None else source
    if epoch > anneal_cutoff(cfg.delta, total_epochs):
        return full_keep_plan(epoch, scores.size, scores_epoch, source)
    threshold = resolve_threshold(scores, cfg.threshold)
    candidates = scores < threshold
    kept_ids, weights = _stochastic_prune(candidates, cfg.r, cfg.rescale, rng)
    return EpochPlan(
        epoch=epoch,
        n_total=scores.size,
        kept_ids=kept_ids,
        weights=weights,
        scores_epoch=scores_epoch,
        source=source,
    )


def seta_plan(
    scores: np.ndarray,
    cfg: PolicyConfig,
    epoch: int,
    total_epochs: int,
    rng: np.random.Generator,
    scores_epoch: int | None = None,
    source: str | None = None,
) -> EpochPlan:
    """Simplified sliding-window variant over k score-sorted groups.

    Samples are sorted ascending by score and split into k near-equal groups.
    A window of max(1, round(k * alpha^(epoch-1))) groups anchors at the
    retain-worthy end (high score for das, low loss for epoch_loss). Samples
    outside the window are pruned outright; inside it each sample is pruned
    with probability r, survivors weighted 1/(1-r). Annealing as in
    infobatch_plan. Window length is a pure function of the epoch index.
    """
    scores = _check_scores(scores)
    source = cfg.score_source if source is None else source
    n = scores.size
    if epoch > anneal_cutoff(cfg.delta, total_epochs):
        return full_keep_plan(epoch, n, scores_epoch, source)
    k = min(cfg.seta_k, n)
    width = max(1, int(round(k * cfg.seta_alpha ** (epoch - 1))))
    order = np.argsort(scores, kind="stable")
    groups = np.array_split(order, k)
    window = groups[k - width :] if source == "das" else groups[:width]
    in_window = np.zeros(n, dtype=bool)
    in_window[np.concatenate(window)] = True
    # Outside the window nothing is kept; inside it the shared stochastic
    # pruning applies, so with a full window this is the all-candidates
    # mean-threshold path under the same rng stream.
    kept_ids, weights = _stochastic_prune(in_window, cfg.r, cfg.rescale, rng)
    keep = in_window[kept_ids]
    return EpochPlan(
        epoch=epoch,
        n_total=n,
        kept_ids=kept_ids[keep],
        weights=weights[keep],
        scores_epoch=scores_epoch,
        source=source,
    )


def dynamic_random_plan(n: int, keep_fraction: float, rng: np.random.Generator, epoch: int) -> EpochPlan:
    """Uniform without-replacement re-draw of round(keep_fraction * n) ids."""
    kept = _random_keep_ids(n, keep_fraction, rng)
    return EpochPlan(
        epoch=epoch, n_total=n, kept_ids=kept, weights=np.ones(kept.size), source="none"
    )


def static_random_select(n: int, keep_fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Fixed id set selected once before training and reused every epoch."""
    return _random_keep_ids(n, keep_fraction, rng)


def plan_from_ids(ids: np.ndarray, n: int, epoch: int) -> EpochPlan:
    ids = np.asarray(ids, dtype=np.int64)
    return EpochPlan(epoch=epoch, n_total=n, kept_ids=ids, weights=np.ones(ids.size), source="none")


def _random_keep_ids(n: int, keep_fraction: float, rng: np.random.Generator) -> np.ndarray:
    check_positive_int(n, "n")
    check_fraction(keep_fraction, "keep_fraction")
    m = int(round(keep_fraction * n))
    if m == 0:
        raise ValueError(f"keep_fraction {keep_fraction} keeps no samples out of {n}")
    return np.sort(rng.permutation(n)[:m])


def _check_scores(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise ValueError("scores must be a non-empty 1-D vector")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return scores
