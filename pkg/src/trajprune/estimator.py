"""Classifier trained under an epoch-wise pruning policy.

``PrunedClassifier`` follows sklearn conventions (constructor params stored
verbatim, ``fit``/``predict``/``get_params``, learned state in trailing
underscore attributes) and owns the training loop:

    for each epoch: train on the current plan's kept ids with plan weights,
    record per-sample losses (carry-forward for pruned ids), record the
    reference mean loss, score trajectories, then build the next plan.

Scores driving the next plan therefore always include the just-finished
epoch's losses and the end-of-epoch model state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .alignment import CORRELATION_KINDS, AlignmentScores, alignment_scores
from .nnet import build_model, evaluate_accuracy, per_sample_losses, predict_labels, sgd_epoch, softmax
from .policy import (
    EpochPlan,
    PolicyConfig,
    anneal_cutoff,
    dynamic_random_plan,
    full_keep_plan,
    infobatch_plan,
    plan_from_ids,
    seta_plan,
    static_random_select,
)
from .trajectory import ReferenceTrajectory, TrajectoryBank
from .validation import check_features, check_labels, check_positive_int

TRAJ_FILL_MODES = ("carry_forward", "reevaluate")


@dataclass
class EpochSnapshot:
    """Per-epoch state handed to the ``on_epoch`` callback."""

    epoch: int
    plan: EpochPlan
    next_plan: EpochPlan | None
    model: object
    bank: TrajectoryBank
    ref_traj: ReferenceTrajectory | None
    latest_losses: np.ndarray
    alignment: AlignmentScores | None
    test_accuracy: float | None
    consumed: int
    terminal: bool
    lr: float


class PrunedClassifier(BaseEstimator, ClassifierMixin):
    """Softmax classifier (linear or one-hidden-layer MLP) with dynamic pruning.

    Parameters mirror the run-config vocabulary: ``policy`` in
    {static_random, dynamic_random, infobatch, seta}, ``score_source`` in
    {epoch_loss, das}, ``r`` the per-candidate prune probability, ``delta``
    the annealing fraction, ``window``/``min_window``/``correlation``/
    ``traj_fill`` the trajectory-scoring knobs. ``hidden_width=None`` selects
    the linear model. ``keep_fraction`` only applies to the random baselines.
    """

    def __init__(
        self,
        policy: str = "infobatch",
        score_source: str = "das",
        r: float = 0.5,
        delta: float = 0.875,
        threshold: str | float = "mean",
        rescale: bool = True,
        seta_alpha: float = 0.9,
        seta_k: int = 5,
        keep_fraction: float | None = None,
        window: int = 25,
        min_window: int = 2,
        correlation: str = "pearson",
        traj_fill: str = "carry_forward",
        hidden_width: int | None = None,
        lr: float = 0.012,
        batch_size: int = 128,
        epochs: int = 60,
        lr_decay_every: int | None = 1,
        lr_decay_factor: float = 0.95,
        n_classes: int | None = None,
        seed: int = 0,
        policy_seed: int = 0,
    ):
        self.policy = policy
        self.score_source = score_source
        self.r = r
        self.delta = delta
        self.threshold = threshold
        self.rescale = rescale
        self.seta_alpha = seta_alpha
        self.seta_k = seta_k
        self.keep_fraction = keep_fraction
        self.window = window
        self.min_window = min_window
        self.correlation = correlation
        self.traj_fill = traj_fill
        self.hidden_width = hidden_width
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.lr_decay_every = lr_decay_every
        self.lr_decay_factor = lr_decay_factor
        self.n_classes = n_classes
        self.seed = seed
        self.policy_seed = policy_seed

    # ------------------------------------------------------------------ fit

    def fit(
        self,
        X,
        y,
        reference: tuple | None = None,
        eval_set: tuple | None = None,
        budget: int | None = None,
        on_epoch: Callable[[EpochSnapshot], None] | None = None,
    ) -> "PrunedClassifier":
        """Train on (X, y) under the configured pruning policy.

        reference: (X_ref, y_ref) powering trajectory-alignment scores;
            required when score_source is "das".
        eval_set: (X_eval, y_eval) evaluated once per epoch.
        budget: max cumulative trained-sample count; the loop stops within
            one epoch of exhausting it.
        on_epoch: callback receiving an EpochSnapshot after every epoch.
        """
        cfg = self._policy_config()
        X = check_features(X, "X")
        n = X.shape[0]
        y = check_labels(y, n, None, "y")
        if self.traj_fill not in TRAJ_FILL_MODES:
            raise ValueError(f"traj_fill must be one of {TRAJ_FILL_MODES}")
        if self.correlation not in CORRELATION_KINDS:
            raise ValueError(f"correlation must be one of {CORRELATION_KINDS}")
        check_positive_int(self.window, "window")
        check_positive_int(self.min_window, "min_window")
        check_positive_int(self.batch_size, "batch_size")
        check_positive_int(self.epochs, "epochs")
        if budget is not None:
            check_positive_int(budget, "budget")

        X_ref = y_ref = X_eval = y_eval = None
        if reference is not None:
            X_ref = check_features(reference[0], "X_ref")
            y_ref = check_labels(reference[1], X_ref.shape[0], None, "y_ref")
        if eval_set is not None:
            X_eval = check_features(eval_set[0], "X_eval")
            y_eval = check_labels(eval_set[1], X_eval.shape[0], None, "y_eval")
        if cfg.policy in ("infobatch", "seta") and cfg.score_source == "das" and reference is None:
            raise ValueError("score_source 'das' requires a reference set")

        c_seen = [int(y.max()) + 1]
        if y_ref is not None:
            c_seen.append(int(y_ref.max()) + 1)
        if y_eval is not None:
            c_seen.append(int(y_eval.max()) + 1)
        num_classes = self.n_classes if self.n_classes is not None else max(c_seen)
        if max(c_seen) > num_classes:
            raise ValueError("labels exceed n_classes")

        # Separate streams so policy draws never perturb init or shuffling.
        init_rng = np.random.default_rng(np.random.SeedSequence([int(self.seed), 0]))
        shuffle_rng = np.random.default_rng(np.random.SeedSequence([int(self.seed), 1]))
        policy_rng = np.random.default_rng(
            np.random.SeedSequence([int(self.seed), int(self.policy_seed), 2])
        )
        self.model_ = build_model(X.shape[1], num_classes, self.hidden_width, init_rng)
        self.classes_ = np.arange(num_classes)
        self.n_features_in_ = X.shape[1]
        self.bank_ = TrajectoryBank(n, self.window)
        self.ref_traj_ = ReferenceTrajectory(self.window) if reference is not None else None
        self.n_train_ = n
        self.history_ = []
        self.consumed_ = 0
        self.static_ids_ = None
        if cfg.policy == "static_random":
            self.static_ids_ = static_random_select(n, self._keep_fraction(), policy_rng)

        # No scores exist before the first epoch, so every policy starts on
        # the full dataset; this also seeds carry-forward for every sample.
        plan = full_keep_plan(1, n)
        for epoch in range(1, self.epochs + 1):
            self._check_plan_invariants(plan, epoch, cfg, n)
            lr_now = self._lr_at(epoch)
            w_full = plan.weight_array()
            visit_losses = sgd_epoch(
                self.model_, X, y, w_full, plan.kept_ids, self.batch_size,
                lr_now, shuffle_rng, epoch=epoch,
            )
            self.consumed_ += int(plan.kept_ids.size)

            observed = ~np.isnan(visit_losses)
            values = visit_losses
            if self.traj_fill == "reevaluate" and not observed.all():
                missing = np.flatnonzero(~observed)
                values = visit_losses.copy()
                values[missing] = per_sample_losses(self.model_, X[missing], y[missing])
                observed = np.ones(n, dtype=bool)
            self.bank_.record_epoch(epoch, values, observed)

            if self.ref_traj_ is not None:
                ref_losses = per_sample_losses(self.model_, X_ref, y_ref)
                self.ref_traj_.push(float(ref_losses.mean()))

            align = None
            if self.ref_traj_ is not None and self.bank_.length >= self.min_window:
                align = alignment_scores(self.bank_, self.ref_traj_, self.correlation)

            test_acc = None
            if eval_set is not None:
                test_acc = evaluate_accuracy(self.model_, X_eval, y_eval)

            terminal = epoch == self.epochs or (budget is not None and self.consumed_ >= budget)
            next_plan = None
            if not terminal:
                next_plan = self._build_plan(epoch + 1, cfg, n, align, policy_rng)

            latest = self.bank_.latest()
            self.history_.append(
                {
                    "epoch": epoch,
                    "n_kept": int(plan.kept_ids.size),
                    "pruned_fraction": plan.pruned_fraction,
                    "source": plan.source,
                    "mean_visit_loss": float(np.nanmean(visit_losses)),
                    "mean_alignment": None if align is None else float(align.scores.mean()),
                    "test_accuracy": test_acc,
                    "consumed": self.consumed_,
                    "terminal": terminal,
                }
            )
            if on_epoch is not None:
                on_epoch(
                    EpochSnapshot(
                        epoch=epoch,
                        plan=plan,
                        next_plan=next_plan,
                        model=self.model_,
                        bank=self.bank_,
                        ref_traj=self.ref_traj_,
                        latest_losses=latest,
                        alignment=align,
                        test_accuracy=test_acc,
                        consumed=self.consumed_,
                        terminal=terminal,
                        lr=lr_now,
                    )
                )
            if terminal:
                self.terminal_epoch_ = epoch
                break
            plan = next_plan
        return self

    # ------------------------------------------------------------- inference

    def predict(self, X) -> np.ndarray:
        self._require_fitted()
        return self.classes_[predict_labels(self.model_, check_features(X, "X"))]

    def predict_proba(self, X) -> np.ndarray:
        self._require_fitted()
        return softmax(self.model_.logits(check_features(X, "X")))

    # -------------------------------------------------------------- internals

    def _require_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise RuntimeError("this PrunedClassifier instance is not fitted yet")

    def _policy_config(self) -> PolicyConfig:
        return PolicyConfig(
            policy=self.policy,
            score_source=self.score_source,
            r=self.r,
            delta=self.delta,
            seta_alpha=self.seta_alpha,
            seta_k=self.seta_k,
            threshold=self.threshold,
            rescale=self.rescale,
        )

    def _keep_fraction(self) -> float:
        return 1.0 if self.keep_fraction is None else float(self.keep_fraction)

    def _lr_at(self, epoch: int) -> float:
        if not self.lr_decay_every:
            return self.lr
        return self.lr * self.lr_decay_factor ** ((epoch - 1) // self.lr_decay_every)

    def _build_plan(
        self,
        epoch: int,
        cfg: PolicyConfig,
        n: int,
        align: AlignmentScores | None,
        policy_rng: np.random.Generator,
    ) -> EpochPlan:
        if cfg.policy == "static_random":
            return plan_from_ids(self.static_ids_, n, epoch)
        if cfg.policy == "dynamic_random":
            return dynamic_random_plan(n, self._keep_fraction(), policy_rng, epoch)
        # Warm-up rule: alignment scores are only valid once trajectories
        # reach min_window entries; fall back to epoch-loss ranking before.
        if cfg.score_source == "das" and align is not None:
            scores, source = align.scores, "das"
        else:
            scores, source = self.bank_.latest(), "epoch_loss"
        scores_epoch = self.bank_.epochs_recorded
        if cfg.policy == "infobatch":
            return infobatch_plan(
                scores, cfg, epoch, self.epochs, policy_rng,
                scores_epoch=scores_epoch, source=source,
            )
        return seta_plan(
            scores, cfg, epoch, self.epochs, policy_rng,
            scores_epoch=scores_epoch, source=source,
        )

    def _check_plan_invariants(self, plan: EpochPlan, epoch: int, cfg: PolicyConfig, n: int) -> None:
        """Always-on run assertions: weight dichotomy, annealing, loop order."""
        if plan.epoch != epoch:
            raise RuntimeError(f"plan epoch {plan.epoch} executed at epoch {epoch}")
        allowed = {1.0}
        if cfg.policy in ("infobatch", "seta") and cfg.rescale and cfg.r > 0.0:
            allowed.add(1.0 / (1.0 - cfg.r))
        bad = set(np.unique(plan.weights)) - allowed
        if bad:
            raise RuntimeError(f"plan weights outside {sorted(allowed)}: {sorted(bad)}")
        if (
            cfg.policy in ("infobatch", "seta")
            and epoch > anneal_cutoff(cfg.delta, self.epochs)
            and (plan.kept_ids.size != n or not np.all(plan.weights == 1.0))
        ):
            raise RuntimeError(f"annealed epoch {epoch} must keep everything at weight 1")
        if plan.source in ("epoch_loss", "das") and plan.scores_epoch != epoch - 1:
            raise RuntimeError(
                f"plan for epoch {epoch} built from scores of epoch {plan.scores_epoch}"
            )
