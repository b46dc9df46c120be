"""Pruning-policy plans: thresholds, annealing, weights, window math."""

from __future__ import annotations

import numpy as np
import pytest

from trajprune.policy import (
    EpochPlan,
    PolicyConfig,
    anneal_cutoff,
    dynamic_random_plan,
    full_keep_plan,
    infobatch_plan,
    plan_from_ids,
    resolve_threshold,
    seta_plan,
    static_random_select,
)


def test_mean_threshold_monte_carlo_keep_frequency():
    # Scores [1,1,1,5]: mean 2, so samples 0..2 are candidates and sample 3
    # is always kept at weight 1. With r=0.5 each candidate survives half the
    # time at weight 2.
    scores = np.array([1.0, 1.0, 1.0, 5.0])
    cfg = PolicyConfig(policy="infobatch", r=0.5)
    rng = np.random.default_rng(0)
    trials = 20000
    kept_counts = np.zeros(4)
    for _ in range(trials):
        plan = infobatch_plan(scores, cfg, epoch=1, total_epochs=10, rng=rng)
        kept_counts[plan.kept_ids] += 1
        w = plan.weight_array()
        assert w[3] == 1.0
        assert np.all(np.isin(w[:3], [0.0, 2.0]))
    freq = kept_counts / trials
    assert freq[3] == 1.0
    assert np.all(np.abs(freq[:3] - 0.5) < 0.01)


def test_annealing_boundary_is_exact():
    scores = np.linspace(0.0, 1.0, 40)
    cfg = PolicyConfig(policy="infobatch", r=0.9, delta=0.8)
    assert anneal_cutoff(0.8, 10) == 8
    at_cutoff = infobatch_plan(scores, cfg, epoch=8, total_epochs=10,
                               rng=np.random.default_rng(1))
    past_cutoff = infobatch_plan(scores, cfg, epoch=9, total_epochs=10,
                                 rng=np.random.default_rng(1))
    assert at_cutoff.pruned_count > 0
    assert past_cutoff.pruned_count == 0
    assert np.all(past_cutoff.weights == 1.0)
    # Non-integer product rounds up: ceil(0.875 * 60) = 53.
    assert anneal_cutoff(0.875, 60) == 53


def test_weights_are_exactly_one_or_rescaled():
    scores = np.random.default_rng(2).normal(size=100)
    cfg = PolicyConfig(policy="infobatch", r=0.25)
    plan = infobatch_plan(scores, cfg, epoch=1, total_epochs=10,
                          rng=np.random.default_rng(3))
    assert set(np.unique(plan.weights)) <= {1.0, 1.0 / 0.75}
    cfg_flat = PolicyConfig(policy="infobatch", r=0.25, rescale=False)
    flat = infobatch_plan(scores, cfg_flat, epoch=1, total_epochs=10,
                          rng=np.random.default_rng(3))
    assert np.all(flat.weights == 1.0)
    assert np.array_equal(flat.kept_ids, plan.kept_ids)


def test_r_zero_is_a_no_op():
    scores = np.random.default_rng(4).normal(size=30)
    cfg = PolicyConfig(policy="infobatch", r=0.0)
    plan = infobatch_plan(scores, cfg, epoch=1, total_epochs=10,
                          rng=np.random.default_rng(5))
    assert np.array_equal(plan.kept_ids, np.arange(30))
    assert np.all(plan.weights == 1.0)
    cfg_s = PolicyConfig(policy="seta", r=0.0, seta_alpha=1.0)
    plan_s = seta_plan(scores, cfg_s, epoch=1, total_epochs=10,
                       rng=np.random.default_rng(5))
    assert np.array_equal(plan_s.kept_ids, np.arange(30))


def test_seta_alpha_one_k_one_equals_all_candidate_infobatch():
    # With a single full-width group every sample is a candidate, which is the
    # mean-threshold path with an unreachable threshold under the same rng.
    scores = np.random.default_rng(6).normal(size=50)
    cfg_seta = PolicyConfig(policy="seta", seta_alpha=1.0, seta_k=1, r=0.5)
    cfg_info = PolicyConfig(policy="infobatch", threshold=float("inf"), r=0.5)
    for seed in range(5):
        a = seta_plan(scores, cfg_seta, epoch=3, total_epochs=10,
                      rng=np.random.default_rng(seed))
        b = infobatch_plan(scores, cfg_info, epoch=3, total_epochs=10,
                           rng=np.random.default_rng(seed))
        assert np.array_equal(a.kept_ids, b.kept_ids)
        assert np.array_equal(a.weights, b.weights)


def test_seta_window_anchors_by_score_source():
    # Ten distinct scores, k=5 groups of two. At epoch 5 the width is
    # round(5 * 0.9^4) = 3 groups: das keeps the six highest scores,
    # epoch_loss keeps the six lowest.
    rng_scores = np.random.default_rng(7)
    scores = rng_scores.permutation(10).astype(np.float64)
    cfg = PolicyConfig(policy="seta", r=0.0, seta_alpha=0.9, seta_k=5)
    high = seta_plan(scores, cfg, epoch=5, total_epochs=100,
                     rng=np.random.default_rng(8), source="das")
    low = seta_plan(scores, cfg, epoch=5, total_epochs=100,
                    rng=np.random.default_rng(8), source="epoch_loss")
    assert set(scores[high.kept_ids]) == {4.0, 5.0, 6.0, 7.0, 8.0, 9.0}
    assert set(scores[low.kept_ids]) == {0.0, 1.0, 2.0, 3.0, 4.0, 5.0}


def test_seta_width_shrinks_monotonically():
    scores = np.random.default_rng(9).normal(size=200)
    cfg = PolicyConfig(policy="seta", score_source="das", r=0.0,
                       seta_alpha=0.9, seta_k=5, delta=1.0)
    counts = []
    for epoch in range(1, 201):
        plan = seta_plan(scores, cfg, epoch=epoch, total_epochs=200,
                         rng=np.random.default_rng(10))
        counts.append(plan.kept_ids.size)
    assert counts[0] == 200  # width k at epoch 1
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert counts[-1] == 40  # width floor of one group out of five


def test_seta_k_clamped_to_n():
    scores = np.array([3.0, 1.0, 2.0])
    cfg = PolicyConfig(policy="seta", r=0.0, seta_k=50)
    plan = seta_plan(scores, cfg, epoch=1, total_epochs=10,
                     rng=np.random.default_rng(11))
    assert plan.kept_ids.size == 3


def test_dynamic_random_plan_counts_and_weights():
    plan = dynamic_random_plan(100, 0.62, np.random.default_rng(12), epoch=4)
    assert plan.kept_ids.size == 62
    assert np.all(plan.weights == 1.0)
    assert plan.epoch == 4
    assert plan.source == "none"
    redraw = dynamic_random_plan(100, 0.62, np.random.default_rng(13), epoch=5)
    assert not np.array_equal(plan.kept_ids, redraw.kept_ids)


def test_static_random_select():
    ids = static_random_select(50, 0.5, np.random.default_rng(14))
    assert ids.size == 25
    assert np.array_equal(ids, np.sort(ids))
    again = static_random_select(50, 0.5, np.random.default_rng(14))
    assert np.array_equal(ids, again)
    with pytest.raises(ValueError):
        static_random_select(50, 0.001, np.random.default_rng(15))


def test_resolve_threshold_forms():
    scores = np.array([1.0, 2.0, 3.0, 10.0])
    assert resolve_threshold(scores, "mean") == 4.0
    assert resolve_threshold(scores, "quantile:0.25") == float(np.quantile(scores, 0.25))
    assert resolve_threshold(scores, 7.5) == 7.5
    with pytest.raises(ValueError):
        resolve_threshold(scores, "median")


def test_policy_config_validation():
    with pytest.raises(ValueError):
        PolicyConfig(policy="grandstand")
    with pytest.raises(ValueError):
        PolicyConfig(score_source="margin")
    with pytest.raises(ValueError):
        PolicyConfig(r=1.0)
    with pytest.raises(ValueError):
        PolicyConfig(delta=1.5)
    with pytest.raises(ValueError):
        PolicyConfig(seta_alpha=0.0)
    with pytest.raises(ValueError):
        PolicyConfig(seta_k=0)
    with pytest.raises(ValueError):
        PolicyConfig(threshold="median")
    with pytest.raises(ValueError):
        PolicyConfig(threshold="quantile:-0.2")
    assert PolicyConfig(policy="seta").label == "seta-simplified"
    assert PolicyConfig(policy="infobatch").label == "infobatch"


def test_epoch_plan_validation():
    with pytest.raises(ValueError):
        EpochPlan(epoch=1, n_total=4, kept_ids=np.array([]), weights=np.array([]))
    with pytest.raises(ValueError):
        EpochPlan(epoch=1, n_total=4, kept_ids=np.array([0, 1]), weights=np.array([1.0]))
    with pytest.raises(ValueError):
        EpochPlan(epoch=1, n_total=4, kept_ids=np.array([0, 4]), weights=np.ones(2))
    with pytest.raises(ValueError):
        EpochPlan(epoch=1, n_total=4, kept_ids=np.array([1, 1]), weights=np.ones(2))
    with pytest.raises(ValueError):
        EpochPlan(epoch=1, n_total=4, kept_ids=np.array([0, 1]), weights=np.array([1.0, 0.0]))


def test_weight_array_and_fractions():
    plan = EpochPlan(epoch=2, n_total=5, kept_ids=np.array([1, 3]),
                     weights=np.array([2.0, 1.0]), scores_epoch=1, source="das")
    assert np.array_equal(plan.weight_array(), np.array([0.0, 2.0, 0.0, 1.0, 0.0]))
    assert plan.pruned_count == 3
    assert plan.pruned_fraction == 0.6
    full = full_keep_plan(epoch=7, n=3)
    assert np.array_equal(full.kept_ids, np.arange(3))
    assert np.all(full.weights == 1.0)
    sub = plan_from_ids(np.array([2, 0]), n=4, epoch=1)
    assert np.array_equal(np.sort(sub.kept_ids), np.array([0, 2]))


def test_nonfinite_scores_rejected():
    cfg = PolicyConfig(policy="infobatch")
    with pytest.raises(ValueError):
        infobatch_plan(np.array([1.0, np.nan]), cfg, epoch=1, total_epochs=10,
                       rng=np.random.default_rng(16))
    with pytest.raises(ValueError):
        seta_plan(np.zeros((2, 2)), cfg, epoch=1, total_epochs=10,
                  rng=np.random.default_rng(17))
