"""Aggregation, gap tables, and the hard-vs-noisy trajectory export."""

from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from trajprune.harness import config_from_dict, run_single
from trajprune.report import (
    aggregate_runs,
    build_gap_table,
    find_dumped_run,
    hard_vs_noisy_export,
    load_summaries,
    write_aggregate,
    write_gap_table,
    write_hard_vs_noisy,
)


def _write_summary(dirpath, run_id, *, policy="infobatch", score_source="das",
                   noise_kind="uniform_symmetric", noise_rate=0.4,
                   target_prune_ratio=0.5, status="ok", final=None):
    doc = {
        "run_id": run_id,
        "seed": 0,
        "status": status,
        "error": None if status == "ok" else "DivergenceError: boom",
        "policy": policy,
        "score_source": score_source,
        "noise_kind": noise_kind,
        "noise_rate": noise_rate,
        "target_prune_ratio": target_prune_ratio,
        "final": final,
    }
    (dirpath / f"{run_id}.summary.json").write_text(json.dumps(doc))


def _final(epoch, acc, retained, pruned, mean_das, consumed):
    return {
        "epoch": epoch,
        "policy": "infobatch",
        "score_source": "das",
        "test_acc_true_labels": acc,
        "retained_noise_ratio": retained,
        "pruned_fraction": pruned,
        "mean_das": mean_das,
        "consumed_forward_passes": consumed,
        "terminal": True,
    }


def test_aggregate_recomputes_mean_and_sample_std(tmp_path):
    _write_summary(tmp_path, "a_seed0", final=_final(10, 0.8, 0.3, 0.4, 0.5, 1000))
    _write_summary(tmp_path, "a_seed1", final=_final(12, 0.9, 0.2, 0.5, None, 1200))
    _write_summary(tmp_path, "a_seed2", status="failed")
    _write_summary(tmp_path, "b_seed0", policy="dynamic_random", score_source="epoch_loss",
                   target_prune_ratio=0.0, final=_final(12, 0.95, 0.4, 0.0, None, 2000))
    with (tmp_path / "a_seed0.timing.jsonl").open("w") as fh:
        fh.write(json.dumps({"epoch": 1, "wall_ms": 5.0}) + "\n")
        fh.write(json.dumps({"epoch": 2, "wall_ms": 7.5}) + "\n")

    rows = aggregate_runs(tmp_path)
    assert len(rows) == 2
    by_key = {(r["policy"], r["score_source"]): r for r in rows}
    cell = by_key[("infobatch", "das")]
    assert cell["n_seeds"] == 2
    assert cell["n_failed"] == 1
    assert cell["epoch_mean"] == 11.0
    assert cell["test_acc_true_labels_mean"] == float(f"{np.mean([0.8, 0.9]):.6g}")
    assert cell["test_acc_true_labels_std"] == float(f"{np.std([0.8, 0.9], ddof=1):.6g}")
    # None entries drop out instead of poisoning the mean.
    assert cell["mean_das_mean"] == 0.5
    assert cell["mean_das_std"] == 0.0
    # Only seed0 has a timing sidecar; its total is the lone wall_ms value.
    assert cell["wall_ms_mean"] == 12.5

    single = by_key[("dynamic_random", "epoch_loss")]
    assert single["n_seeds"] == 1
    assert single["test_acc_true_labels_std"] == 0.0
    assert single["mean_das_mean"] is None


def test_aggregate_requires_summaries(tmp_path):
    with pytest.raises(ValueError, match="no run summaries"):
        aggregate_runs(tmp_path)
    with pytest.raises(ValueError, match="not a directory"):
        load_summaries(tmp_path / "missing")


def test_write_aggregate_csv_and_jsonl(tmp_path):
    _write_summary(tmp_path, "a_seed0", final=_final(10, 0.8125, 0.3, 0.4, None, 1000))
    rows = aggregate_runs(tmp_path)
    csv_path = tmp_path / "agg.csv"
    jsonl_path = tmp_path / "agg.jsonl"
    write_aggregate(rows, csv_path, jsonl_path)

    with csv_path.open() as fh:
        parsed = list(csv.DictReader(fh))
    assert len(parsed) == 1
    assert parsed[0]["policy"] == "infobatch"
    assert parsed[0]["test_acc_true_labels_mean"] == "0.8125"
    assert parsed[0]["mean_das_mean"] == ""  # None renders as empty cell

    lines = [json.loads(line) for line in jsonl_path.read_text().splitlines()]
    assert lines == rows
    with pytest.raises(ValueError):
        write_aggregate([], csv_path)


def _agg_row(policy, source, noise_kind, noise_rate, ratio, acc, n_seeds=3):
    return {
        "policy": policy,
        "score_source": source,
        "noise_kind": noise_kind,
        "noise_rate": noise_rate,
        "target_prune_ratio": ratio,
        "n_seeds": n_seeds,
        "n_failed": 0,
        "test_acc_true_labels_mean": acc,
        "test_acc_true_labels_std": 0.01,
    }


def test_gap_table_against_auto_baseline():
    rows = [
        _agg_row("dynamic_random", "epoch_loss", "uniform_symmetric", 0.4, 0.0, 0.9),
        _agg_row("dynamic_random", "epoch_loss", "pairflip", 0.3, 0.0, 0.8),
        _agg_row("infobatch", "das", "uniform_symmetric", 0.4, 0.5, 0.7),
        _agg_row("infobatch", "das", "pairflip", 0.3, 0.5, 0.75),
        _agg_row("infobatch", "epoch_loss", "uniform_symmetric", 0.4, 0.5, 0.65),
    ]
    table = build_gap_table(rows)
    cells = [r for r in table if r["row_type"] == "cell"]
    deltas = [r for r in table if r["row_type"] == "mean_delta"]
    assert len(cells) == 3
    das_uniform = next(r for r in cells
                       if r["score_source"] == "das" and r["noise_kind"] == "uniform_symmetric")
    assert das_uniform["gap"] == float(f"{0.7 - 0.9:.6g}")
    assert das_uniform["full_acc_mean"] == 0.9
    das_delta = next(r for r in deltas if r["score_source"] == "das")
    # Mean over the two noise conditions: ((0.7-0.9) + (0.75-0.8)) / 2.
    assert das_delta["gap"] == float(f"{(-0.2 - 0.05) / 2:.6g}")
    assert das_delta["noise_kind"] == "all"


def test_gap_table_explicit_full_rows_and_skips_empty_cells():
    full = [_agg_row("static_random", "epoch_loss", "pairflip", 0.3, 0.0, 0.8)]
    pruned = [
        _agg_row("infobatch", "das", "pairflip", 0.3, 0.5, 0.77),
        _agg_row("infobatch", "das", "pairflip", 0.3, 0.7, 0.7, n_seeds=0),
    ]
    table = build_gap_table(pruned, full_rows=full)
    cells = [r for r in table if r["row_type"] == "cell"]
    assert len(cells) == 1
    assert cells[0]["target_prune_ratio"] == 0.5


def test_gap_table_errors_name_the_offending_cell():
    rows = [
        _agg_row("dynamic_random", "epoch_loss", "pairflip", 0.3, 0.0, 0.8),
        _agg_row("infobatch", "das", "uniform_symmetric", 0.4, 0.5, 0.7),
    ]
    with pytest.raises(ValueError) as ei:
        build_gap_table(rows)
    msg = str(ei.value)
    assert "uniform_symmetric:0.4" in msg and "policy=infobatch" in msg

    doubled = [
        _agg_row("dynamic_random", "epoch_loss", "pairflip", 0.3, 0.0, 0.8),
        _agg_row("static_random", "epoch_loss", "pairflip", 0.3, 0.0, 0.82),
        _agg_row("infobatch", "das", "pairflip", 0.3, 0.5, 0.7),
    ]
    with pytest.raises(ValueError, match="multiple full-training"):
        build_gap_table(doubled)

    only_baseline = [_agg_row("dynamic_random", "epoch_loss", "pairflip", 0.3, 0.0, 0.8)]
    with pytest.raises(ValueError, match="empty"):
        build_gap_table(only_baseline)


def test_write_gap_table(tmp_path):
    rows = [
        _agg_row("dynamic_random", "epoch_loss", "pairflip", 0.3, 0.0, 0.8),
        _agg_row("infobatch", "das", "pairflip", 0.3, 0.5, 0.7),
    ]
    out = tmp_path / "gaps.csv"
    write_gap_table(build_gap_table(rows), out)
    with out.open() as fh:
        parsed = list(csv.DictReader(fh))
    assert parsed[0]["row_type"] == "cell"
    assert parsed[-1]["row_type"] == "mean_delta"


def _dumped_run(tmp_path, *, name="hv", noise_rate=0.4, seed=0):
    doc = {
        "dataset": {"kind": "blobs", "n": 60, "dim": 4, "num_classes": 4, "seed": 0},
        "noise": {"kind": "uniform_symmetric", "rate": noise_rate},
        "reference": {"kind": "held_out_clean", "fraction": 0.1},
        "trainer": {"batch_size": 16, "lr": 0.05, "total_epochs": 4},
        "policy": {"policy": "infobatch", "score_source": "das", "r": 0.4},
        "das": {"window": 10, "min_window": 2},
        "target_prune_ratio": 0.3,
        "name": name,
    }
    cfg = config_from_dict(doc)
    summary = run_single(cfg, seed, tmp_path, dump_trajectories=True, dump_das=True)
    assert summary["status"] == "ok"
    return summary


def test_hard_vs_noisy_export_structure(tmp_path):
    summary = _dumped_run(tmp_path)
    rows = hard_vs_noisy_export(tmp_path, top_percent=10.0)
    epochs = sorted({r["epoch"] for r in rows})
    assert epochs == list(range(1, summary["terminal_epoch"] + 1))
    assert all({r["group"] for r in rows if r["epoch"] == e} == {"hard_clean", "flipped"}
               for e in epochs)

    info = json.loads((tmp_path / "hv_seed0.dataset.json").read_text())
    flipped = np.asarray(info["noisy_labels"]) != np.asarray(info["true_labels"])
    n_clean = int((~flipped).sum())
    by = {(r["epoch"], r["group"]): r for r in rows}
    assert by[(1, "flipped")]["n"] == int(flipped.sum())
    assert by[(1, "hard_clean")]["n"] == max(1, round(0.10 * n_clean))
    # Alignment scores only exist once the warm-up window is filled.
    assert by[(1, "hard_clean")]["mean_das"] is None
    assert by[(2, "hard_clean")]["mean_das"] is not None
    assert all(np.isfinite(r["mean_loss"]) for r in rows)

    everyone = hard_vs_noisy_export(tmp_path, top_percent=100.0)
    by_all = {(r["epoch"], r["group"]): r for r in everyone}
    assert by_all[(1, "hard_clean")]["n"] == n_clean

    out = tmp_path / "hv.csv"
    write_hard_vs_noisy(rows, out)
    with out.open() as fh:
        parsed = list(csv.DictReader(fh))
    assert len(parsed) == len(rows)


def test_hard_vs_noisy_validation(tmp_path):
    _dumped_run(tmp_path)
    for bad in (0.0, -5.0, 150.0):
        with pytest.raises(ValueError, match="top_percent"):
            hard_vs_noisy_export(tmp_path, top_percent=bad)
    (tmp_path / "hv_seed0.dataset.json").unlink()
    with pytest.raises(ValueError, match="dataset sidecar"):
        hard_vs_noisy_export(tmp_path)


def test_hard_vs_noisy_requires_flips(tmp_path):
    _dumped_run(tmp_path, noise_rate=0.0)
    with pytest.raises(ValueError, match="no flipped samples"):
        hard_vs_noisy_export(tmp_path)


def test_find_dumped_run(tmp_path):
    with pytest.raises(ValueError, match="--dump-trajectories"):
        find_dumped_run(tmp_path)
    _dumped_run(tmp_path, name="one")
    assert find_dumped_run(tmp_path) == "one_seed0"
    assert find_dumped_run(tmp_path, "one_seed0") == "one_seed0"
    with pytest.raises(ValueError, match="no trajectory dump"):
        find_dumped_run(tmp_path, "ghost_seed0")
    _dumped_run(tmp_path, name="two")
    with pytest.raises(ValueError, match="--run"):
        find_dumped_run(tmp_path)
    assert find_dumped_run(tmp_path, "two_seed0") == "two_seed0"
