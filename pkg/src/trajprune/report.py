"""Aggregation and reporting over completed run files.

Reads only runs whose ``.summary.json`` exists (writes are append-only, the
summary lands last). Aggregates terminal-epoch metrics as mean and sample
std (ddof=1; std 0 for a single seed) per condition cell.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

import numpy as np

GROUP_KEYS = ("policy", "score_source", "noise_kind", "noise_rate", "target_prune_ratio")
METRIC_FIELDS = (
    "epoch",
    "test_acc_true_labels",
    "retained_noise_ratio",
    "pruned_fraction",
    "mean_das",
    "consumed_forward_passes",
    "wall_ms",
)
FULL_TRAINING_POLICIES = ("static_random", "dynamic_random")


def _sig6(x):
    if x is None:
        return None
    return float(f"{float(x):.6g}")


def _mean_std(values: list) -> tuple:
    values = [v for v in values if v is not None]
    if not values:
        return None, None
    if len(values) == 1:
        return float(values[0]), 0.0
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=1))


def load_summaries(input_dir: str | Path) -> list[dict]:
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise ValueError(f"{input_dir} is not a directory")
    summaries = []
    for path in sorted(input_dir.glob("*.summary.json")):
        with path.open() as fh:
            summaries.append(json.load(fh))
    if not summaries:
        raise ValueError(f"no run summaries found under {input_dir}")
    return summaries


def _run_wall_ms(input_dir: Path, run_id: str) -> float | None:
    timing = input_dir / f"{run_id}.timing.jsonl"
    if not timing.exists():
        return None
    total = 0.0
    with timing.open() as fh:
        for line in fh:
            total += json.loads(line)["wall_ms"]
    return total


def aggregate_runs(input_dir: str | Path) -> list[dict]:
    """One row per (policy, score_source, noise, prune-ratio) cell."""
    input_dir = Path(input_dir)
    groups: dict[tuple, list[dict]] = defaultdict(list)
    failed: dict[tuple, int] = defaultdict(int)
    for summary in load_summaries(input_dir):
        key = (
            summary["policy"],
            summary["score_source"],
            summary["noise_kind"],
            summary["noise_rate"],
            summary["target_prune_ratio"],
        )
        if summary["status"] != "ok" or not summary.get("final"):
            failed[key] += 1
            continue
        final = dict(summary["final"])
        final["wall_ms"] = _run_wall_ms(input_dir, summary["run_id"])
        groups[key].append(final)

    rows = []
    for key in sorted(set(groups) | set(failed), key=lambda k: tuple(str(p) for p in k)):
        finals = groups.get(key, [])
        row = dict(zip(GROUP_KEYS, key))
        row["n_seeds"] = len(finals)
        row["n_failed"] = failed.get(key, 0)
        for field in METRIC_FIELDS:
            mean, std = _mean_std([f.get(field) for f in finals])
            row[f"{field}_mean"] = _sig6(mean)
            row[f"{field}_std"] = _sig6(std)
        rows.append(row)
    return rows


def write_aggregate(rows: list[dict], csv_path: str | Path, jsonl_path: str | Path | None = None) -> None:
    if not rows:
        raise ValueError("nothing to write: no aggregate rows")
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    header = list(rows[0].keys())
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(row.get(k)) for k in header])
    if jsonl_path is not None:
        with Path(jsonl_path).open("w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return value


# ------------------------------------------------------------------ gap table


def build_gap_table(rows: list[dict], full_rows: list[dict] | None = None) -> list[dict]:
    """Accuracy gaps of pruned cells against the full-training baseline.

    When ``full_rows`` is omitted, baseline cells are taken from ``rows``:
    target_prune_ratio == 0 under a random policy (which keeps everything).
    Emits one "cell" row per pruned condition plus one "mean_delta" row per
    (policy, score_source, ratio) averaging gaps across noise conditions.
    """
    if full_rows is None:
        full_rows = [
            r for r in rows
            if r["target_prune_ratio"] == 0.0 and r["policy"] in FULL_TRAINING_POLICIES
        ]
        rows = [r for r in rows if r not in full_rows]

    baseline: dict[tuple, dict] = {}
    for row in full_rows:
        key = (row["noise_kind"], row["noise_rate"])
        if key in baseline:
            raise ValueError(f"multiple full-training cells for noise condition {key}")
        baseline[key] = row

    out = []
    deltas: dict[tuple, list[float]] = defaultdict(list)
    for row in rows:
        if row["n_seeds"] == 0:
            continue
        key = (row["noise_kind"], row["noise_rate"])
        if key not in baseline:
            raise ValueError(
                "no full-training baseline for cell "
                f"(policy={row['policy']}, score_source={row['score_source']}, "
                f"noise={key[0]}:{key[1]}, ratio={row['target_prune_ratio']})"
            )
        full_acc = baseline[key]["test_acc_true_labels_mean"]
        gap = row["test_acc_true_labels_mean"] - full_acc
        out.append(
            {
                "row_type": "cell",
                "policy": row["policy"],
                "score_source": row["score_source"],
                "noise_kind": key[0],
                "noise_rate": key[1],
                "target_prune_ratio": row["target_prune_ratio"],
                "acc_mean": _sig6(row["test_acc_true_labels_mean"]),
                "acc_std": _sig6(row["test_acc_true_labels_std"]),
                "full_acc_mean": _sig6(full_acc),
                "gap": _sig6(gap),
            }
        )
        deltas[(row["policy"], row["score_source"], row["target_prune_ratio"])].append(gap)

    for (policy, source, ratio), gaps in sorted(deltas.items(), key=lambda kv: tuple(map(str, kv[0]))):
        out.append(
            {
                "row_type": "mean_delta",
                "policy": policy,
                "score_source": source,
                "noise_kind": "all",
                "noise_rate": "",
                "target_prune_ratio": ratio,
                "acc_mean": "",
                "acc_std": "",
                "full_acc_mean": "",
                "gap": _sig6(float(np.mean(gaps))),
            }
        )
    if not out:
        raise ValueError("gap table is empty: no pruned cells found")
    return out


def write_gap_table(rows: list[dict], csv_path: str | Path) -> None:
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    header = list(rows[0].keys())
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(row.get(k)) for k in header])


# -------------------------------------------------------- hard-vs-noisy view


def find_dumped_run(input_dir: str | Path, run_id: str | None = None) -> str:
    """Locate the run prefix whose trajectory dump to analyze."""
    input_dir = Path(input_dir)
    if run_id is not None:
        if not (input_dir / f"{run_id}.trajectories.jsonl").exists():
            raise ValueError(f"run {run_id} has no trajectory dump under {input_dir}")
        return run_id
    dumps = sorted(input_dir.glob("*.trajectories.jsonl"))
    if not dumps:
        raise ValueError(f"no trajectory dumps under {input_dir}; rerun with --dump-trajectories")
    if len(dumps) > 1:
        names = [d.name[: -len(".trajectories.jsonl")] for d in dumps]
        raise ValueError(f"multiple dumped runs under {input_dir}, pick one with --run: {names}")
    return dumps[0].name[: -len(".trajectories.jsonl")]


def _load_dump(path: Path, value_key: str) -> dict[int, np.ndarray]:
    """{epoch: per-sample values} from a {epoch, id, <value>} JSONL dump."""
    per_epoch: dict[int, dict[int, float]] = defaultdict(dict)
    with path.open() as fh:
        for line in fh:
            rec = json.loads(line)
            per_epoch[rec["epoch"]][rec["id"]] = rec[value_key]
    out = {}
    for epoch, values in per_epoch.items():
        arr = np.full(max(values) + 1, np.nan)
        for i, v in values.items():
            arr[i] = v
        out[epoch] = arr
    return out


def hard_vs_noisy_export(
    input_dir: str | Path,
    run_id: str | None = None,
    top_percent: float = 10.0,
) -> list[dict]:
    """Per-epoch mean loss and mean alignment score for two groups: the
    hardest correctly-labeled samples (top-x% by mean loss) and the flipped
    samples. Requires a run executed with both dump flags."""
    if not 0.0 < top_percent <= 100.0:
        raise ValueError(f"top_percent must be in (0, 100], got {top_percent}")
    input_dir = Path(input_dir)
    run_id = find_dumped_run(input_dir, run_id)
    dataset_path = input_dir / f"{run_id}.dataset.json"
    das_path = input_dir / f"{run_id}.das.jsonl"
    if not dataset_path.exists():
        raise ValueError(f"run {run_id} has no dataset sidecar")
    info = json.loads(dataset_path.read_text())
    flipped = np.asarray(info["noisy_labels"]) != np.asarray(info["true_labels"])
    if not flipped.any():
        raise ValueError("dataset has no flipped samples; hard-vs-noisy needs label noise")

    losses = _load_dump(input_dir / f"{run_id}.trajectories.jsonl", "loss")
    das = _load_dump(das_path, "score") if das_path.exists() else {}
    epochs = sorted(losses)
    loss_matrix = np.vstack([losses[e] for e in epochs])
    mean_loss = np.nanmean(loss_matrix, axis=0)

    clean_ids = np.flatnonzero(~flipped)
    k = max(1, int(round(top_percent / 100.0 * clean_ids.size)))
    hard_clean = clean_ids[np.argsort(mean_loss[clean_ids], kind="stable")[::-1][:k]]
    flipped_ids = np.flatnonzero(flipped)

    rows = []
    for epoch in epochs:
        for group, ids in (("hard_clean", hard_clean), ("flipped", flipped_ids)):
            das_vals = das.get(epoch)
            rows.append(
                {
                    "epoch": epoch,
                    "group": group,
                    "n": int(ids.size),
                    "mean_loss": _sig6(float(np.nanmean(losses[epoch][ids]))),
                    "mean_das": None if das_vals is None else _sig6(float(np.nanmean(das_vals[ids]))),
                }
            )
    return rows


def write_hard_vs_noisy(rows: list[dict], csv_path: str | Path) -> None:
    write_gap_table(rows, csv_path)
