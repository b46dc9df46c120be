"""Experiment harness: run configs, budget accounting, metrics files, sweeps.

One run = one (config, seed) pair. Per run the harness synthesizes or loads
the dataset, injects label noise, carves the reference split, trains a
PrunedClassifier under the configured policy, and appends one MetricsRecord
per epoch to ``<run_id>.metrics.jsonl``. The metrics stream is a pure
function of (config, seed); wall-clock timings go to a ``.timing.jsonl``
sidecar so reruns stay byte-identical.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import DEFAULT_CLUSTER_STD, Dataset, ReferenceSpec, carve_reference, load_csv, make_blobs
from .estimator import EpochSnapshot, PrunedClassifier
from .noise import NoiseSpec, apply_noise
from .policy import EpochPlan, PolicyConfig
from .validation import check_fraction, check_positive_int

# Fixed sub-stream tags for per-run seed derivation.
_NOISE_STREAM = 11
_CARVE_STREAM = 12
_PROBE_STREAM = 13


# --------------------------------------------------------------------- config


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "blobs"
    n: int = 2000
    dim: int = 32
    num_classes: int | None = None  # blobs default 10; csv infers from labels
    cluster_std: float = DEFAULT_CLUSTER_STD
    seed: int = 0
    test_n: int | None = None
    path: str | None = None
    test_path: str | None = None
    test_fraction: float = 0.2

    def __post_init__(self) -> None:
        if self.kind not in ("blobs", "csv"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "csv" and not self.path:
            raise ValueError("csv datasets need a path")
        if self.kind == "csv" and not self.test_path:
            check_fraction(self.test_fraction, "test_fraction", allow_one=False)

    @property
    def blob_classes(self) -> int:
        return 10 if self.num_classes is None else self.num_classes


@dataclass(frozen=True)
class TrainerSpec:
    # Geometric per-epoch decay keeps the reference loss descending through
    # the last epochs, which the trajectory scores depend on.
    batch_size: int = 128
    lr: float = 0.012
    total_epochs: int = 60
    lr_decay_every: int | None = 1
    lr_decay_factor: float = 0.95

    def __post_init__(self) -> None:
        check_positive_int(self.batch_size, "batch_size")
        check_positive_int(self.total_epochs, "total_epochs")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.lr_decay_every is not None:
            check_positive_int(self.lr_decay_every, "lr_decay_every")


@dataclass(frozen=True)
class DasSpec:
    """Trajectory-alignment knobs: window size N, warm-up floor, correlation."""

    window: int = 25
    min_window: int = 2
    correlation: str = "pearson"
    traj_fill: str = "carry_forward"

    def __post_init__(self) -> None:
        check_positive_int(self.window, "das window")
        check_positive_int(self.min_window, "min_window")
        if self.correlation not in ("pearson", "cosine"):
            raise ValueError(f"unknown correlation {self.correlation!r}")
        if self.traj_fill not in ("carry_forward", "reevaluate"):
            raise ValueError(f"unknown traj_fill {self.traj_fill!r}")


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    reference: ReferenceSpec | None = field(default_factory=ReferenceSpec)
    hidden_width: int | None = None
    trainer: TrainerSpec = field(default_factory=TrainerSpec)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    policy_seed: int = 0
    das: DasSpec = field(default_factory=DasSpec)
    target_prune_ratio: float = 0.0
    seeds: tuple = (0,)
    name: str | None = None
    output_dir: str | None = None

    def __post_init__(self) -> None:
        check_fraction(self.target_prune_ratio, "target_prune_ratio", allow_zero=True, allow_one=False)
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.policy.score_source == "das" and self.reference is None:
            raise ValueError("score_source 'das' requires a reference section")

    @property
    def label(self) -> str:
        return self.policy.label

    def run_name(self) -> str:
        if self.name:
            return self.name
        return (
            f"{self.label}-{self.policy.score_source}"
            f"_{self.noise.kind}{self.noise.rate:g}"
            f"_p{self.target_prune_ratio:g}"
        )


_SECTION_KEYS = {
    "dataset": {
        "kind", "n", "dim", "num_classes", "cluster_std", "seed", "test_n",
        "path", "test_path", "test_fraction",
    },
    "noise": {"kind", "rate", "superclass_group_size", "superclass_map"},
    "reference": {"kind", "fraction", "probe_epochs", "rate"},
    "model": {"hidden_width"},
    "trainer": {"batch_size", "lr", "total_epochs", "lr_decay_every", "lr_decay_factor"},
    "policy": {
        "policy", "score_source", "r", "delta", "seta_alpha", "seta_k",
        "threshold", "rescale", "seed",
    },
    "das": {"window", "min_window", "correlation", "traj_fill"},
}
_TOP_KEYS = {
    "dataset", "noise", "reference", "model", "trainer", "policy", "das",
    "target_prune_ratio", "seeds", "name", "output_dir",
}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ValueError(f"unknown keys in {where}: {unknown} (allowed: {sorted(allowed)})")


def config_from_dict(raw: dict) -> RunConfig:
    """Build a RunConfig from a parsed JSON document. Unknown keys reject."""
    if not isinstance(raw, dict):
        raise ValueError("run config must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "run config")

    def section(name: str) -> dict:
        value = raw.get(name) or {}
        if not isinstance(value, dict):
            raise ValueError(f"section {name!r} must be an object")
        _check_keys(value, _SECTION_KEYS[name], f"section {name!r}")
        return dict(value)

    dataset = DatasetSpec(**section("dataset"))
    noise_kwargs = section("noise")
    if "superclass_map" in noise_kwargs and noise_kwargs["superclass_map"] is not None:
        noise_kwargs["superclass_map"] = {
            int(k): int(v) for k, v in noise_kwargs["superclass_map"].items()
        }
    noise = NoiseSpec(**noise_kwargs)
    # Absent section: default reference split. Explicit null: no reference.
    if "reference" not in raw:
        reference = ReferenceSpec()
    elif raw["reference"] is None:
        reference = None
    else:
        reference = ReferenceSpec(**section("reference"))
    model = section("model")
    policy_kwargs = section("policy")
    policy_seed = int(policy_kwargs.pop("seed", 0))
    policy = PolicyConfig(**policy_kwargs)
    trainer = TrainerSpec(**section("trainer"))
    das = DasSpec(**section("das"))
    seeds = raw.get("seeds", [0])
    if not isinstance(seeds, (list, tuple)) or not all(isinstance(s, int) for s in seeds):
        raise ValueError("seeds must be a list of integers")
    return RunConfig(
        dataset=dataset,
        noise=noise,
        reference=reference,
        hidden_width=model.get("hidden_width"),
        trainer=trainer,
        policy=policy,
        policy_seed=policy_seed,
        das=das,
        target_prune_ratio=float(raw.get("target_prune_ratio", 0.0)),
        seeds=tuple(seeds),
        name=raw.get("name"),
        output_dir=raw.get("output_dir"),
    )


def load_config(path: str | Path) -> RunConfig:
    with Path(path).open() as fh:
        return config_from_dict(json.load(fh))


def config_to_dict(config: RunConfig) -> dict:
    """JSON-round-trippable echo of the config (written into run summaries)."""
    noise = asdict(config.noise)
    return {
        "dataset": asdict(config.dataset),
        "noise": noise,
        "reference": None if config.reference is None else asdict(config.reference),
        "model": {"hidden_width": config.hidden_width},
        "trainer": asdict(config.trainer),
        "policy": {**asdict(config.policy), "seed": config.policy_seed},
        "das": asdict(config.das),
        "target_prune_ratio": config.target_prune_ratio,
        "seeds": list(config.seeds),
        "name": config.name,
        "output_dir": config.output_dir,
    }


# --------------------------------------------------------------------- types


@dataclass
class Budget:
    """Forward-pass budget: stop within one epoch of exhausting it."""

    full_pass_budget: int
    consumed: int = 0

    @classmethod
    def for_run(cls, target_prune_ratio: float, n_train: int, total_epochs: int) -> "Budget":
        return cls(full_pass_budget=math.ceil((1.0 - target_prune_ratio) * n_train * total_epochs))

    @property
    def exhausted(self) -> bool:
        return self.consumed >= self.full_pass_budget


@dataclass
class MetricsRecord:
    """One epoch of one run. ``score_source`` names what drove this epoch's
    plan ("none" before any scores exist and for random policies)."""

    epoch: int
    policy: str
    score_source: str
    test_acc_true_labels: float
    retained_noise_ratio: float
    pruned_fraction: float
    mean_das: float | None
    consumed_forward_passes: int
    wall_ms: float
    terminal: bool

    def metrics_line(self) -> dict:
        # wall_ms is nondeterministic; it lives in the timing sidecar so the
        # metrics stream stays a pure function of (config, seed).
        return {
            "epoch": self.epoch,
            "policy": self.policy,
            "score_source": self.score_source,
            "test_acc_true_labels": _sig6(self.test_acc_true_labels),
            "retained_noise_ratio": _sig6(self.retained_noise_ratio),
            "pruned_fraction": _sig6(self.pruned_fraction),
            "mean_das": _sig6(self.mean_das),
            "consumed_forward_passes": self.consumed_forward_passes,
            "terminal": self.terminal,
        }


def retained_noise_ratio(plan: EpochPlan, dataset: Dataset) -> float:
    """Fraction of the plan's kept samples whose label is flipped."""
    if plan.n_total != dataset.n:
        raise ValueError("plan and dataset size mismatch")
    if plan.kept_ids.size == 0:
        raise ValueError("plan keeps no samples")
    return float(dataset.is_flipped[plan.kept_ids].mean())


# ----------------------------------------------------------------- run logic


def _sig6(x):
    """Round floats to 6 significant digits for serialization."""
    if x is None:
        return None
    return float(f"{float(x):.6g}")


def _jsonl_append(path: Path, record: dict) -> None:
    with path.open("a") as fh:
        fh.write(json.dumps(record) + "\n")


def _derive_seed(run_seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([int(run_seed), stream]).generate_state(1)[0])


def build_datasets(config: RunConfig, run_seed: int):
    """(train, reference, test) per the config, noise injected, reference carved."""
    spec = config.dataset
    if spec.kind == "blobs":
        pool, test = make_blobs(
            spec.n, spec.dim, spec.blob_classes, spec.cluster_std, spec.seed, spec.test_n
        )
    else:
        pool = load_csv(spec.path, spec.num_classes)
        if spec.test_path:
            test = load_csv(spec.test_path, pool.num_classes, split_tag="test")
        else:
            rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 3]))
            m = int(round(spec.test_fraction * pool.n))
            if m == 0 or m >= pool.n:
                raise ValueError("test_fraction yields a degenerate split")
            test_idx = np.sort(rng.permutation(pool.n)[:m])
            train_idx = np.setdiff1d(np.arange(pool.n), test_idx, assume_unique=True)
            pool, test = pool.subset(train_idx, "train"), pool.subset(test_idx, "test")

    noisy = apply_noise(pool, config.noise, _derive_seed(run_seed, _NOISE_STREAM))

    reference = None
    train = noisy
    if config.reference is not None:
        probe_fn = _make_probe_fn(config, run_seed)
        train, reference = carve_reference(
            noisy, config.reference, _derive_seed(run_seed, _CARVE_STREAM), probe_fn
        )
    return train, reference, test


def _make_probe_fn(config: RunConfig, run_seed: int):
    """Probe trainer for pseudo_small_loss carving: same arch and trainer
    settings as the main run, fresh derived seed."""

    def probe(dataset: Dataset, probe_epochs: int, _carve_seed: int) -> np.ndarray:
        from .nnet import build_model, per_sample_losses, sgd_epoch

        seed = _derive_seed(run_seed, _PROBE_STREAM)
        init_rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
        shuffle_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        model = build_model(dataset.dim, dataset.num_classes, config.hidden_width, init_rng)
        ids = np.arange(dataset.n)
        weights = np.ones(dataset.n)
        for epoch in range(1, probe_epochs + 1):
            sgd_epoch(
                model, dataset.features, dataset.noisy_labels, weights, ids,
                config.trainer.batch_size, config.trainer.lr, shuffle_rng, epoch=epoch,
            )
        return per_sample_losses(model, dataset.features, dataset.noisy_labels)

    return probe


def make_estimator(config: RunConfig, run_seed: int, keep_fraction: float) -> PrunedClassifier:
    return PrunedClassifier(
        policy=config.policy.policy,
        score_source=config.policy.score_source,
        r=config.policy.r,
        delta=config.policy.delta,
        threshold=config.policy.threshold,
        rescale=config.policy.rescale,
        seta_alpha=config.policy.seta_alpha,
        seta_k=config.policy.seta_k,
        keep_fraction=keep_fraction,
        window=config.das.window,
        min_window=config.das.min_window,
        correlation=config.das.correlation,
        traj_fill=config.das.traj_fill,
        hidden_width=config.hidden_width,
        lr=config.trainer.lr,
        batch_size=config.trainer.batch_size,
        epochs=config.trainer.total_epochs,
        lr_decay_every=config.trainer.lr_decay_every,
        lr_decay_factor=config.trainer.lr_decay_factor,
        seed=run_seed,
        policy_seed=config.policy_seed,
    )


def run_single(
    config: RunConfig,
    run_seed: int,
    output_dir: str | Path,
    dump_trajectories: bool = False,
    dump_das: bool = False,
) -> dict:
    """Execute one (config, seed) run; returns the summary dict.

    Divergence and other runtime failures are captured in the summary with
    status "failed" rather than raised, so sweeps continue past bad cells.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    run_id = f"{config.run_name()}_seed{run_seed}"
    metrics_path = output_dir / f"{run_id}.metrics.jsonl"
    timing_path = output_dir / f"{run_id}.timing.jsonl"
    summary_path = output_dir / f"{run_id}.summary.json"
    for stale in (metrics_path, timing_path, summary_path):
        stale.unlink(missing_ok=True)
    traj_path = output_dir / f"{run_id}.trajectories.jsonl"
    das_path = output_dir / f"{run_id}.das.jsonl"
    dataset_path = output_dir / f"{run_id}.dataset.json"
    for stale in (traj_path, das_path, dataset_path):
        stale.unlink(missing_ok=True)

    summary = {
        "run_id": run_id,
        "seed": run_seed,
        "status": "ok",
        "error": None,
        "policy": config.label,
        "score_source": config.policy.score_source,
        "noise_kind": config.noise.kind,
        "noise_rate": config.noise.rate,
        "target_prune_ratio": config.target_prune_ratio,
        "config": config_to_dict(config),
    }
    records: list[MetricsRecord] = []
    try:
        train, reference, test = build_datasets(config, run_seed)
        budget = Budget.for_run(
            config.target_prune_ratio, train.n, config.trainer.total_epochs
        )
        est = make_estimator(config, run_seed, 1.0 - config.target_prune_ratio)
        flips = train.is_flipped

        if dump_trajectories or dump_das:
            dataset_path.write_text(
                json.dumps(
                    {
                        "num_classes": train.num_classes,
                        "noisy_labels": train.noisy_labels.tolist(),
                        "true_labels": train.true_labels.tolist(),
                    }
                )
            )

        clock = {"last": time.perf_counter()}

        def on_epoch(snap: EpochSnapshot) -> None:
            now = time.perf_counter()
            wall_ms = (now - clock["last"]) * 1000.0
            clock["last"] = now
            record = MetricsRecord(
                epoch=snap.epoch,
                policy=config.label,
                score_source=snap.plan.source,
                test_acc_true_labels=snap.test_accuracy,
                retained_noise_ratio=retained_noise_ratio(snap.plan, train),
                pruned_fraction=snap.plan.pruned_fraction,
                mean_das=None if snap.alignment is None else float(snap.alignment.scores.mean()),
                consumed_forward_passes=snap.consumed,
                wall_ms=wall_ms,
                terminal=snap.terminal,
            )
            records.append(record)
            _jsonl_append(metrics_path, record.metrics_line())
            _jsonl_append(timing_path, {"epoch": snap.epoch, "wall_ms": round(wall_ms, 3)})
            if dump_trajectories:
                carried = snap.bank.last_carried_mask()
                with traj_path.open("a") as fh:
                    for i in range(snap.latest_losses.size):
                        line = {
                            "epoch": snap.epoch,
                            "id": i,
                            "loss": _sig6(snap.latest_losses[i]),
                            "carried": bool(carried[i]),
                        }
                        fh.write(json.dumps(line) + "\n")
            if dump_das and snap.alignment is not None:
                with das_path.open("a") as fh:
                    for i, s in enumerate(snap.alignment.scores):
                        fh.write(
                            json.dumps({"epoch": snap.epoch, "id": i, "score": _sig6(s)}) + "\n"
                        )

        ref_arrays = None
        if reference is not None:
            ref_arrays = (reference.features, reference.noisy_labels)
        est.fit(
            train.features,
            train.noisy_labels,
            reference=ref_arrays,
            eval_set=(test.features, test.true_labels),
            budget=budget.full_pass_budget,
            on_epoch=on_epoch,
        )
        budget.consumed = est.consumed_

        _check_budget_fidelity(
            budget, train.n, est.terminal_epoch_, config.trainer.total_epochs
        )
        summary.update(
            {
                "n_train": train.n,
                "n_reference": 0 if reference is None else reference.n,
                "n_test": test.n,
                "budget": budget.full_pass_budget,
                "consumed": budget.consumed,
                "terminal_epoch": est.terminal_epoch_,
                "final": records[-1].metrics_line() if records else None,
            }
        )
    except Exception as exc:  # noqa: BLE001 - failed runs are isolated, not fatal
        summary["status"] = "failed"
        summary["error"] = f"{type(exc).__name__}: {exc}"
    summary_path.write_text(json.dumps(summary, indent=2))
    return summary


def _check_budget_fidelity(budget: Budget, n_train: int, terminal_epoch: int, total_epochs: int) -> None:
    """In-run budget assertion: terminal consumption lands within one epoch
    of the budget, except when the epoch cap T is hit with budget to spare."""
    over = budget.consumed - budget.full_pass_budget
    if over > n_train:
        raise RuntimeError(
            f"budget overshot by {over} > |D| = {n_train}"
        )
    if terminal_epoch < total_epochs and budget.consumed < budget.full_pass_budget:
        raise RuntimeError(
            f"run stopped at epoch {terminal_epoch} with budget remaining"
        )


def run_experiment(
    config: RunConfig,
    output_dir: str | Path,
    seeds=None,
    dump_trajectories: bool = False,
    dump_das: bool = False,
) -> list[dict]:
    """All seeds of one config. Failed seeds are recorded and skipped over."""
    seeds = config.seeds if seeds is None else seeds
    summaries = []
    for seed in seeds:
        summary = run_single(config, seed, output_dir, dump_trajectories, dump_das)
        status = summary["status"]
        print(f"[run] {summary['run_id']}: {status}" + (
            f" ({summary['error']})" if status == "failed" else ""
        ))
        summaries.append(summary)
    return summaries


# -------------------------------------------------------------------- sweeps


def expand_sweep(raw: dict) -> list[RunConfig]:
    """A sweep file is either {"runs": [run-config, ...]} or a {"base", "grid"}
    pair where grid maps dotted config paths to value lists."""
    if not isinstance(raw, dict):
        raise ValueError("sweep config must be a JSON object")
    _check_keys(raw, {"runs", "base", "grid", "output_dir"}, "sweep config")
    if "runs" in raw:
        return [config_from_dict(entry) for entry in raw["runs"]]
    if "base" not in raw:
        raise ValueError("sweep config needs either 'runs' or 'base'")
    base = raw["base"]
    grid = raw.get("grid", {})
    if not isinstance(grid, dict):
        raise ValueError("grid must map dotted keys to value lists")
    configs = []
    keys = sorted(grid)
    for values in _product([grid[k] for k in keys]):
        doc = json.loads(json.dumps(base))
        for key, value in zip(keys, values):
            _set_dotted(doc, key, value)
        configs.append(config_from_dict(doc))
    return configs


def _product(lists):
    if not lists:
        yield ()
        return
    for head in lists[0]:
        for tail in _product(lists[1:]):
            yield (head,) + tail


def _set_dotted(doc: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = doc
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def sweep(configs: list[RunConfig], output_dir: str | Path, dump_trajectories=False, dump_das=False) -> list[dict]:
    """Run every config x seed cell, then write the aggregate table."""
    from .report import aggregate_runs, write_aggregate

    output_dir = Path(output_dir)
    summaries = []
    for config in configs:
        summaries.extend(
            run_experiment(config, output_dir, None, dump_trajectories, dump_das)
        )
    rows = aggregate_runs(output_dir)
    write_aggregate(rows, output_dir / "aggregate.csv", output_dir / "aggregate.jsonl")
    return summaries
