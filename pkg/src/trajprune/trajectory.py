"""Fixed-window loss-trajectory storage for samples and the reference set.

Every sample's buffer advances once per recorded epoch: trained samples push
their fresh loss, pruned samples carry forward the last observed one, so all
trajectories stay aligned with the reference read-out at zero extra compute.
"""

from __future__ import annotations

import numpy as np

from .validation import check_positive_int


class TrajectoryBank:
    """Per-sample ring buffers of the last ``window`` epoch losses."""

    def __init__(self, n_samples: int, window: int):
        self.n_samples = check_positive_int(n_samples, "n_samples")
        self.window = check_positive_int(window, "window")
        self._values = np.zeros((self.n_samples, self.window))
        self._last_observed = np.full(self.n_samples, np.nan)
        self._carried = np.zeros(self.n_samples, dtype=bool)
        self.epochs_recorded = 0

    @property
    def length(self) -> int:
        """Entries currently held per trajectory (same for every sample)."""
        return min(self.epochs_recorded, self.window)

    def fill_count(self, sample_id: int) -> int:
        self._check_id(sample_id)
        return self.length

    def record_epoch(self, epoch: int, values: np.ndarray, observed: np.ndarray) -> None:
        """Push one entry per sample: fresh where ``observed``, carried elsewhere.

        ``epoch`` must be exactly one past the last recorded epoch; recording
        the same epoch twice is an error. The first recorded epoch must
        observe every sample, otherwise carry-forward has nothing to carry.
        """
        if epoch != self.epochs_recorded + 1:
            raise ValueError(
                f"expected epoch {self.epochs_recorded + 1}, got {epoch}"
                " (each epoch is recorded exactly once, in order)"
            )
        values = np.asarray(values, dtype=np.float64)
        observed = np.asarray(observed, dtype=bool)
        if values.shape != (self.n_samples,) or observed.shape != (self.n_samples,):
            raise ValueError("values and observed must have one entry per sample")
        if not np.all(np.isfinite(values[observed])):
            raise ValueError("observed losses must be finite")
        if self.epochs_recorded == 0 and not observed.all():
            raise ValueError("the first recorded epoch must observe every sample")

        self._last_observed[observed] = values[observed]
        slot = self.epochs_recorded % self.window
        self._values[:, slot] = self._last_observed
        self._carried = ~observed
        self.epochs_recorded += 1

    def read_window(self, sample_id: int) -> np.ndarray:
        """Chronological (oldest first) trajectory for one sample."""
        self._check_id(sample_id)
        return self.read_all()[sample_id]

    def read_all(self) -> np.ndarray:
        """(n_samples, length) matrix, columns oldest to newest."""
        L = self.length
        if L == 0:
            return np.zeros((self.n_samples, 0))
        if self.epochs_recorded <= self.window:
            return self._values[:, :L].copy()
        slot = self.epochs_recorded % self.window
        return np.concatenate([self._values[:, slot:], self._values[:, :slot]], axis=1)

    def latest(self) -> np.ndarray:
        """Most recent entry per sample (fresh or carried)."""
        if self.epochs_recorded == 0:
            raise ValueError("no epochs recorded yet")
        return self._values[:, (self.epochs_recorded - 1) % self.window].copy()

    def last_carried_mask(self) -> np.ndarray:
        """Which samples had their latest entry carried forward."""
        if self.epochs_recorded == 0:
            raise ValueError("no epochs recorded yet")
        return self._carried.copy()

    def _check_id(self, sample_id: int) -> None:
        if not 0 <= sample_id < self.n_samples:
            raise ValueError(f"sample id {sample_id} out of range for bank of {self.n_samples}")


class ReferenceTrajectory:
    """Ring buffer of the reference set's mean loss, one entry per epoch."""

    def __init__(self, window: int):
        self.window = check_positive_int(window, "window")
        self._values = np.zeros(window)
        self.epochs_recorded = 0

    @property
    def length(self) -> int:
        return min(self.epochs_recorded, self.window)

    def push(self, value: float) -> None:
        value = float(value)
        if not np.isfinite(value):
            raise ValueError("reference loss must be finite")
        self._values[self.epochs_recorded % self.window] = value
        self.epochs_recorded += 1

    def read(self) -> np.ndarray:
        """Chronological (oldest first) reference trajectory."""
        L = self.length
        if L == 0:
            return np.zeros(0)
        if self.epochs_recorded <= self.window:
            return self._values[:L].copy()
        slot = self.epochs_recorded % self.window
        return np.concatenate([self._values[slot:], self._values[:slot]])


def record_reference_loss(traj: ReferenceTrajectory, model, reference_dataset) -> float:
    """Evaluate the mean reference loss on the current model and push it."""
    from .nnet import per_sample_losses

    losses = per_sample_losses(model, reference_dataset.features, reference_dataset.noisy_labels)
    mean = float(losses.mean())
    traj.push(mean)
    return mean
