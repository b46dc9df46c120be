"""Trajectory alignment scores: correlation of per-sample loss trajectories
against the reference trajectory.

Conventions shared by the scalar and batch paths:
  * Pearson of a length-1 trajectory or of any zero-variance vector is 0.0.
  * Cosine of a zero-norm vector is 0.0.
  * Results are clamped to [-1, 1] against float drift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trajectory import ReferenceTrajectory, TrajectoryBank

CORRELATION_KINDS = ("pearson", "cosine")


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    a, b = _check_pair(a, b)
    if a.size < 2:
        return 0.0
    # Constancy is tested exactly: a residual-sum test misses constant
    # vectors whose value is not representable, where the mean rounds.
    if np.all(a == a[0]) or np.all(b == b[0]):
        return 0.0
    da = a - a.mean()
    db = b - b.mean()
    sa = float(np.sum(da * da))
    sb = float(np.sum(db * db))
    if sa == 0.0 or sb == 0.0:
        return 0.0
    r = float(np.sum(da * db)) / (np.sqrt(sa) * np.sqrt(sb))
    return min(1.0, max(-1.0, r))


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a, b = _check_pair(a, b)
    na = float(np.sqrt(np.sum(a * a)))
    nb = float(np.sqrt(np.sum(b * b)))
    if na == 0.0 or nb == 0.0:
        return 0.0
    r = float(np.sum(a * b)) / (na * nb)
    return min(1.0, max(-1.0, r))


def pearson_many(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Pearson of every row of M against v; matches the scalar path."""
    M, v = _check_matrix(M, v)
    n, w = M.shape
    if w < 2:
        return np.zeros(n)
    if np.all(v == v[0]):
        return np.zeros(n)
    dM = M - M.mean(axis=1, keepdims=True)
    dv = v - v.mean()
    sM = np.sum(dM * dM, axis=1)
    sv = float(np.sum(dv * dv))
    out = np.zeros(n)
    if sv == 0.0:
        return out
    # Same exact constancy test as the scalar path.
    ok = ~np.all(M == M[:, :1], axis=1) & (sM > 0.0)
    out[ok] = (dM[ok] @ dv) / (np.sqrt(sM[ok]) * np.sqrt(sv))
    return np.clip(out, -1.0, 1.0)


def cosine_many(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    M, v = _check_matrix(M, v)
    n = M.shape[0]
    nM = np.sqrt(np.sum(M * M, axis=1))
    nv = float(np.sqrt(np.sum(v * v)))
    out = np.zeros(n)
    if nv == 0.0:
        return out
    ok = nM > 0.0
    out[ok] = (M[ok] @ v) / (nM[ok] * nv)
    return np.clip(out, -1.0, 1.0)


@dataclass(frozen=True)
class AlignmentScores:
    """Per-sample alignment scores computed after ``epoch``."""

    epoch: int
    scores: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in CORRELATION_KINDS:
            raise ValueError(f"unknown correlation kind {self.kind!r}")
        if np.any(np.abs(self.scores) > 1.0 + 1e-12):
            raise ValueError("alignment scores must lie in [-1, 1]")


def alignment_scores(bank: TrajectoryBank, ref: ReferenceTrajectory, kind: str = "pearson") -> AlignmentScores:
    """Score every sample's trajectory against the reference trajectory."""
    if kind not in CORRELATION_KINDS:
        raise ValueError(f"unknown correlation kind {kind!r}")
    if bank.length != ref.length:
        raise ValueError(
            f"trajectory length {bank.length} does not match reference length {ref.length}"
        )
    if bank.length == 0:
        raise ValueError("cannot score empty trajectories")
    M = bank.read_all()
    v = ref.read()
    scores = pearson_many(M, v) if kind == "pearson" else cosine_many(M, v)
    return AlignmentScores(epoch=bank.epochs_recorded, scores=scores, kind=kind)


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("inputs must be 1-D")
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("inputs must be non-empty")
    return a, b


def _check_matrix(M, v) -> tuple[np.ndarray, np.ndarray]:
    M = np.asarray(M, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if M.ndim != 2 or v.ndim != 1:
        raise ValueError("expected a 2-D matrix and a 1-D reference vector")
    if M.shape[1] != v.size:
        raise ValueError(f"row length {M.shape[1]} does not match reference length {v.size}")
    if v.size == 0:
        raise ValueError("inputs must be non-empty")
    return M, v
