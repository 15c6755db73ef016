"""Keypose vocabulary: k-means centers, labels, pruning and duration buckets."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Sequence

import numpy as np

from .core import as_generator
from .extract import Keypose, KeyposeTrack
from .io import atomic_write

MODEL_MAGIC = "KEYPOSE-CLUSTERS v1"


class ModelFormatError(ValueError):
    """A model or checkpoint file failed its magic/version check."""


class DurationCategory(enum.IntEnum):
    VERY_SHORT = 0
    SHORT = 1
    MEDIUM = 2
    LONG = 3
    VERY_LONG = 4


REPRESENTATIVE_FRAMES = {
    DurationCategory.VERY_SHORT: 3,
    DurationCategory.SHORT: 6,
    DurationCategory.MEDIUM: 12,
    DurationCategory.LONG: 16,
    DurationCategory.VERY_LONG: 25,
}
N_DURATIONS = len(DurationCategory)


def categorize_duration(d: int) -> DurationCategory:
    """Bucket a keypose duration in frames.

    Bucket edges: <=4, 5-10, 11-14, 15-25, >25. Note that 25, the very-long
    representative, itself falls in the long bucket.
    """
    if d < 1:
        raise ValueError(f"duration must be >= 1 frame, got {d}")
    if d <= 4:
        return DurationCategory.VERY_SHORT
    if d <= 10:
        return DurationCategory.SHORT
    if d <= 14:
        return DurationCategory.MEDIUM
    if d <= 25:
        return DurationCategory.LONG
    return DurationCategory.VERY_LONG


def representative_duration(c) -> int:
    return REPRESENTATIVE_FRAMES[DurationCategory(c)]


@dataclass(frozen=True)
class ClusterModel:
    """``K`` cluster centers, shaped ``(K, J, 3)``."""

    centers: np.ndarray
    inertia_history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        centers = np.array(self.centers, dtype=np.float64)
        if centers.ndim != 3 or centers.shape[2] != 3 or centers.shape[0] < 1:
            raise ValueError(f"centers must have shape (K, J, 3), got {centers.shape}")
        if not np.all(np.isfinite(centers)):
            raise ValueError("cluster centers must be finite")
        centers.setflags(write=False)
        object.__setattr__(self, "centers", centers)

    @property
    def K(self) -> int:
        return self.centers.shape[0]

    @property
    def J(self) -> int:
        return self.centers.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ClusterModel):
            return NotImplemented
        return np.array_equal(self.centers, other.centers)

    __hash__ = None


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _inertia(X: np.ndarray, C: np.ndarray, labels: np.ndarray) -> float:
    diff = X - C[labels]
    return float((diff * diff).sum())


def _kmeans_pp(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = [X[rng.integers(n)]]
    closest = _sq_dists(X, centers[0][None])[:, 0]
    for _ in range(1, K):
        total = closest.sum()
        if total <= 0:
            # every point already coincides with a center
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(X[idx])
        closest = np.minimum(closest, _sq_dists(X, X[idx][None])[:, 0])
    return np.array(centers)


def kmeans_fit(
    keyposes: Sequence[np.ndarray],
    K: int,
    rng,
    max_iters: int = 300,
    tol: float = 1e-6,
) -> ClusterModel:
    """Lloyd's algorithm on flattened poses with k-means++ seeding.

    The objective is the squared Euclidean distance of the flattened ``3J``
    vectors, so the mean update is optimal and inertia never increases. An
    emptied cluster is moved onto the point farthest from its assigned center.
    """
    if len(keyposes) == 0:
        raise ValueError("kmeans_fit needs at least one keypose")
    poses = np.asarray(np.stack([np.asarray(p, dtype=np.float64) for p in keyposes]))
    n = len(poses)
    if K < 1:
        raise ValueError("K must be >= 1")
    if n < K:
        raise ValueError(f"kmeans_fit needs at least K={K} points, got {n}")
    X = poses.reshape(n, -1)
    rng = as_generator(rng)
    C = _kmeans_pp(X, K, rng)
    history = []
    for _ in range(max_iters):
        d = _sq_dists(X, C)
        labels = d.argmin(1)
        history.append(_inertia(X, C, labels))
        new_C = C.copy()
        counts = np.bincount(labels, minlength=K)
        sums = np.zeros_like(C)
        np.add.at(sums, labels, X)
        filled = counts > 0
        new_C[filled] = sums[filled] / counts[filled, None]
        for k in np.flatnonzero(~filled):
            dist_to_own = d[np.arange(n), labels]
            far = int(np.argmax(dist_to_own))
            new_C[k] = X[far]
            labels[far] = k
            d[far] = _sq_dists(X[far][None], new_C)[0]
        shift = float(np.max(np.linalg.norm(new_C - C, axis=1)))
        C = new_C
        if shift < tol:
            break
    history.append(_inertia(X, C, _sq_dists(X, C).argmin(1)))
    return ClusterModel(C.reshape(K, *poses.shape[1:]), tuple(history))


def center_distances(model: ClusterModel, pose: np.ndarray) -> np.ndarray:
    """Mean per-joint Euclidean distance from ``pose`` to every center."""
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape != model.centers.shape[1:]:
        raise ValueError(f"pose shape {pose.shape} does not match centers {model.centers.shape[1:]}")
    return np.linalg.norm(model.centers - pose, axis=-1).mean(axis=-1)


def assign_label(model: ClusterModel, pose: np.ndarray) -> int:
    # argmin returns the first index on ties
    return int(np.argmin(center_distances(model, pose)))


@dataclass(frozen=True)
class LabeledKeypose:
    keypose: Keypose
    label: int
    duration_frames: int

    @property
    def frame_index(self) -> int:
        return self.keypose.frame_index

    @property
    def value(self) -> np.ndarray:
        return self.keypose.value


def label_track(model: ClusterModel, track: KeyposeTrack) -> List[LabeledKeypose]:
    out = []
    prev = None
    for kp in track.keyposes:
        d = 0 if prev is None else kp.frame_index - prev
        out.append(LabeledKeypose(kp, assign_label(model, kp.value), d))
        prev = kp.frame_index
    return out


def prune_track(track: Sequence[LabeledKeypose]) -> List[LabeledKeypose]:
    """Drop interior keyposes whose label matches both neighbours.

    Applied to a fixpoint, this keeps only the first and last keypose of every
    run of equal labels; durations are recomputed from the survivors.
    """
    track = list(track)
    n = len(track)
    keep = [
        i
        for i in range(n)
        if i in (0, n - 1)
        or track[i].label != track[i - 1].label
        or track[i].label != track[i + 1].label
    ]
    out = []
    for j, i in enumerate(keep):
        d = 0 if j == 0 else track[i].frame_index - track[keep[j - 1]].frame_index
        out.append(replace(track[i], duration_frames=d))
    return out


def save_model(model: ClusterModel, path) -> None:
    with atomic_write(path) as fh:
        fh.write(f"{MODEL_MAGIC}\n")
        fh.write(f"K={model.K}\nJ={model.J}\n")
        for center in model.centers:
            fh.write(" ".join(repr(float(v)) for v in center.ravel()) + "\n")


def load_model(path) -> ClusterModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: not a cluster model (bad magic/version header)")
    try:
        K = int(lines[1].split("=", 1)[1])
        J = int(lines[2].split("=", 1)[1])
        rows = [[float(v) for v in ln.split()] for ln in lines[3 : 3 + K]]
        centers = np.array(rows, dtype=np.float64).reshape(K, J, 3)
    except (IndexError, ValueError) as exc:
        raise ModelFormatError(f"{path}: corrupt cluster model ({exc})") from None
    return ClusterModel(centers)
