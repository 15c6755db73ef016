"""Keypose extraction by recursive splitting of linear-interpolation segments.

Starting from the first and last frame, a segment is split at the frame whose
pose is farthest (mean per-joint Euclidean distance) from the straight-line
reconstruction, until the mean error over the segment's frames drops to the
threshold. Frame indices are 1-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .core import MotionSequence

ORACLE_MAX_T = 20


@dataclass(frozen=True)
class Keypose:
    frame_index: int
    value: np.ndarray


@dataclass(frozen=True)
class KeyposeTrack:
    keyposes: Tuple[Keypose, ...]
    source_length: int
    threshold_mm: float
    frame_rate_hz: float = 25.0
    action: str = None

    def __post_init__(self):
        object.__setattr__(self, "keyposes", tuple(self.keyposes))
        idx = self.frame_indices
        if len(idx) < 2:
            raise ValueError("a keypose track needs at least two keyposes")
        if idx[0] != 1 or idx[-1] != self.source_length:
            raise ValueError("first and last frames must be keyposes")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("keypose frame indices must be strictly increasing")

    @property
    def frame_indices(self) -> List[int]:
        return [k.frame_index for k in self.keyposes]

    @property
    def values(self) -> np.ndarray:
        return np.stack([k.value for k in self.keyposes])

    def __len__(self) -> int:
        return len(self.keyposes)


def _line(start: np.ndarray, end: np.ndarray, n: int) -> np.ndarray:
    """``n + 1`` evenly spaced poses from ``start`` to ``end`` inclusive."""
    w = (np.arange(n + 1, dtype=np.float64) / n)[:, None, None]
    line = start + w * (end - start)
    line[-1] = end
    return line


def _interpolate(frames_at_keys: np.ndarray, keys: np.ndarray, T: int) -> np.ndarray:
    """Piecewise-affine interpolation of ``(I, J, 3)`` key values onto frames 1..T."""
    out = np.empty((T,) + frames_at_keys.shape[1:])
    for i in range(len(keys) - 1):
        a, b = keys[i] - 1, keys[i + 1] - 1
        out[a : b + 1] = _line(frames_at_keys[i], frames_at_keys[i + 1], b - a)
    return out


def reconstruct(track: KeyposeTrack) -> MotionSequence:
    keys = np.asarray(track.frame_indices, dtype=np.int64)
    frames = _interpolate(track.values, keys, track.source_length)
    return MotionSequence(frames, track.frame_rate_hz, track.action)


def _segment_errors(frames: np.ndarray, a: int, b: int) -> np.ndarray:
    """Per-frame pose errors on 0-based inclusive segment [a, b]."""
    line = _line(frames[a], frames[b], b - a)
    return np.linalg.norm(frames[a : b + 1] - line, axis=-1).mean(axis=-1)


def extract_keyposes(seq: MotionSequence, threshold_mm: float) -> KeyposeTrack:
    """Select keyposes so every segment's mean reconstruction error <= threshold."""
    T = seq.T
    if T < 2:
        raise ValueError(f"keypose extraction needs T >= 2, got {T}")
    if not threshold_mm > 0:
        raise ValueError("threshold_mm must be positive")
    frames = seq.frames
    keys = {0, T - 1}
    stack = [(0, T - 1)]
    while stack:
        a, b = stack.pop()
        if b - a < 2:
            continue
        err = _segment_errors(frames, a, b)
        if err.mean() <= threshold_mm:
            continue
        t = a + int(np.argmax(err))  # first maximum on ties
        keys.add(t)
        stack.append((t, b))
        stack.append((a, t))
    return _make_track(seq, sorted(keys), threshold_mm)


def _make_track(seq: MotionSequence, keys0: List[int], threshold_mm: float) -> KeyposeTrack:
    return KeyposeTrack(
        tuple(Keypose(k + 1, seq.frames[k].copy()) for k in keys0),
        seq.T,
        float(threshold_mm),
        seq.frame_rate_hz,
        seq.action,
    )


def oracle_extract(seq: MotionSequence, threshold_mm: float) -> KeyposeTrack:
    """Reference implementation of :func:`extract_keyposes` for short sequences.

    Recomputes the whole reconstruction with scalar arithmetic after every
    insertion and rescans all segments; cost grows quickly with T, so it is
    limited to T <= 20.
    """
    T = seq.T
    if T < 2:
        raise ValueError(f"keypose extraction needs T >= 2, got {T}")
    if T > ORACLE_MAX_T:
        raise ValueError(f"oracle_extract is limited to T <= {ORACLE_MAX_T}, got {T}")
    P = seq.frames.tolist()
    J = len(P[0])
    keys = [1, T]
    while True:
        recon = []
        for t in range(1, T + 1):
            hi = next(i for i, k in enumerate(keys) if k >= t)
            k1 = keys[hi]
            k0 = keys[hi - 1] if k1 > t else k1
            if k0 == k1:
                recon.append(P[t - 1])
                continue
            w = (t - k0) / (k1 - k0)
            recon.append(
                [[P[k0 - 1][j][c] + w * (P[k1 - 1][j][c] - P[k0 - 1][j][c]) for c in range(3)]
                 for j in range(J)]
            )
        err = []
        for t in range(T):
            total = 0.0
            for j in range(J):
                d = [P[t][j][c] - recon[t][j][c] for c in range(3)]
                total += math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
            err.append(total / J)
        for k in keys:
            err[k - 1] = 0.0
        split = None
        for k0, k1 in zip(keys, keys[1:]):
            seg = err[k0 - 1 : k1]
            if sum(seg) / len(seg) > threshold_mm:
                best = k0
                for t in range(k0, k1 + 1):
                    if err[t - 1] > err[best - 1]:
                        best = t
                split = best
                break
        if split is None:
            break
        keys = sorted(keys + [split])
    return _make_track(seq, [k - 1 for k in keys], threshold_mm)


def segment_mean_errors(seq: MotionSequence, track: KeyposeTrack) -> List[float]:
    """Mean pose error over each inter-keypose segment, endpoints included."""
    recon = reconstruct(track).frames
    err = np.linalg.norm(seq.frames - recon, axis=-1).mean(axis=-1)
    idx = track.frame_indices
    return [float(err[a - 1 : b].mean()) for a, b in zip(idx, idx[1:])]
