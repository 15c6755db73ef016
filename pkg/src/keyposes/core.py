"""Domain types shared by every stage of the pipeline.

Poses are stored as ``(J, 3)`` float64 arrays in millimeters and sequences as
``(T, J, 3)`` arrays. Global rotation and translation are assumed to have
been removed by whoever produced the data.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

REFERENCE_FPS = 25.0


def as_pose(values) -> np.ndarray:
    """Coerce ``values`` into a finite ``(J, 3)`` float64 array."""
    pose = np.asarray(values, dtype=np.float64)
    if pose.ndim == 1 and pose.size % 3 == 0:
        pose = pose.reshape(-1, 3)
    if pose.ndim != 2 or pose.shape[1] != 3 or pose.shape[0] < 1:
        raise ValueError(f"pose must have shape (J, 3), got {pose.shape}")
    if not np.all(np.isfinite(pose)):
        raise ValueError("pose coordinates must be finite")
    return pose


def pose_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Mean over joints of the Euclidean distance between two poses."""
    return float(np.mean(np.linalg.norm(np.asarray(a) - np.asarray(b), axis=-1)))


@dataclass(frozen=True)
class MotionSequence:
    """An ordered run of poses sampled at a fixed frame rate.

    Attributes:
        frames: ``(T, J, 3)`` joint positions in millimeters.
        frame_rate_hz: sampling rate, 25 Hz for the reference data.
        action: optional action tag.
    """

    frames: np.ndarray
    frame_rate_hz: float = REFERENCE_FPS
    action: Optional[str] = None

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[2] != 3:
            raise ValueError(f"frames must have shape (T, J, 3), got {frames.shape}")
        if frames.shape[0] < 1 or frames.shape[1] < 1:
            raise ValueError("a sequence needs at least one frame and one joint")
        if not np.all(np.isfinite(frames)):
            raise ValueError("frame coordinates must be finite")
        if not self.frame_rate_hz > 0:
            raise ValueError("frame_rate_hz must be positive")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def J(self) -> int:
        return self.frames.shape[1]

    def __len__(self) -> int:
        return self.T

    def __eq__(self, other) -> bool:
        if not isinstance(other, MotionSequence):
            return NotImplemented
        return (
            self.frames.shape == other.frames.shape
            and bool(np.array_equal(self.frames, other.frames))
            and self.frame_rate_hz == other.frame_rate_hz
            and self.action == other.action
        )

    __hash__ = None

    def slice(self, start: int, stop: int) -> "MotionSequence":
        """Frames ``start..stop-1`` (0-based, Python slice semantics)."""
        return MotionSequence(self.frames[start:stop], self.frame_rate_hz, self.action)

    def seconds_to_frames(self, seconds: float) -> int:
        return int(round(seconds * self.frame_rate_hz))


@dataclass(frozen=True)
class RngState:
    """Seed plus a stream path; every derived stream is reproducible.

    ``RngState(7).child("train", 3).generator()`` always yields the same
    sequence of draws, independent of what other streams consumed.
    """

    seed: int
    stream: tuple = field(default=())

    def child(self, *keys) -> "RngState":
        return RngState(self.seed, self.stream + tuple(keys))

    def generator(self) -> np.random.Generator:
        spawn_key = tuple(_stream_key(k) for k in self.stream)
        seq = np.random.SeedSequence(self.seed & (2**64 - 1), spawn_key=spawn_key)
        return np.random.Generator(np.random.PCG64(seq))


def _stream_key(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & (2**32 - 1)
    # unsalted, unlike hash(), so streams survive interpreter restarts
    return zlib.crc32(str(key).encode("utf-8"))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an RngState or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngState):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngState(int(rng)).generator()
    raise TypeError(f"cannot build a random generator from {type(rng).__name__}")
