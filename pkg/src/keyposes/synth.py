"""Synthetic motion families with analytically known structure.

Each action family moves every joint coordinate along a sinusoid plus a
two-piece linear ramp around a fixed base pose. Sequences of a family share
the template and differ only in Gaussian jitter, so the family mean is the
noiseless template.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .core import REFERENCE_FPS, MotionSequence, as_generator


@dataclass(frozen=True)
class SynthSpec:
    n_actions: int = 2
    seqs_per_action: int = 4
    T: int = 200
    J: int = 5
    noise_std_mm: float = 2.0
    fps: float = REFERENCE_FPS

    def __post_init__(self):
        for name in ("n_actions", "seqs_per_action", "J"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.T < 2:
            raise ValueError("T must be >= 2")
        if self.noise_std_mm < 0:
            raise ValueError("noise_std_mm must be non-negative")


@dataclass(frozen=True)
class FamilyParams:
    """Per-coordinate generator parameters, each shaped ``(J, 3)``."""

    base: np.ndarray
    amplitude: np.ndarray
    freq_hz: np.ndarray
    phase: np.ndarray
    slope_before: np.ndarray
    slope_after: np.ndarray
    breakpoint: int


def draw_family(rng, J: int, T: int) -> FamilyParams:
    rng = as_generator(rng)
    shape = (J, 3)
    return FamilyParams(
        base=rng.uniform(-500.0, 500.0, shape),
        amplitude=rng.uniform(50.0, 250.0, shape),
        freq_hz=rng.uniform(0.2, 1.0, shape),
        phase=rng.uniform(0.0, 2 * np.pi, shape),
        slope_before=rng.uniform(-1.5, 1.5, shape),
        slope_after=rng.uniform(-1.5, 1.5, shape),
        breakpoint=int(rng.integers(T // 4, 3 * T // 4 + 1)),
    )


def family_template(params: FamilyParams, T: int, fps: float = REFERENCE_FPS) -> np.ndarray:
    """Noiseless ``(T, J, 3)`` trajectory of a family."""
    t = np.arange(T, dtype=np.float64)[:, None, None]
    wave = params.amplitude * np.sin(2 * np.pi * params.freq_hz * t / fps + params.phase)
    b = params.breakpoint
    ramp = np.where(
        t < b,
        params.slope_before * t,
        params.slope_before * b + params.slope_after * (t - b),
    )
    return params.base + wave + ramp


def synth_dataset(spec: SynthSpec, rng, return_params: bool = False):
    """Generate ``n_actions * seqs_per_action`` tagged sequences.

    Families are drawn first, then all jitter, so the templates depend only on
    the seed and not on ``seqs_per_action``.
    """
    rng = as_generator(rng)
    families = [draw_family(rng, spec.J, spec.T) for _ in range(spec.n_actions)]
    sequences: List[MotionSequence] = []
    for a, params in enumerate(families):
        template = family_template(params, spec.T, spec.fps)
        for _ in range(spec.seqs_per_action):
            frames = template
            if spec.noise_std_mm > 0:
                frames = template + rng.normal(0.0, spec.noise_std_mm, template.shape)
            sequences.append(MotionSequence(frames, spec.fps, f"action{a}"))
    if return_params:
        return sequences, families
    return sequences
