"""Forecasting future keyposes and rebuilding the motion between them."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .cluster import ClusterModel, LabeledKeypose, representative_duration
from .core import REFERENCE_FPS, MotionSequence, RngState, as_generator
from .io import atomic_write, load_sequence, save_sequence
from .net import KeyposeNet, forward_step
from .tokens import (
    TRAIN_TEMPERATURE,
    category_onehot,
    duration_onehot,
    label_distribution_from_label,
    label_distribution_from_value,
    tempered_softmax,
)

OBS_KEYPOSES = 7
SAMPLE_TEMPERATURE = 0.3


@dataclass(frozen=True)
class Forecast:
    """Predicted keyposes and the interpolated motion.

    ``keyposes[0]`` is the anchor (the last observed keypose, duration 0); the
    rest are predicted ``(label, duration_frames)`` pairs.
    """

    keyposes: Tuple[Tuple[int, int], ...]
    sequence: MotionSequence
    mode: str = "greedy"
    temperature: Optional[float] = None
    seed: Optional[int] = None
    anchor_value: Optional[np.ndarray] = None

    @property
    def predicted(self) -> Tuple[Tuple[int, int], ...]:
        return self.keyposes[1:]

    def __eq__(self, other):
        if not isinstance(other, Forecast):
            return NotImplemented
        same_anchor = (self.anchor_value is None) == (other.anchor_value is None) and (
            self.anchor_value is None or np.array_equal(self.anchor_value, other.anchor_value)
        )
        return (
            tuple(map(tuple, self.keyposes)) == tuple(map(tuple, other.keyposes))
            and self.sequence == other.sequence
            and self.mode == other.mode
            and self.temperature == other.temperature
            and self.seed == other.seed
            and same_anchor
        )

    __hash__ = None


def interpolate_forecast(
    keyposes: Sequence[Tuple[int, int]],
    model: ClusterModel,
    horizon: int,
    anchor_value: Optional[np.ndarray] = None,
    frame_rate_hz: float = REFERENCE_FPS,
) -> MotionSequence:
    """Frames ``1..horizon`` after the anchor keypose at time 0.

    Between keypose ``i`` at time ``t`` and keypose ``i+1`` the pose at
    ``t1`` is ``C_i + (t1 - t) * (C_{i+1} - C_i) / d_{i+1}``. Frames past the
    last keypose repeat its center. ``anchor_value`` replaces the anchor's
    cluster center with a raw pose.
    """
    if len(keyposes) < 2:
        raise ValueError("interpolation needs at least two keyposes")
    if horizon < 1:
        raise ValueError("horizon must be >= 1 frame")
    labels = [int(l) for l, _ in keyposes]
    if any(not 0 <= l < model.K for l in labels):
        raise ValueError("keypose label out of range")
    durations = [int(d) for _, d in keyposes[1:]]
    if any(d < 1 for d in durations):
        raise ValueError("predicted durations must be >= 1 frame")
    poses = [model.centers[l] for l in labels]
    if anchor_value is not None:
        poses[0] = np.asarray(anchor_value, dtype=np.float64)
    times = np.concatenate([[0], np.cumsum(durations)])
    out = np.empty((horizon,) + poses[0].shape)
    seg = 0
    for t1 in range(1, horizon + 1):
        while seg + 1 < len(times) and times[seg + 1] <= t1:
            seg += 1
        if seg + 1 >= len(times):
            out[t1 - 1] = poses[-1]
            continue
        t, d = times[seg], durations[seg]
        out[t1 - 1] = poses[seg] + (t1 - t) * (poses[seg + 1] - poses[seg]) / d
    return MotionSequence(out, frame_rate_hz)


def _pick(logits: np.ndarray, temperature: Optional[float], rng) -> int:
    if temperature is None:
        return int(np.argmax(logits))
    p = tempered_softmax(logits, temperature)
    c = np.cumsum(p)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), len(p) - 1))


def observed_inputs(observed: Sequence[LabeledKeypose], model: ClusterModel, temperature: float) -> np.ndarray:
    rows = []
    for kp in observed:
        L = label_distribution_from_value(kp.value, model, temperature)
        rows.append(np.concatenate([L, duration_onehot(max(kp.duration_frames, 1))]))
    return np.stack(rows)


def rollout(
    net: KeyposeNet,
    observed: Sequence[LabeledKeypose],
    model: ClusterModel,
    horizon_frames: int = 125,
    mode: str = "greedy",
    temperature: float = SAMPLE_TEMPERATURE,
    rng=None,
    token_temperature: float = TRAIN_TEMPERATURE,
    anchor: str = "center",
    n_obs: int = OBS_KEYPOSES,
    seed: Optional[int] = None,
    frame_rate_hz: float = REFERENCE_FPS,
) -> Forecast:
    """Predict keyposes until their durations cover ``horizon_frames``.

    The net is conditioned on the last ``n_obs`` observed keyposes. In
    ``"greedy"`` mode labels and duration buckets are argmaxes; in
    ``"sampled"`` mode both are drawn from the logits re-softmaxed at
    ``temperature``. Each prediction is fed back through the same encoding
    used during training.
    """
    if mode not in ("greedy", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")
    if len(observed) < n_obs:
        raise ValueError(f"need at least {n_obs} observed keyposes, got {len(observed)}")
    if net.K != model.K:
        raise ValueError(f"network K={net.K} does not match cluster model K={model.K}")
    if horizon_frames < 1:
        raise ValueError("horizon_frames must be >= 1")
    if anchor not in ("center", "value"):
        raise ValueError(f"unknown anchor {anchor!r}")
    if mode == "sampled":
        if rng is None:
            raise ValueError("sampled mode needs an rng")
        rng = as_generator(rng)
    temp = temperature if mode == "sampled" else None
    window = list(observed)[-n_obs:]
    hidden = None
    out = None
    for x in observed_inputs(window, model, token_temperature):
        out = forward_step(net, x, hidden)
        hidden = out.hidden
    anchor_label = window[-1].label
    keyposes = [(anchor_label, 0)]
    covered = 0
    while True:
        label = _pick(out.label_logits, temp, rng)
        cat = _pick(out.duration_logits, temp, rng)
        d = representative_duration(cat)
        keyposes.append((label, d))
        covered += d
        if covered >= horizon_frames:
            break
        x = np.concatenate([label_distribution_from_label(label, model, token_temperature), category_onehot(cat)])
        out = forward_step(net, x, hidden)
        hidden = out.hidden
    anchor_value = np.array(window[-1].value) if anchor == "value" else None
    seq = interpolate_forecast(keyposes, model, horizon_frames, anchor_value, frame_rate_hz)
    return Forecast(
        tuple(keyposes), seq, mode, temperature if mode == "sampled" else None, seed, anchor_value
    )


def sample_futures(
    net: KeyposeNet,
    observed: Sequence[LabeledKeypose],
    model: ClusterModel,
    horizon_frames: int = 125,
    n: int = 100,
    temperature: float = SAMPLE_TEMPERATURE,
    seed: int = 0,
    **kwargs,
) -> List[Forecast]:
    """``n`` sampled rollouts, rollout ``i`` drawing from its own stream."""
    if n < 1:
        raise ValueError("n must be >= 1")
    root = RngState(seed, ("futures",))
    return [
        rollout(
            net, observed, model, horizon_frames, "sampled", temperature,
            root.child(i).generator(), seed=seed, **kwargs,
        )
        for i in range(n)
    ]


def entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def save_forecast(forecast: Forecast, path) -> None:
    """Write ``<path>.json`` (keyposes, mode) and ``<path>.csv`` (motion)."""
    path = Path(path)
    meta = {
        "keyposes": [list(map(int, kp)) for kp in forecast.keyposes],
        "mode": forecast.mode,
        "temperature": forecast.temperature,
        "seed": forecast.seed,
        "anchor_value": None if forecast.anchor_value is None else forecast.anchor_value.tolist(),
    }
    save_sequence(forecast.sequence, path.with_suffix(".csv"))
    with atomic_write(path.with_suffix(".json")) as fh:
        json.dump(meta, fh, sort_keys=True)
        fh.write("\n")


def load_forecast(path) -> Forecast:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    seq = load_sequence(path.with_suffix(".csv"))
    anchor = meta.get("anchor_value")
    return Forecast(
        tuple(tuple(kp) for kp in meta["keyposes"]),
        seq,
        meta["mode"],
        meta["temperature"],
        meta["seed"],
        None if anchor is None else np.asarray(anchor, dtype=np.float64),
    )
