"""Training the keypose network on windows of labeled, pruned tracks.

Each window holds ``obs + pred`` consecutive keyposes. The first ``obs``
steps are fed from the true keypose values (noisy label distributions). On
the remaining steps the network is fed either the ground truth (teacher
forcing, probability ``eps`` from the inverse-sigmoid schedule) or its own
argmax label and duration re-encoded exactly as at inference time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .cluster import ClusterModel, LabeledKeypose, categorize_duration
from .core import RngState
from .net import (
    AdamState,
    KeyposeNet,
    adam_step,
    backward,
    forward_step,
    loss,
    scheduled_sampling_prob,
)
from .tokens import label_distribution_table, normalize_proximity, proximity_vector, tempered_softmax

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 0.01
    batch_size: int = 64
    epochs: int = 100
    w_labels: float = 1.0
    w_dur: float = 0.1
    obs_keyposes: int = 7
    pred_keyposes: int = 12
    sched_k: float = 10.0
    sched_by: str = "epoch"
    teacher_forcing: str = "scheduled"
    past_supervision: bool = True
    train_temperature: float = 0.03
    noise_std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("batch_size", "epochs", "obs_keyposes", "pred_keyposes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("train_temperature", "sched_k"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lr", "weight_decay", "w_labels", "w_dur", "noise_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.sched_by not in ("epoch", "iteration"):
            raise ValueError("sched_by must be 'epoch' or 'iteration'")
        if self.teacher_forcing not in ("scheduled", "always", "never"):
            raise ValueError("teacher_forcing must be 'scheduled', 'always' or 'never'")

    @property
    def window(self) -> int:
        return self.obs_keyposes + self.pred_keyposes


@dataclass(frozen=True)
class Window:
    """``length`` consecutive keyposes of one track, starting at ``start``."""

    track: int
    start: int
    labels: np.ndarray
    categories: np.ndarray
    prox: np.ndarray


class _Corpus:
    """Precomputed per-keypose quantities shared by all windows."""

    def __init__(self, tracks: Sequence[Sequence[LabeledKeypose]], model: ClusterModel, cfg: TrainConfig):
        self.windows: List[Window] = []
        L = cfg.window
        for ti, track in enumerate(tracks):
            if len(track) < L:
                raise ValueError(f"track {ti} has {len(track)} keyposes, need at least {L}")
            prox = np.stack([normalize_proximity(proximity_vector(kp.value, model)) for kp in track])
            labels = np.array([kp.label for kp in track], dtype=np.int64)
            # a track's first keypose has no predecessor; encode it as the shortest bucket
            cats = np.array([categorize_duration(max(kp.duration_frames, 1)) for kp in track], dtype=np.int64)
            for s in range(len(track) - L + 1):
                self.windows.append(Window(ti, s, labels[s : s + L], cats[s : s + L], prox[s : s + L]))


def make_windows(tracks, model: ClusterModel, cfg: TrainConfig) -> List[Window]:
    return _Corpus(tracks, model, cfg).windows


@dataclass
class EpochStats:
    epoch: int
    loss: float
    eps: float
    tf_draws: int
    tf_count: int
    score: float

    @property
    def tf_rate(self) -> float:
        return self.tf_count / self.tf_draws if self.tf_draws else float("nan")


@dataclass
class TrainResult:
    net: KeyposeNet
    final_net: KeyposeNet
    history: List[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_score: float = float("-inf")


def _encode(cfg: TrainConfig, windows: Sequence[Window], step: int, noise: Optional[np.ndarray]):
    prox = np.stack([w.prox[step] for w in windows])
    if noise is not None:
        prox = prox + noise
    L = tempered_softmax(prox, cfg.train_temperature)
    D = np.zeros((len(windows), 5))
    D[np.arange(len(windows)), [w.categories[step] for w in windows]] = 1.0
    return np.concatenate([L, D], axis=1)


def _self_inputs(table: np.ndarray, out) -> np.ndarray:
    labels = np.argmax(out.label_logits, axis=-1)
    cats = np.argmax(out.duration_logits, axis=-1)
    D = np.zeros((len(labels), 5))
    D[np.arange(len(labels)), cats] = 1.0
    return np.concatenate([table[labels], D], axis=1)


def run_window_batch(
    net: KeyposeNet,
    windows: Sequence[Window],
    table: np.ndarray,
    cfg: TrainConfig,
    eps: float,
    rngs: Optional[Sequence[np.random.Generator]] = None,
    input_log: Optional[list] = None,
):
    """Unroll ``net`` over a batch of windows.

    With ``rngs`` (one generator per window) the training-time behaviour is
    used: noisy observed/teacher tokens and Bernoulli(eps) teacher forcing.
    Without ``rngs`` tokens are noise-free and ``eps`` must be 0 or 1.

    Returns ``(outputs, targets, tf_draws, tf_count)``.
    """
    B = len(windows)
    obs, L = cfg.obs_keyposes, cfg.window
    K = net.K
    noise = coins = None
    if rngs is not None:
        noise = np.zeros((B, L, K))
        coins = np.zeros((B, L), dtype=bool)
        for b, g in enumerate(rngs):
            if cfg.noise_std > 0:
                noise[b] = g.normal(0.0, cfg.noise_std, (L, K))
            coins[b, obs:] = g.random(L - obs) < eps
    elif eps not in (0.0, 1.0):
        raise ValueError("deterministic unrolls need eps of 0 or 1")
    outputs = []
    targets = []
    hidden = None
    tf_draws = tf_count = 0
    prev = None
    for s in range(L - 1):
        if s < obs:
            x = _encode(cfg, windows, s, None if noise is None else noise[:, s])
            source = np.array(["observed"] * B)
        else:
            teach = coins[:, s] if coins is not None else np.full(B, eps == 1.0)
            tf_draws += B
            tf_count += int(teach.sum())
            x = _self_inputs(table, prev)
            if teach.any():
                xt = _encode(cfg, windows, s, None if noise is None else noise[:, s])
                x[teach] = xt[teach]
            source = np.where(teach, "teacher", "self")
        if input_log is not None:
            input_log.append((s, source, x.copy()))
        out = forward_step(net, x, hidden)
        hidden = out.hidden
        prev = out
        outputs.append(out)
        supervised = s >= obs - 1 or cfg.past_supervision
        tgt = (np.array([w.labels[s + 1] for w in windows]), np.array([w.categories[s + 1] for w in windows]))
        targets.append(tgt if supervised else None)
    return outputs, targets, tf_draws, tf_count


def rollout_accuracy(net: KeyposeNet, windows: Sequence[Window], table: np.ndarray, cfg: TrainConfig) -> float:
    """Free-running next-label top-1 accuracy over the prediction steps."""
    if not windows:
        return float("nan")
    correct = total = 0
    for i in range(0, len(windows), max(cfg.batch_size, 256)):
        batch = windows[i : i + max(cfg.batch_size, 256)]
        outputs, targets, _, _ = run_window_batch(net, batch, table, cfg, 0.0)
        for s in range(cfg.obs_keyposes - 1, cfg.window - 1):
            pred = np.argmax(outputs[s].label_logits, axis=-1)
            correct += int((pred == targets[s][0]).sum())
            total += len(batch)
    return correct / total


def teacher_forcing_prob(cfg: TrainConfig, index: int) -> float:
    if cfg.teacher_forcing == "always":
        return 1.0
    if cfg.teacher_forcing == "never":
        return 0.0
    return scheduled_sampling_prob(index, cfg.sched_k)


def train(
    net: KeyposeNet,
    tracks: Sequence[Sequence[LabeledKeypose]],
    model: ClusterModel,
    cfg: TrainConfig,
    val_tracks: Optional[Sequence[Sequence[LabeledKeypose]]] = None,
    input_log: Optional[list] = None,
) -> TrainResult:
    """Train ``net`` (not modified) and return the best and final networks.

    Model selection uses free-running next-label accuracy on ``val_tracks``,
    or on the training windows when no validation split is given.
    """
    if net.K != model.K:
        raise ValueError(f"network K={net.K} does not match cluster model K={model.K}")
    windows = make_windows(tracks, model, cfg)
    if not windows:
        raise ValueError("training set is empty")
    val_windows = make_windows(val_tracks, model, cfg) if val_tracks else windows
    table = label_distribution_table(model, cfg.train_temperature)
    root = RngState(cfg.seed, ("train",))
    params = {k: v.copy() for k, v in net.params.items()}
    state = AdamState()
    current = KeyposeNet(net.K, net.H, net.n_layers, params)
    result = TrainResult(net=current.copy(), final_net=current)
    iteration = 0
    for epoch in range(cfg.epochs):
        order = root.child("order", epoch).generator().permutation(len(windows))
        losses, draws, count = [], 0, 0
        eps = teacher_forcing_prob(cfg, epoch)
        for bstart in range(0, len(order), cfg.batch_size):
            idx = order[bstart : bstart + cfg.batch_size]
            if cfg.sched_by == "iteration":
                eps = teacher_forcing_prob(cfg, iteration)
            batch = [windows[i] for i in idx]
            rngs = [root.child("window", epoch, int(i)).generator() for i in idx]
            outputs, targets, d, c = run_window_batch(current, batch, table, cfg, eps, rngs, input_log)
            draws += d
            count += c
            value, dlogits = loss(outputs, targets, cfg.w_labels, cfg.w_dur)
            grads = backward(current, outputs, dlogits)
            current.params, state = adam_step(current.params, grads, state, cfg.lr, cfg.weight_decay)
            losses.append(value * len(batch))
            iteration += 1
        score = rollout_accuracy(current, val_windows, table, cfg)
        stats = EpochStats(epoch, float(sum(losses) / len(windows)), eps, draws, count, score)
        result.history.append(stats)
        log.info("epoch %d loss %.5f eps %.3f score %.4f", epoch, stats.loss, eps, score)
        if score > result.best_score:
            result.best_score = score
            result.best_epoch = epoch
            result.net = current.copy()
    result.final_net = current
    return result
