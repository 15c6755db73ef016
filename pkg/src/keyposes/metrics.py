"""Evaluation metrics: MPJPE, power-spectrum KL (PSKL) and diversity.

All distances are in millimeters, KL divergences in nats. Frames are
1-based, so ``at_frame=25`` is one second after the present at 25 fps.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Dict, List, Sequence

import numpy as np

from .core import MotionSequence

PSKL_EPS = 1e-8


def _frames(seq) -> np.ndarray:
    return seq.frames if isinstance(seq, MotionSequence) else np.asarray(seq, dtype=np.float64)


def per_frame_mpjpe(pred, gt) -> np.ndarray:
    p, g = _frames(pred), _frames(gt)
    if p.shape[1:] != g.shape[1:]:
        raise ValueError(f"joint layouts differ: {p.shape[1:]} vs {g.shape[1:]}")
    n = min(len(p), len(g))
    return np.linalg.norm(p[:n] - g[:n], axis=-1).mean(axis=-1)


def mpjpe(pred, gt, at_frame: int) -> float:
    p, g = _frames(pred), _frames(gt)
    if not 1 <= at_frame <= min(len(p), len(g)):
        raise ValueError(f"frame {at_frame} out of range 1..{min(len(p), len(g))}")
    return float(per_frame_mpjpe(pred, gt)[at_frame - 1])


def mpjpe_multi(preds: Sequence, gt, at_frame: int) -> Dict[str, float]:
    """``ave``: the prediction with the lowest mean error over the horizon,
    evaluated at ``at_frame``; ``best``: the lowest error at ``at_frame``."""
    if len(preds) == 0:
        raise ValueError("mpjpe_multi needs at least one prediction")
    curves = [per_frame_mpjpe(p, gt) for p in preds]
    for c in curves:
        if at_frame > len(c) or at_frame < 1:
            raise ValueError(f"frame {at_frame} out of range")
    closest = int(np.argmin([c.mean() for c in curves]))
    return {
        "ave_mm": float(curves[closest][at_frame - 1]),
        "best_mm": float(min(c[at_frame - 1] for c in curves)),
    }


def power_spectrum(seq) -> np.ndarray:
    """Normalized power spectrum of each coordinate trajectory, shape ``(3J, T)``.

    An all-zero trajectory gets all of its mass on the zero-frequency bin.
    """
    x = _frames(seq)
    T = len(x)
    if T < 2:
        raise ValueError("power_spectrum needs T >= 2")
    traj = x.reshape(T, -1).T
    power = np.abs(np.fft.fft(traj, axis=1)) ** 2
    total = power.sum(axis=1, keepdims=True)
    flat = total[:, 0] == 0
    power[flat, 0] = 1.0
    total[flat] = 1.0
    return power / total


def kl_divergence(p: np.ndarray, q: np.ndarray, eps: float = PSKL_EPS) -> np.ndarray:
    """KL(p || q) along the last axis after adding ``eps`` and renormalizing."""
    p = np.asarray(p, dtype=np.float64) + eps
    q = np.asarray(q, dtype=np.float64) + eps
    p = p / p.sum(axis=-1, keepdims=True)
    q = q / q.sum(axis=-1, keepdims=True)
    return (p * np.log(p / q)).sum(axis=-1)


def pskl(gt, pred) -> Dict[str, float]:
    """Per-coordinate spectral KL in both directions, averaged over 3J."""
    a, b = _frames(gt), _frames(pred)
    if a.shape != b.shape:
        raise ValueError(f"sequence shapes differ: {a.shape} vs {b.shape}")
    sa, sb = power_spectrum(a), power_spectrum(b)
    return {
        "gt_pred": float(kl_divergence(sa, sb).mean()),
        "pred_gt": float(kl_divergence(sb, sa).mean()),
    }


def pairwise_distances(preds: Sequence) -> List[float]:
    flat = [_frames(p).ravel() for p in preds]
    shapes = {f.shape for f in flat}
    if len(shapes) != 1:
        raise ValueError("all predictions must share one shape")
    return [float(np.linalg.norm(a - b)) for a, b in combinations(flat, 2)]


def diversity(preds: Sequence) -> float:
    if len(preds) < 2:
        raise ValueError("diversity needs at least two sequences")
    return float(np.mean(pairwise_distances(preds)))


@dataclass
class EvalReport:
    mpjpe_at: Dict[str, Dict[str, float]]
    pskl: Dict[str, float]
    diversity: float
    diversity_pairs: List[float] = field(default_factory=list)
    meta: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def pskl_summary(gt_pred: float, pred_gt: float) -> Dict[str, float]:
    return {
        "gt_pred": gt_pred,
        "pred_gt": pred_gt,
        "average": (gt_pred + pred_gt) / 2,
        "difference": abs(gt_pred - pred_gt),
    }


def evaluate(
    gt: MotionSequence,
    preds: Sequence[MotionSequence],
    seconds: Sequence[float] = (1, 5),
) -> EvalReport:
    """Metrics for one observation's sampled futures against its ground truth.

    PSKL is averaged over the predictions; horizons beyond the available
    frames are skipped.
    """
    fps = gt.frame_rate_hz
    mp = {}
    for s in seconds:
        frame = int(round(s * fps))
        if 1 <= frame <= min(gt.T, min(p.T for p in preds)):
            mp[f"{s:g}"] = mpjpe_multi(preds, gt, frame)
    n = min(gt.T, min(p.T for p in preds))
    kls = [pskl(gt.frames[:n], p.frames[:n]) for p in preds]
    pk = pskl_summary(
        float(np.mean([k["gt_pred"] for k in kls])), float(np.mean([k["pred_gt"] for k in kls]))
    )
    pairs = pairwise_distances([p.frames[:n] for p in preds]) if len(preds) > 1 else []
    div = float(np.mean(pairs)) if pairs else 0.0
    return EvalReport(mp, pk, div, pairs, {"kl_units": "nats", "spectral_window": "none", "pskl_eps": PSKL_EPS})
