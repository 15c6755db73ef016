"""Turning keyposes into the network's input distributions.

A keypose value becomes a distribution over cluster labels: its proximity to
every center (negative mean per-joint distance, mm) is rescaled to unit mean
magnitude, optionally perturbed with Gaussian noise during training, and
passed through a tempered softmax. Durations become one-hot vectors over the
five duration buckets.
"""

from __future__ import annotations

import numpy as np

from .cluster import N_DURATIONS, ClusterModel, categorize_duration, center_distances
from .core import as_generator

TRAIN_TEMPERATURE = 0.03


def proximity_vector(value: np.ndarray, model: ClusterModel) -> np.ndarray:
    return -center_distances(model, value)


def normalize_proximity(prox: np.ndarray) -> np.ndarray:
    """Divide by the mean absolute proximity so values are O(1).

    A vector of all zeros (every center coincides with the value) is returned
    unchanged.
    """
    prox = np.asarray(prox, dtype=np.float64)
    scale = np.mean(np.abs(prox))
    if scale == 0:
        return prox.copy()
    return prox / scale


def tempered_softmax(logits: np.ndarray, temperature: float) -> np.ndarray:
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def label_distribution_from_value(
    value: np.ndarray,
    model: ClusterModel,
    temperature: float = TRAIN_TEMPERATURE,
    noise_std: float = 0.0,
    rng=None,
) -> np.ndarray:
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    prox = normalize_proximity(proximity_vector(value, model))
    if noise_std > 0:
        if rng is None:
            raise ValueError("noise_std > 0 requires an rng")
        prox = prox + as_generator(rng).normal(0.0, noise_std, prox.shape)
    return tempered_softmax(prox, temperature)


def label_distribution_from_label(
    label: int, model: ClusterModel, temperature: float = TRAIN_TEMPERATURE
) -> np.ndarray:
    if not 0 <= label < model.K:
        raise ValueError(f"label {label} out of range for K={model.K}")
    return label_distribution_from_value(model.centers[label], model, temperature)


def label_distribution_table(model: ClusterModel, temperature: float = TRAIN_TEMPERATURE) -> np.ndarray:
    """Row ``l`` is ``label_distribution_from_label(l, model, temperature)``."""
    return np.stack([label_distribution_from_label(l, model, temperature) for l in range(model.K)])


def duration_onehot(d: int) -> np.ndarray:
    out = np.zeros(N_DURATIONS)
    out[categorize_duration(d)] = 1.0
    return out


def category_onehot(c: int) -> np.ndarray:
    out = np.zeros(N_DURATIONS)
    out[int(c)] = 1.0
    return out
