"""Keypose-to-keypose recurrent classifier written directly in numpy.

A stack of GRU cells consumes, at every step, a label distribution (K) and a
duration one-hot (5); a linear head on the top hidden state emits K label
logits followed by 5 duration logits. Gradients are computed by explicit
backpropagation through time, all in float64.

GRU convention (per layer, gate order r, z, n)::

    r = sigmoid(Wx_r x + bx_r + Wh_r h + bh_r)
    z = sigmoid(Wx_z x + bx_z + Wh_z h + bh_z)
    n = tanh(Wx_n x + bx_n + r * (Wh_n h + bh_n))
    h' = (1 - z) * n + z * h
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cluster import N_DURATIONS, ModelFormatError
from .core import as_generator
from .io import atomic_write

NET_MAGIC = b"KEYPOSE-NET v1\n"


@dataclass
class KeyposeNet:
    K: int
    H: int
    n_layers: int
    params: Dict[str, np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.K + N_DURATIONS

    @property
    def output_dim(self) -> int:
        return self.K + N_DURATIONS

    def param_names(self) -> List[str]:
        return param_names(self.n_layers)

    def copy(self) -> "KeyposeNet":
        return KeyposeNet(self.K, self.H, self.n_layers, {k: v.copy() for k, v in self.params.items()})

    def zero_hidden(self, batch: Optional[int] = None) -> np.ndarray:
        shape = (self.n_layers, self.H) if batch is None else (self.n_layers, batch, self.H)
        return np.zeros(shape)


def param_names(n_layers: int) -> List[str]:
    names = []
    for l in range(n_layers):
        names += [f"gru{l}.Wx", f"gru{l}.Wh", f"gru{l}.bx", f"gru{l}.bh"]
    return names + ["head.W", "head.b"]


def init_net(K: int, H: int = 512, rng=0, n_layers: int = 3) -> KeyposeNet:
    """Weights uniform in +-1/sqrt(H), biases zero."""
    if K < 1 or H < 1 or n_layers < 1:
        raise ValueError("K, H and n_layers must be positive")
    rng = as_generator(rng)
    bound = 1.0 / math.sqrt(H)
    D = K + N_DURATIONS
    params = {}
    for l in range(n_layers):
        in_dim = D if l == 0 else H
        params[f"gru{l}.Wx"] = rng.uniform(-bound, bound, (3 * H, in_dim))
        params[f"gru{l}.Wh"] = rng.uniform(-bound, bound, (3 * H, H))
        params[f"gru{l}.bx"] = np.zeros(3 * H)
        params[f"gru{l}.bh"] = np.zeros(3 * H)
    params["head.W"] = rng.uniform(-bound, bound, (D, H))
    params["head.b"] = np.zeros(D)
    return KeyposeNet(K, H, n_layers, params)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class StepOutput:
    label_logits: np.ndarray
    duration_logits: np.ndarray
    hidden: np.ndarray
    cache: list = field(default=None, repr=False)


def forward_step(net: KeyposeNet, x: np.ndarray, hidden: Optional[np.ndarray] = None) -> StepOutput:
    """One recurrent step. ``x`` is ``(K+5,)`` or ``(B, K+5)``."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None] if single else x
    if xb.ndim != 2 or xb.shape[1] != net.input_dim:
        raise ValueError(f"input must have last dimension {net.input_dim}, got {x.shape}")
    B, H = xb.shape[0], net.H
    if hidden is None:
        hb = np.zeros((net.n_layers, B, H))
    else:
        hb = np.asarray(hidden, dtype=np.float64)
        if single:
            hb = hb[:, None]
        if hb.shape != (net.n_layers, B, H):
            raise ValueError(f"hidden must have shape {(net.n_layers, B, H)}, got {hb.shape}")
    p = net.params
    new_h = np.empty_like(hb)
    cache = []
    inp = xb
    for l in range(net.n_layers):
        h = hb[l]
        gx = inp @ p[f"gru{l}.Wx"].T + p[f"gru{l}.bx"]
        gh = h @ p[f"gru{l}.Wh"].T + p[f"gru{l}.bh"]
        r = _sigmoid(gx[:, :H] + gh[:, :H])
        z = _sigmoid(gx[:, H : 2 * H] + gh[:, H : 2 * H])
        ghn = gh[:, 2 * H :]
        n = np.tanh(gx[:, 2 * H :] + r * ghn)
        h_new = (1.0 - z) * n + z * h
        cache.append((inp, h, r, z, n, ghn))
        new_h[l] = h_new
        inp = h_new
    logits = inp @ p["head.W"].T + p["head.b"]
    cache.append(inp)
    if single:
        logits, new_h = logits[0], new_h[:, 0]
    return StepOutput(logits[..., : net.K], logits[..., net.K :], new_h, cache)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


Target = Optional[Tuple[np.ndarray, np.ndarray]]


def loss(
    outputs: Sequence[StepOutput],
    targets: Sequence[Target],
    w_labels: float = 1.0,
    w_dur: float = 0.1,
) -> Tuple[float, List[Optional[np.ndarray]]]:
    """Weighted cross-entropy over the supervised steps.

    ``targets[s]`` is ``(labels, categories)`` (scalars or ``(B,)`` arrays) or
    ``None`` for an unsupervised step. Both terms are means over every
    supervised (step, batch element) pair. Returns the loss and the gradient
    with respect to each step's ``K+5`` logits.
    """
    if len(outputs) != len(targets):
        raise ValueError(f"got {len(outputs)} outputs but {len(targets)} targets")
    count = 0
    for out, tgt in zip(outputs, targets):
        if tgt is not None:
            count += np.atleast_2d(out.label_logits).shape[0]
    if count == 0:
        raise ValueError("no supervised steps")
    total = 0.0
    dlogits: List[Optional[np.ndarray]] = []
    for out, tgt in zip(outputs, targets):
        if tgt is None:
            dlogits.append(None)
            continue
        single = np.ndim(out.label_logits) == 1
        zl = np.atleast_2d(out.label_logits)
        zd = np.atleast_2d(out.duration_logits)
        labels = np.atleast_1d(np.asarray(tgt[0], dtype=np.int64))
        cats = np.atleast_1d(np.asarray(tgt[1], dtype=np.int64))
        rows = np.arange(zl.shape[0])
        ll = _log_softmax(zl)
        ld = _log_softmax(zd)
        total += -w_labels * ll[rows, labels].sum() / count
        total += -w_dur * ld[rows, cats].sum() / count
        gl = np.exp(ll)
        gl[rows, labels] -= 1.0
        gd = np.exp(ld)
        gd[rows, cats] -= 1.0
        g = np.concatenate([w_labels * gl, w_dur * gd], axis=1) / count
        dlogits.append(g[0] if single else g)
    return float(total), dlogits


def backward(
    net: KeyposeNet, outputs: Sequence[StepOutput], dlogits: Sequence[Optional[np.ndarray]]
) -> Dict[str, np.ndarray]:
    """Backpropagation through time over an unrolled window.

    Inputs are treated as constants, so steps whose input was chosen by an
    argmax of earlier outputs contribute no gradient through that choice.
    """
    p = net.params
    H, L = net.H, net.n_layers
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    carry = None
    for out, dz in zip(reversed(outputs), reversed(dlogits)):
        cache = out.cache
        top = cache[-1]
        B = top.shape[0]
        if carry is None:
            carry = np.zeros((L, B, H))
        dh_above = np.zeros((B, H))
        if dz is not None:
            dz = np.atleast_2d(dz)
            grads["head.W"] += dz.T @ top
            grads["head.b"] += dz.sum(0)
            dh_above = dz @ p["head.W"]
        new_carry = np.empty_like(carry)
        for l in reversed(range(L)):
            inp, h, r, z, n, ghn = cache[l]
            dh = carry[l] + dh_above
            dn = dh * (1.0 - z)
            dz_gate = dh * (h - n)
            dpre_n = dn * (1.0 - n * n)
            dr = dpre_n * ghn
            dpre_r = dr * r * (1.0 - r)
            dpre_z = dz_gate * z * (1.0 - z)
            dgx = np.concatenate([dpre_r, dpre_z, dpre_n], axis=1)
            dgh = np.concatenate([dpre_r, dpre_z, dpre_n * r], axis=1)
            grads[f"gru{l}.Wx"] += dgx.T @ inp
            grads[f"gru{l}.bx"] += dgx.sum(0)
            grads[f"gru{l}.Wh"] += dgh.T @ h
            grads[f"gru{l}.bh"] += dgh.sum(0)
            new_carry[l] = dh * z + dgh @ p[f"gru{l}.Wh"]
            dh_above = dgx @ p[f"gru{l}.Wx"]
        carry = new_carry
    return grads


def unroll(net: KeyposeNet, inputs: np.ndarray, hidden: Optional[np.ndarray] = None) -> List[StepOutput]:
    """Run the net over fixed ``(S, K+5)`` or ``(S, B, K+5)`` inputs."""
    outputs = []
    for x in inputs:
        out = forward_step(net, x, hidden)
        outputs.append(out)
        hidden = out.hidden
    return outputs


def loss_and_grads(
    net: KeyposeNet,
    inputs: np.ndarray,
    targets: Sequence[Target],
    w_labels: float = 1.0,
    w_dur: float = 0.1,
) -> Tuple[float, Dict[str, np.ndarray]]:
    outputs = unroll(net, inputs)
    value, dlogits = loss(outputs, targets, w_labels, w_dur)
    return value, backward(net, outputs, dlogits)


def scheduled_sampling_prob(i: float, k: float = 10.0) -> float:
    """Inverse-sigmoid decay ``k / (k + exp(i / k))`` of the teacher-forcing rate."""
    if k <= 0:
        raise ValueError("k must be positive")
    if i < 0:
        raise ValueError("i must be non-negative")
    x = i / k
    if x > 700:
        return 0.0
    return k / (k + math.exp(x))


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """Adam with bias correction and decoupled weight decay.

    Returns new parameter and state objects; the inputs are not modified.
    """
    b1, b2 = betas
    t = state.t + 1
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_params, m_new, v_new = {}, {}, {}
    for name in sorted(params):
        w = params[name]
        g = grads[name]
        m = b1 * state.m.get(name, 0.0) + (1.0 - b1) * g
        v = b2 * state.v.get(name, 0.0) + (1.0 - b2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        new_params[name] = w - lr * weight_decay * w - lr * update
        m_new[name] = m
        v_new[name] = v
    return new_params, AdamState(m_new, v_new, t)


def save_net(net: KeyposeNet, path) -> None:
    """Binary checkpoint: magic line, JSON header line, little-endian float64 blobs."""
    names = net.param_names()
    header = {
        "K": net.K,
        "H": net.H,
        "n_layers": net.n_layers,
        "params": [[name, list(net.params[name].shape)] for name in names],
    }
    with atomic_write(path, "wb") as fh:
        fh.write(NET_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for name in names:
            fh.write(np.ascontiguousarray(net.params[name], dtype="<f8").tobytes())


def load_net(path) -> KeyposeNet:
    data = Path(path).read_bytes()
    if not data.startswith(NET_MAGIC):
        raise ModelFormatError(f"{path}: not a keypose network checkpoint (bad magic/version header)")
    rest = data[len(NET_MAGIC) :]
    try:
        line, _, blob = rest.partition(b"\n")
        header = json.loads(line)
        params = {}
        offset = 0
        for name, shape in header["params"]:
            size = int(np.prod(shape)) * 8
            chunk = blob[offset : offset + size]
            if len(chunk) != size:
                raise ValueError("truncated parameter data")
            params[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
            offset += size
        if offset != len(blob):
            raise ValueError("trailing bytes after parameters")
        net = KeyposeNet(int(header["K"]), int(header["H"]), int(header["n_layers"]), params)
    except (ValueError, KeyError, TypeError) as exc:
        raise ModelFormatError(f"{path}: corrupt checkpoint ({exc})") from None
    if sorted(params) != sorted(net.param_names()):
        raise ModelFormatError(f"{path}: checkpoint parameter set does not match its header")
    return net
