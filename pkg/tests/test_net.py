import math

import numpy as np
import pytest

from keyposes.cluster import ModelFormatError
from keyposes.net import (
    AdamState,
    adam_step,
    forward_step,
    init_net,
    load_net,
    loss,
    loss_and_grads,
    save_net,
    scheduled_sampling_prob,
    unroll,
)


def random_net(K, H, n_layers=3, seed=0, scale=0.5):
    net = init_net(K, H, seed, n_layers)
    rng = np.random.default_rng(seed + 1)
    for name in net.params:
        net.params[name] = rng.normal(0, scale, net.params[name].shape)
    return net


def scalar_gru(x, h, Wx, Wh, bx, bh):
    """One GRU step with explicit loops over units."""
    H = len(h)
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    pre = lambda W, b, v, row: b[row] + sum(W[row][i] * v[i] for i in range(len(v)))
    out = []
    for u in range(H):
        r = sig(pre(Wx, bx, x, u) + pre(Wh, bh, h, u))
        z = sig(pre(Wx, bx, x, H + u) + pre(Wh, bh, h, H + u))
        n = math.tanh(pre(Wx, bx, x, 2 * H + u) + r * pre(Wh, bh, h, 2 * H + u))
        out.append((1 - z) * n + z * h[u])
    return out


def finite_difference_check(net, inputs, targets, step=1e-5):
    _, grads = loss_and_grads(net, inputs, targets)
    worst = 0.0
    for name, w in net.params.items():
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + step
            up, _ = loss_and_grads(net, inputs, targets)
            w[idx] = old - step
            down, _ = loss_and_grads(net, inputs, targets)
            w[idx] = old
            fd = (up - down) / (2 * step)
            a = grads[name][idx]
            worst = max(worst, abs(fd - a) / max(abs(fd), abs(a), 1e-7))
    return worst


class TestForward:
    def test_zero_parameters_fixed_point(self):
        net = init_net(4, 8, 0)
        for name in net.params:
            net.params[name][:] = 0
        out = forward_step(net, np.ones(9), net.zero_hidden())
        assert not out.hidden.any()
        assert not out.label_logits.any() and not out.duration_logits.any()

    def test_deterministic(self):
        net = random_net(5, 6)
        x = np.random.default_rng(2).random(10)
        h = np.random.default_rng(3).normal(size=(3, 6))
        a, b = forward_step(net, x, h), forward_step(net, x, h)
        np.testing.assert_array_equal(a.hidden, b.hidden)
        np.testing.assert_array_equal(a.label_logits, b.label_logits)

    def test_hand_sized_cell(self):
        net = random_net(1, 2, n_layers=1, seed=4)
        p = net.params
        x = [0.3, -0.2, 0.5, 0.1, 0.0, 0.9]
        h = [0.25, -0.6]
        expected_h = scalar_gru(x, h, p["gru0.Wx"].tolist(), p["gru0.Wh"].tolist(),
                                p["gru0.bx"].tolist(), p["gru0.bh"].tolist())
        out = forward_step(net, np.array(x), np.array([h]))
        np.testing.assert_allclose(out.hidden[0], expected_h, rtol=1e-13)
        logits = [p["head.b"][k] + sum(p["head.W"][k][u] * expected_h[u] for u in range(2)) for k in range(6)]
        np.testing.assert_allclose(np.concatenate([out.label_logits, out.duration_logits]), logits, rtol=1e-12)

    def test_batched_matches_single(self):
        net = random_net(3, 5)
        xs = np.random.default_rng(0).random((4, 8))
        batched = forward_step(net, xs)
        for b in range(4):
            single = forward_step(net, xs[b])
            np.testing.assert_allclose(batched.label_logits[b], single.label_logits, rtol=1e-12)

    def test_shape_errors(self):
        net = init_net(3, 4, 0)
        with pytest.raises(ValueError):
            forward_step(net, np.zeros(7))
        with pytest.raises(ValueError):
            forward_step(net, np.zeros(8), np.zeros((2, 4)))


class TestLoss:
    def test_confident_correct_is_near_zero(self):
        net = init_net(4, 3, 0, 1)
        out = forward_step(net, np.zeros(9))
        out.label_logits = np.array([100.0, 0, 0, 0])
        out.duration_logits = np.array([0, 0, 100.0, 0, 0])
        value, _ = loss([out], [(0, 2)])
        assert value < 1e-30

    def test_uniform_logits(self):
        net = init_net(7, 3, 0, 1)
        out = forward_step(net, np.zeros(12))
        out.label_logits = np.zeros(7)
        out.duration_logits = np.zeros(5)
        value, _ = loss([out], [(3, 1)], w_labels=1.0, w_dur=0.0)
        assert value == pytest.approx(math.log(7), rel=1e-14)
        value, _ = loss([out], [(3, 1)], w_labels=1.0, w_dur=0.1)
        assert value == pytest.approx(math.log(7) + 0.1 * math.log(5), rel=1e-14)

    def test_length_mismatch(self):
        net = init_net(2, 3, 0, 1)
        out = forward_step(net, np.zeros(7))
        with pytest.raises(ValueError):
            loss([out], [(0, 0), (1, 1)])

    def test_unsupervised_steps_ignored(self):
        net = random_net(4, 5)
        inputs = np.random.default_rng(0).random((3, 9))
        outs = unroll(net, inputs)
        a, _ = loss(outs, [None, (1, 2), None])
        b, _ = loss(outs[1:2], [(1, 2)])
        assert a == pytest.approx(b, rel=1e-15)


class TestGradients:
    def test_single_layer_batch(self):
        net = random_net(3, 4, n_layers=1, seed=7)
        rng = np.random.default_rng(8)
        inputs = rng.random((4, 2, 8))
        targets = [None, (np.array([0, 2]), np.array([1, 4])), (np.array([1, 1]), np.array([0, 0])),
                   (np.array([2, 0]), np.array([3, 2]))]
        assert finite_difference_check(net, inputs, targets) < 1e-4

    def test_three_layer(self):
        net = random_net(4, 8, seed=11)
        rng = np.random.default_rng(12)
        inputs = rng.random((3, 9))
        targets = [(1, 0), (3, 4), (0, 2)]
        assert finite_difference_check(net, inputs, targets) < 1e-4


class TestScheduledSampling:
    def test_values(self):
        assert scheduled_sampling_prob(0, 10) == pytest.approx(10 / 11, abs=1e-15)
        assert scheduled_sampling_prob(10, 10) == pytest.approx(10 / (10 + math.e), abs=1e-15)
        assert scheduled_sampling_prob(10, 10) == pytest.approx(0.7863, abs=1e-4)
        assert scheduled_sampling_prob(1000, 10) < 1e-6

    def test_monotone_decreasing(self):
        vals = [scheduled_sampling_prob(i, 10) for i in range(200)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_errors(self):
        with pytest.raises(ValueError):
            scheduled_sampling_prob(1, 0)


class TestAdam:
    def test_zero_gradient_no_change(self):
        params = {"w": np.array([1.0, -2.0])}
        new, _ = adam_step(params, {"w": np.zeros(2)}, AdamState(), lr=0.1, weight_decay=0.0)
        np.testing.assert_array_equal(new["w"], params["w"])

    def test_first_step_size(self):
        new, state = adam_step({"w": np.array(0.5)}, {"w": np.array(1.0)}, AdamState(), lr=0.1)
        # bias-corrected m/sqrt(v) is exactly 1 on the first step
        assert float(new["w"]) == pytest.approx(0.4, abs=1e-8)
        assert state.t == 1

    def test_zero_lr_unchanged(self):
        params = {"w": np.array([3.0])}
        new, _ = adam_step(params, {"w": np.array([5.0])}, AdamState(), lr=0.0, weight_decay=0.01)
        np.testing.assert_array_equal(new["w"], params["w"])

    def test_decoupled_decay(self):
        params = {"w": np.array([2.0])}
        new, _ = adam_step(params, {"w": np.zeros(1)}, AdamState(), lr=0.1, weight_decay=0.5)
        assert float(new["w"][0]) == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)

    def test_quadratic_bowl(self):
        params, state = {"w": np.array(3.0)}, AdamState()
        for _ in range(2000):
            params, state = adam_step(params, {"w": 2 * params["w"]}, state, lr=0.01)
        assert abs(float(params["w"])) < 1e-3

    def test_inputs_not_modified(self):
        params = {"w": np.array([1.0])}
        adam_step(params, {"w": np.array([1.0])}, AdamState(), lr=0.1)
        assert params["w"][0] == 1.0


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        net = random_net(5, 6)
        save_net(net, tmp_path / "n.kpn")
        back = load_net(tmp_path / "n.kpn")
        assert (back.K, back.H, back.n_layers) == (5, 6, 3)
        for name in net.params:
            np.testing.assert_array_equal(back.params[name], net.params[name])

    def test_bytes_deterministic(self, tmp_path):
        save_net(random_net(3, 4), tmp_path / "a.kpn")
        save_net(random_net(3, 4), tmp_path / "b.kpn")
        assert (tmp_path / "a.kpn").read_bytes() == (tmp_path / "b.kpn").read_bytes()

    def test_bad_magic(self, tmp_path):
        (tmp_path / "n.kpn").write_bytes(b"not a net")
        with pytest.raises(ModelFormatError, match="magic"):
            load_net(tmp_path / "n.kpn")

    def test_truncated(self, tmp_path):
        save_net(random_net(3, 4), tmp_path / "n.kpn")
        data = (tmp_path / "n.kpn").read_bytes()
        (tmp_path / "n.kpn").write_bytes(data[:-16])
        with pytest.raises(ModelFormatError, match="corrupt"):
            load_net(tmp_path / "n.kpn")
