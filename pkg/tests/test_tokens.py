import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from keyposes.cluster import ClusterModel
from keyposes.tokens import (
    duration_onehot,
    label_distribution_from_label,
    label_distribution_from_value,
    label_distribution_table,
    normalize_proximity,
    proximity_vector,
    tempered_softmax,
)


class TestProximity:
    def test_zero_on_own_center(self, rng):
        model = ClusterModel(rng.normal(0, 100, (8, 3, 3)))
        prox = proximity_vector(model.centers[3], model)
        assert prox[3] == 0
        assert np.all(np.delete(prox, 3) < 0)

    def test_345_triangle(self):
        model = ClusterModel([[[3.0, 4.0, 0.0]]])
        assert proximity_vector(np.zeros((1, 3)), model)[0] == -5.0

    def test_matches_definition(self, rng):
        model = ClusterModel(rng.normal(0, 100, (12, 5, 3)))
        value = rng.normal(0, 100, (5, 3))
        expected = [
            -sum(math.dist(value[j], c[j]) for j in range(5)) / 5 for c in model.centers
        ]
        np.testing.assert_allclose(proximity_vector(value, model), expected, rtol=1e-12)


class TestLabelDistribution:
    def test_argmax_on_center(self, line_model):
        for l in range(line_model.K):
            p = label_distribution_from_value(line_model.centers[l], line_model)
            assert int(np.argmax(p)) == l

    def test_symmetric_pair(self):
        model = ClusterModel([[[-10.0, 0, 0]], [[10.0, 0, 0]]])
        p = label_distribution_from_value(np.zeros((1, 3)), model, 0.03)
        np.testing.assert_allclose(p, [0.5, 0.5], atol=1e-15)

    def test_softmax_stage(self):
        p = tempered_softmax(np.array([0.0, -1.0]), 1.0)
        expected = np.array([1.0, math.exp(-1)]) / (1 + math.exp(-1))
        np.testing.assert_allclose(p, expected, rtol=1e-14)
        assert p[0] == pytest.approx(0.731, abs=5e-4)
        assert p[1] == pytest.approx(0.269, abs=5e-4)

    def test_normalization_unit_mean_magnitude(self, rng):
        prox = -np.abs(rng.normal(0, 300, 20))
        assert np.mean(np.abs(normalize_proximity(prox))) == pytest.approx(1.0)
        assert not normalize_proximity(np.zeros(3)).any()

    def test_from_label_matches_from_value(self, line_model):
        for l in range(line_model.K):
            np.testing.assert_array_equal(
                label_distribution_from_label(l, line_model, 0.03),
                label_distribution_from_value(line_model.centers[l], line_model, 0.03, 0.0),
            )
        table = label_distribution_table(line_model, 0.03)
        np.testing.assert_array_equal(table[2], label_distribution_from_label(2, line_model))

    def test_single_cluster(self):
        model = ClusterModel([[[1.0, 2.0, 3.0]]])
        np.testing.assert_array_equal(label_distribution_from_label(0, model), [1.0])

    def test_label_out_of_range(self, line_model):
        with pytest.raises(ValueError):
            label_distribution_from_label(6, line_model)

    def test_bad_temperature(self, line_model):
        with pytest.raises(ValueError):
            label_distribution_from_value(line_model.centers[0], line_model, 0.0)

    def test_noise_needs_rng_and_is_reproducible(self, line_model):
        v = line_model.centers[1] + 7.0
        with pytest.raises(ValueError):
            label_distribution_from_value(v, line_model, 0.03, 0.1)
        a = label_distribution_from_value(v, line_model, 1.0, 0.1, np.random.default_rng(1))
        b = label_distribution_from_value(v, line_model, 1.0, 0.1, np.random.default_rng(1))
        c = label_distribution_from_value(v, line_model, 1.0, 0.0)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_noiseless_is_deterministic(self, line_model, rng):
        v = rng.normal(0, 200, (1, 3))
        np.testing.assert_array_equal(
            label_distribution_from_value(v, line_model), label_distribution_from_value(v, line_model)
        )

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(1e-3, 10.0), st.floats(0.0, 1.0))
    def test_is_distribution(self, seed, temperature, noise):
        rng = np.random.default_rng(seed)
        model = ClusterModel(rng.normal(0, 200, (9, 2, 3)))
        p = label_distribution_from_value(rng.normal(0, 200, (2, 3)), model, temperature, noise, rng)
        assert np.all(np.isfinite(p)) and np.all(p >= 0)
        assert abs(p.sum() - 1) < 1e-9

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(1e-3, 10.0))
    def test_argmax_invariant_to_temperature(self, seed, temperature):
        rng = np.random.default_rng(seed)
        model = ClusterModel(rng.normal(0, 200, (9, 2, 3)))
        v = rng.normal(0, 200, (2, 3))
        assert np.argmax(label_distribution_from_value(v, model, temperature)) == np.argmax(
            label_distribution_from_value(v, model, 1.0)
        )

    def test_cold_limit(self, rng):
        model = ClusterModel(rng.normal(0, 200, (9, 2, 3)))
        p = label_distribution_from_value(rng.normal(0, 200, (2, 3)), model, 1e-4)
        assert p.max() > 0.999


class TestDurationOnehot:
    @pytest.mark.parametrize("d,vec", [
        (3, [1, 0, 0, 0, 0]), (12, [0, 0, 1, 0, 0]), (26, [0, 0, 0, 0, 1]), (7, [0, 1, 0, 0, 0]),
        (20, [0, 0, 0, 1, 0]),
    ])
    def test_onehot(self, d, vec):
        assert duration_onehot(d).tolist() == vec

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            duration_onehot(0)
