import math

import numpy as np
import pytest

from vimu.nn import AdamState, ParamSet, SgdState, adam_step, sgd_step
from vimu.nn.losses import bce_loss, cross_entropy_loss
from vimu.nn.tensor import Tensor


class TestBce:
    def test_half_probability(self):
        loss = bce_loss(Tensor(np.array([0.5])), np.array([1.0]))
        assert float(loss.data) == pytest.approx(math.log(2.0), rel=1e-9)

    def test_point_nine(self):
        loss = bce_loss(Tensor(np.array([0.9])), np.array([1.0]))
        assert float(loss.data) == pytest.approx(-math.log(0.9), rel=1e-9)

    def test_symmetric_on_zero_target(self):
        loss = bce_loss(Tensor(np.array([0.1])), np.array([0.0]))
        assert float(loss.data) == pytest.approx(-math.log(0.9), rel=1e-9)

    def test_clamped_at_extremes(self):
        loss = bce_loss(Tensor(np.array([0.0])), np.array([1.0]))
        assert np.isfinite(float(loss.data))

    def test_non_binary_target_rejected(self):
        with pytest.raises(ValueError):
            bce_loss(Tensor(np.array([0.5])), np.array([0.3]))


class TestCrossEntropy:
    def test_uniform_is_log_classes(self):
        for g in (2, 4, 9):
            probs = Tensor(np.full((3, g), 1.0 / g))
            loss = cross_entropy_loss(probs, np.array([0, 1, g - 1]))
            assert float(loss.data) == pytest.approx(math.log(g), rel=1e-6)

    def test_label_out_of_range(self):
        probs = Tensor(np.full((2, 3), 1.0 / 3))
        with pytest.raises(ValueError):
            cross_entropy_loss(probs, np.array([0, 3]))

    def test_confident_correct_is_small(self):
        probs = Tensor(np.array([[0.999, 0.0005, 0.0005]]))
        loss = cross_entropy_loss(probs, np.array([0]))
        assert float(loss.data) == pytest.approx(-math.log(0.999), rel=1e-6)


class TestSgdSchedule:
    def test_decay_points(self):
        sched = SgdState()
        assert sched.learning_rate(0) == 0.1
        assert sched.learning_rate(15) == 0.1
        assert sched.learning_rate(16) == 0.01
        assert sched.learning_rate(23) == 0.01
        assert sched.learning_rate(24) == 0.001
        assert sched.learning_rate(27) == 0.001

    def test_full_trace(self):
        sched = SgdState()
        trace = [sched.learning_rate(e) for e in range(28)]
        assert trace == [0.1] * 16 + [0.01] * 8 + [0.001] * 4

    def test_zero_grad_no_motion(self):
        params = ParamSet()
        params.add_param("w", np.ones(3))
        params["w"].grad = np.zeros(3)
        sgd_step(SgdState(), params, epoch=0)
        assert np.array_equal(params["w"].data, np.ones(3))


class TestAdam:
    def test_first_step_magnitude_is_learning_rate(self):
        # single scalar, grad 1: bias-corrected first update is lr / (1 + eps)
        params = ParamSet()
        params.add_param("w", np.array([1.0]))
        params["w"].grad = np.array([1.0])
        state = AdamState(learning_rate=2e-4)
        adam_step(state, params)
        assert float(params["w"].data[0]) == pytest.approx(1.0 - 2e-4, abs=1e-8)

    def test_zero_grad_zero_moments_no_motion(self):
        params = ParamSet()
        params.add_param("w", np.array([3.0, -2.0]))
        params["w"].grad = np.zeros(2)
        adam_step(AdamState(), params)
        assert np.array_equal(params["w"].data, [3.0, -2.0])

    def test_descends_a_quadratic(self):
        params = ParamSet()
        params.add_param("w", np.array([5.0]))
        state = AdamState(learning_rate=0.1)
        for _ in range(200):
            params["w"].grad = 2.0 * params["w"].data
            adam_step(state, params)
        assert abs(float(params["w"].data[0])) < 0.5

    def test_state_tracks_step_count(self):
        params = ParamSet()
        params.add_param("w", np.ones(1))
        params["w"].grad = np.ones(1)
        state = AdamState()
        adam_step(state, params)
        adam_step(state, params)
        assert state.step_count == 2
