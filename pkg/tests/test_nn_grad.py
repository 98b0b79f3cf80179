"""Finite-difference spot checks per layer kind (the acceptance module runs
the full randomized sweep)."""
import numpy as np
import pytest

from vimu.nn import LayerSpec, Tensor, finite_difference_check, grad_check, init_stack_params
from vimu.nn.losses import bce_loss, cross_entropy_loss, generator_adversarial_loss
from vimu.nn import tensor as T


def _check_stack(layers, in_shape, batch=3, seed=0, mode="train"):
    params = init_stack_params(layers, in_shape, seed=seed, dtype=np.float64)
    x = np.random.default_rng(seed + 100).standard_normal((batch,) + tuple(in_shape))
    report = grad_check(layers, params, x, mode=mode)
    assert report.passed, report.max_rel_error
    return report


def test_conv2d_gradients():
    _check_stack([LayerSpec("conv2d", "c", maps=3, kernel=(3, 3), stride=(1, 1), padding="same")], (2, 5, 4))
    _check_stack([LayerSpec("conv2d", "c", maps=2, kernel=(3, 3), stride=(3, 3))], (1, 7, 9))


def test_tconv2d_gradients():
    _check_stack(
        [LayerSpec("tconv2d", "t", maps=3, kernel=(3, 3), stride=(1, 2), padding=(1, 1), output_padding=(0, 1))],
        (2, 4, 3),
    )


def test_locally_connected_gradients():
    _check_stack([LayerSpec("locally_connected", "l", maps=2, kernel=(1, 1), stride=(1, 1))], (3, 3, 4))
    _check_stack([LayerSpec("locally_connected", "l", maps=2, kernel=(2, 2), stride=(2, 2))], (2, 4, 4))


def test_dense_gradients():
    _check_stack([LayerSpec("flatten", "f"), LayerSpec("dense", "d", units=5)], (2, 3, 3))


def test_batchnorm_train_mode_gradients():
    _check_stack([LayerSpec("batchnorm", "bn")], (3, 4, 2), batch=4)
    _check_stack([LayerSpec("flatten", "f"), LayerSpec("batchnorm", "bn")], (5,), batch=6)


def test_dropout_frozen_mask_gradients():
    _check_stack(
        [LayerSpec("dropout", "d", rate=0.35), LayerSpec("flatten", "f"), LayerSpec("dense", "fc", units=3)],
        (2, 3, 3),
    )


def test_activation_gradients():
    for kind in ("relu", "leaky_relu", "tanh", "sigmoid"):
        _check_stack([LayerSpec(kind, "a"), LayerSpec("flatten", "f")], (2, 3, 2))
    _check_stack([LayerSpec("flatten", "f"), LayerSpec("dense", "d", units=4), LayerSpec("softmax", "s")], (3, 2, 2))


def test_bce_loss_gradients():
    rng = np.random.default_rng(7)
    logits = Tensor(rng.standard_normal((6, 1)), requires_grad=True)
    target = (rng.random(6) > 0.5).astype(float)[:, None]

    def make_loss():
        return bce_loss(T.sigmoid_act(logits), target)

    report = finite_difference_check(make_loss, {"logits": logits})
    assert report.passed, report.max_rel_error


def test_cross_entropy_gradients():
    rng = np.random.default_rng(8)
    logits = Tensor(rng.standard_normal((5, 4)), requires_grad=True)
    labels = rng.integers(0, 4, size=5)

    def make_loss():
        return cross_entropy_loss(T.softmax_rows(logits), labels)

    report = finite_difference_check(make_loss, {"logits": logits})
    assert report.passed, report.max_rel_error


def test_generator_loss_gradients_both_variants():
    rng = np.random.default_rng(9)
    for variant in ("nonsaturating", "minimax"):
        logits = Tensor(rng.standard_normal((6, 1)), requires_grad=True)

        def make_loss():
            return generator_adversarial_loss(T.sigmoid_act(logits), variant)

        report = finite_difference_check(make_loss, {"logits": logits})
        assert report.passed, (variant, report.max_rel_error)


def test_concat_input_gradients():
    rng = np.random.default_rng(10)
    a = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
    b = Tensor(rng.standard_normal((2, 4)), requires_grad=True)

    def make_loss():
        return T.sum_all(T.tanh_act(T.concat([a, b], axis=1)))

    report = finite_difference_check(make_loss, {"a": a, "b": b})
    assert report.passed, report.max_rel_error


def test_identity_network_has_zero_error():
    layers = [LayerSpec("flatten", "f")]
    params = init_stack_params(layers, (2, 2), seed=0, dtype=np.float64)
    x = np.random.default_rng(11).standard_normal((2, 2, 2))
    report = grad_check(layers, params, x)
    assert report.worst() == pytest.approx(0.0, abs=1e-9)


def test_gradcheck_catches_wrong_gradients(monkeypatch):
    # sanity of the oracle itself: corrupt one backward rule and expect a failure
    original = T.tanh_act

    def broken(x):
        y = np.tanh(x.data)

        def bwd(g):
            T._accum(x, g * (1.0 - y * y) * 1.5)

        return Tensor(y, parents=(x,), backward_fn=bwd)

    monkeypatch.setattr(T, "tanh_act", broken)
    rng = np.random.default_rng(12)
    x = Tensor(rng.standard_normal((3, 3)), requires_grad=True)

    def make_loss():
        return T.sum_all(T.tanh_act(x))

    report = finite_difference_check(make_loss, {"x": x})
    monkeypatch.setattr(T, "tanh_act", original)
    assert not report.passed
