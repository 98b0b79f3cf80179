"""Central finite-difference verification of analytic gradients.

The checker re-evaluates the forward closure with each coordinate nudged by
+/- h in float64 and compares against the recorded backward pass. Any
randomness inside the closure (dropout masks) must be re-seeded identically
on every call so the function under test is deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import ParamSet, run_stack
from .tensor import Tensor, sum_all

# Relative error denominator floor: coordinates whose gradients are tiny on
# both sides are compared on an absolute scale of 1e-4 instead.
_DENOM_FLOOR = 1e-4


@dataclass
class GradCheckReport:
    tolerance: float
    max_rel_error: dict
    passed: bool

    def worst(self) -> float:
        return max(self.max_rel_error.values()) if self.max_rel_error else 0.0


def finite_difference_check(make_loss, tensors: dict, h: float = 1e-5, tolerance: float = 1e-4) -> GradCheckReport:
    """Compare analytic and numeric gradients for every tensor in ``tensors``.

    ``make_loss`` rebuilds the scalar loss from the current tensor data;
    ``tensors`` maps names to leaf Tensors (float64) that the closure reads.
    """
    for name, t in tensors.items():
        if t.data.dtype != np.float64:
            raise ValueError(f"gradient check requires float64 tensors ({name})")
    loss = make_loss()
    for t in tensors.values():
        t.grad = None
    loss.backward()
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in tensors.items()
    }
    errors = {}
    for name, t in tensors.items():
        flat = t.data.ravel()
        num = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(make_loss().data)
            flat[i] = orig - h
            f_minus = float(make_loss().data)
            flat[i] = orig
            num[i] = (f_plus - f_minus) / (2.0 * h)
        a = analytic[name].ravel()
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), _DENOM_FLOOR)
        errors[name] = float(np.max(np.abs(a - num) / denom)) if flat.size else 0.0
    passed = all(e < tolerance for e in errors.values())
    return GradCheckReport(tolerance=tolerance, max_rel_error=errors, passed=passed)


def grad_check(layers, params: ParamSet, input_array, tolerance: float = 1e-4,
               mode: str = "train", dropout_seed: int = 7) -> GradCheckReport:
    """Finite-difference check of a layer stack against sum-of-outputs loss.

    Runs in float64 with frozen dropout masks (the rng is re-created with
    ``dropout_seed`` on every evaluation) and without touching batchnorm
    running statistics. The input participates as a checked tensor too.
    """
    p64 = params.astype(np.float64)
    x = Tensor(np.asarray(input_array, dtype=np.float64), requires_grad=True)

    def make_loss():
        rng = np.random.default_rng(dropout_seed)
        out = run_stack(layers, p64, x, mode=mode, rng=rng, update_stats=False)
        return sum_all(out)

    tensors = {"input": x}
    tensors.update({name: t for name, t in p64.trainable()})
    return finite_difference_check(make_loss, tensors, tolerance=tolerance)
