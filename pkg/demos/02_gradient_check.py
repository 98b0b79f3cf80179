"""Verify the autodiff core against central finite differences.

Assembles a small network touching every layer family used by the models
(convolution, transposed convolution, locally connected, batchnorm,
dropout, dense) and prints the worst relative gradient error per tensor.
"""
import numpy as np

from vimu.nn import LayerSpec, grad_check, init_stack_params

layers = [
    LayerSpec("conv2d", "conv", maps=3, kernel=(3, 3), stride=(1, 1), padding="same"),
    LayerSpec("batchnorm", "bn1"),
    LayerSpec("relu", "act1"),
    LayerSpec("tconv2d", "up", maps=2, kernel=(3, 3), stride=(1, 2),
              padding=(1, 1), output_padding=(0, 1)),
    LayerSpec("leaky_relu", "act2", slope=0.2),
    LayerSpec("locally_connected", "lc", maps=2, kernel=(1, 1), stride=(1, 1)),
    LayerSpec("dropout", "drop", rate=0.3),
    LayerSpec("flatten", "flat"),
    LayerSpec("dense", "head", units=5),
    LayerSpec("softmax", "probs"),
]

in_shape = (2, 4, 3)
params = init_stack_params(layers, in_shape, seed=0, scheme="he", dtype=np.float64)
x = np.random.default_rng(1).standard_normal((3,) + in_shape)

report = grad_check(layers, params, x, tolerance=1e-4)
print(f"checked {params.total_parameters()} parameters plus the input, h = 1e-5 (float64)")
for name, err in sorted(report.max_rel_error.items(), key=lambda kv: -kv[1])[:8]:
    print(f"  {name:18s} max relative error {err:.2e}")
print("passed" if report.passed else "FAILED", f"(tolerance {report.tolerance})")
