"""Build a small graph, differentiate it, and verify against finite differences."""

import numpy as np

from rnnt_fusion import autodiff as ad

# y = sum(tanh(W @ x) * c): two parameters, one constant probe
rng = np.random.default_rng(0)
w = ad.parameter(rng.uniform(-1, 1, (3, 4)), name="w")
x = ad.parameter(rng.uniform(-1, 1, 4), name="x")
probe = ad.constant(rng.uniform(-1, 1, 3))

loss = ad.reduce_sum(ad.hadamard(ad.tanh(ad.matmul(w, x)), probe))
print("loss value:", float(loss.value))

grads = ad.backward(loss)
print("dL/dx:", grads[x])

err = ad.finite_difference_check(
    lambda: ad.reduce_sum(ad.hadamard(ad.tanh(ad.matmul(w, x)), probe)),
    [w, x],
    step=1e-5,
)
print(f"worst relative error vs central differences: {err:.2e}")

# The scale-gradient primitive: forward identity, backward attenuation.
h = ad.parameter(np.array([1.0, -2.0, 3.0]), name="h")
for alpha in (0.0, 0.5, 1.0):
    out = ad.scale_gradient(h, alpha)
    assert out.value is h.value  # the very same array, bit for bit
    g = ad.backward(ad.reduce_sum(out))[h]
    print(f"alpha={alpha}: gradient into h = {g}")
