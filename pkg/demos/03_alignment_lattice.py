"""The alignment lattice: DP loss, brute-force oracle, and exact gradients."""

import numpy as np

from rnnt_fusion import autodiff as ad
from rnnt_fusion import transducer
from rnnt_fusion.cli import random_lattice
from rnnt_fusion.rng import Stream

# A random normalized 3x(2+1)x4 lattice: 3 frames, 2 labels, blank id 3.
lattice = random_lattice(Stream(4, 0), t_len=3, u_len=2, k=4)
print("labels:", lattice.labels, "blank id:", lattice.blank_id)

dp = transducer.rnnt_neg_log_likelihood(lattice)
brute = transducer.enumerate_paths(lattice)
print(f"DP loss          = {float(dp.value):.12f}")
print(f"enumeration loss = {brute:.12f}")
print(f"|difference|     = {abs(float(dp.value) - brute):.2e}")

n_paths = sum(1 for _ in transducer.alignment_paths(3, 2))
print(f"interleavings generated: {n_paths} (binomial(5, 2) = 10)")

# Gradients flow through the recursion; check against finite differences.
grid = ad.parameter(np.array(lattice.grid.value), name="grid")


def loss_fn():
    lat = transducer.LogProbLattice(grid=grid, blank_id=lattice.blank_id,
                                    labels=lattice.labels)
    return transducer.rnnt_neg_log_likelihood(lat)


err = ad.finite_difference_check(loss_fn, [grid], step=1e-5)
print(f"lattice gradient vs finite differences: {err:.2e}")

grads = ad.backward(loss_fn())[grid]
cell = tuple(int(i) for i in np.unravel_index(np.argmax(np.abs(grads)), grads.shape))
print(f"most influential cell (t, u, k) = {cell}, gradient = {grads[cell]:.4f}")
