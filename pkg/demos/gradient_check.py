"""
Checking backpropagation through time
=====================================

The decoder's gradients are derived by hand, so they are compared here with
central finite differences on a tiny random network.  Both layers, all four
gates and the softmax read-out are covered.
"""

import numpy as np

from brain_decoder import lstm

rng = np.random.default_rng(3)
K, H, S, T = 3, 4, 3, 6
params = lstm.init_params(K, S, H, rng=rng)
f = rng.normal(size=(T, K))
y = rng.integers(0, S, T)

loss, grads = lstm.loss_and_grad(f, y, params)
print(f"loss {loss:.6f}")

step = 1e-5
for name, arr, g in zip(lstm.TENSOR_ORDER, params.arrays(), grads.arrays()):
    worst = 0.0
    for idx in np.ndindex(arr.shape):
        orig = arr[idx]
        arr[idx] = orig + step
        up = lstm.cross_entropy(lstm.forward(f, params)[0], y)
        arr[idx] = orig - step
        down = lstm.cross_entropy(lstm.forward(f, params)[0], y)
        arr[idx] = orig
        num = (up - down) / (2 * step)
        worst = max(worst, abs(num - g[idx]) / max(abs(num), abs(g[idx]), 1e-5))
    print(f"{name:>5}  worst relative error {worst:.2e}")
