#!/usr/bin/env python3
"""Verify the engine's analytic gradients against central finite
differences, op by op, then through a whole tiny network."""

import numpy as np

from artifact.nn import (BNParams, batch_norm, batch_norm_backward, conv2d,
                         conv2d_backward, max_relative_error, mse_loss,
                         numerical_gradient, relu, relu_backward, xavier_init)
from artifact.unet import NetworkSpec, build_network

rng = np.random.default_rng(0)

x = rng.normal(size=(1, 2, 6, 6))
p = xavier_init((3, 3, 2, 4), seed=1, dtype=np.float64)
out, cache = conv2d(x, p)
w = rng.normal(size=out.shape)
dx, dw, db = conv2d_backward(w, cache)
num = numerical_gradient(lambda v: float(np.sum(conv2d(v, p)[0] * w)), x.copy())
print(f"conv3x3  dx  max rel err: {max_relative_error(dx, num):.2e}")

bn = BNParams(np.array([1.5, 0.5]), np.array([0.1, -0.2]))
xb = rng.normal(size=(2, 2, 5, 5))
ob, cb = batch_norm(xb, bn, "train")
wb = rng.normal(size=ob.shape)
dxb, _, _ = batch_norm_backward(wb, cb)
num = numerical_gradient(lambda v: float(np.sum(
    batch_norm(v, BNParams(np.array([1.5, 0.5]), np.array([0.1, -0.2])),
               "train")[0] * wb)), xb.copy())
print(f"batchnorm dx max rel err: {max_relative_error(dxb, num):.2e}")

xr = rng.normal(size=(1, 2, 4, 4)) + 0.1   # keep clear of the kink
orr, cr = relu(xr)
wr = rng.normal(size=orr.shape)
num = numerical_gradient(lambda v: float(np.sum(relu(v)[0] * wr)), xr.copy())
print(f"relu      dx max rel err: {max_relative_error(relu_backward(wr, cr), num):.2e}")

# End to end: loss gradient w.r.t. every parameter of a small network.
net = build_network(NetworkSpec(2, 2, 2, (8, 8)), seed=3, dtype=np.float64)
xi = rng.normal(size=(2, 1, 8, 8))
yi = rng.normal(size=(2, 1, 8, 8))
_, g = mse_loss(net.forward(xi, mode="train"), yi)
net.backward(g)
grads = net.gradients()
worst = 0.0
for name, param in net.parameters().items():
    def f(v, param=param):
        old = param.copy()
        param[...] = v
        loss, _ = mse_loss(net.forward(xi, mode="train"), yi)
        param[...] = old
        return loss
    num = numerical_gradient(f, param.copy(), h=1e-5)
    worst = max(worst, max_relative_error(grads[name], num, floor=1e-6))
print(f"tiny network, all {len(grads)} parameter tensors: "
      f"worst rel err {worst:.2e}")
