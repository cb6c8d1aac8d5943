"""Central finite-difference verification of analytic gradients.

The loss is a fixed random projection of the model output, so every
output element contributes.  Errors are reported per tensor as
||analytic - numeric|| / max(||analytic||, ||numeric||, tiny).
"""

from __future__ import annotations

import numpy as np

FD_STEP = 1e-5


def rel_err(a, n):
    na, nn = np.linalg.norm(a), np.linalg.norm(n)
    return np.linalg.norm(a - n) / max(na, nn, 1e-8)


def numeric_grad(loss_fn, arr, step=FD_STEP):
    """Central differences w.r.t. every element of ``arr`` (mutated and
    restored in place); loss_fn() must read the current value of arr."""
    g = np.zeros_like(arr, dtype=float)
    flat = arr.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        hi = loss_fn()
        flat[i] = keep - step
        lo = loss_fn()
        flat[i] = keep
        gf[i] = (hi - lo) / (2.0 * step)
    return g


def check_network(net, x, seed=0):
    """Max relative gradient error over all parameters and the input of a
    Network (or any model with the same protocol) on batch ``x``."""
    rng = np.random.default_rng(seed)
    out0, _ = net.forward(x, train=False)
    proj = rng.standard_normal(out0.shape)

    def loss_fn():
        out, _ = net.forward(x, train=False)
        return float((out * proj).sum())

    out, cache = net.forward(x, train=False)
    grads, dx = net.backward(proj, cache)
    worst = 0.0
    for nid, name, arr in net.param_items():
        num = numeric_grad(loss_fn, arr)
        worst = max(worst, rel_err(grads[nid][name], num))
    x_arr = np.asarray(x, dtype=float)

    def loss_fn_x():
        out, _ = net.forward(x_arr, train=False)
        return float((out * proj).sum())

    num_dx = numeric_grad(loss_fn_x, x_arr)
    worst = max(worst, rel_err(dx, num_dx))
    return worst


def check_function(forward, backward, arrays, seed=0):
    """Generic checker: ``forward(arrays) -> out``, ``backward(dout) ->
    grads aligned with arrays``.  forward must re-read arrays each call."""
    rng = np.random.default_rng(seed)
    proj = rng.standard_normal(forward().shape)

    def loss_fn():
        return float((forward() * proj).sum())

    analytic = backward(proj)
    worst = 0.0
    for arr, a in zip(arrays, analytic):
        num = numeric_grad(loss_fn, arr)
        worst = max(worst, rel_err(a, num))
    return worst
