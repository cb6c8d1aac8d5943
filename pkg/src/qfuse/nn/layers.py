"""Forward/backward primitives over float64 numpy arrays.

Conventions: every tensor carries a leading batch axis, sequence tensors
are (N, L, C), flat tensors (N, D).  Each forward returns (out, cache);
the matching backward consumes the upstream gradient and the cache.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

SQRT2 = np.sqrt(2.0)
INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


# ---------------------------------------------------------------------------
# activations

def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def act_forward(x, fn):
    if fn == "relu":
        return np.maximum(x, 0.0), (fn, x)
    if fn == "tanh":
        y = np.tanh(x)
        return y, (fn, y)
    if fn == "sigmoid":
        y = 1.0 / (1.0 + np.exp(-x))
        return y, (fn, y)
    if fn == "gelu":
        y = 0.5 * x * (1.0 + erf(x / SQRT2))
        return y, (fn, x)
    if fn == "identity":
        return x, (fn, None)
    raise ValueError(f"unknown activation {fn!r}")


def act_backward(dy, cache):
    fn, saved = cache
    if fn == "relu":
        return dy * (saved > 0.0)
    if fn == "tanh":
        return dy * (1.0 - saved ** 2)
    if fn == "sigmoid":
        return dy * saved * (1.0 - saved)
    if fn == "gelu":
        x = saved
        cdf = 0.5 * (1.0 + erf(x / SQRT2))
        pdf = INV_SQRT_2PI * np.exp(-0.5 * x ** 2)
        return dy * (cdf + x * pdf)
    return dy


# ---------------------------------------------------------------------------
# dense

def dense_forward(x, W, b):
    return x @ W + b, (x,)


def dense_backward(dy, cache, W):
    (x,) = cache
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    dW = x2.T @ dy2
    db = dy2.sum(axis=0)
    dx = dy @ W.T
    return dx, dW, db


# ---------------------------------------------------------------------------
# dilated 1-d convolution

def conv1d_pads(length, kernel, stride, dilation, padding):
    if padding == "same":
        out_len = -(-length // stride)
        total = max((out_len - 1) * stride + (kernel - 1) * dilation + 1 - length, 0)
        return out_len, total // 2, total - total // 2
    span = (kernel - 1) * dilation + 1
    return (length - span) // stride + 1, 0, 0


def conv1d_forward(x, W, b, stride=1, dilation=1, padding="same"):
    n, length, _ = x.shape
    kernel = W.shape[0]
    out_len, left, right = conv1d_pads(length, kernel, stride, dilation, padding)
    xp = np.pad(x, ((0, 0), (left, right), (0, 0))) if (left or right) else x
    out = np.broadcast_to(b, (n, out_len, b.shape[0])).copy()
    for j in range(kernel):
        sl = xp[:, j * dilation: j * dilation + stride * (out_len - 1) + 1: stride, :]
        out += sl @ W[j]
    return out, (xp, left, length, stride, dilation)


def conv1d_backward(dy, cache, W):
    xp, left, length, stride, dilation = cache
    kernel = W.shape[0]
    out_len = dy.shape[1]
    dxp = np.zeros_like(xp)
    dW = np.zeros_like(W)
    for j in range(kernel):
        start = j * dilation
        stop = start + stride * (out_len - 1) + 1
        sl = xp[:, start:stop:stride, :]
        dW[j] = np.einsum("nlc,nlf->cf", sl, dy)
        dxp[:, start:stop:stride, :] += dy @ W[j].T
    db = dy.sum(axis=(0, 1))
    dx = dxp[:, left:left + length, :]
    return dx, dW, db


# ---------------------------------------------------------------------------
# GRU (returns the final hidden state)

def gru_forward(x, params):
    n, length, _ = x.shape
    H = params["bz"].shape[0]
    h = np.zeros((n, H))
    steps = []
    for t in range(length):
        xt = x[:, t, :]
        z = 1.0 / (1.0 + np.exp(-(xt @ params["Wz"] + h @ params["Uz"] + params["bz"])))
        r = 1.0 / (1.0 + np.exp(-(xt @ params["Wr"] + h @ params["Ur"] + params["br"])))
        rh = r * h
        c = np.tanh(xt @ params["Wh"] + rh @ params["Uh"] + params["bh"])
        h_new = (1.0 - z) * h + z * c
        steps.append((xt, h, z, r, rh, c))
        h = h_new
    return h, (steps, x.shape)


def gru_backward(dh, cache, params):
    steps, x_shape = cache
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    dx = np.zeros(x_shape)
    for t in range(len(steps) - 1, -1, -1):
        xt, h_prev, z, r, rh, c = steps[t]
        dz = dh * (c - h_prev)
        dc = dh * z
        dh_prev = dh * (1.0 - z)
        da = dc * (1.0 - c ** 2)
        grads["Wh"] += xt.T @ da
        grads["Uh"] += rh.T @ da
        grads["bh"] += da.sum(axis=0)
        dxt = da @ params["Wh"].T
        drh = da @ params["Uh"].T
        dr = drh * h_prev
        dh_prev += drh * r
        dzp = dz * z * (1.0 - z)
        grads["Wz"] += xt.T @ dzp
        grads["Uz"] += h_prev.T @ dzp
        grads["bz"] += dzp.sum(axis=0)
        dxt += dzp @ params["Wz"].T
        dh_prev += dzp @ params["Uz"].T
        drp = dr * r * (1.0 - r)
        grads["Wr"] += xt.T @ drp
        grads["Ur"] += h_prev.T @ drp
        grads["br"] += drp.sum(axis=0)
        dxt += drp @ params["Wr"].T
        dh_prev += drp @ params["Ur"].T
        dx[:, t, :] = dxt
        dh = dh_prev
    return dx, grads


# ---------------------------------------------------------------------------
# joins and pooling

def add_forward(xs):
    out = xs[0].copy()
    for x in xs[1:]:
        out += x
    return out, len(xs)


def add_backward(dy, n_inputs):
    return [dy] * n_inputs


def concat_forward(xs):
    return np.concatenate(xs, axis=-1), [x.shape[-1] for x in xs]


def concat_backward(dy, widths):
    return list(np.split(dy, np.cumsum(widths)[:-1], axis=-1))


def global_avg_pool_forward(x):
    return x.mean(axis=1), x.shape


def global_avg_pool_backward(dy, x_shape):
    return np.broadcast_to(dy[:, None, :], x_shape) / x_shape[1]


def avgpool1d_bins(in_len, out_len):
    edges = [(k * in_len) // out_len for k in range(out_len + 1)]
    return [(edges[k], edges[k + 1]) for k in range(out_len)]


def avgpool1d_forward(x, out_len):
    bins = avgpool1d_bins(x.shape[1], out_len)
    out = np.stack([x[:, a:b, :].mean(axis=1) for a, b in bins], axis=1)
    return out, (x.shape, bins)


def avgpool1d_backward(dy, cache):
    x_shape, bins = cache
    dx = np.zeros(x_shape)
    for k, (a, b) in enumerate(bins):
        dx[:, a:b, :] += dy[:, k, None, :] / (b - a)
    return dx


def repeat1d_forward(x, out_len):
    idx = (np.arange(out_len) * x.shape[1]) // out_len
    return x[:, idx, :], (x.shape, idx)


def repeat1d_backward(dy, cache):
    x_shape, idx = cache
    dx = np.zeros(x_shape)
    np.add.at(dx, (slice(None), idx, slice(None)), dy)
    return dx


def dropout_forward(x, rate, rng, train):
    if not train or rate == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dy, mask):
    return dy if mask is None else dy * mask


def reshape_forward(x, target):
    return x.reshape((x.shape[0],) + tuple(target)), x.shape


def reshape_backward(dy, x_shape):
    return dy.reshape(x_shape)


# ---------------------------------------------------------------------------
# attention pooling over the channel axis (regions)

def attention_pool_forward(x, v):
    """x: (N, L, C).  Scores one scalar per channel via the learned time
    projection v (a bias would be softmax-shift-invariant, so none),
    softmax over channels, then pools channels: out (N, L).  The softmax
    weights (N, C) are the exposed per-region attention."""
    scores = np.einsum("nlc,l->nc", x, v)
    alpha = softmax(scores, axis=1)
    pooled = np.einsum("nlc,nc->nl", x, alpha)
    return pooled, alpha, (x, alpha)


def attention_pool_backward(dy, cache, v):
    x, alpha = cache
    dalpha = np.einsum("nl,nlc->nc", dy, x)
    dx = np.einsum("nl,nc->nlc", dy, alpha)
    ds = alpha * (dalpha - (dalpha * alpha).sum(axis=1, keepdims=True))
    dv = np.einsum("nc,nlc->l", ds, x)
    dx += np.einsum("nc,l->nlc", ds, v)
    return dx, dv


# ---------------------------------------------------------------------------
# layer norm (over the last axis)

LN_EPS = 1e-5


def layer_norm_forward(x, gamma, beta):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return gamma * xhat + beta, (xhat, inv)


def layer_norm_backward(dy, cache, gamma):
    xhat, inv = cache
    axes = tuple(range(dy.ndim - 1))
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dxhat = dy * gamma
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgamma, dbeta


# ---------------------------------------------------------------------------
# loss

def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch; returns (loss, dlogits)."""
    p = softmax(logits, axis=1)
    n = logits.shape[0]
    eps = np.finfo(float).tiny
    loss = -np.log(p[np.arange(n), labels] + eps).mean()
    dlogits = p.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n
