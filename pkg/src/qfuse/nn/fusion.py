"""Multi-head self-attention fusion over a short sequence of stream tokens.

Pre-norm block: tokens are layer-normalised, mixed by h-head scaled
dot-product attention (scores divided by sqrt(per-head dim)), projected
back and added to the input, then pushed through a two-layer GeLU FNN and
a linear classification head on the flattened token outputs.  The
per-head attention matrices are cached for interpretability.
"""

from __future__ import annotations

import numpy as np

from .layers import (act_backward, act_forward, layer_norm_backward,
                     layer_norm_forward, softmax)


class ShapeMismatchError(Exception):
    pass


class TokenDimMismatchError(ShapeMismatchError):
    pass


def glorot(rng, fan_in, fan_out, shape):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


def init_fusion_params(rng, token_dim, n_tokens, heads=4,
                       ffn_hidden=(512, 256), classes=2):
    if token_dim % heads != 0:
        raise ShapeMismatchError(
            f"token dim {token_dim} not divisible by {heads} heads")
    dh = token_dim // heads
    f1, f2 = ffn_hidden
    p = {
        "ln_gamma": np.ones(token_dim),
        "ln_beta": np.zeros(token_dim),
        "Wq": glorot(rng, token_dim, dh, (heads, token_dim, dh)),
        "Wk": glorot(rng, token_dim, dh, (heads, token_dim, dh)),
        "Wv": glorot(rng, token_dim, dh, (heads, token_dim, dh)),
        "Wo": glorot(rng, heads * dh, token_dim, (heads * dh, token_dim)),
        "bo": np.zeros(token_dim),
        "W1": glorot(rng, token_dim, f1, (token_dim, f1)),
        "b1": np.zeros(f1),
        "W2": glorot(rng, f1, f2, (f1, f2)),
        "b2": np.zeros(f2),
        "Wc": glorot(rng, n_tokens * f2, classes, (n_tokens * f2, classes)),
        "bc": np.zeros(classes),
    }
    return p


def fusion_forward(tokens, params):
    """tokens: (N, n, token_dim) -> (logits, cache).

    cache["attention"] holds the per-head attention weights (N, h, n, n);
    entry [.., i, j] is the mass query token i places on token j.
    """
    if tokens.ndim != 3:
        raise ShapeMismatchError(f"expected (N, n, d) tokens, got {tokens.shape}")
    n_batch, n_tok, dm = tokens.shape
    if dm != params["ln_gamma"].shape[0]:
        raise TokenDimMismatchError(
            f"token dim {dm} does not match head built for {params['ln_gamma'].shape[0]}")
    heads, _, dh = params["Wq"].shape
    scale = 1.0 / np.sqrt(dh)

    a, ln_cache = layer_norm_forward(tokens, params["ln_gamma"], params["ln_beta"])
    q = np.einsum("nsd,hdk->nhsk", a, params["Wq"])
    k = np.einsum("nsd,hdk->nhsk", a, params["Wk"])
    v = np.einsum("nsd,hdk->nhsk", a, params["Wv"])
    scores = np.einsum("nhsk,nhtk->nhst", q, k) * scale
    attn = softmax(scores, axis=-1)
    o = np.einsum("nhst,nhtk->nhsk", attn, v)
    mcat = o.transpose(0, 2, 1, 3).reshape(n_batch, n_tok, heads * dh)
    m = mcat @ params["Wo"] + params["bo"]
    u = tokens + m
    z1 = u @ params["W1"] + params["b1"]
    z2, gelu_cache = act_forward(z1, "gelu")
    z3 = z2 @ params["W2"] + params["b2"]
    flat = z3.reshape(n_batch, -1)
    logits = flat @ params["Wc"] + params["bc"]
    cache = {
        "ln": ln_cache, "a": a, "q": q, "k": k, "v": v, "attention": attn,
        "mcat": mcat, "u": u, "gelu": gelu_cache, "z2": z2, "flat": flat,
        "scale": scale, "shape": (n_batch, n_tok, dm, heads, dh),
    }
    return logits, cache


def fusion_backward(dlogits, cache, params):
    n_batch, n_tok, dm, heads, dh = cache["shape"]
    grads = {}
    flat = cache["flat"]
    grads["Wc"] = flat.T @ dlogits
    grads["bc"] = dlogits.sum(axis=0)
    dz3 = (dlogits @ params["Wc"].T).reshape(n_batch, n_tok, -1)
    z2 = cache["z2"]
    grads["W2"] = z2.reshape(-1, z2.shape[-1]).T @ dz3.reshape(-1, dz3.shape[-1])
    grads["b2"] = dz3.sum(axis=(0, 1))
    dz2 = dz3 @ params["W2"].T
    dz1 = act_backward(dz2, cache["gelu"])
    u = cache["u"]
    grads["W1"] = u.reshape(-1, dm).T @ dz1.reshape(-1, dz1.shape[-1])
    grads["b1"] = dz1.sum(axis=(0, 1))
    du = dz1 @ params["W1"].T
    dtokens = du.copy()                      # residual path
    dm_out = du
    mcat = cache["mcat"]
    grads["Wo"] = mcat.reshape(-1, heads * dh).T @ dm_out.reshape(-1, dm)
    grads["bo"] = dm_out.sum(axis=(0, 1))
    dmcat = dm_out @ params["Wo"].T
    do = dmcat.reshape(n_batch, n_tok, heads, dh).transpose(0, 2, 1, 3)
    attn, v, q, k = cache["attention"], cache["v"], cache["q"], cache["k"]
    dattn = np.einsum("nhsk,nhtk->nhst", do, v)
    dv = np.einsum("nhst,nhsk->nhtk", attn, do)
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dscores *= cache["scale"]
    dq = np.einsum("nhst,nhtk->nhsk", dscores, k)
    dk = np.einsum("nhst,nhsk->nhtk", dscores, q)
    a = cache["a"]
    grads["Wq"] = np.einsum("nsd,nhsk->hdk", a, dq)
    grads["Wk"] = np.einsum("nsd,nhsk->hdk", a, dk)
    grads["Wv"] = np.einsum("nsd,nhsk->hdk", a, dv)
    da = (np.einsum("nhsk,hdk->nsd", dq, params["Wq"])
          + np.einsum("nhsk,hdk->nsd", dk, params["Wk"])
          + np.einsum("nhsk,hdk->nsd", dv, params["Wv"]))
    dln, dgamma, dbeta = layer_norm_backward(da, cache["ln"], params["ln_gamma"])
    grads["ln_gamma"] = dgamma
    grads["ln_beta"] = dbeta
    dtokens += dln
    return dtokens, grads
