"""Executable instantiation of a LayerGraph.

A Network owns float64 parameters for every parametric node, runs batched
forward passes in topological order and backpropagates through the DAG
(gradients of shared inputs accumulate).  ``until`` stops the forward at
an internal node, which is how encoder graphs are run only up to their
fusion (token) node.
"""

from __future__ import annotations

import numpy as np

from ..graph import LayerGraph, infer_shapes, topo_order
from . import layers as L
from .fusion import (ShapeMismatchError, fusion_backward, fusion_forward,
                     glorot, init_fusion_params)


class NonFiniteLossError(Exception):
    pass


def init_node_params(node, in_shapes, rng, n_inputs=1):
    """Fresh parameters for one node; non-parametric kinds get {}."""
    k, a = node.kind, node.attrs
    if k == "Dense":
        fan_in = in_shapes[0][-1]
        units = a["units"]
        return {"W": glorot(rng, fan_in, units, (fan_in, units)),
                "b": np.zeros(units)}
    if k == "Conv1D":
        cin = in_shapes[0][1]
        kern, filt = a["kernel_size"], a["filters"]
        return {"W": glorot(rng, kern * cin, kern * filt, (kern, cin, filt)),
                "b": np.zeros(filt)}
    if k == "GRU":
        cin = in_shapes[0][1]
        h = a["units"]
        p = {}
        for gate in ("z", "r", "h"):
            p["W" + gate] = glorot(rng, cin, h, (cin, h))
            p["U" + gate] = glorot(rng, h, h, (h, h))
            p["b" + gate] = np.zeros(h)
        return p
    if k == "AttentionPool":
        # zero init => exactly uniform region weights before training
        return {"v": np.zeros(in_shapes[0][0])}
    if k == "FusionHead":
        dm = in_shapes[0][0]
        return init_fusion_params(
            rng, dm, n_inputs, heads=a["heads"],
            ffn_hidden=tuple(a.get("ffn_hidden", (512, 256))),
            classes=a["classes"])
    return {}


class Network:
    def __init__(self, graph: LayerGraph, seed: int = 0):
        self.graph = graph
        self.order = topo_order(graph)
        self.shapes = infer_shapes(graph)
        self.preds = {nid: graph.predecessors(nid) for nid in self.order}
        rng = np.random.default_rng(seed)
        self.params = {}
        for nid in self.order:
            node = graph.node_map[nid]
            in_shapes = [self.shapes[p] for p in self.preds[nid]]
            self.params[nid] = init_node_params(
                node, in_shapes, rng, n_inputs=len(self.preds[nid]))

    # -- parameter bookkeeping ------------------------------------------

    def param_items(self):
        """Deterministic [(node_id, name, array), ...]."""
        out = []
        for nid in self.order:
            for name, arr in self.params[nid].items():
                out.append((nid, name, arr))
        return out

    def param_arrays(self):
        return [arr for _, _, arr in self.param_items()]

    def grad_arrays(self, grads):
        return [grads[nid][name] for nid, name, _ in self.param_items()]

    def zero_grads(self):
        return {nid: {name: np.zeros_like(arr) for name, arr in p.items()}
                for nid, p in self.params.items()}

    # -- execution -------------------------------------------------------

    def forward(self, x, train=False, rng=None, until=None):
        """Run the graph on a batch.  Returns (output, cache); the output
        is the activation of ``until`` or of the Output node."""
        x = np.asarray(x, dtype=float)
        in_shape = self.shapes[self.order[0]]
        if x.shape[1:] != in_shape:
            raise ShapeMismatchError(
                f"input batch shape {x.shape} does not match graph input {in_shape}")
        acts, node_caches, attn = {}, {}, {}
        computed = []
        out_node = until if until is not None else self.order[-1]
        for nid in self.order:
            node = self.graph.node_map[nid]
            ins = [acts[p] for p in self.preds[nid]]
            k, a, p = node.kind, node.attrs, self.params[nid]
            if k == "Input":
                y, c = x, None
            elif k == "Dense":
                y, c = L.dense_forward(ins[0], p["W"], p["b"])
            elif k == "Conv1D":
                y, c = L.conv1d_forward(ins[0], p["W"], p["b"], a.get("stride", 1),
                                        a.get("dilation", 1), a.get("padding", "same"))
            elif k == "GRU":
                y, c = L.gru_forward(ins[0], p)
            elif k == "Add":
                y, c = L.add_forward(ins)
            elif k == "Concat":
                y, c = L.concat_forward(ins)
            elif k == "GlobalAvgPool":
                y, c = L.global_avg_pool_forward(ins[0])
            elif k == "Activation":
                y, c = L.act_forward(ins[0], a["fn"])
            elif k == "Dropout":
                if train and a["rate"] > 0.0 and rng is None:
                    raise ValueError("training forward through Dropout needs an rng")
                y, c = L.dropout_forward(ins[0], a["rate"], rng, train)
            elif k == "Reshape":
                y, c = L.reshape_forward(ins[0], a["target"])
            elif k == "AttentionPool":
                y, alpha, c = L.attention_pool_forward(ins[0], p["v"])
                attn[nid] = alpha
            elif k == "AvgPool1D":
                y, c = L.avgpool1d_forward(ins[0], a["out_length"])
            elif k == "Repeat1D":
                y, c = L.repeat1d_forward(ins[0], a["out_length"])
            elif k == "FusionHead":
                tokens = np.stack(ins, axis=1)
                y, c = fusion_forward(tokens, p)
                attn[nid] = c["attention"]
            elif k == "Output":
                y, c = ins[0], None
            else:
                raise ShapeMismatchError(f"cannot execute node kind {k!r}")
            acts[nid] = y
            node_caches[nid] = c
            computed.append(nid)
            if nid == out_node:
                break
        cache = {"acts": acts, "node_caches": node_caches, "order": computed,
                 "attention": attn, "out_node": out_node}
        return acts[out_node], cache

    def backward(self, dout, cache):
        """Backprop from the forward's output node.  Returns (grads, dx)
        where grads mirrors self.params and dx is the input gradient."""
        grads = self.zero_grads()
        dacts = {cache["out_node"]: np.asarray(dout, dtype=float)}
        for nid in reversed(cache["order"]):
            if nid not in dacts:
                continue  # not an ancestor of the output node
            dy = dacts[nid]
            node = self.graph.node_map[nid]
            k, a, p, c = node.kind, node.attrs, self.params[nid], cache["node_caches"][nid]
            preds = self.preds[nid]
            if k == "Input":
                continue
            if k == "Dense":
                dx, dW, db = L.dense_backward(dy, c, p["W"])
                grads[nid]["W"] += dW
                grads[nid]["b"] += db
                dins = [dx]
            elif k == "Conv1D":
                dx, dW, db = L.conv1d_backward(dy, c, p["W"])
                grads[nid]["W"] += dW
                grads[nid]["b"] += db
                dins = [dx]
            elif k == "GRU":
                dx, g = L.gru_backward(dy, c, p)
                for name, arr in g.items():
                    grads[nid][name] += arr
                dins = [dx]
            elif k == "Add":
                dins = L.add_backward(dy, c)
            elif k == "Concat":
                dins = L.concat_backward(dy, c)
            elif k == "GlobalAvgPool":
                dins = [L.global_avg_pool_backward(dy, c)]
            elif k == "Activation":
                dins = [L.act_backward(dy, c)]
            elif k == "Dropout":
                dins = [L.dropout_backward(dy, c)]
            elif k == "Reshape":
                dins = [L.reshape_backward(dy, c)]
            elif k == "AttentionPool":
                dx, dv = L.attention_pool_backward(dy, c, p["v"])
                grads[nid]["v"] += dv
                dins = [dx]
            elif k == "AvgPool1D":
                dins = [L.avgpool1d_backward(dy, c)]
            elif k == "Repeat1D":
                dins = [L.repeat1d_backward(dy, c)]
            elif k == "FusionHead":
                dtokens, g = fusion_backward(dy, c, p)
                for name, arr in g.items():
                    grads[nid][name] += arr
                dins = [dtokens[:, i, :] for i in range(dtokens.shape[1])]
            else:  # Output
                dins = [dy]
            for pred, din in zip(preds, dins):
                if pred in dacts:
                    dacts[pred] = dacts[pred] + din
                else:
                    dacts[pred] = din
        input_node = self.order[0]
        dx_in = dacts.get(input_node)
        return grads, dx_in

    def attention_weights(self, cache):
        """Per-node softmax weights recorded during a forward pass:
        AttentionPool nodes map to (N, regions), FusionHead nodes to
        (N, heads, n, n)."""
        return cache["attention"]
