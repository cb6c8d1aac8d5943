"""Stock layer-graph builders.

``temporal_encoder`` follows the two-block design used for time-resolved
streams: a region-attention pool feeding stacked dilated convolutions
with residual adds (dilations 1, 2, 4), then three parallel dilated
conv+GRU branches whose final states are concatenated together with a
global average of the conv features (the pooled path carries amplitude
statistics the recurrent states are slow to learn).  ``dense_encoder``
is the flat-matrix variant.  Both end with a token projection (the fusion
node) followed by an auxiliary classifier head so the graph can also be
trained standalone, e.g. inside a connection-search reward.
"""

from __future__ import annotations

from .graph import LayerGraph, build_graph, node


def chain_graph(n_nodes: int, width: int = 16) -> LayerGraph:
    """Input -> Dense x (n-2) -> Output chain; fusion node = last node."""
    if n_nodes < 3:
        raise ValueError("chain needs at least Input, one Dense, Output")
    nodes = [node(1, "Input", shape=[width])]
    for i in range(2, n_nodes):
        nodes.append(node(i, "Dense", units=width))
    nodes.append(node(n_nodes, "Output"))
    edges = [(i, i + 1) for i in range(1, n_nodes)]
    return build_graph(nodes, edges, n_nodes)


def search_chain() -> LayerGraph:
    """The 6-node chain used by the surrogate search experiments."""
    return chain_graph(6)


def temporal_encoder(length: int, channels: int, *, filters: int = 8,
                     gru_units: int = 16, token_dim: int = 16,
                     classes: int = 2, dropout: float = 0.5,
                     kernel_size: int = 3) -> LayerGraph:
    """Encoder for a (length x channels) sequence stream.

    Fusion node = the token Dense; the trailing Dense(classes) -> Output
    is the auxiliary standalone head, outside the searchable range.
    """
    k = kernel_size
    nodes = [
        node(1, "Input", shape=[length, channels]),
        node(2, "AttentionPool"),
        node(3, "Reshape", target=[length, 1]),
        # residual dilation block
        node(4, "Conv1D", filters=filters, kernel_size=k, dilation=1),
        node(5, "Activation", fn="relu"),
        node(6, "Conv1D", filters=filters, kernel_size=k, dilation=2),
        node(7, "Activation", fn="relu"),
        node(8, "Add"),
        node(9, "Conv1D", filters=filters, kernel_size=k, dilation=4),
        node(10, "Activation", fn="relu"),
        node(11, "Add"),
        # multi-scale GRU block: parallel dilated branches, states concatenated
        node(12, "Conv1D", filters=filters, kernel_size=k, dilation=1),
        node(13, "Activation", fn="relu"),
        node(14, "GRU", units=gru_units),
        node(15, "Conv1D", filters=filters, kernel_size=k, dilation=2),
        node(16, "Activation", fn="relu"),
        node(17, "GRU", units=gru_units),
        node(18, "Conv1D", filters=filters, kernel_size=k, dilation=4),
        node(19, "Activation", fn="relu"),
        node(20, "GRU", units=gru_units),
        node(21, "GlobalAvgPool"),
        node(22, "Concat"),
        node(23, "Dropout", rate=dropout),
        node(24, "Dense", units=token_dim),
        node(25, "Dense", units=classes),
        node(26, "Output"),
    ]
    edges = [(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (5, 8), (7, 8),
             (8, 9), (9, 10), (8, 11), (10, 11),
             (11, 12), (12, 13), (13, 14),
             (11, 15), (15, 16), (16, 17),
             (11, 18), (18, 19), (19, 20),
             (11, 21),
             (14, 22), (17, 22), (20, 22), (21, 22),
             (22, 23), (23, 24), (24, 25), (25, 26)]
    return build_graph(nodes, edges, 24)


def dense_encoder(length: int, channels: int, *, hidden: int = 32,
                  token_dim: int = 16, classes: int = 2,
                  dropout: float = 0.5) -> LayerGraph:
    """Encoder for a flat matrix stream (e.g. a connectivity matrix):
    region-attention pool then two dense stages."""
    nodes = [
        node(1, "Input", shape=[length, channels]),
        node(2, "AttentionPool"),
        node(3, "Dense", units=hidden),
        node(4, "Activation", fn="relu"),
        node(5, "Dropout", rate=dropout),
        node(6, "Dense", units=token_dim),
        node(7, "Dense", units=classes),
        node(8, "Output"),
    ]
    edges = [(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8)]
    return build_graph(nodes, edges, 6)
