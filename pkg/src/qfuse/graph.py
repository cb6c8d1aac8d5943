"""Typed layer-graph intermediate representation.

A LayerGraph is an immutable DAG of typed layer nodes with a designated
fusion node (``fusion_index``).  It supports enumeration of candidate
connections (absent forward edges that a connection search may insert),
insertion of Residual/Concatenate connections with automatic adapter
synthesis, JSON round-tripping and DOT export.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Sequence

RESIDUAL = "Residual"
CONCATENATE = "Concatenate"
CONNECTION_TYPES = (RESIDUAL, CONCATENATE)

KINDS = frozenset({
    "Input", "Dense", "Conv1D", "GRU", "Add", "Concat", "GlobalAvgPool",
    "Activation", "Dropout", "Reshape", "AttentionPool", "AvgPool1D",
    "Repeat1D", "FusionHead", "Output",
})

# nodes that aggregate several inputs; everything else takes exactly one
AGGREGATOR_KINDS = frozenset({"Add", "Concat", "FusionHead"})

ACTIVATIONS = ("relu", "tanh", "sigmoid", "gelu", "identity")


class GraphError(Exception):
    """Base class for layer-graph construction and rewrite errors."""


class DuplicateIdError(GraphError):
    pass


class UnknownIdError(GraphError):
    pass


class CycleError(GraphError):
    pass


class InvalidEdgeError(GraphError):
    pass


class ShapeInferenceError(GraphError):
    pass


class NotACandidateError(GraphError):
    pass


class AdapterSynthesisError(GraphError):
    pass


class ParseError(GraphError):
    pass


@dataclass(frozen=True)
class LayerNode:
    """One typed node. ``attrs`` holds the kind-specific hyperparameters
    (JSON-compatible values only, so graphs round-trip losslessly)."""

    id: int
    kind: str
    attrs: dict = field(default_factory=dict)


def node(node_id: int, kind: str, **attrs: Any) -> LayerNode:
    """Convenience constructor; tuples in attrs are normalised to lists."""
    clean = {k: (list(v) if isinstance(v, tuple) else v) for k, v in attrs.items()}
    return LayerNode(node_id, kind, clean)


@dataclass(frozen=True)
class ConnectionSpec:
    """A connection the search wants to insert: src feeds into dst."""

    src: int
    dst: int
    ctype: str  # Residual | Concatenate


@dataclass(frozen=True)
class LayerGraph:
    """Immutable DAG of layer nodes.

    ``edges`` is an ordered tuple; the input order of an aggregator node
    (Add/Concat/FusionHead) is the order its in-edges appear here, which
    fixes Concat channel layout deterministically.  ``ncs_edges`` records
    connections added by a search as (src, dst, ctype, via) where ``via``
    is the physical target of the first hop created for that connection
    (used to style exactly one DOT edge per insertion).
    """

    nodes: tuple[LayerNode, ...]
    edges: tuple[tuple[int, int], ...]
    fusion_index: int
    ncs_edges: tuple[tuple[int, int, str, int], ...] = ()

    @cached_property
    def node_map(self) -> dict[int, LayerNode]:
        return {n.id: n for n in self.nodes}

    def predecessors(self, node_id: int) -> list[int]:
        return [s for s, d in self.edges if d == node_id]

    def successors(self, node_id: int) -> list[int]:
        return [d for s, d in self.edges if s == node_id]

    @cached_property
    def max_id(self) -> int:
        return max(n.id for n in self.nodes)


def _check_attrs(n: LayerNode) -> None:
    a = n.attrs
    k = n.kind
    def need(key):
        if key not in a:
            raise ShapeInferenceError(f"node {n.id} ({k}): missing attr '{key}'")
        return a[key]
    if k == "Input":
        shape = need("shape")
        if not isinstance(shape, list) or len(shape) not in (1, 2) \
                or any((not isinstance(d, int)) or d < 1 for d in shape):
            raise ShapeInferenceError(f"node {n.id}: Input shape must be [dim] or [length, channels] of positive ints, got {shape!r}")
    elif k == "Dense":
        if need("units") < 1:
            raise ShapeInferenceError(f"node {n.id}: Dense units must be >= 1")
    elif k == "Conv1D":
        if need("filters") < 1 or need("kernel_size") < 1:
            raise ShapeInferenceError(f"node {n.id}: Conv1D filters and kernel_size must be >= 1")
        if a.get("stride", 1) < 1 or a.get("dilation", 1) < 1:
            raise ShapeInferenceError(f"node {n.id}: Conv1D stride and dilation must be >= 1")
        if a.get("padding", "same") not in ("same", "valid"):
            raise ShapeInferenceError(f"node {n.id}: Conv1D padding must be 'same' or 'valid'")
    elif k == "GRU":
        if need("units") < 1:
            raise ShapeInferenceError(f"node {n.id}: GRU units must be >= 1")
    elif k == "Activation":
        if need("fn") not in ACTIVATIONS:
            raise ShapeInferenceError(f"node {n.id}: unknown activation {a.get('fn')!r}")
    elif k == "Dropout":
        rate = need("rate")
        if not (0.0 <= rate < 1.0):
            raise ShapeInferenceError(f"node {n.id}: Dropout rate must be in [0, 1)")
    elif k == "Reshape":
        target = need("target")
        if not isinstance(target, list) or len(target) not in (1, 2) \
                or any((not isinstance(d, int)) or d < 1 for d in target):
            raise ShapeInferenceError(f"node {n.id}: Reshape target must be [dim] or [length, channels]")
    elif k in ("AvgPool1D", "Repeat1D"):
        if need("out_length") < 1:
            raise ShapeInferenceError(f"node {n.id}: {k} out_length must be >= 1")
    elif k == "FusionHead":
        if need("heads") < 1:
            raise ShapeInferenceError(f"node {n.id}: FusionHead heads must be >= 1")
        if need("classes") < 2:
            raise ShapeInferenceError(f"node {n.id}: FusionHead classes must be >= 2")


def _infer_node_shape(n: LayerNode, in_shapes: list[tuple[int, ...]]) -> tuple[int, ...]:
    k, a = n.kind, n.attrs
    def one():
        if len(in_shapes) != 1:
            raise ShapeInferenceError(f"node {n.id} ({k}): expects exactly one input, got {len(in_shapes)}")
        return in_shapes[0]
    if k == "Input":
        return tuple(a["shape"])
    if k == "Dense":
        s = one()
        return (s[0], a["units"]) if len(s) == 2 else (a["units"],)
    if k == "Conv1D":
        s = one()
        if len(s) != 2:
            raise ShapeInferenceError(f"node {n.id}: Conv1D needs a sequence input, got shape {s}")
        length = s[0]
        kern, stride, dil = a["kernel_size"], a.get("stride", 1), a.get("dilation", 1)
        if a.get("padding", "same") == "same":
            out_len = -(-length // stride)  # ceil
        else:
            span = (kern - 1) * dil + 1
            out_len = (length - span) // stride + 1
        if out_len < 1:
            raise ShapeInferenceError(f"node {n.id}: Conv1D output length {out_len} < 1 for input length {length}")
        return (out_len, a["filters"])
    if k == "GRU":
        s = one()
        if len(s) != 2:
            raise ShapeInferenceError(f"node {n.id}: GRU needs a sequence input, got shape {s}")
        return (a["units"],)
    if k == "Add":
        if len(in_shapes) < 2:
            raise ShapeInferenceError(f"node {n.id}: Add needs >= 2 inputs")
        if any(s != in_shapes[0] for s in in_shapes[1:]):
            raise ShapeInferenceError(f"node {n.id}: Add inputs must agree, got {in_shapes}")
        return in_shapes[0]
    if k == "Concat":
        if len(in_shapes) < 2:
            raise ShapeInferenceError(f"node {n.id}: Concat needs >= 2 inputs")
        ranks = {len(s) for s in in_shapes}
        if ranks == {2}:
            if any(s[0] != in_shapes[0][0] for s in in_shapes):
                raise ShapeInferenceError(f"node {n.id}: Concat sequence lengths must agree, got {in_shapes}")
            return (in_shapes[0][0], sum(s[1] for s in in_shapes))
        if ranks == {1}:
            return (sum(s[0] for s in in_shapes),)
        raise ShapeInferenceError(f"node {n.id}: Concat cannot mix flat and sequence inputs: {in_shapes}")
    if k == "GlobalAvgPool":
        s = one()
        if len(s) != 2:
            raise ShapeInferenceError(f"node {n.id}: GlobalAvgPool needs a sequence input")
        return (s[1],)
    if k in ("Activation", "Dropout", "Output"):
        return one()
    if k == "Reshape":
        s = one()
        target = tuple(a["target"])
        if math.prod(s) != math.prod(target):
            raise ShapeInferenceError(f"node {n.id}: Reshape {s} -> {target} changes element count")
        return target
    if k == "AttentionPool":
        s = one()
        if len(s) != 2:
            raise ShapeInferenceError(f"node {n.id}: AttentionPool needs a sequence input")
        return (s[0],)
    if k == "AvgPool1D":
        s = one()
        if len(s) != 2 or a["out_length"] > s[0]:
            raise ShapeInferenceError(f"node {n.id}: AvgPool1D needs a sequence input at least out_length long, got {s}")
        return (a["out_length"], s[1])
    if k == "Repeat1D":
        s = one()
        if len(s) != 2 or a["out_length"] < s[0]:
            raise ShapeInferenceError(f"node {n.id}: Repeat1D needs a sequence input no longer than out_length, got {s}")
        return (a["out_length"], s[1])
    if k == "FusionHead":
        if not in_shapes:
            raise ShapeInferenceError(f"node {n.id}: FusionHead needs at least one token input")
        if any(len(s) != 1 or s != in_shapes[0] for s in in_shapes):
            raise ShapeInferenceError(f"node {n.id}: FusionHead tokens must be flat vectors of one size, got {in_shapes}")
        return (a["classes"],)
    raise ShapeInferenceError(f"node {n.id}: unknown kind {k!r}")


def topo_order(graph: LayerGraph) -> tuple[int, ...]:
    """Kahn's algorithm, ties broken by ascending node id (deterministic
    regardless of node or edge declaration order)."""
    indeg = {n.id: 0 for n in graph.nodes}
    for _, d in graph.edges:
        indeg[d] += 1
    ready = [i for i, deg in indeg.items() if deg == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        cur = heapq.heappop(ready)
        order.append(cur)
        for nxt in graph.successors(cur):
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                heapq.heappush(ready, nxt)
    if len(order) != len(graph.nodes):
        stuck = sorted(i for i, deg in indeg.items() if deg > 0)
        raise CycleError(f"graph contains a cycle through nodes {stuck}")
    return tuple(order)


def infer_shapes(graph: LayerGraph) -> dict[int, tuple[int, ...]]:
    """Output shape per node id (batch axis implicit): (length, channels)
    for sequence tensors, (dim,) for flat vectors."""
    shapes: dict[int, tuple[int, ...]] = {}
    for nid in topo_order(graph):
        n = graph.node_map[nid]
        in_shapes = [shapes[p] for p in graph.predecessors(nid)]
        shapes[nid] = _infer_node_shape(n, in_shapes)
    return shapes


def build_graph(nodes: Iterable[LayerNode], edges: Iterable[Sequence[int]],
                fusion_index: int,
                ncs_edges: Iterable[Sequence] = ()) -> LayerGraph:
    """Validate and assemble a LayerGraph.

    Checks: unique positive ids, known kinds and required attrs, edges over
    known ids with src != dst and no duplicates, acyclicity, exactly one
    Input (the only in-degree-0 node), exactly one Output (the only sink),
    aggregator in-degrees, fusion_index present, and full shape inference.
    """
    nodes = tuple(nodes)
    seen: set[int] = set()
    for n in nodes:
        if not isinstance(n.id, int) or n.id < 1:
            raise ParseError(f"node ids must be positive ints, got {n.id!r}")
        if n.id in seen:
            raise DuplicateIdError(f"duplicate node id {n.id}")
        seen.add(n.id)
        if n.kind not in KINDS:
            raise ParseError(f"node {n.id}: unknown kind {n.kind!r}")
        _check_attrs(n)

    edge_list: list[tuple[int, int]] = []
    for e in edges:
        s, d = int(e[0]), int(e[1])
        if s not in seen or d not in seen:
            raise UnknownIdError(f"edge ({s}, {d}) references an unknown node id")
        if s == d:
            raise InvalidEdgeError(f"self-loop on node {s}")
        if (s, d) in edge_list:
            raise InvalidEdgeError(f"duplicate edge ({s}, {d})")
        edge_list.append((s, d))

    if fusion_index not in seen:
        raise UnknownIdError(f"fusion_index {fusion_index} is not a node id")

    ncs = []
    for rec in ncs_edges:
        s, d, ctype, via = int(rec[0]), int(rec[1]), str(rec[2]), int(rec[3])
        if ctype not in CONNECTION_TYPES:
            raise ParseError(f"unknown connection type {ctype!r}")
        if s not in seen or d not in seen or via not in seen:
            raise UnknownIdError(f"ncs edge ({s}, {d}) references an unknown node id")
        ncs.append((s, d, ctype, via))

    g = LayerGraph(nodes, tuple(edge_list), fusion_index, tuple(ncs))

    indeg = {n.id: 0 for n in nodes}
    outdeg = {n.id: 0 for n in nodes}
    for s, d in edge_list:
        outdeg[s] += 1
        indeg[d] += 1
    inputs = [n for n in nodes if n.kind == "Input"]
    if len(inputs) != 1:
        raise GraphError(f"graph must have exactly one Input node, found {len(inputs)}")
    outputs = [n for n in nodes if n.kind == "Output"]
    if len(outputs) != 1:
        raise GraphError(f"graph must have exactly one Output node, found {len(outputs)}")
    for n in nodes:
        if n.kind == "Input":
            if indeg[n.id] != 0:
                raise InvalidEdgeError(f"Input node {n.id} cannot have incoming edges")
        elif n.kind in AGGREGATOR_KINDS:
            low = 1 if n.kind == "FusionHead" else 2
            if indeg[n.id] < low:
                raise InvalidEdgeError(f"node {n.id} ({n.kind}) needs >= {low} inputs, has {indeg[n.id]}")
        elif indeg[n.id] != 1:
            raise InvalidEdgeError(f"node {n.id} ({n.kind}) needs exactly one input, has {indeg[n.id]}")
        if n.kind == "Output":
            if outdeg[n.id] != 0:
                raise InvalidEdgeError(f"Output node {n.id} cannot have outgoing edges")
        elif outdeg[n.id] == 0:
            raise InvalidEdgeError(f"node {n.id} ({n.kind}) is a dead end; only Output may be a sink")

    topo_order(g)   # raises CycleError
    infer_shapes(g)  # raises ShapeInferenceError
    return g


def candidate_connections(graph: LayerGraph) -> list[tuple[int, int]]:
    """All ordered pairs (i, j) such that j comes strictly after i in
    topological order, j <= fusion_index and (i, j) is not already an
    edge.  Sorted ascending by (i, j)."""
    pos = {nid: p for p, nid in enumerate(topo_order(graph))}
    present = set(graph.edges)
    out = []
    for i in pos:
        for j in pos:
            if pos[j] > pos[i] and j <= graph.fusion_index and (i, j) not in present:
                out.append((i, j))
    out.sort()
    return out


def _has_path(graph: LayerGraph, start: int, goal: int) -> bool:
    """True when a directed path start -> ... -> goal exists."""
    succ: dict[int, list[int]] = {}
    for s, d in graph.edges:
        succ.setdefault(s, []).append(d)
    stack, seen = [start], set()
    while stack:
        cur = stack.pop()
        if cur == goal:
            return True
        if cur in seen:
            continue
        seen.add(cur)
        stack.extend(succ.get(cur, ()))
    return False


def _insertable(graph: LayerGraph, src: int, dst: int) -> bool:
    """Current candidates are always insertable.  Pairs picked against an
    earlier version of the graph (an episode is enumerated on the base
    template, then applied hop by hop to the growing graph, which shifts
    topological positions) stay insertable as long as they cannot close a
    cycle: both ids exist, dst stays within the searchable range, the edge
    is not already physical and dst cannot reach src."""
    if (src, dst) in set(candidate_connections(graph)):
        return True
    if src not in graph.node_map or dst not in graph.node_map:
        return False
    if src == dst or dst > graph.fusion_index:
        return False
    if graph.node_map[src].kind == "Output":
        return False
    if (src, dst) in set(graph.edges):
        return False
    return not _has_path(graph, dst, src)


def _adapter_steps(src_shape: tuple[int, ...], requirement: tuple) -> list[tuple[str, dict]]:
    """Adapter chain (kind, attrs) mapping ``src_shape`` to a shape meeting
    ``requirement``:

    - ("exact", shape): Residual joins; channel mismatch -> width-1 Conv1D
      (sequence) or Dense (flat), length mismatch -> AvgPool1D when the
      source is longer, Repeat1D when shorter, flat-vs-sequence -> Reshape
      when element counts match, else Dense projection plus Reshape.
    - ("seq_len", L): Concatenate join onto a sequence trunk; only the
      temporal length is constrained, channels stay free.
    - ("flat",): Concatenate join onto a flat trunk; sequences are
      flattened, widths stay free.
    """
    kind = requirement[0]
    steps: list[tuple[str, dict]] = []
    if kind == "flat":
        if len(src_shape) == 2:
            steps.append(("Reshape", {"target": [src_shape[0] * src_shape[1]]}))
        return steps
    if kind == "seq_len":
        length = requirement[1]
        if len(src_shape) == 1:
            dim = src_shape[0]
            if dim % length == 0:
                steps.append(("Reshape", {"target": [length, dim // length]}))
            else:
                steps.append(("Dense", {"units": length}))
                steps.append(("Reshape", {"target": [length, 1]}))
        elif src_shape[0] > length:
            steps.append(("AvgPool1D", {"out_length": length}))
        elif src_shape[0] < length:
            steps.append(("Repeat1D", {"out_length": length}))
        return steps
    if kind != "exact":
        raise AdapterSynthesisError(f"unknown adapter requirement {requirement!r}")
    target = tuple(requirement[1])
    if src_shape == target:
        return steps
    if len(target) == 1:
        dim = target[0]
        if len(src_shape) == 2:
            flat = src_shape[0] * src_shape[1]
            if flat == dim:
                steps.append(("Reshape", {"target": [dim]}))
            else:
                steps.append(("Reshape", {"target": [flat]}))
                steps.append(("Dense", {"units": dim}))
        else:
            steps.append(("Dense", {"units": dim}))
        return steps
    length, channels = target
    if len(src_shape) == 1:
        if src_shape[0] == length * channels:
            steps.append(("Reshape", {"target": [length, channels]}))
        else:
            steps.append(("Dense", {"units": length * channels}))
            steps.append(("Reshape", {"target": [length, channels]}))
        return steps
    if src_shape[0] > length:
        steps.append(("AvgPool1D", {"out_length": length}))
    elif src_shape[0] < length:
        steps.append(("Repeat1D", {"out_length": length}))
    if src_shape[1] != channels:
        steps.append(("Conv1D", {"filters": channels, "kernel_size": 1}))
    return steps


def insert_connection(graph: LayerGraph, spec: ConnectionSpec) -> LayerGraph:
    """Insert a searched connection, synthesising adapters as needed.

    Residual connections route through an Add node, Concatenate through a
    Concat node.  When the target is itself an aggregator the new source
    simply becomes one more adapted input of that aggregator (its own join
    semantics win).  Adapter/joint nodes get fresh ids above the current
    maximum; the input graph is never mutated.
    """
    if spec.ctype not in CONNECTION_TYPES:
        raise NotACandidateError(f"unknown connection type {spec.ctype!r}")
    if not _insertable(graph, spec.src, spec.dst):
        raise NotACandidateError(f"({spec.src}, {spec.dst}) is not a candidate connection")

    shapes = infer_shapes(graph)
    dst_node = graph.node_map[spec.dst]
    preds = graph.predecessors(spec.dst)
    src_shape = shapes[spec.src]

    new_nodes: list[LayerNode] = []
    next_id = graph.max_id + 1

    def fresh(kind: str, attrs: dict) -> int:
        nonlocal next_id
        new_nodes.append(LayerNode(next_id, kind, dict(attrs)))
        next_id += 1
        return new_nodes[-1].id

    edges = list(graph.edges)

    if dst_node.kind in AGGREGATOR_KINDS:
        trunk_shape = shapes[preds[0]]
        if dst_node.kind == "Concat" and len(trunk_shape) == 2:
            requirement = ("seq_len", trunk_shape[0])
        elif dst_node.kind == "Concat":
            requirement = ("flat",)
        else:  # Add and FusionHead demand the common input shape
            requirement = ("exact", trunk_shape)
        tail = spec.src
        tail_first = None
        for kind, attrs in _adapter_steps(src_shape, requirement):
            nid = fresh(kind, attrs)
            edges.append((tail, nid))
            tail_first = tail_first or nid
            tail = nid
        if (tail, spec.dst) in edges:
            raise NotACandidateError(
                f"connection ({spec.src}, {spec.dst}) already feeds node {spec.dst}")
        edges.append((tail, spec.dst))
        via = tail_first if tail_first is not None else spec.dst
    else:
        trunk = preds[0]
        trunk_shape = shapes[trunk]
        if spec.ctype == RESIDUAL:
            joint_kind = "Add"
            requirement = ("exact", trunk_shape)
        else:
            joint_kind = "Concat"
            requirement = ("seq_len", trunk_shape[0]) if len(trunk_shape) == 2 else ("flat",)
        tail = spec.src
        tail_first = None
        for kind, attrs in _adapter_steps(src_shape, requirement):
            nid = fresh(kind, attrs)
            edges.append((tail, nid))
            tail_first = tail_first or nid
            tail = nid
        joint = fresh(joint_kind, {})
        # trunk edge is rewired in place so the trunk stays the first input
        edges[edges.index((trunk, spec.dst))] = (trunk, joint)
        edges.append((tail, joint))
        edges.append((joint, spec.dst))
        via = tail_first if tail_first is not None else joint

    return build_graph(
        tuple(graph.nodes) + tuple(new_nodes), edges, graph.fusion_index,
        graph.ncs_edges + ((spec.src, spec.dst, spec.ctype, via),))


def apply_episode_connections(graph: LayerGraph, pairs: Iterable[tuple[int, int, str]]) -> LayerGraph:
    """Insert a sequence of (src, dst, ctype) connections in order."""
    g = graph
    for src, dst, ctype in pairs:
        g = insert_connection(g, ConnectionSpec(src, dst, ctype))
    return g


# ---------------------------------------------------------------------------
# serialization

def to_doc(graph: LayerGraph) -> dict:
    return {
        "nodes": [{"id": n.id, "kind": n.kind, "attrs": dict(n.attrs)} for n in graph.nodes],
        "edges": [[s, d] for s, d in graph.edges],
        "fusion_index": graph.fusion_index,
        "ncs_edges": [[s, d, c, v] for s, d, c, v in graph.ncs_edges],
    }


def from_doc(doc: dict) -> LayerGraph:
    try:
        nodes = [LayerNode(int(n["id"]), str(n["kind"]), dict(n.get("attrs", {})))
                 for n in doc["nodes"]]
        edges = [(int(e[0]), int(e[1])) for e in doc["edges"]]
        fusion_index = int(doc["fusion_index"])
        ncs = [(int(r[0]), int(r[1]), str(r[2]), int(r[3]))
               for r in doc.get("ncs_edges", [])]
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ParseError(f"malformed graph document: {exc}") from exc
    return build_graph(nodes, edges, fusion_index, ncs)


def to_json(graph: LayerGraph, indent: int | None = 2) -> str:
    return json.dumps(to_doc(graph), indent=indent, sort_keys=True)


def from_json(text: str) -> LayerGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    return from_doc(doc)


def to_dot(graph: LayerGraph) -> str:
    """Deterministic DOT rendering; exactly one styled edge per searched
    connection (the first hop leaving its source)."""
    shapes = infer_shapes(graph)
    styled = {(s, v): c for s, d, c, v in graph.ncs_edges}
    lines = ["digraph layers {", "  rankdir=LR;",
             '  node [shape=box, fontname="Helvetica"];']
    for n in sorted(graph.nodes, key=lambda n: n.id):
        shape = "x".join(str(d) for d in shapes[n.id])
        extra = " peripheries=2" if n.id == graph.fusion_index else ""
        lines.append(f'  n{n.id} [label="{n.id}: {n.kind}\\n{shape}"{extra}];')
    for s, d in graph.edges:
        if (s, d) in styled:
            ctype = styled[(s, d)]
            lines.append(f'  n{s} -> n{d} [color=crimson, penwidth=2.0, label="{ctype}"];')
        else:
            lines.append(f"  n{s} -> n{d};")
    lines.append("}")
    return "\n".join(lines) + "\n"
