"""Cell topologies as DAGs over a fixed node order.

A cell has ``n`` operation nodes numbered ``0..n-1``. Edges always point from a
lower id to a higher id, so every topology is acyclic by construction. The cell
input and output are implicit: at mapping time, zero in-degree nodes read the
cell input and zero out-degree nodes form the cell output.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

Edge = tuple[int, int]


class TopologyError(ValueError):
    """Invalid topology construction or argument."""


class MissingEdgeError(TopologyError, KeyError):
    """Edge is not present in the topology."""

    def __str__(self):
        return ValueError.__str__(self)


class ParseError(TopologyError):
    """Malformed topology document."""

    def __init__(self, message, field=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line


class CellKind(str, enum.Enum):
    CNN = "cnn"
    RNN = "rnn"


class NodeOp(str, enum.Enum):
    """Node operation. CNN nodes carry a conv kind, RNN nodes an activation."""

    CONV1X1 = "conv1x1"
    SEPCONV3X3 = "sepconv3x3"
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    IDENTITY = "identity"

    @property
    def kind(self) -> CellKind:
        return CellKind.CNN if self in CNN_OPS else CellKind.RNN


CNN_OPS = (NodeOp.CONV1X1, NodeOp.SEPCONV3X3)
RNN_OPS = (NodeOp.RELU, NodeOp.SIGMOID, NodeOp.TANH, NodeOp.IDENTITY)


def op_alphabet(kind) -> tuple[NodeOp, ...]:
    return CNN_OPS if CellKind(kind) is CellKind.CNN else RNN_OPS


@dataclass(frozen=True)
class CellTopology:
    """Immutable cell DAG. ``edges`` is kept sorted and every edge has u < v."""

    node_ops: tuple[NodeOp, ...]
    edges: tuple[Edge, ...]
    kind: CellKind

    def __init__(self, node_ops: Sequence, edges: Iterable[Sequence[int]], kind):
        kind = CellKind(kind)
        ops = tuple(NodeOp(op) for op in node_ops)
        for i, op in enumerate(ops):
            if op.kind is not kind:
                raise TopologyError(f"node {i} has {op.value!r}, not a {kind.value} op")
        n = len(ops)
        canon = []
        for e in edges:
            u, v = (int(x) for x in e)
            if not u < v:
                raise TopologyError(f"edge {(u, v)} violates u < v ordering")
            if u < 0 or v >= n:
                raise TopologyError(f"edge {(u, v)} out of range for {n} nodes")
            canon.append((u, v))
        if len(set(canon)) != len(canon):
            raise TopologyError("duplicate edges")
        object.__setattr__(self, "node_ops", ops)
        object.__setattr__(self, "edges", tuple(sorted(canon)))
        object.__setattr__(self, "kind", kind)

    @property
    def node_count(self) -> int:
        return len(self.node_ops)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def __contains__(self, edge) -> bool:
        return tuple(edge) in self.edges

    def predecessors(self, v: int) -> list[int]:
        return [u for u, w in self.edges if w == v]

    def successors(self, u: int) -> list[int]:
        return [w for x, w in self.edges if x == u]


@dataclass(frozen=True)
class MappedBlock:
    """Executable view of a topology after dropping isolated nodes.

    ``per_node_inputs`` maps every live node to its live predecessors in
    ascending order; input-fed nodes have an empty list there and read the cell
    input instead.
    """

    live_nodes: tuple[int, ...]
    input_fed_nodes: tuple[int, ...]
    leaf_nodes: tuple[int, ...]
    per_node_inputs: dict

    @property
    def empty(self) -> bool:
        return not self.live_nodes

    def aggregands(self, v: int) -> list:
        """Ordered sources of node ``v``: ``"in"`` for the cell input, else node ids."""
        return (["in"] if v in self.input_fed_nodes else []) + list(self.per_node_inputs[v])

    @classmethod
    def from_parts(cls, per_node_inputs: dict, input_fed: Iterable[int]):
        """Build a block by hand (used for single-node probes and tests)."""
        live = tuple(sorted(per_node_inputs))
        fed = tuple(sorted(input_fed))
        feeders = {u for preds in per_node_inputs.values() for u in preds}
        leaves = tuple(v for v in live if v not in feeders)
        inputs = {v: tuple(sorted(per_node_inputs[v])) for v in live}
        return cls(live, fed, leaves, inputs)


def complete_dag(n: int, kind, rng_seed: int) -> CellTopology:
    """Complete DAG on ``n`` nodes with ops drawn uniformly from the kind's alphabet."""
    if n < 2:
        raise TopologyError(f"complete DAG needs n >= 2, got {n}")
    alphabet = op_alphabet(kind)
    rng = np.random.default_rng(rng_seed)
    picks = rng.integers(0, len(alphabet), size=n)
    edges = [(u, v) for u in range(n) for v in range(u + 1, n)]
    return CellTopology([alphabet[i] for i in picks], edges, kind)


def empty_topology(node_ops: Sequence, kind) -> CellTopology:
    return CellTopology(node_ops, [], kind)


def remove_edge(g: CellTopology, e: Sequence[int]) -> CellTopology:
    e = tuple(int(x) for x in e)
    if e not in g.edges:
        raise MissingEdgeError(f"edge {e} not in topology")
    return CellTopology(g.node_ops, [x for x in g.edges if x != e], g.kind)


def map_to_block(g: CellTopology) -> MappedBlock:
    n = g.node_count
    indeg = [0] * n
    outdeg = [0] * n
    preds: dict[int, list[int]] = {v: [] for v in range(n)}
    for u, v in g.edges:
        outdeg[u] += 1
        indeg[v] += 1
        preds[v].append(u)
    live = tuple(v for v in range(n) if indeg[v] or outdeg[v])
    fed = tuple(v for v in live if indeg[v] == 0)
    leaves = tuple(v for v in live if outdeg[v] == 0)
    return MappedBlock(live, fed, leaves, {v: tuple(sorted(preds[v])) for v in live})


def search_space_size(edge_count: int, node_count: int, op_choices: int) -> int:
    """Number of architectures reachable by toggling edges and choosing node ops."""
    if min(edge_count, node_count, op_choices) < 0:
        raise TopologyError("search space arguments must be non-negative")
    return op_choices**node_count * 2**edge_count


def path_count(block: MappedBlock) -> int:
    """Distinct cell-input -> leaf paths through the block."""
    paths: dict[int, int] = {}
    for v in block.live_nodes:
        paths[v] = (1 if v in block.input_fed_nodes else 0) + sum(
            paths[u] for u in block.per_node_inputs[v]
        )
    return sum(paths[v] for v in block.leaf_nodes)


# -- serialization -----------------------------------------------------------


def to_dict(g: CellTopology) -> dict:
    return {
        "kind": g.kind.value,
        "nodes": [{"id": i, "op": op.value} for i, op in enumerate(g.node_ops)],
        "edges": [[u, v] for u, v in g.edges],
    }


def serialize(g: CellTopology) -> str:
    return json.dumps(to_dict(g), indent=2) + "\n"


def from_dict(doc) -> CellTopology:
    if not isinstance(doc, dict):
        raise ParseError("topology document must be an object")
    for key in ("kind", "nodes", "edges"):
        if key not in doc:
            raise ParseError("missing key", field=key)
    try:
        kind = CellKind(doc["kind"])
    except ValueError:
        raise ParseError(f"unknown kind {doc['kind']!r}", field="kind") from None
    nodes = doc["nodes"]
    if not isinstance(nodes, list):
        raise ParseError("expected a list", field="nodes")
    ops = [None] * len(nodes)
    for i, node in enumerate(nodes):
        try:
            nid, op = node["id"], NodeOp(node["op"])
        except (KeyError, TypeError, ValueError):
            raise ParseError(f"bad node entry {node!r}", field=f"nodes[{i}]") from None
        if not isinstance(nid, int) or not 0 <= nid < len(nodes) or ops[nid] is not None:
            raise ParseError(f"bad or repeated node id {nid!r}", field=f"nodes[{i}].id")
        ops[nid] = op
    edges = doc["edges"]
    if not isinstance(edges, list):
        raise ParseError("expected a list", field="edges")
    for i, e in enumerate(edges):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) for x in e)):
            raise ParseError(f"edge must be [u, v], got {e!r}", field=f"edges[{i}]")
        if not e[0] < e[1]:
            raise ParseError(f"edge {e} violates u < v ordering", field=f"edges[{i}]")
    try:
        return CellTopology(ops, edges, kind)
    except TopologyError as exc:
        raise ParseError(str(exc), field="nodes/edges") from None


def deserialize(text: str) -> CellTopology:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    return from_dict(doc)


def to_dot(g: CellTopology, name: str = "cell") -> str:
    """Graphviz digraph with IN/OUT vertices; derived input and leaf edges are dashed."""
    block = map_to_block(g)
    lines = [f"digraph {name} {{", "  rankdir=LR;", '  IN [shape=box, label="IN"];']
    for v in block.live_nodes:
        lines.append(f'  n{v} [label="{v}:{g.node_ops[v].value}"];')
    lines.append('  OUT [shape=box, label="OUT"];')
    for v in block.input_fed_nodes:
        lines.append(f"  IN -> n{v} [style=dashed];")
    for u, v in g.edges:
        lines.append(f"  n{u} -> n{v};")
    for v in block.leaf_nodes:
        lines.append(f"  n{v} -> OUT [style=dashed];")
    if block.empty:
        lines.append("  IN -> OUT [style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"
