"""Exact MAC and parameter counts for cells and stacked architectures.

Conventions: one multiply-accumulate is one MAC and bias adds are free; every
convolution is followed by a BatchNorm contributing ``2 * filters`` parameters
and no MACs; concatenation, pooling and residual additions cost nothing.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .topology import CellKind, MappedBlock, NodeOp


@dataclass(frozen=True)
class CnnShape:
    height: int
    width: int
    stage_filters: int
    input_channels: int

    def __post_init__(self):
        if min(self.height, self.width, self.stage_filters, self.input_channels) < 1:
            raise ValueError(f"CnnShape fields must be >= 1: {self}")


@dataclass(frozen=True)
class RnnShape:
    hidden_dim: int
    vocab_size: int = 1
    embed_dim: int = 1

    def __post_init__(self):
        if min(self.hidden_dim, self.vocab_size, self.embed_dim) < 1:
            raise ValueError(f"RnnShape fields must be >= 1: {self}")


@dataclass(frozen=True)
class CostItem:
    name: object
    op: str
    macs: int
    params: int


@dataclass(frozen=True)
class ResourceReport:
    items: tuple[CostItem, ...] = field(default_factory=tuple)

    @property
    def macs(self) -> int:
        return sum(it.macs for it in self.items)

    @property
    def params(self) -> int:
        return sum(it.params for it in self.items)

    @property
    def per_node(self) -> list[tuple]:
        return [(it.name, it.macs, it.params) for it in self.items]

    def __add__(self, other: "ResourceReport") -> "ResourceReport":
        return ResourceReport(self.items + other.items)

    def prefixed(self, prefix: str) -> "ResourceReport":
        return ResourceReport(
            tuple(CostItem(f"{prefix}{it.name}", it.op, it.macs, it.params) for it in self.items)
        )

    def get(self, kind: str) -> int:
        kind = kind.lower()
        if kind == "macs":
            return self.macs
        if kind == "params":
            return self.params
        raise ValueError(f"unknown resource kind {kind!r}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node_id", "op", "macs", "params"])
        for it in self.items:
            w.writerow([it.name, it.op, it.macs, it.params])
        return buf.getvalue()


EMPTY_REPORT = ResourceReport()


def conv1x1_cost(hw: int, c_in: int, filters: int) -> tuple[int, int]:
    return hw * c_in * filters, c_in * filters + 2 * filters


def sepconv3x3_cost(hw: int, c_in: int, filters: int) -> tuple[int, int]:
    # depthwise 3x3 (stride 1, pad 1, multiplier 1) then pointwise 1x1
    return hw * c_in * 9 + hw * c_in * filters, 9 * c_in + c_in * filters + 2 * filters


def conv3x3_cost(hw: int, c_in: int, filters: int) -> tuple[int, int]:
    return hw * c_in * 9 * filters, 9 * c_in * filters + 2 * filters


# Per-op (macs, params) formulas for CNN nodes. Replaced in selfcheck tests to
# simulate a corrupted table.
CNN_OP_COSTS = {
    NodeOp.CONV1X1: conv1x1_cost,
    NodeOp.SEPCONV3X3: sepconv3x3_cost,
}


def node_input_channels(block: MappedBlock, v: int, shape: CnnShape) -> int:
    fed = shape.input_channels if v in block.input_fed_nodes else 0
    return fed + shape.stage_filters * len(block.per_node_inputs[v])


def cnn_cell_cost(block: MappedBlock, ops, shape: CnnShape, op_costs=None) -> ResourceReport:
    table = CNN_OP_COSTS if op_costs is None else op_costs
    hw = shape.height * shape.width
    items = []
    for v in block.live_nodes:
        op = NodeOp(ops[v])
        macs, params = table[op](hw, node_input_channels(block, v, shape), shape.stage_filters)
        items.append(CostItem(v, op.value, macs, params))
    return ResourceReport(tuple(items))


def cnn_cell_out_channels(block: MappedBlock, shape: CnnShape) -> int:
    if block.empty:
        return shape.input_channels
    return shape.stage_filters * len(block.leaf_nodes)


def highway_pair_params(d: int) -> int:
    """Gate (d x d + d) and transform (d x d + d) for one input of one node."""
    return 2 * d * d + 2 * d


def rnn_cell_cost(block: MappedBlock, shape: RnnShape, ops=None) -> ResourceReport:
    """Cell params summed over every live (input, node) pair; MACs are per time step."""
    d = shape.hidden_dim
    items = []
    for v in block.live_nodes:
        pairs = len(block.aggregands(v))
        op = NodeOp(ops[v]).value if ops is not None else "highway"
        items.append(CostItem(v, op, pairs * 2 * d * d, pairs * highway_pair_params(d)))
    return ResourceReport(tuple(items))


def cell_cost(topology, block: MappedBlock, shape) -> ResourceReport:
    if topology.kind is CellKind.CNN:
        return cnn_cell_cost(block, topology.node_ops, shape)
    return rnn_cell_cost(block, shape, topology.node_ops)


def architecture_cost(arch) -> ResourceReport:
    """Exact totals for an :class:`~shrinknas.builder.ArchitectureSpec`."""
    from .builder import architecture_layers

    return ResourceReport(tuple(item for _, rep in architecture_layers(arch) for item in rep.items))
