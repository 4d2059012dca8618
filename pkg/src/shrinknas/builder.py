"""Stack a searched cell into a full network description.

CNN networks follow a stem / stages / classifier layout: a 3x3 stem conv, then
``stages`` groups of ``cells_per_stage`` identical cells whose width doubles and
resolution halves (2x2 max-pool) from one stage to the next, then global average
pooling and a fully connected classifier. Each cell output is projected back to
the stage width with a 1x1 conv when the leaf concat is wider, and a residual
connection joins cell input and output (1x1 projection when widths differ).

RNN networks are embedding -> one cell unrolled over time -> linear decoder.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from . import topology as topo
from .cost import (
    CnnShape,
    CostItem,
    ResourceReport,
    RnnShape,
    architecture_cost,
    cnn_cell_cost,
    cnn_cell_out_channels,
    conv1x1_cost,
    conv3x3_cost,
    rnn_cell_cost,
)
from .topology import CellKind, CellTopology


class BuildError(ValueError):
    """Architecture cannot be assembled from the given cell and options."""


@dataclass(frozen=True)
class StagePlan:
    index: int
    height: int
    width: int
    filters: int
    cells: int
    pooled: bool


@dataclass(frozen=True)
class ArchitectureSpec:
    kind: CellKind
    cell: CellTopology
    stages: int = 0
    cells_per_stage: int = 1
    base_filters: int = 16
    input_resolution: tuple = (32, 32)
    image_channels: int = 3
    num_classes: int = 10
    residual: bool = True
    hidden_dim: int = 0
    embed_dim: int = 0
    vocab_size: int = 0

    @property
    def stem_filters(self) -> int:
        return 2 * self.base_filters

    def stage_plan(self) -> list[StagePlan]:
        h, w = self.input_resolution
        plan = []
        for s in range(self.stages):
            if s > 0:
                h, w = h // 2, w // 2
            plan.append(StagePlan(s + 1, h, w, self.base_filters * 2**s, self.cells_per_stage, s > 0))
        return plan


def build_cnn(
    cell: CellTopology,
    stages: int = 3,
    t: int = 1,
    base_filters: int = 16,
    resolution=(32, 32),
    num_classes: int = 10,
    residual: bool = True,
) -> ArchitectureSpec:
    if cell.kind is not CellKind.CNN:
        raise BuildError(f"build_cnn needs a cnn cell, got {cell.kind.value}")
    if stages < 0 or t < 1 or base_filters < 1 or num_classes < 1:
        raise BuildError("need stages >= 0, t >= 1, base_filters >= 1, num_classes >= 1")
    h, w = (int(x) for x in resolution)
    if stages > 1 and (h % 2 ** (stages - 1) or w % 2 ** (stages - 1)):
        raise BuildError(f"resolution {h}x{w} cannot be halved {stages - 1} times")
    return ArchitectureSpec(
        kind=CellKind.CNN,
        cell=cell,
        stages=stages,
        cells_per_stage=t,
        base_filters=base_filters,
        input_resolution=(h, w),
        num_classes=num_classes,
        residual=residual,
    )


def build_rnn(cell: CellTopology, hidden_dim: int, embed_dim: int, vocab: int) -> ArchitectureSpec:
    if cell.kind is not CellKind.RNN:
        raise BuildError(f"build_rnn needs an rnn cell, got {cell.kind.value}")
    if min(hidden_dim, embed_dim, vocab) < 1:
        raise BuildError("hidden_dim, embed_dim and vocab must be >= 1")
    return ArchitectureSpec(
        kind=CellKind.RNN,
        cell=cell,
        stages=0,
        cells_per_stage=1,
        residual=False,
        hidden_dim=hidden_dim,
        embed_dim=embed_dim,
        vocab_size=vocab,
    )


def _cnn_layers(arch: ArchitectureSpec):
    block = topo.map_to_block(arch.cell)
    h, w = arch.input_resolution
    stem_macs, stem_params = conv3x3_cost(h * w, arch.image_channels, arch.stem_filters)
    rows = [("Stem CONV", ResourceReport((CostItem("stem", "conv3x3", stem_macs, stem_params),)))]
    channels = arch.stem_filters
    for st in arch.stage_plan():
        hw = st.height * st.width
        rep = ResourceReport()
        for j in range(st.cells):
            prefix = f"stage{st.index}.cell{j}."
            shape = CnnShape(st.height, st.width, st.filters, channels)
            rep = rep + cnn_cell_cost(block, arch.cell.node_ops, shape).prefixed(prefix + "node")
            out = cnn_cell_out_channels(block, shape)
            if out != st.filters:
                m, p = conv1x1_cost(hw, out, st.filters)
                rep = rep + ResourceReport((CostItem(prefix + "proj", "conv1x1", m, p),))
            if arch.residual and channels != st.filters:
                m, p = conv1x1_cost(hw, channels, st.filters)
                rep = rep + ResourceReport((CostItem(prefix + "residual", "conv1x1", m, p),))
            channels = st.filters
        rows.append((f"Stage {st.index}", rep))
    fc = CostItem("classifier", "fc", channels * arch.num_classes, channels * arch.num_classes + arch.num_classes)
    rows.append(("Classifier", ResourceReport((fc,))))
    return rows


def _rnn_layers(arch: ArchitectureSpec):
    block = topo.map_to_block(arch.cell)
    d, e, v = arch.hidden_dim, arch.embed_dim, arch.vocab_size
    cell = rnn_cell_cost(block, RnnShape(d, v, e), arch.cell.node_ops).prefixed("cell.node")
    return [
        ("Embedding", ResourceReport((CostItem("embedding", "embedding", 0, v * e),))),
        ("Cell", cell),
        ("Decoder", ResourceReport((CostItem("decoder", "fc", d * v, d * v + v),))),
    ]


def architecture_layers(arch: ArchitectureSpec) -> list[tuple[str, ResourceReport]]:
    """Hierarchy rows with their cost reports, in network order."""
    if arch.kind is CellKind.CNN:
        return _cnn_layers(arch)
    return _rnn_layers(arch)


# -- export ------------------------------------------------------------------


def to_dict(arch: ArchitectureSpec) -> dict:
    doc = {"kind": arch.kind.value, "cell": topo.to_dict(arch.cell)}
    if arch.kind is CellKind.CNN:
        doc.update(
            stages=arch.stages,
            cells_per_stage=arch.cells_per_stage,
            base_filters=arch.base_filters,
            input_resolution=list(arch.input_resolution),
            num_classes=arch.num_classes,
            residual=arch.residual,
        )
    else:
        doc.update(hidden_dim=arch.hidden_dim, embed_dim=arch.embed_dim, vocab_size=arch.vocab_size)
    return doc


def from_dict(doc: dict) -> ArchitectureSpec:
    try:
        cell = topo.from_dict(doc["cell"])
        if CellKind(doc["kind"]) is CellKind.CNN:
            return build_cnn(
                cell,
                stages=doc["stages"],
                t=doc["cells_per_stage"],
                base_filters=doc["base_filters"],
                resolution=tuple(doc["input_resolution"]),
                num_classes=doc["num_classes"],
                residual=doc["residual"],
            )
        return build_rnn(cell, doc["hidden_dim"], doc["embed_dim"], doc["vocab_size"])
    except KeyError as exc:
        raise topo.ParseError("missing key", field=exc.args[0]) from None


def _summary(arch: ArchitectureSpec) -> str:
    layers = architecture_layers(arch)
    if arch.kind is CellKind.CNN:
        h, w = arch.input_resolution
        res = [f"{h}x{w}"] + [f"{s.height}x{s.width}" for s in arch.stage_plan()] + ["1x1"]
        regime = [f"CONV 3x3 {arch.stem_filters} filters"]
        regime += [f"Cell, T={s.cells}, {s.filters} filters" for s in arch.stage_plan()]
        regime += ["AP, FC, Softmax"]
        names = [layers[0][0]] + [("MP + " if s.pooled else "") + f"Stage {s.index}" for s in arch.stage_plan()]
        names += ["Classifier"]
    else:
        d, e, v = arch.hidden_dim, arch.embed_dim, arch.vocab_size
        names = [name for name, _ in layers]
        res = [f"{e}", f"{d}", f"{v}"]
        regime = [f"Embedding {v}->{e}", f"Cell, {len(topo.map_to_block(arch.cell).live_nodes)} live nodes", f"FC {d}->{v}"]
    header = ("Hierarchy", "Output", "Regime", "MACs", "Params")
    rows = [(n, r, g, str(rep.macs), str(rep.params)) for n, r, g, (_, rep) in zip(names, res, regime, layers)]
    total = architecture_cost(arch)
    rows.append(("Total", "", "", str(total.macs), str(total.params)))
    widths = [max(len(row[i]) for row in rows + [header]) for i in range(5)]

    def fmt(row):
        cells = [row[i].ljust(widths[i]) if i < 3 else row[i].rjust(widths[i]) for i in range(5)]
        return " | ".join(cells).rstrip()

    sep = "-+-".join("-" * wd for wd in widths)
    return "\n".join([fmt(header), sep] + [fmt(r) for r in rows[:-1]] + [sep, fmt(rows[-1])]) + "\n"


def _dot(arch: ArchitectureSpec) -> str:
    lines = ["digraph architecture {", "  rankdir=TB;", "  node [shape=box];"]
    if arch.kind is CellKind.CNN:
        order = ["stem"]
        lines.append(f'  stem [label="Stem CONV 3x3 {arch.stem_filters}"];')
        for st in arch.stage_plan():
            lines.append(f"  subgraph cluster_stage{st.index} {{")
            lines.append(f'    label="Stage {st.index} ({st.height}x{st.width}, {st.filters} filters)";')
            if st.pooled:
                name = f"s{st.index}_pool"
                lines.append(f'    {name} [label="MaxPool 2x2"];')
                order.append(name)
            for j in range(st.cells):
                name = f"s{st.index}_c{j}"
                lines.append(f'    {name} [label="Cell {j}"];')
                order.append(name)
            lines.append("  }")
        lines.append('  classifier [label="AP, FC, Softmax"];')
        order.append("classifier")
    else:
        order = ["embedding", "cell", "decoder"]
        lines.append(f'  embedding [label="Embedding {arch.vocab_size}->{arch.embed_dim}"];')
        lines.append(f'  cell [label="Cell d={arch.hidden_dim}"];')
        lines.append(f'  decoder [label="FC {arch.hidden_dim}->{arch.vocab_size}"];')
        lines.append("  cell -> cell [style=dashed, label=h];")
    for a, b in zip(order, order[1:]):
        lines.append(f"  {a} -> {b};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export(arch: ArchitectureSpec, format: str) -> str:
    if format == "json":
        return json.dumps(to_dict(arch), indent=2) + "\n"
    if format == "dot":
        return _dot(arch)
    if format == "summary":
        return _summary(arch)
    raise BuildError(f"unknown export format {format!r}; expected json, dot or summary")


def load_json(text: str) -> ArchitectureSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise topo.ParseError(exc.msg, line=exc.lineno) from None
    return from_dict(doc)
