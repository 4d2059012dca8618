"""Random-graph baseline cells (Watts-Strogatz, Erdos-Renyi, Barabasi-Albert).

Undirected graphs come from networkx's standard generators; each edge is then
oriented from the lower to the higher node id, which makes the result a DAG
under the same fixed order used by searched cells.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import statistics
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .topology import CellTopology, op_alphabet


class PriorError(ValueError):
    pass


class Family(str, enum.Enum):
    WS = "ws"
    ER = "er"
    BA = "ba"


DEFAULT_PARAMS = {
    Family.WS: {"k": 4, "p": 0.75},
    Family.ER: {"p": 0.2},
    Family.BA: {"m": 2},
}


@dataclass(frozen=True)
class PriorSpec:
    family: Family
    nodes: int = 15
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        try:
            fam = Family(str(self.family).lower() if not isinstance(self.family, Family) else self.family)
        except ValueError:
            raise PriorError(f"unknown prior family {self.family!r}") from None
        merged = dict(DEFAULT_PARAMS[fam])
        merged.update(self.params)
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "params", merged)
        n = self.nodes
        if n < 1:
            raise PriorError("nodes must be >= 1")
        if fam is Family.WS:
            k, p = merged["k"], merged["p"]
            if k % 2 or not 0 <= k < n or not 0 <= p <= 1:
                raise PriorError(f"WS needs even 0 <= k < n and p in [0, 1], got k={k}, p={p}")
        elif fam is Family.ER:
            if not 0 <= merged["p"] <= 1:
                raise PriorError(f"ER needs p in [0, 1], got {merged['p']}")
        elif not 1 <= merged["m"] < n:
            raise PriorError(f"BA needs 1 <= m < n, got m={merged['m']}")


def undirected_graph(spec: PriorSpec) -> nx.Graph:
    n, p = spec.nodes, spec.params
    if spec.family is Family.WS:
        return nx.watts_strogatz_graph(n, p["k"], p["p"], seed=spec.seed)
    if spec.family is Family.ER:
        return nx.gnp_random_graph(n, p["p"], seed=spec.seed)
    return nx.barabasi_albert_graph(n, p["m"], seed=spec.seed)


def generate_prior(spec: PriorSpec, kind) -> CellTopology:
    graph = undirected_graph(spec)
    edges = sorted((min(u, v), max(u, v)) for u, v in graph.edges())
    alphabet = op_alphabet(kind)
    rng = np.random.default_rng([spec.seed, spec.nodes, 2])
    ops = [alphabet[i] for i in rng.integers(0, len(alphabet), size=spec.nodes)]
    return CellTopology(ops, edges, kind)


@dataclass(frozen=True)
class TrialRow:
    family: str
    nodes: int
    seed: int
    score: float
    perf: float
    macs: int
    params: int


@dataclass(frozen=True)
class FamilySummary:
    family: str
    nodes: int
    trials: int
    perf_mean: float
    perf_sd: float
    macs_mean: float
    macs_sd: float
    score_mean: float
    score_median: float


@dataclass(frozen=True)
class ComparisonReport:
    trials: tuple[TrialRow, ...]
    families: tuple[FamilySummary, ...]
    shrink: TrialRow

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["topology", "nodes", "seed", "S", "perf", "macs", "params"])
        for r in self.trials + (self.shrink,):
            w.writerow([r.family, r.nodes, r.seed, repr(r.score), repr(r.perf), r.macs, r.params])
        return buf.getvalue()

    def to_table(self) -> str:
        rows = [("Topology", "Nodes", "Perf", "MACs", "S (median)")]
        for f in self.families:
            rows.append((f.family.upper(), str(f.nodes), f"{f.perf_mean:.4f}±{f.perf_sd:.4f}",
                         f"{f.macs_mean:.0f}±{f.macs_sd:.0f}", f"{f.score_median:.4f}"))
        s = self.shrink
        rows.append(("Shrink", str(s.nodes), f"{s.perf:.4f}", str(s.macs), f"{s.score:.4f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(5)]
        lines = [" | ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "-+-".join("-" * wd for wd in widths))
        return "\n".join(lines) + "\n"


def compare_topologies(specs, shrink_result: CellTopology, cfg, trials: int = 10, evaluator=None) -> ComparisonReport:
    """Evaluate ``trials`` seeded draws per prior spec against the searched cell.

    Trial ``i`` of a spec uses seed ``spec.seed + i``. Standard deviations are
    population values, so a single trial reports 0.
    """
    from .shrink import candidate_seed, make_evaluator, resource_report, search_metric

    if trials < 1:
        raise PriorError("trials must be >= 1")
    ev = evaluator or make_evaluator(cfg)
    kind = cfg.resource_kind.value

    def evaluate(label, g, seed, nodes):
        result = ev(g, candidate_seed(cfg.seed, -2, (seed, nodes)))
        report = resource_report(g, result, cfg)
        return TrialRow(label, nodes, seed, search_metric(result.perf, report.get(kind), cfg.lam),
                        result.perf, report.macs, report.params)

    rows, summaries = [], []
    for spec in specs:
        fam_rows = []
        for i in range(trials):
            draw = dataclasses.replace(spec, seed=spec.seed + i)
            fam_rows.append(evaluate(spec.family.value, generate_prior(draw, cfg.kind), draw.seed, spec.nodes))
        perfs = [r.perf for r in fam_rows]
        macs = [r.macs for r in fam_rows]
        scores = [r.score for r in fam_rows]
        summaries.append(FamilySummary(
            spec.family.value, spec.nodes, trials,
            statistics.fmean(perfs), statistics.pstdev(perfs),
            statistics.fmean(macs), statistics.pstdev(macs),
            statistics.fmean(scores), statistics.median(scores),
        ))
        rows.extend(fam_rows)
    shrink_row = evaluate("shrink", shrink_result, cfg.seed, shrink_result.node_count)
    return ComparisonReport(tuple(rows), tuple(summaries), shrink_row)


def default_specs(nodes: int = 15, seed: int = 0) -> list[PriorSpec]:
    return [PriorSpec(f, nodes, {}, seed) for f in Family]
