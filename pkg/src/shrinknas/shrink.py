"""Progressive edge shrinking.

Starting from a complete DAG, every iteration enumerates the one-edge-removed
neighbours of the current cell, evaluates a random subset of ``k`` of them and
moves to the best under ``S = perf - lambda * ln(res)``. The loop stops once no
edge is left; the representative cell is the best-scoring cell seen along the
way (initial cell included).
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import topology as topo
from .builder import build_cnn, build_rnn
from .cost import ResourceReport, architecture_cost
from .evaluators import (
    SURROGATE_WEIGHTS,
    EvalResult,
    SurrogateEvaluator,
    TrainerEvaluator,
    TrainSettings,
    default_cost_shape,
    make_dataset,
)
from .topology import CellKind, CellTopology, Edge

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class ResourceKind(str, enum.Enum):
    MACS = "macs"
    PARAMS = "params"


class ResourceScope(str, enum.Enum):
    CELL = "cell"
    ARCHITECTURE = "architecture"


class EvaluatorKind(str, enum.Enum):
    SURROGATE = "surrogate"
    TRAINER = "trainer"


DEFAULT_DATASETS = {
    CellKind.CNN: {"generator": "blobs", "seed": 0},
    CellKind.RNN: {"generator": "tokens", "mode": "markov", "vocab": 8, "seed": 0},
}


@dataclass(frozen=True)
class SearchConfig:
    n: int = 8
    k: int = 10
    lam: float = 0.1
    resource_kind: ResourceKind = ResourceKind.MACS
    res_scope: ResourceScope = ResourceScope.CELL
    evaluator: EvaluatorKind = EvaluatorKind.SURROGATE
    seed: int = 0
    epochs_per_candidate: int = 20
    kind: CellKind = CellKind.CNN
    surrogate_weights: tuple = SURROGATE_WEIGHTS
    cost_shape: object = None
    dataset: dict | None = None
    train: TrainSettings = field(default_factory=TrainSettings)

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", CellKind(self.kind))
            object.__setattr__(self, "resource_kind", ResourceKind(self.resource_kind))
            object.__setattr__(self, "res_scope", ResourceScope(self.res_scope))
            object.__setattr__(self, "evaluator", EvaluatorKind(self.evaluator))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.n < 2:
            raise ConfigError(f"n must be >= 2, got {self.n}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not self.lam >= 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.epochs_per_candidate < 0:
            raise ConfigError("epochs_per_candidate must be >= 0")
        if len(self.surrogate_weights) != 3:
            raise ConfigError("surrogate_weights needs three values")

    @classmethod
    def for_kind(cls, kind, **overrides):
        """Defaults for a cell kind: n=8, k=10, MACs for CNN; n=6, k=5, params for RNN."""
        kind = CellKind(kind)
        base = dict(n=8, k=10, resource_kind=ResourceKind.MACS)
        if kind is CellKind.RNN:
            base = dict(n=6, k=5, resource_kind=ResourceKind.PARAMS)
        base.update(overrides)
        return cls(kind=kind, **base)


def make_evaluator(cfg: SearchConfig):
    if cfg.evaluator is EvaluatorKind.SURROGATE:
        return SurrogateEvaluator(cfg.surrogate_weights, cfg.cost_shape)
    dataset = make_dataset(cfg.dataset or DEFAULT_DATASETS[cfg.kind])
    return TrainerEvaluator(dataset, cfg.epochs_per_candidate, cfg.train, cfg.cost_shape)


def search_metric(perf: float, res: float, lam: float) -> float:
    """``perf - lam * ln(res)`` with ``res`` floored at 1 so empty cells score ``perf``."""
    return perf - lam * math.log(max(res, 1))


def proxy_architecture(g: CellTopology, cfg: SearchConfig):
    """Architecture whose cost stands for ``Res(A(g))`` when ``res_scope`` is architecture.

    CNN: three stages of one cell at 16/32/64 filters on 32x32 inputs. RNN:
    embedding, cell and decoder at the dims of ``cfg.cost_shape``.
    """
    if g.kind is CellKind.CNN:
        return build_cnn(g, stages=3, t=1, base_filters=16, resolution=(32, 32))
    shape = cfg.cost_shape or default_cost_shape(g.kind)
    return build_rnn(g, shape.hidden_dim, shape.embed_dim, shape.vocab_size)


def resource_report(g: CellTopology, result: EvalResult, cfg: SearchConfig) -> ResourceReport:
    if cfg.res_scope is ResourceScope.CELL:
        return result.res
    return architecture_cost(proxy_architecture(g, cfg))


def score(g: CellTopology, cfg: SearchConfig, evaluator=None, seed=None):
    """Evaluate ``g`` and return ``(S, perf, res)``."""
    ev = evaluator or make_evaluator(cfg)
    result = ev(g, cfg.seed if seed is None else seed)
    res = resource_report(g, result, cfg).get(cfg.resource_kind.value)
    return search_metric(result.perf, res, cfg.lam), result.perf, res


def shrink_space(g: CellTopology) -> list[CellTopology]:
    return [topo.remove_edge(g, e) for e in g.edges]


def select_candidates(space: list, k: int, rng) -> list:
    """Uniform sample of ``min(k, len(space))`` distinct members, kept in space order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= len(space):
        return list(space)
    picked = np.sort(rng.choice(len(space), size=k, replace=False))
    return [space[i] for i in picked]


def candidate_seed(seed: int, t: int, edge: Edge | None) -> int:
    u, v = edge if edge is not None else (-1, -1)
    words = [seed, t + 1, u + 1, v + 1]
    return int(np.random.SeedSequence([w & 0xFFFFFFFF for w in words]).generate_state(1)[0])


@dataclass(frozen=True)
class CandidateRecord:
    t: int
    removed_edge: Edge | None
    topology: CellTopology
    score: float
    perf: float
    raw_metric: float
    macs: int
    params: int
    winner: bool = False

    @property
    def live_nodes(self) -> int:
        return len(topo.map_to_block(self.topology).live_nodes)

    @property
    def edges_remaining(self) -> int:
        return self.topology.edge_count


@dataclass(frozen=True)
class ShrinkStep:
    t: int
    candidates: tuple[CandidateRecord, ...]

    @property
    def winner(self) -> CandidateRecord:
        return next(c for c in self.candidates if c.winner)


@dataclass(frozen=True)
class ShrinkTrajectory:
    config: SearchConfig
    initial: CandidateRecord
    steps: tuple[ShrinkStep, ...]
    best: CandidateRecord

    @property
    def g_opt(self) -> CellTopology:
        return self.best.topology

    @property
    def winners(self) -> list[CandidateRecord]:
        return [s.winner for s in self.steps]

    @property
    def evaluations(self) -> int:
        return sum(len(s.candidates) for s in self.steps)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "removed_edge", "S", "perf", "raw_metric", "macs", "params",
                    "live_nodes", "edges_remaining", "winner"])
        for step in self.steps:
            for c in step.candidates:
                u, v = c.removed_edge
                w.writerow([c.t, f"{u}-{v}", repr(c.score), repr(c.perf), repr(c.raw_metric),
                            c.macs, c.params, c.live_nodes, c.edges_remaining, int(c.winner)])
        return buf.getvalue()


def _record(t, edge, g, result: EvalResult, cfg: SearchConfig) -> CandidateRecord:
    report = resource_report(g, result, cfg)
    res = report.get(cfg.resource_kind.value)
    return CandidateRecord(t, edge, g, search_metric(result.perf, res, cfg.lam), result.perf,
                           result.raw_metric, report.macs, report.params)


def _removed(parent: CellTopology, child: CellTopology) -> Edge:
    (edge,) = set(parent.edges) - set(child.edges)
    return edge


def run_shrink(cfg: SearchConfig, evaluator=None, workers: int = 1) -> ShrinkTrajectory:
    """Shrink a complete ``cfg.n``-node DAG one edge at a time until no edge is left.

    Candidate evaluations within an iteration run on up to ``workers`` threads;
    results are committed in removed-edge order and ties on ``S`` go to the
    lexicographically smallest removed edge, so the trajectory does not depend
    on completion order.
    """
    ev = evaluator or make_evaluator(cfg)
    select_rng = np.random.default_rng([cfg.seed, 1])
    g = topo.complete_dag(cfg.n, cfg.kind, cfg.seed)
    initial = _record(-1, None, g, ev(g, candidate_seed(cfg.seed, -1, None)), cfg)
    steps = []
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        t = 0
        while g.edges:
            picked = select_candidates(shrink_space(g), cfg.k, select_rng)
            edges = [_removed(g, c) for c in picked]
            seeds = [candidate_seed(cfg.seed, t, e) for e in edges]
            if pool is None:
                results = [ev(c, s) for c, s in zip(picked, seeds)]
            else:
                results = list(pool.map(ev, picked, seeds))
            records = sorted(
                (_record(t, e, c, r, cfg) for e, c, r in zip(edges, picked, results)),
                key=lambda rec: rec.removed_edge,
            )
            best_i = max(range(len(records)), key=lambda i: (records[i].score, -i))
            records[best_i] = _with_winner(records[best_i])
            steps.append(ShrinkStep(t, tuple(records)))
            g = records[best_i].topology
            log.info("t=%d removed %s S=%.6f edges left %d", t, records[best_i].removed_edge,
                     records[best_i].score, g.edge_count)
            t += 1
    finally:
        if pool is not None:
            pool.shutdown()
    pool_of_cells = [initial] + [s.winner for s in steps]
    best = max(pool_of_cells, key=lambda rec: rec.score)
    return ShrinkTrajectory(cfg, initial, tuple(steps), best)


def _with_winner(rec: CandidateRecord) -> CandidateRecord:
    return CandidateRecord(rec.t, rec.removed_edge, rec.topology, rec.score, rec.perf,
                           rec.raw_metric, rec.macs, rec.params, True)


@dataclass(frozen=True)
class KSweepRow:
    n: int
    k: int
    final_perf: float
    final_score: float
    evaluations: int
    iterations: int


def expected_evaluations(n: int, k: int) -> int:
    edges = n * (n - 1) // 2
    return sum(min(k, e) for e in range(1, edges + 1))


def k_sweep(cfg: SearchConfig, k_values, n_values, evaluator=None, workers: int = 1) -> list[KSweepRow]:
    """Run a shrink per ``(n, k)`` and report the representative cell's perf and evaluation count."""
    if not k_values or not n_values:
        raise ConfigError("k_sweep needs non-empty k and n lists")
    rows = []
    for n in n_values:
        for k in k_values:
            run_cfg = dataclasses.replace(cfg, n=n, k=k)
            traj = run_shrink(run_cfg, evaluator, workers)
            rows.append(KSweepRow(n, k, traj.best.perf, traj.best.score, traj.evaluations, len(traj.steps)))
    return rows


def k_sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "k", "final_perf", "final_S", "evaluations", "iterations"])
    for r in rows:
        w.writerow([r.n, r.k, repr(r.final_perf), repr(r.final_score), r.evaluations, r.iterations])
    return buf.getvalue()
