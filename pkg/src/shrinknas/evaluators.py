"""Performance evaluators for candidate cells.

Two evaluators share one result type. :class:`SurrogateEvaluator` scores a cell
from its mapped structure alone and is fully deterministic and instant.
:class:`TrainerEvaluator` builds a small network around the cell, trains it
with mini-batch gradient descent on a seeded synthetic dataset and reports the
best validation metric.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .cost import CnnShape, ResourceReport, RnnShape, cell_cost
from .topology import CellKind, CellTopology, MappedBlock, NodeOp, map_to_block, op_alphabet, path_count

DEFAULT_CNN_COST_SHAPE = CnnShape(height=32, width=32, stage_filters=16, input_channels=16)
DEFAULT_RNN_COST_SHAPE = RnnShape(hidden_dim=200, vocab_size=10000, embed_dim=200)
SURROGATE_WEIGHTS = (0.03, 0.10, 0.10)


class EvaluatorError(RuntimeError):
    pass


@dataclass(frozen=True)
class EvalResult:
    perf: float
    raw_metric: float
    res: ResourceReport
    wallclock: float = field(default=0.0, compare=False)


def default_cost_shape(kind):
    return DEFAULT_CNN_COST_SHAPE if CellKind(kind) is CellKind.CNN else DEFAULT_RNN_COST_SHAPE


def perplexity_to_perf(ppl: float) -> float:
    return 1.0 / (1.0 + math.log(ppl))


# -- synthetic proxy datasets -----------------------------------------------


@dataclass(frozen=True, eq=False)
class ProxyDataset:
    """Seeded synthetic dataset. Images are NHWC; token streams are 1-D int arrays."""

    kind: CellKind
    x_train: np.ndarray
    y_train: np.ndarray | None
    x_val: np.ndarray
    y_val: np.ndarray | None
    descriptor: dict

    @property
    def seed(self) -> int:
        return self.descriptor["seed"]

    @property
    def num_classes(self) -> int:
        if self.kind is CellKind.CNN:
            return int(self.descriptor.get("classes", 2))
        return int(self.descriptor["vocab"])


def gaussian_blobs(n_train=200, n_val=100, size=8, channels=3, classes=2, separation=1.0, noise=1.0, seed=0):
    """Images whose pixels are a per-class colour plus isotropic Gaussian noise."""
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(classes, channels))
    means *= separation / np.linalg.norm(means, axis=1, keepdims=True)
    n = n_train + n_val
    y = np.arange(n) % classes
    rng.shuffle(y)
    x = means[y][:, None, None, :] + noise * rng.normal(size=(n, size, size, channels))
    desc = dict(generator="blobs", n_train=n_train, n_val=n_val, size=size, channels=channels,
                classes=classes, separation=separation, noise=noise, seed=seed)
    return ProxyDataset(CellKind.CNN, x[:n_train], y[:n_train], x[n_train:], y[n_train:], desc)


def spirals(n_train=300, n_val=150, turns=1.5, noise=0.1, seed=0):
    """Two interleaved spirals as 1x1 two-channel images."""
    rng = np.random.default_rng(seed)
    n = n_train + n_val
    y = np.arange(n) % 2
    rng.shuffle(y)
    r = rng.uniform(0.1, 1.0, size=n)
    theta = 2 * np.pi * turns * r + np.pi * y
    pts = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1) + noise * rng.normal(size=(n, 2))
    x = pts[:, None, None, :]
    desc = dict(generator="spirals", n_train=n_train, n_val=n_val, turns=turns, noise=noise, seed=seed)
    return ProxyDataset(CellKind.CNN, x[:n_train], y[:n_train], x[n_train:], y[n_train:], desc)


def token_sequence(vocab=4, n_train=512, n_val=128, mode="repeat", concentration=0.3, seed=0):
    """Token stream: ``repeat`` cycles a seeded permutation; ``markov`` samples a random chain."""
    rng = np.random.default_rng(seed)
    n = n_train + n_val + 1
    if mode == "repeat":
        cycle = rng.permutation(vocab)
        tokens = np.resize(cycle, n)
    elif mode == "markov":
        trans = rng.dirichlet(np.full(vocab, concentration), size=vocab)
        tokens = np.empty(n, dtype=np.int64)
        tokens[0] = rng.integers(vocab)
        for i in range(1, n):
            tokens[i] = rng.choice(vocab, p=trans[tokens[i - 1]])
    else:
        raise ValueError(f"unknown token mode {mode!r}")
    tokens = tokens.astype(np.int64)
    desc = dict(generator="tokens", vocab=vocab, n_train=n_train, n_val=n_val, mode=mode,
                concentration=concentration, seed=seed)
    # streams overlap by one token so the last train target is the first val input
    return ProxyDataset(CellKind.RNN, tokens[: n_train + 1], None, tokens[n_train:], None, desc)


GENERATORS = {"blobs": gaussian_blobs, "spirals": spirals, "tokens": token_sequence}


def make_dataset(descriptor: dict) -> ProxyDataset:
    desc = dict(descriptor)
    gen = desc.pop("generator")
    if gen not in GENERATORS:
        raise ValueError(f"unknown dataset generator {gen!r}")
    return GENERATORS[gen](**desc)


# -- surrogate ---------------------------------------------------------------


def surrogate_score(block: MappedBlock, ops, alphabet_size: int, weights=SURROGATE_WEIGHTS) -> float:
    if block.empty:
        return 0.0
    w_nodes, w_paths, w_div = weights
    diversity = len({NodeOp(ops[v]) for v in block.live_nodes}) / alphabet_size
    perf = w_nodes * len(block.live_nodes) + w_paths * math.log1p(path_count(block)) + w_div * diversity
    return min(max(perf, 0.0), 1.0)


def surrogate_perf(g: CellTopology, weights=SURROGATE_WEIGHTS, cost_shape=None) -> EvalResult:
    start = time.perf_counter()
    block = map_to_block(g)
    perf = surrogate_score(block, g.node_ops, len(op_alphabet(g.kind)), weights)
    res = cell_cost(g, block, cost_shape or default_cost_shape(g.kind))
    return EvalResult(perf, perf, res, time.perf_counter() - start)


class SurrogateEvaluator:
    name = "surrogate"

    def __init__(self, weights=SURROGATE_WEIGHTS, cost_shape=None):
        self.weights = tuple(weights)
        self.cost_shape = cost_shape

    def __call__(self, g: CellTopology, seed=None) -> EvalResult:
        return surrogate_perf(g, self.weights, self.cost_shape)


# -- CNN cell forward --------------------------------------------------------


def init_cnn_cell(block: MappedBlock, ops, input_channels: int, filters: int, rng) -> dict:
    """He-initialised weights for every live node: pointwise, optional depthwise, affine."""
    w = {}
    for v in block.live_nodes:
        c_in = (input_channels if v in block.input_fed_nodes else 0) + filters * len(block.per_node_inputs[v])
        if NodeOp(ops[v]) is NodeOp.SEPCONV3X3:
            w[f"node{v}.dw"] = rng.normal(scale=math.sqrt(2 / 9), size=(3, 3, c_in))
        w[f"node{v}.pw"] = rng.normal(scale=math.sqrt(2 / c_in), size=(c_in, filters))
        w[f"node{v}.gamma"] = np.ones(filters)
        w[f"node{v}.beta"] = np.zeros(filters)
    return w


def cnn_forward(block: MappedBlock, ops, input, weights: dict) -> Tensor:
    """Evaluate a CNN cell on an NHWC input.

    Each live node concatenates its aggregands along channels (cell input first,
    then predecessors by id), applies its conv analog, a per-channel affine and
    ReLU. The output is the channel concat of the leaves; an empty block passes
    the input through.
    """
    x = ad.as_tensor(input)
    if block.empty:
        return ad.identity(x)
    outputs: dict[int, Tensor] = {}
    for v in block.live_nodes:
        parts = [x if src == "in" else outputs[src] for src in block.aggregands(v)]
        agg = ad.concat(parts, axis=-1)
        c_in = agg.shape[-1]
        pw = weights[f"node{v}.pw"]
        if pw.shape[0] != c_in:
            raise ShapeError(f"node {v}: pointwise weight expects {pw.shape[0]} channels, got {c_in}")
        if NodeOp(ops[v]) is NodeOp.SEPCONV3X3:
            dw = weights[f"node{v}.dw"]
            if dw.shape != (3, 3, c_in):
                raise ShapeError(f"node {v}: depthwise weight {dw.shape} for {c_in} channels")
            agg = ad.depthwise3x3(agg, dw)
        y = ad.matmul(agg, pw)
        y = ad.add(ad.mul(y, weights[f"node{v}.gamma"]), weights[f"node{v}.beta"])
        outputs[v] = ad.relu(y)
    return ad.concat([outputs[v] for v in block.leaf_nodes], axis=-1)


# -- RNN cell step -----------------------------------------------------------


def _src_name(src) -> str:
    return "in" if src == "in" else f"n{src}"


def init_rnn_cell(block: MappedBlock, embed_dim: int, hidden_dim: int, rng, scale=None) -> dict:
    s = scale if scale is not None else 1.0 / math.sqrt(hidden_dim)
    d = hidden_dim
    w = {
        "src.wx": rng.normal(scale=1.0 / math.sqrt(embed_dim), size=(embed_dim, d)),
        "src.wh": rng.normal(scale=s, size=(d, d)),
    }
    for v in block.live_nodes:
        for src in block.aggregands(v):
            key = f"node{v}.{_src_name(src)}"
            w[key + ".w1"] = rng.normal(scale=s, size=(d, d))
            w[key + ".b1"] = np.zeros(d)
            w[key + ".w2"] = rng.normal(scale=s, size=(d, d))
            w[key + ".b2"] = np.zeros(d)
    return w


def highway_node(inputs, activation, pair_weights) -> Tensor:
    """Sum over inputs of ``c * a(x w2 + b2) + (1 - c) * x`` with gate ``c = sigmoid(x w1 + b1)``.

    ``pair_weights`` holds one ``(w1, b1, w2, b2)`` tuple per input.
    """
    act = ad.ACTIVATIONS[NodeOp(activation).value]
    terms = []
    for x, (w1, b1, w2, b2) in zip(inputs, pair_weights):
        x = ad.as_tensor(x)
        if w1.shape[0] != x.shape[-1]:
            raise ShapeError(f"highway input of width {x.shape[-1]} against gate {w1.shape}")
        c = ad.sigmoid(ad.add(ad.matmul(x, w1), b1))
        h = act(ad.add(ad.matmul(x, w2), b2))
        terms.append(ad.add(ad.mul(c, h), ad.mul(ad.add(1.0, ad.neg(c)), x)))
    return ad.add_n(terms)


def rnn_source(x_t, h_prev, weights) -> Tensor:
    return ad.tanh(ad.add(ad.matmul(x_t, weights["src.wx"]), ad.matmul(h_prev, weights["src.wh"])))


def rnn_cell_step(block: MappedBlock, activations, x_t, h_prev, weights: dict) -> Tensor:
    """One time step of the cell. An empty block returns ``h_prev`` unchanged."""
    h_prev = ad.as_tensor(h_prev)
    if block.empty:
        return ad.identity(h_prev)
    x_t = ad.as_tensor(x_t)
    wx, wh = weights["src.wx"], weights["src.wh"]
    if x_t.shape[-1] != wx.shape[0] or h_prev.shape[-1] != wh.shape[0]:
        raise ShapeError(f"source: x {x_t.shape}, h {h_prev.shape} vs wx {wx.shape}, wh {wh.shape}")
    s = rnn_source(x_t, h_prev, weights)
    outputs: dict[int, Tensor] = {}
    for v in block.live_nodes:
        srcs = block.aggregands(v)
        inputs = [s if src == "in" else outputs[src] for src in srcs]
        pw = []
        for src in srcs:
            key = f"node{v}.{_src_name(src)}"
            pw.append(tuple(weights[key + suffix] for suffix in (".w1", ".b1", ".w2", ".b2")))
        outputs[v] = highway_node(inputs, activations[v], pw)
    return ad.mean_n([outputs[v] for v in block.leaf_nodes])


# -- desk-scale networks -----------------------------------------------------


class DeskCNN:
    """Stem -> stages of cells with residuals -> global pool -> linear classifier."""

    def __init__(self, g: CellTopology, image_shape, classes: int, rng, stages=2, cells_per_stage=1, base_filters=4):
        self.block = map_to_block(g)
        self.ops = g.node_ops
        h, w, c = image_shape
        self.stages = stages
        self.t = cells_per_stage
        stem = 2 * base_filters
        p = {
            "stem.w": rng.normal(scale=math.sqrt(2 / (9 * c)), size=(9 * c, stem)),
            "stem.gamma": np.ones(stem),
            "stem.beta": np.zeros(stem),
        }
        self.plan = []
        channels = stem
        for s in range(stages):
            f = base_filters * 2**s
            for j in range(cells_per_stage):
                pre = f"s{s}c{j}."
                for k, v in init_cnn_cell(self.block, self.ops, channels, f, rng).items():
                    p[pre + k] = v
                out = channels if self.block.empty else f * len(self.block.leaf_nodes)
                if out != f:
                    p[pre + "proj.w"] = rng.normal(scale=math.sqrt(1 / out), size=(out, f))
                    p[pre + "proj.gamma"] = np.ones(f)
                    p[pre + "proj.beta"] = np.zeros(f)
                if channels != f:
                    p[pre + "res.w"] = rng.normal(scale=math.sqrt(1 / channels), size=(channels, f))
                    p[pre + "res.gamma"] = np.ones(f)
                    p[pre + "res.beta"] = np.zeros(f)
                self.plan.append((s, j, pre))
                channels = f
        p["fc.w"] = rng.normal(scale=math.sqrt(1 / channels), size=(channels, classes))
        p["fc.b"] = np.zeros(classes)
        self.params = ad.param_table(p)

    def _affine_conv(self, x, pre):
        p = self.params
        return ad.add(ad.mul(ad.matmul(x, p[pre + ".w"]), p[pre + ".gamma"]), p[pre + ".beta"])

    def logits(self, x) -> Tensor:
        p = self.params
        y = ad.relu(self._affine_conv(ad.im2col3x3(x), "stem"))
        for s, j, pre in self.plan:
            if s > 0 and j == 0:
                y = ad.maxpool2x2(y)
            cell_w = {k[len(pre):]: t for k, t in p.items() if k.startswith(pre)}
            out = cnn_forward(self.block, self.ops, y, cell_w)
            if pre + "proj.w" in p:
                out = self._affine_conv(out, pre + "proj")
            skip = self._affine_conv(y, pre + "res") if pre + "res.w" in p else y
            y = ad.add(out, skip)
        pooled = ad.mean(y, axis=(1, 2))
        return ad.add(ad.matmul(pooled, p["fc.w"]), p["fc.b"])

    def loss(self, x, y) -> Tensor:
        return ad.cross_entropy(self.logits(x), y)

    def accuracy(self, x, y) -> float:
        return float((self.logits(x).data.argmax(axis=-1) == y).mean())


class DeskRNN:
    """Embedding -> cell unrolled over time -> linear decoder, next-token objective."""

    def __init__(self, g: CellTopology, vocab: int, rng, hidden_dim=16, embed_dim=16):
        self.block = map_to_block(g)
        self.activations = g.node_ops
        self.d = hidden_dim
        p = {"embed": rng.normal(scale=1.0, size=(vocab, embed_dim))}
        p.update(init_rnn_cell(self.block, embed_dim, hidden_dim, rng))
        p["dec.w"] = rng.normal(scale=1.0 / math.sqrt(hidden_dim), size=(hidden_dim, vocab))
        p["dec.b"] = np.zeros(vocab)
        self.params = ad.param_table(p)

    def loss(self, inputs, targets) -> Tensor:
        """Mean next-token cross entropy over a (batch, steps) window."""
        p = self.params
        b, steps = inputs.shape
        h = Tensor(np.zeros((b, self.d)))
        logits = []
        for t in range(steps):
            x = ad.take_rows(p["embed"], inputs[:, t])
            h = rnn_cell_step(self.block, self.activations, x, h, p)
            logits.append(ad.add(ad.matmul(h, p["dec.w"]), p["dec.b"]))
        return ad.cross_entropy(ad.concat(logits, axis=0), targets.T.reshape(-1))


def _windows(tokens: np.ndarray, steps: int):
    count = (len(tokens) - 1) // steps
    idx = np.arange(count)[:, None] * steps + np.arange(steps)[None, :]
    return tokens[idx], tokens[idx + 1]


@dataclass
class TrainSettings:
    lr: float | None = None  # None: 0.1 for CNN, 0.5 for RNN
    batch_size: int = 32
    stages: int = 2
    cells_per_stage: int = 1
    base_filters: int = 4
    hidden_dim: int = 16
    embed_dim: int = 16
    bptt: int = 8
    clip_norm: float | None = 1.0


def train_eval(g: CellTopology, dataset: ProxyDataset, budget: int, seed: int,
               settings: TrainSettings | None = None, cost_shape=None) -> EvalResult:
    """Train a desk-scale network around ``g`` and return its best validation metric.

    CNN: perf and raw_metric are validation accuracy. RNN: raw_metric is
    validation perplexity and perf = 1 / (1 + ln perplexity).
    """
    if dataset.kind is not g.kind:
        raise EvaluatorError(f"{g.kind.value} cell cannot be trained on a {dataset.kind.value} dataset")
    if budget < 0:
        raise EvaluatorError("budget must be >= 0")
    cfg = settings or TrainSettings()
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    if g.kind is CellKind.CNN:
        net = DeskCNN(g, dataset.x_train.shape[1:], dataset.num_classes, rng,
                      cfg.stages, cfg.cells_per_stage, cfg.base_filters)
        x, y = dataset.x_train, dataset.y_train
        measure = lambda: net.accuracy(dataset.x_val, dataset.y_val)  # noqa: E731
    else:
        net = DeskRNN(g, dataset.num_classes, rng, cfg.hidden_dim, cfg.embed_dim)
        x, y = _windows(dataset.x_train, cfg.bptt)
        vx, vy = _windows(dataset.x_val, cfg.bptt)
        measure = lambda: math.exp(min(float(net.loss(vx, vy).data), 700.0))  # noqa: E731
    base_lr = cfg.lr if cfg.lr is not None else (0.1 if g.kind is CellKind.CNN else 0.5)
    better = max if g.kind is CellKind.CNN else min
    best = measure() if budget == 0 else None
    params = net.params
    for _ in range(budget):
        order = rng.permutation(len(x))
        for i in range(0, len(x), cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                loss = net.loss(x[idx], y[idx])
            # NaN logits still argmax to a finite accuracy, so check the loss itself
            if not math.isfinite(float(loss.data)):
                raise EvaluatorError(f"training diverged (loss={float(loss.data)})")
            grads = ad.grad(params, loss)
            step = base_lr
            if cfg.clip_norm is not None:
                norm = math.sqrt(sum(float((gr * gr).sum()) for gr in grads.values()))
                if norm > cfg.clip_norm:
                    step *= cfg.clip_norm / norm
            for k, t in params.items():
                t.data -= step * grads[k]
        metric = measure()
        if not math.isfinite(metric):
            raise EvaluatorError(f"training diverged (metric={metric})")
        best = metric if best is None else better(best, metric)
    perf = best if g.kind is CellKind.CNN else perplexity_to_perf(best)
    res = cell_cost(g, net.block, cost_shape or default_cost_shape(g.kind))
    return EvalResult(float(min(max(perf, 0.0), 1.0)), float(best), res, time.perf_counter() - start)


class TrainerEvaluator:
    name = "trainer"

    def __init__(self, dataset: ProxyDataset, epochs: int, settings: TrainSettings | None = None, cost_shape=None):
        self.dataset = dataset
        self.epochs = epochs
        self.settings = settings or TrainSettings()
        self.cost_shape = cost_shape

    def __call__(self, g: CellTopology, seed=0) -> EvalResult:
        return train_eval(g, self.dataset, self.epochs, seed, self.settings, self.cost_shape)
