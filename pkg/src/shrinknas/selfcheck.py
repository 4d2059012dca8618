"""Built-in consistency checks run by ``shrinknas selfcheck``."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import cost
from . import evaluators as ev
from . import topology as topo
from .shrink import expected_evaluations


def central_difference(loss_fn, params: dict, eps: float = 1e-6) -> dict:
    out = {}
    for name, t in params.items():
        g = np.zeros_like(t.data)
        it = np.nditer(t.data, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = t.data[i]
            t.data[i] = old + eps
            hi = float(loss_fn().data)
            t.data[i] = old - eps
            lo = float(loss_fn().data)
            t.data[i] = old
            g[i] = (hi - lo) / (2 * eps)
        out[name] = g
    return out


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / scale)


def _random_loss(rng, out_shape):
    target = rng.normal(size=out_shape)
    return lambda y: ad.mean(ad.mul(ad.add(y, -target), ad.add(y, -target)))


def gradient_cases(rng):
    """Yield ``(name, params, loss_fn)`` covering every differentiable node op."""
    x = rng.normal(size=(2, 4, 4, 3))
    for op in topo.CNN_OPS:
        block = topo.MappedBlock.from_parts({0: ()}, [0])
        w = ad.param_table(ev.init_cnn_cell(block, [op], 3, 2, rng))
        w["node0.gamma"].data[:] = rng.normal(size=2)
        w["node0.beta"].data[:] = rng.normal(size=2)
        lf = _random_loss(rng, (2, 4, 4, 2))
        yield op.value, w, (lambda w=w, block=block, op=op, lf=lf: lf(ev.cnn_forward(block, [op], x, w)))

    block = topo.map_to_block(topo.CellTopology(["conv1x1", "sepconv3x3", "conv1x1"], [(0, 2), (1, 2)], "cnn"))
    ops = ["conv1x1", "sepconv3x3", "conv1x1"]
    w = ad.param_table(ev.init_cnn_cell(block, ops, 3, 2, rng))
    # zero beta puts dead pixels exactly on the ReLU kink, where FD is meaningless
    for name, t in w.items():
        if name.endswith(("gamma", "beta")):
            t.data[:] = rng.normal(size=t.shape)
    lf = _random_loss(rng, (2, 4, 4, 2))
    yield "concat", w, (lambda w=w, block=block, ops=ops, lf=lf: lf(ev.cnn_forward(block, ops, x, w)))

    d = 3
    for act in topo.RNN_OPS:
        inputs = [rng.normal(size=(2, d)), rng.normal(size=(2, d))]
        w = ad.param_table({f"{k}{i}": rng.normal(size=s) for i in range(2)
                            for k, s in (("w1_", (d, d)), ("b1_", (d,)), ("w2_", (d, d)), ("b2_", (d,)))})
        lf = _random_loss(rng, (2, d))
        pairs = [(w[f"w1_{i}"], w[f"b1_{i}"], w[f"w2_{i}"], w[f"b2_{i}"]) for i in range(2)]
        yield f"highway-{act.value}", w, (lambda inputs=inputs, act=act, pairs=pairs, lf=lf:
                                          lf(ev.highway_node(inputs, act, pairs)))

    g = topo.complete_dag(3, "rnn", 5)
    block = topo.map_to_block(g)
    w = ad.param_table(ev.init_rnn_cell(block, 2, d, rng, scale=0.8))
    xt, h0 = rng.normal(size=(2, 2)), rng.normal(size=(2, d))
    lf = _random_loss(rng, (2, d))
    yield "rnn-cell", w, (lambda w=w: lf(ev.rnn_cell_step(block, g.node_ops, xt, h0, w)))


def check_gradients(points: int = 3, seed: int = 0, tol: float = 1e-4):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(points):
        for name, params, loss_fn in gradient_cases(rng):
            analytic = ad.grad(params, loss_fn())
            numeric = central_difference(loss_fn, params)
            for k in params:
                err = relative_error(analytic[k], numeric[k])
                worst = max(worst, err)
                if err >= tol:
                    return False, f"{name}/{k}: relative error {err:.2e}"
    return True, f"worst relative error {worst:.2e}"


def check_cardinality():
    if topo.search_space_size(28, 8, 2) != 68_719_476_736:
        return False, "search_space_size(28, 8, 2)"
    for n in range(2, 11):
        if topo.complete_dag(n, "cnn", 0).edge_count != n * (n - 1) // 2:
            return False, f"complete_dag({n}) edge count"
    if expected_evaluations(8, 10) != 235 or expected_evaluations(8, 28) != 406:
        return False, "k-sweep evaluation counts"
    return True, "space size, complete DAG edges, evaluation counts"


def check_cost_monotonicity(samples: int = 300, seed: int = 0):
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        kind = ("cnn", "rnn")[rng.integers(2)]
        n = int(rng.integers(2, 9))
        g = topo.complete_dag(n, kind, int(rng.integers(1 << 30)))
        keep = rng.random(len(g.edges)) < rng.random()
        g = topo.CellTopology(g.node_ops, [e for e, k in zip(g.edges, keep) if k], kind)
        if not g.edges:
            continue
        e = g.edges[rng.integers(len(g.edges))]
        h = topo.remove_edge(g, e)
        f = int(rng.integers(1, 33))
        shape = (cost.CnnShape(8, 8, f, int(rng.integers(1, f + 1))) if kind == "cnn"
                 else cost.RnnShape(int(rng.integers(1, 33))))
        before = cost.cell_cost(g, topo.map_to_block(g), shape)
        after = cost.cell_cost(h, topo.map_to_block(h), shape)
        if after.macs > before.macs or after.params > before.params:
            return False, f"cost grew removing {e} from {g.edges}"
    return True, f"{samples} random removals"


def check_cost_table(op_costs=None):
    """Parameter counts from the cost table must match instantiated weights."""
    rng = np.random.default_rng(0)
    for op in topo.CNN_OPS:
        block = topo.MappedBlock.from_parts({0: ()}, [0])
        shape = cost.CnnShape(4, 4, 5, 3)
        weights = ev.init_cnn_cell(block, [op], shape.input_channels, shape.stage_filters, rng)
        counted = cost.cnn_cell_cost(block, [op], shape, op_costs).params
        actual = sum(w.size for w in weights.values())
        if counted != actual:
            return False, f"{op.value}: table says {counted} params, weights hold {actual}"
        macs = cost.cnn_cell_cost(block, [op], shape, op_costs).macs
        dense = 16 * 3 * 5 + (16 * 3 * 9 if op is topo.NodeOp.SEPCONV3X3 else 0)
        if macs != dense:
            return False, f"{op.value}: table says {macs} MACs, expected {dense}"
    return True, "cost table matches weight shapes"


def run_selfcheck(op_costs=None, echo=print) -> bool:
    checks = [
        ("gradients", check_gradients),
        ("cardinality", check_cardinality),
        ("cost-monotonicity", check_cost_monotonicity),
        ("cost-table", lambda: check_cost_table(op_costs)),
    ]
    ok = True
    for name, fn in checks:
        passed, detail = fn()
        ok &= passed
        echo(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return ok
