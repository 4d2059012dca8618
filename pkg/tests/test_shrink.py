import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shrinknas import cost
from shrinknas import evaluators as ev
from shrinknas import shrink
from shrinknas import topology as topo
from shrinknas.shrink import ConfigError, SearchConfig


def greedy_oracle(n, kind, seed, lam, resource):
    """Full-neighbourhood greedy written from scratch: strict improvement keeps the first edge."""
    shape = ev.default_cost_shape(kind)
    alphabet = len(topo.op_alphabet(kind))

    def s_of(g):
        block = topo.map_to_block(g)
        perf = ev.surrogate_score(block, g.node_ops, alphabet)
        rep = cost.cnn_cell_cost(block, g.node_ops, shape) if g.kind is topo.CellKind.CNN \
            else cost.rnn_cell_cost(block, shape)
        res = rep.macs if resource == "macs" else rep.params
        return perf - lam * math.log(res) if res > 0 else perf

    g = topo.complete_dag(n, kind, seed)
    path = []
    while g.edges:
        best_edge, best_s = None, -math.inf
        for e in g.edges:
            s = s_of(topo.remove_edge(g, e))
            if s > best_s:
                best_edge, best_s = e, s
        g = topo.remove_edge(g, best_edge)
        path.append((best_edge, best_s))
    return path


class TestConfig:
    def test_defaults(self):
        c = SearchConfig()
        assert (c.n, c.k, c.lam, c.resource_kind.value) == (8, 10, 0.1, "macs")
        r = SearchConfig.for_kind("rnn")
        assert (r.n, r.k, r.resource_kind.value) == (6, 5, "params")

    @pytest.mark.parametrize("bad", [dict(n=1), dict(k=0), dict(lam=-0.1), dict(resource_kind="flops"),
                                     dict(evaluator="oracle"), dict(lam=float("nan"))])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            SearchConfig(**bad)


class TestShrinkSpace:
    def test_sizes(self):
        assert len(shrink.shrink_space(topo.complete_dag(8, "cnn", 0))) == 28
        one = topo.CellTopology(["conv1x1"] * 2, [(0, 1)], "cnn")
        (only,) = shrink.shrink_space(one)
        assert only.edges == ()
        assert shrink.shrink_space(only) == []

    def test_each_differs_by_one(self):
        g = topo.complete_dag(6, "rnn", 1)
        space = shrink.shrink_space(g)
        removed = [tuple(set(g.edges) - set(h.edges)) for h in space]
        assert removed == [(e,) for e in g.edges]


class TestSelectCandidates:
    def test_k_of_28(self):
        space = list(range(28))
        picked = shrink.select_candidates(space, 10, np.random.default_rng(0))
        assert len(set(picked)) == 10
        assert picked == sorted(picked)

    def test_exhaustive_fallback(self):
        assert shrink.select_candidates([5, 6, 7], 10, np.random.default_rng(0)) == [5, 6, 7]

    def test_seeded(self):
        a = shrink.select_candidates(list(range(28)), 10, np.random.default_rng(4))
        b = shrink.select_candidates(list(range(28)), 10, np.random.default_rng(4))
        assert a == b

    def test_uniform(self):
        rng = np.random.default_rng(0)
        counts = np.zeros(8)
        for _ in range(4000):
            counts[shrink.select_candidates(list(range(8)), 2, rng)] += 1
        # each index is picked with probability 1/4
        assert np.all(np.abs(counts / 4000 - 0.25) < 0.03)

    def test_bad_k(self):
        with pytest.raises(ValueError):
            shrink.select_candidates([1], 0, np.random.default_rng(0))


class TestScore:
    def test_example(self):
        assert shrink.search_metric(0.9, 1e6, 0.1) == pytest.approx(-0.481551, abs=5e-7)

    def test_no_penalty(self):
        assert shrink.search_metric(0.7321, 123456, 0.0) == 0.7321

    def test_empty_res(self):
        assert shrink.search_metric(0.4, 0, 0.1) == 0.4

    def test_smaller_res_wins(self):
        assert shrink.search_metric(0.5, 100, 0.1) > shrink.search_metric(0.5, 1000, 0.1)

    def test_score_uses_config(self):
        g = topo.complete_dag(4, "cnn", 0)
        s, perf, res = shrink.score(g, SearchConfig(n=4))
        direct = ev.surrogate_perf(g)
        assert perf == direct.perf
        assert res == direct.res.macs
        assert s == pytest.approx(perf - 0.1 * math.log(res))


class TestRunShrink:
    def test_cnn_iterations(self):
        traj = shrink.run_shrink(SearchConfig())
        assert len(traj.steps) == 28
        assert traj.winners[-1].topology.edges == ()
        assert traj.evaluations == 235

    def test_rnn_iterations(self):
        traj = shrink.run_shrink(SearchConfig.for_kind("rnn"))
        assert len(traj.steps) == 15
        assert traj.evaluations == sum(min(5, e) for e in range(1, 16))

    def test_winner_edge_counts(self):
        traj = shrink.run_shrink(SearchConfig(n=6, k=4, seed=3))
        counts = [traj.initial.edges_remaining] + [w.edges_remaining for w in traj.winners]
        assert counts == list(range(15, -1, -1))

    def test_resource_non_increasing(self):
        for kind in ("cnn", "rnn"):
            traj = shrink.run_shrink(SearchConfig.for_kind(kind, seed=2))
            key = traj.config.resource_kind.value
            res = [getattr(traj.initial, key)] + [getattr(w, key) for w in traj.winners]
            assert all(b <= a for a, b in zip(res, res[1:]))

    def test_gopt_dominates(self):
        traj = shrink.run_shrink(SearchConfig(seed=5))
        assert all(traj.best.score >= w.score for w in traj.winners)
        assert traj.best.score >= traj.initial.score

    def test_large_lambda_cuts_macs(self):
        traj = shrink.run_shrink(SearchConfig(n=4, k=10, lam=10.0))
        assert traj.best.macs < traj.initial.macs

    def test_large_lambda_exhaustive(self):
        # every reachable cell with fewer MACs than g0 scores higher once lambda dominates
        g0 = topo.complete_dag(4, "cnn", 0)
        cfg = SearchConfig(n=4, lam=10.0)
        s0, _, res0 = shrink.score(g0, cfg)
        for h in shrink.shrink_space(g0):
            s, _, res = shrink.score(h, cfg)
            if res < res0:
                assert s > s0

    @pytest.mark.parametrize("n,kind,seed,lam", [(3, "cnn", 0, 0.1), (4, "cnn", 1, 0.1), (5, "cnn", 2, 0.1),
                                                 (5, "rnn", 3, 0.1), (5, "cnn", 4, 0.0), (4, "rnn", 5, 0.02)])
    def test_greedy_oracle(self, n, kind, seed, lam):
        cfg = SearchConfig.for_kind(kind, n=n, k=n * (n - 1) // 2, seed=seed, lam=lam)
        traj = shrink.run_shrink(cfg)
        want = greedy_oracle(n, kind, seed, lam, cfg.resource_kind.value)
        got = [(w.removed_edge, w.score) for w in traj.winners]
        assert [e for e, _ in got] == [e for e, _ in want]
        np.testing.assert_allclose([s for _, s in got], [s for _, s in want], rtol=0, atol=1e-12)

    def test_tie_break_smallest_edge(self):
        flat = lambda g, seed=None: ev.EvalResult(0.5, 0.5, cost.ResourceReport(), 0.0)  # noqa: E731
        traj = shrink.run_shrink(SearchConfig(n=4, k=6), evaluator=flat)
        g = topo.complete_dag(4, "cnn", 0)
        for w in traj.winners:
            assert w.removed_edge == g.edges[0]
            g = w.topology
        assert traj.best is traj.initial

    def test_workers_match(self):
        cfg = SearchConfig(seed=9)
        assert shrink.run_shrink(cfg).to_csv() == shrink.run_shrink(cfg, workers=4).to_csv()

    def test_trainer_evaluator_workers(self):
        cfg = SearchConfig(n=3, k=2, evaluator="trainer", epochs_per_candidate=1,
                           dataset={"generator": "blobs", "n_train": 32, "n_val": 16, "size": 4, "seed": 1})
        a = shrink.run_shrink(cfg)
        b = shrink.run_shrink(cfg, workers=3)
        assert a.to_csv() == b.to_csv()
        assert len(a.steps) == 3

    def test_csv_layout(self):
        traj = shrink.run_shrink(SearchConfig(n=3))
        lines = traj.to_csv().strip().splitlines()
        assert lines[0] == "t,removed_edge,S,perf,raw_metric,macs,params,live_nodes,edges_remaining,winner"
        assert len(lines) == 1 + 3 + 2 + 1
        assert sum(int(ln.rsplit(",", 1)[1]) for ln in lines[1:]) == 3

    def test_architecture_scope(self):
        cfg = SearchConfig(n=4, res_scope="architecture")
        traj = shrink.run_shrink(cfg)
        from shrinknas.builder import build_cnn
        assert traj.initial.macs == cost.architecture_cost(build_cnn(topo.complete_dag(4, "cnn", 0))).macs

    @settings(max_examples=20, deadline=None)
    @given(st.integers(3, 6), st.integers(1, 15), st.integers(0, 10**6))
    def test_properties(self, n, k, seed):
        traj = shrink.run_shrink(SearchConfig(n=n, k=k, seed=seed))
        assert len(traj.steps) == n * (n - 1) // 2
        assert traj.evaluations == shrink.expected_evaluations(n, k)
        for prev, step in zip([traj.initial] + traj.winners, traj.steps):
            for c in step.candidates:
                assert set(prev.topology.edges) - set(c.topology.edges) == {c.removed_edge}
            assert [c.removed_edge for c in step.candidates] == sorted(c.removed_edge for c in step.candidates)


class TestKSweep:
    def test_counts(self):
        rows = shrink.k_sweep(SearchConfig(), [10, 28], [8])
        assert [(r.k, r.evaluations, r.iterations) for r in rows] == [(10, 235, 28), (28, 406, 28)]

    def test_closed_forms(self):
        assert shrink.expected_evaluations(8, 10) == 235
        assert shrink.expected_evaluations(8, 28) == sum(range(1, 29)) == 406

    @given(st.integers(2, 10), st.integers(1, 50))
    def test_non_decreasing_in_k(self, n, k):
        assert shrink.expected_evaluations(n, k) <= shrink.expected_evaluations(n, k + 1)

    def test_csv(self):
        text = shrink.k_sweep_csv(shrink.k_sweep(SearchConfig(), [5], [6]))
        assert text.splitlines()[0] == "n,k,final_perf,final_S,evaluations,iterations"

    def test_empty_lists(self):
        with pytest.raises(ConfigError):
            shrink.k_sweep(SearchConfig(), [], [8])


def test_candidate_seed_distinct():
    seeds = {shrink.candidate_seed(0, t, e) for t in range(5) for e in topo.complete_dag(5, "cnn", 0).edges}
    assert len(seeds) == 50
    assert shrink.candidate_seed(0, 1, (0, 2)) == shrink.candidate_seed(0, 1, (0, 2))

