import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shrinknas import cost
from shrinknas import topology as topo
from shrinknas.cost import CnnShape, RnnShape
from shrinknas.topology import CellTopology, MappedBlock

from test_topology import topologies


def single(op="conv1x1"):
    return MappedBlock.from_parts({0: ()}, [0]), [op]


class TestCnnCellCost:
    def test_conv1x1_single(self):
        block, ops = single()
        rep = cost.cnn_cell_cost(block, ops, CnnShape(32, 32, 16, 16))
        assert rep.macs == 262_144
        assert rep.params == 288

    def test_sepconv_single(self):
        block, ops = single("sepconv3x3")
        rep = cost.cnn_cell_cost(block, ops, CnnShape(32, 32, 16, 32))
        assert rep.macs == 294_912 + 524_288 == 819_200
        assert rep.params == 9 * 32 + 32 * 16 + 32

    def test_empty(self):
        g = topo.empty_topology(["conv1x1"] * 3, "cnn")
        rep = cost.cnn_cell_cost(topo.map_to_block(g), g.node_ops, CnnShape(8, 8, 4, 4))
        assert (rep.macs, rep.params) == (0, 0)
        assert rep.per_node == []

    def test_input_channel_accounting(self):
        # node 2 sees two producers of F channels; nodes 0 and 1 see the cell input
        g = CellTopology(["conv1x1"] * 3, [(0, 2), (1, 2)], "cnn")
        shape = CnnShape(4, 4, 5, 3)
        rep = cost.cnn_cell_cost(topo.map_to_block(g), g.node_ops, shape)
        per = {nid: (m, p) for nid, m, p in rep.per_node}
        assert per[0] == (16 * 3 * 5, 3 * 5 + 10)
        assert per[2] == (16 * 10 * 5, 10 * 5 + 10)

    def test_out_channels(self):
        g = CellTopology(["conv1x1"] * 4, [(0, 2), (0, 3)], "cnn")
        assert cost.cnn_cell_out_channels(topo.map_to_block(g), CnnShape(4, 4, 6, 3)) == 12

    def test_linear_in_hw(self):
        g = topo.complete_dag(5, "cnn", 2)
        b = topo.map_to_block(g)
        base = cost.cnn_cell_cost(b, g.node_ops, CnnShape(1, 1, 8, 8)).macs
        for h, w in [(2, 2), (4, 8), (32, 32)]:
            assert cost.cnn_cell_cost(b, g.node_ops, CnnShape(h, w, 8, 8)).macs == h * w * base

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            CnnShape(0, 4, 4, 4)
        with pytest.raises(ValueError):
            RnnShape(0)


class TestRnnCellCost:
    def test_one_pair_small(self):
        block = MappedBlock.from_parts({0: ()}, [0])
        assert cost.rnn_cell_cost(block, RnnShape(8)).params == 144

    def test_one_pair_200(self):
        block = MappedBlock.from_parts({0: ()}, [0])
        assert cost.rnn_cell_cost(block, RnnShape(200)).params == 80_400

    def test_empty(self):
        g = topo.empty_topology(["tanh"] * 3, "rnn")
        assert cost.rnn_cell_cost(topo.map_to_block(g), RnnShape(8)).params == 0

    def test_pair_count(self):
        # complete 4-node: 1 input feed + 6 edges = 7 pairs
        g = topo.complete_dag(4, "rnn", 0)
        rep = cost.rnn_cell_cost(topo.map_to_block(g), RnnShape(8))
        assert rep.params == 7 * 144

    def test_adding_input_adds_one_pair(self):
        # adding (0, 2) to the chain 0 -> 1 -> 2 gives node 2 one more input
        d = 7
        chain = CellTopology(["tanh"] * 3, [(0, 1), (1, 2)], "rnn")
        extra = CellTopology(["tanh"] * 3, [(0, 1), (0, 2), (1, 2)], "rnn")
        a = cost.rnn_cell_cost(topo.map_to_block(chain), RnnShape(d)).params
        b = cost.rnn_cell_cost(topo.map_to_block(extra), RnnShape(d)).params
        assert b - a == 2 * d * d + 2 * d


def _shape_for(g, rng):
    if g.kind is topo.CellKind.CNN:
        f = int(rng.integers(1, 33))
        return CnnShape(int(rng.integers(1, 9)), int(rng.integers(1, 9)), f, int(rng.integers(1, f + 1)))
    return RnnShape(int(rng.integers(1, 33)))


class TestReportInvariants:
    @given(topologies(), st.integers(0, 2**32 - 1))
    def test_breakdown_sums(self, g, seed):
        rep = cost.cell_cost(g, topo.map_to_block(g), _shape_for(g, np.random.default_rng(seed)))
        assert rep.macs == sum(r[1] for r in rep.per_node)
        assert rep.params == sum(r[2] for r in rep.per_node)

    @given(topologies(), st.data())
    def test_monotone_under_removal(self, g, data):
        if not g.edges:
            return
        e = data.draw(st.sampled_from(g.edges))
        shape = _shape_for(g, np.random.default_rng(data.draw(st.integers(0, 2**32 - 1))))
        h = topo.remove_edge(g, e)
        before = cost.cell_cost(g, topo.map_to_block(g), shape)
        after = cost.cell_cost(h, topo.map_to_block(h), shape)
        assert after.macs <= before.macs
        assert after.params <= before.params

    def test_csv(self):
        g = CellTopology(["conv1x1", "sepconv3x3"], [(0, 1)], "cnn")
        text = cost.cell_cost(g, topo.map_to_block(g), CnnShape(2, 2, 2, 2)).to_csv()
        lines = text.strip().splitlines()
        assert lines[0] == "node_id,op,macs,params"
        assert lines[1].startswith("0,conv1x1,")
        assert lines[2].startswith("1,sepconv3x3,")

    def test_get(self):
        rep = cost.ResourceReport((cost.CostItem(0, "conv1x1", 5, 7),))
        assert rep.get("macs") == 5 and rep.get("params") == 7
        with pytest.raises(ValueError):
            rep.get("flops")
