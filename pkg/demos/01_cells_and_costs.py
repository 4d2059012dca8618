"""Cells, the blocks they map to, and what they cost."""

# %%
import numpy as np

from shrinknas import cost, topology as topo

# a complete 8-node CNN cell: every (u, v) with u < v is an edge
g = topo.complete_dag(8, "cnn", rng_seed=7)
print(g.edge_count, "edges,", [op.value for op in g.node_ops])

# every edge on/off times every op choice per node
print(f"{topo.search_space_size(g.edge_count, g.node_count, 2):,} cells in the space")

# %%
# drop edges until node 3 loses both its inputs and outputs
h = g
for e in [e for e in g.edges if 3 in e]:
    h = topo.remove_edge(h, e)
block = topo.map_to_block(h)
print("live", block.live_nodes, "fed by input", block.input_fed_nodes, "leaves", block.leaf_nodes)

# %%
shape = cost.CnnShape(height=32, width=32, stage_filters=16, input_channels=16)
full = cost.cnn_cell_cost(topo.map_to_block(g), g.node_ops, shape)
pruned = cost.cnn_cell_cost(block, h.node_ops, shape)
print(f"MACs {full.macs:,} -> {pruned.macs:,}")
print(pruned.to_csv())

# %%
# RNN cells are priced in parameters: 2d^2 + 2d per (input, node) pair
r = topo.complete_dag(6, "rnn", rng_seed=3)
rep = cost.rnn_cell_cost(topo.map_to_block(r), cost.RnnShape(200))
pairs = np.array([p for _, _, p in rep.per_node]) // cost.highway_pair_params(200)
print("pairs per node", pairs.tolist(), "params", f"{rep.params:,}")

print(topo.to_dot(h))
