"""Edge shrinking with the surrogate evaluator, then stacking the result."""

# %%
import numpy as np

from shrinknas import builder, shrink

cfg = shrink.SearchConfig(n=8, k=10, lam=0.1, seed=0)
traj = shrink.run_shrink(cfg)
print(len(traj.steps), "iterations,", traj.evaluations, "evaluations")

# %%
# each winner has one edge fewer; cost never goes up along the way
scores = np.array([traj.initial.score] + [w.score for w in traj.winners])
macs = np.array([traj.initial.macs] + [w.macs for w in traj.winners])
print("S   ", np.round(scores, 3))
print("MACs", macs)
assert np.all(np.diff(macs) <= 0)

# %%
# with the cell's own MACs as Res the empty cell always wins (S = perf = 0).
# pricing the whole stacked network instead keeps a non-trivial cell.
arch_cfg = shrink.SearchConfig(n=8, res_scope="architecture")
arch_traj = shrink.run_shrink(arch_cfg)
best = arch_traj.g_opt
print("g_opt edges", best.edge_count, "found at t =", arch_traj.best.t)

# %%
net = builder.build_cnn(best, stages=3, t=1, base_filters=16, resolution=(32, 32))
print(builder.export(net, "summary"))

# %%
# how much work does K save?
for row in shrink.k_sweep(cfg, k_values=[5, 10, 15], n_values=[6, 8, 10]):
    print(row.n, row.k, row.evaluations, round(row.final_score, 4))
