"""Searched cells against Watts-Strogatz, Erdos-Renyi and Barabasi-Albert wiring."""

# %%
from shrinknas import priors, shrink

spec = priors.PriorSpec("ba", nodes=15, params={"m": 2}, seed=0)
g = priors.generate_prior(spec, "cnn")
print(g.edge_count, "edges")  # m * (n - m)

# %%
cfg = shrink.SearchConfig(n=8)
best = shrink.run_shrink(cfg).g_opt
report = priors.compare_topologies(priors.default_specs(nodes=15), best, cfg, trials=10)
print(report.to_table())

# %%
# the same comparison when Res is the whole stacked network
arch_cfg = shrink.SearchConfig(n=8, res_scope="architecture")
arch_best = shrink.run_shrink(arch_cfg).g_opt
print(priors.compare_topologies(priors.default_specs(), arch_best, arch_cfg, trials=10).to_table())
