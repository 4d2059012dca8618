"""Training tiny networks around a cell with the built-in autodiff."""

# %%
import numpy as np

from shrinknas import autodiff as ad
from shrinknas import evaluators as ev
from shrinknas import topology as topo

# gradient of a squared error, by hand and by backprop
w = ad.Tensor(np.array(1.5))
err = ad.add(ad.mul(w, 2.0), -1.0)
print(ad.grad([w], ad.mul(err, err))[0], "==", 2 * (1.5 * 2 - 1) * 2)

# %%
data = ev.gaussian_blobs(n_train=200, n_val=100, size=8, seed=0)
cell = topo.CellTopology(["sepconv3x3", "conv1x1"], [(0, 1)], "cnn")
for epochs in (0, 1, 5, 20):
    r = ev.train_eval(cell, data, budget=epochs, seed=0)
    print(f"{epochs:2d} epochs: accuracy {r.perf:.3f}")

# %%
# a highway RNN cell on a cyclic token stream should become nearly certain
tokens = ev.token_sequence(vocab=4, mode="repeat", seed=0)
rnn = topo.complete_dag(4, "rnn", rng_seed=1)
r = ev.train_eval(rnn, tokens, budget=10, seed=0)
print(f"perplexity {r.raw_metric:.4f}, perf {r.perf:.4f}")

# %%
# the same search, scored by training instead of the surrogate
from shrinknas import shrink

cfg = shrink.SearchConfig(n=4, k=3, evaluator="trainer", epochs_per_candidate=3,
                          dataset={"generator": "blobs", "n_train": 96, "n_val": 48, "seed": 0})
traj = shrink.run_shrink(cfg, workers=3)
for w in traj.winners:
    print(w.t, w.removed_edge, round(w.perf, 3), w.macs)
