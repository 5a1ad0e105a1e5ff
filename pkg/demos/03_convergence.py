"""Rounds to 90% accuracy and bits on the wire, rAge-k against the baselines.

At desk scale the two randomised-selection schemes end up close; top-k stalls
because the same few coordinates keep winning. The extra cost of rAge-k is the
top-r index report on the uplink and the request on the downlink.
Run with ``python3 demos/03_convergence.py`` (about a minute).
"""

# %%
import numpy as np

from ragek.config import RunConfig, packaged_config
from ragek.orchestrator import run

cfg = RunConfig.load(packaged_config("synthetic_pairs"))
seeds = range(5)

# %%
results = {}
for name in ("ragek", "rtopk", "topk"):
    reps = [run(cfg.replace(sparsifier=name, seed=s)) for s in seeds]
    rounds = [r.rounds_to_accuracy(cfg.target_accuracy) for r in reps]
    results[name] = reps
    med = np.median([np.inf if x is None else x for x in rounds])
    final = np.mean([r.rows[-1]["mean_accuracy"] for r in reps])
    up = reps[0].ledger.total_uplink / len(reps[0].rows) / cfg.num_clients
    print(f"{name:6s} rounds to 90%: {rounds} median={med}  final acc={final:.3f}  "
          f"uplink bits/client/round={up:.0f}")

# %% Learning curves, every 20th round of seed 0
for name, reps in results.items():
    acc = reps[0].series("mean_accuracy")
    print(f"{name:6s}", " ".join(f"{a:.2f}" for a in acc[::20]))
