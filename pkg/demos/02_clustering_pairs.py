"""Watching the server discover which clients hold the same labels.

Ten clients each hold two of ten classes, and clients come in pairs with
identical label sets. The server never sees the data. It only counts how often
it asked each client for each coordinate, and clusters those frequency
vectors with DBSCAN. Run with ``python3 demos/02_clustering_pairs.py``.
"""

# %%
import numpy as np

from ragek.config import RunConfig, packaged_config
from ragek.orchestrator import run

cfg = RunConfig.load(packaged_config("synthetic_pairs")).replace(iterations=100)
report = run(cfg)
np.set_printoptions(precision=2, suppress=True, linewidth=120)

# %% Distance matrices at each re-clustering event
for ev in report.events[:2]:
    print(f"t={ev.t}: distance between clients (0 = identical request pattern)")
    print(ev.distance)
    print("labels:", ev.labels.tolist())
    print()

# %% Final partition
print("clusters:", [list(m) for m in report.clusters.members.values()])
print("ground truth pairs:", [[2 * i, 2 * i + 1] for i in range(5)])

# %% Why pairs look alike
# Paired clients share the same top-r coordinates, so within a cluster they split
# the budget disjointly; the union of a pair's requests covers twice as much ground.
f = report.freqs
print("coordinates ever requested from client 0:", int((f[0] > 0).sum()))
print("overlap of clients 0 and 1:", int(((f[0] > 0) & (f[1] > 0)).sum()))
print("overlap of clients 0 and 2:", int(((f[0] > 0) & (f[2] > 0)).sum()))
