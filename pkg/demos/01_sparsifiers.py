"""Three ways to pick k coordinates out of a gradient.

top-k keeps the k largest magnitudes. rTop-k draws k at random from the r
largest. rAge-k also looks at the r largest, but keeps the k the server has
heard about least recently. Run with ``python3 demos/01_sparsifiers.py``.
"""

# %%
import numpy as np

from ragek.aging import age_update
from ragek.sparsifiers import compression_stats, r_age_k_sparsify, r_top_k_sparsify, top_k_sparsify

g = np.array([5.0, -4.0, 3.0, 2.0, 1.0])
ages = np.array([0, 7, 0, 9, 1])

print("gradient:", g, " ages:", ages)
print("top-2:         ", top_k_sparsify(g, 2).pairs())
print("rTop-k (3, 2): ", r_top_k_sparsify(g, 3, 2, np.random.default_rng(0)).pairs())
u, new_ages = r_age_k_sparsify(g, ages, 3, 2)
print("rAge-k (3, 2): ", u.pairs(), " new ages:", new_ages)
# coordinate 3 is the stalest, but it is not among the top 3 magnitudes, so it keeps aging

# %% Coverage over many rounds with a fixed gradient direction
# top-k keeps asking for the same coordinates; rAge-k walks through the whole top-r set.
rng = np.random.default_rng(1)
d, r, k, rounds = 200, 40, 5, 40
base = rng.standard_normal(d)
seen = {"topk": set(), "rtopk": set(), "ragek": set()}
a = np.zeros(d, dtype=np.int64)
for _ in range(rounds):
    g = base + 0.05 * rng.standard_normal(d)
    seen["topk"] |= set(top_k_sparsify(g, k).indices.tolist())
    seen["rtopk"] |= set(r_top_k_sparsify(g, r, k, rng).indices.tolist())
    u, a = r_age_k_sparsify(g, a, r, k)
    seen["ragek"] |= set(u.indices.tolist())
for name, s in seen.items():
    print(f"{name:6s} distinct coordinates touched in {rounds} rounds: {len(s)}")

# %% How much energy can be lost
# The worst admissible choice keeps the k smallest of the top r. The bound gamma_safe
# always sits below the retained fraction; gamma_linear can exceed it for peaked vectors.
for name, g in [("flat", np.ones(64) + 0.01 * rng.standard_normal(64)),
                ("gaussian", rng.standard_normal(64)),
                ("peaked", np.r_[50.0, rng.standard_normal(63)])]:
    s = compression_stats(g, 16, 4)
    print(f"{name:8s} beta={s.beta:7.2f} gamma_linear={s.gamma_linear:.4f} "
          f"gamma_safe={s.gamma_safe:.4f} worst retained={s.retained_energy_fraction:.4f}")

# %% Ages never exceed the number of rounds played
a = np.zeros(10, dtype=np.int64)
for t in range(1, 6):
    a = age_update(a, {t % 10})
print("ages after 5 rounds requesting 1..5:", a)
