"""Independent reference implementations shared by the unit and acceptance suites."""

import numpy as np

from ragek.learner import ModelSpec, init_params, loss_and_gradient


def brute_force_dbscan(dist, eps, min_pts):
    """Reference DBSCAN by exhaustive reachability.

    Core points are density-connected through the transitive closure of the
    eps-graph restricted to cores. Each border point goes to the adjacent
    core component with the smallest minimum core index.
    """
    n = dist.shape[0]
    adj = dist <= eps
    core = adj.sum(axis=1) >= min_pts
    reach = adj & core[:, None] & core[None, :]
    for m in range(n):
        reach = reach | (reach[:, [m]] & reach[[m], :])
    comps = []
    seen = set()
    for i in range(n):
        if core[i] and i not in seen:
            comp = {j for j in range(n) if core[j] and (reach[i, j] or i == j)}
            seen |= comp
            comps.append(comp)
    comps.sort(key=min)
    clusters = [set(c) for c in comps]
    for p in range(n):
        if core[p]:
            continue
        for c, comp in zip(clusters, comps):
            if any(adj[p, q] for q in comp):
                c.add(p)
                break
    noise = set(range(n)) - set().union(*clusters) if clusters else set(range(n))
    return clusters, noise


def finite_difference_grad(spec, theta, X, y, coords, h=1e-5):
    out = []
    for j in coords:
        e = np.zeros_like(theta)
        e[j] = h
        lp, _ = loss_and_gradient(spec, theta + e, X, y)
        lm, _ = loss_and_gradient(spec, theta - e, X, y)
        out.append((lp - lm) / (2 * h))
    return np.array(out)


def max_rel_error(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)))


def random_problem(rng, sizes, n=16):
    spec = ModelSpec(sizes)
    theta = init_params(spec, rng) + 0.05 * rng.standard_normal(spec.num_params)
    X = rng.random((n, sizes[0]))
    y = rng.integers(0, sizes[-1], size=n)
    return spec, theta, X, y
