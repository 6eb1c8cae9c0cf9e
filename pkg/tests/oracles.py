"""Independent reference implementations used only by the tests."""
from __future__ import annotations

import itertools

import numpy as np


def brute_force_partitions(xs: np.ndarray, k: int):
    """Every split of sorted xs into k non-empty contiguous intervals."""
    n = xs.size
    for cuts in itertools.combinations(range(1, n), k - 1):
        yield np.array(cuts, dtype=np.int64)


def quadratic_dp_cost(xs: np.ndarray, k: int) -> float:
    """Plain O(K N^2) interval DP on sorted values, costs summed directly."""
    n = xs.size
    cost = np.full((n + 1, n + 1), np.inf)
    for i in range(n):
        for j in range(i + 1, n + 1):
            seg = xs[i:j]
            cost[i, j] = float(((seg - seg.mean()) ** 2).sum())
    best = np.full((k + 1, n + 1), np.inf)
    best[0, 0] = 0.0
    for m in range(1, k + 1):
        for j in range(1, n + 1):
            best[m, j] = min(best[m - 1, i] + cost[i, j] for i in range(j))
    return 0.5 * best[k, n]


def forward_loop(layers, x, relu_hidden=True):
    """Row-by-row network evaluation with explicit loops over units."""
    out = []
    for row in x:
        h = list(row)
        for li, (w, b) in enumerate(layers):
            z = []
            for u in range(w.shape[0]):
                s = b[u] if b is not None else 0.0
                for v in range(w.shape[1]):
                    s += w[u, v] * h[v]
                z.append(s)
            if li < len(layers) - 1 and relu_hidden:
                z = [max(t, 0.0) for t in z]
            h = z
        out.append(h)
    return np.array(out)


def textbook_huffman_cost(freqs: dict) -> int:
    """Total encoded bits via repeated merging of the two lightest weights."""
    import heapq

    weights = [f for f in freqs.values() if f > 0]
    if len(weights) == 1:
        return weights[0]
    heapq.heapify(weights)
    total = 0
    while len(weights) > 1:
        a, b = heapq.heappop(weights), heapq.heappop(weights)
        total += a + b
        heapq.heappush(weights, a + b)
    return total


def random_hard_tied(rng, spec, k: int, zero: bool, b: int = 32):
    """Parameter vector taking at most k distinct b-bit values (one of them 0 when zero=True)."""
    from sparseapt.compression.quantize import to_storage

    centers = to_storage(rng.normal(scale=0.3, size=k), b)
    if zero:
        centers[0] = 0.0
    p = rng.dirichlet(np.ones(k))
    if zero:
        p = 0.5 * p
        p[0] += 0.5
    idx = rng.choice(k, size=spec.n_params, p=p)
    return centers[idx]
