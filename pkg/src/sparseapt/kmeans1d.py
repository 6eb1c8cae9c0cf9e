"""One-dimensional k-means over a flat vector of parameter values.

Optimal 1-D clusters are contiguous in sorted order, so a clustering is fully
described by K-1 split indices into the sorted values.  Both solvers here
work on that representation:

* :func:`kmeans_dp_exact` -- exact dynamic program (desk-scale oracle).
* :func:`kmeans_fast` -- Lloyd iterations where the assignment step is a
  binary search for each boundary midpoint and the mean step reads cached
  prefix sums, so one iteration costs O(K log N) after an O(N log N) sort.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba as nb
import numpy as np

__all__ = [
    "Clustering",
    "SortedView",
    "build_sorted_view",
    "kmeans_dp_exact",
    "assign_step",
    "update_means",
    "kmeans_fast",
    "init_centers_uniform",
    "clustering_from_boundaries",
    "nearest_assignments",
    "inertia",
]


@dataclass(frozen=True)
class SortedView:
    """Values sorted once, with prefix sums for O(1) interval statistics."""

    order: np.ndarray
    values: np.ndarray
    prefix_sum: np.ndarray
    prefix_sumsq: np.ndarray

    @property
    def n(self) -> int:
        return int(self.values.size)

    def interval_sum(self, lo: int, hi: int) -> float:
        return float(self.prefix_sum[hi] - self.prefix_sum[lo])

    def interval_cost(self, lo: int, hi: int) -> float:
        """Sum of squared deviations from the mean over sorted[lo:hi]."""
        return float(_ssq(lo, hi, self.prefix_sum, self.prefix_sumsq))


@dataclass
class Clustering:
    centers: np.ndarray
    assignments: np.ndarray
    sizes: np.ndarray
    inertia: float
    n_iter: int = 0
    history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return int(self.centers.size)

    @property
    def empty(self) -> np.ndarray:
        """Mask of clusters that currently hold no parameters."""
        return self.sizes == 0


def inertia(values: np.ndarray, centers: np.ndarray, assignments: np.ndarray) -> float:
    """Half the squared distance of every value to its assigned center."""
    diff = np.asarray(values, dtype=np.float64) - np.asarray(centers)[assignments]
    return 0.5 * float(np.dot(diff, diff))


def build_sorted_view(values) -> SortedView:
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("need at least one value")
    bad = np.flatnonzero(~np.isfinite(x))
    if bad.size:
        raise ValueError(f"non-finite value {x[bad[0]]!r} at index {int(bad[0])}")
    order = np.argsort(x, kind="stable")
    xs = x[order]
    prefix_sum = np.zeros(xs.size + 1)
    prefix_sumsq = np.zeros(xs.size + 1)
    np.cumsum(xs, out=prefix_sum[1:])
    np.cumsum(xs * xs, out=prefix_sumsq[1:])
    return SortedView(order=order, values=xs, prefix_sum=prefix_sum, prefix_sumsq=prefix_sumsq)


def init_centers_uniform(lo: float, hi: float, k: int) -> np.ndarray:
    if not lo < hi:
        raise ValueError(f"need lo < hi, got lo={lo}, hi={hi}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, k)


@nb.njit(cache=True)
def _ssq(lo, hi, ps, pss):
    n = hi - lo
    if n <= 0:
        return 0.0
    s = ps[hi] - ps[lo]
    c = pss[hi] - pss[lo] - s * s / n
    return c if c > 0.0 else 0.0


@nb.njit(cache=True)
def _dp_row(j, left, right, opt_left, opt_right, prev, cur, arg, ps, pss, splittable):
    # Fills cur[i], arg[i] for i in [left, right] using the monotone-argmin
    # property of the 1-D k-means cost (divide and conquer over i).
    stack = [(left, right, opt_left, opt_right)]
    while len(stack) > 0:
        lo, hi, olo, ohi = stack.pop()
        if lo > hi:
            continue
        mid = (lo + hi) // 2
        best = np.inf
        best_p = -1
        p0 = max(olo, j - 1)
        p1 = min(ohi, mid - 1)
        for p in range(p0, p1 + 1):
            if not splittable[p] or prev[p] == np.inf:
                continue
            c = prev[p] + _ssq(p, mid, ps, pss)
            if c < best:
                best = c
                best_p = p
        cur[mid] = best
        arg[mid] = best_p
        if best_p < 0:
            stack.append((lo, mid - 1, olo, ohi))
            stack.append((mid + 1, hi, olo, ohi))
        else:
            stack.append((lo, mid - 1, olo, best_p))
            stack.append((mid + 1, hi, best_p, ohi))


@nb.njit(cache=True)
def _dp_solve(xs, ps, pss, k):
    n = xs.size
    # splittable[p]: a boundary may sit before sorted index p (never inside a run of ties)
    splittable = np.ones(n + 1, dtype=np.bool_)
    for p in range(1, n):
        if xs[p - 1] == xs[p]:
            splittable[p] = False
    prev = np.full(n + 1, np.inf)
    for i in range(1, n + 1):
        prev[i] = _ssq(0, i, ps, pss)
    args = np.full((k, n + 1), -1, dtype=np.int64)
    for j in range(2, k + 1):
        cur = np.full(n + 1, np.inf)
        _dp_row(j, j, n, j - 1, n - 1, prev, cur, args[j - 1], ps, pss, splittable)
        prev = cur
    bounds = np.zeros(k - 1, dtype=np.int64)
    i = n
    for j in range(k, 1, -1):
        p = args[j - 1, i]
        bounds[j - 2] = p
        i = p
    return bounds, prev[n]


def clustering_from_boundaries(view: SortedView, boundaries, centers=None) -> Clustering:
    """Build a Clustering from sorted-order split indices.

    ``centers`` defaults to the interval means; an empty interval requires an
    explicit center.
    """
    b = np.asarray(boundaries, dtype=np.int64)
    if centers is None:
        centers, empty = update_means(view, b)
        if empty.any():
            raise ValueError("empty interval needs an explicit center")
    edges = np.concatenate(([0], b, [view.n]))
    sizes = np.diff(edges)
    sorted_assign = np.repeat(np.arange(sizes.size), sizes)
    assignments = np.empty(view.n, dtype=np.int64)
    assignments[view.order] = sorted_assign
    centers = np.asarray(centers, dtype=np.float64)
    return Clustering(
        centers=centers,
        assignments=assignments,
        sizes=sizes.astype(np.int64),
        inertia=inertia(view.values, centers, sorted_assign),
    )


def kmeans_dp_exact(view: SortedView, k: int) -> Clustering:
    """Globally optimal contiguous K-partition of the sorted values."""
    distinct = int(np.count_nonzero(np.diff(view.values))) + 1
    if k < 1 or k > distinct:
        raise ValueError(f"k={k} must be in [1, {distinct}] (number of distinct values)")
    if k == 1:
        return clustering_from_boundaries(view, np.zeros(0, dtype=np.int64))
    bounds, _ = _dp_solve(view.values, view.prefix_sum, view.prefix_sumsq, k)
    return clustering_from_boundaries(view, bounds)


def _check_ascending(centers: np.ndarray) -> None:
    if centers.size > 1 and not np.all(np.diff(centers) > 0):
        raise ValueError("centers must be strictly ascending")


def assign_step(view: SortedView, centers) -> tuple[np.ndarray, np.ndarray]:
    """Redraw the K-1 boundaries by binary search on center midpoints.

    A value exactly at a midpoint joins the lower cluster, so each boundary is
    the count of sorted values <= the midpoint, nudged so that it agrees with
    the floating-point distance comparison at the edge.  Centers closer
    together than float resolution at the data scale can make that pairwise
    comparison disagree with a global nearest-center scan.
    """
    c = np.asarray(centers, dtype=np.float64)
    _check_ascending(c)
    xs = view.values
    mids = 0.5 * (c[:-1] + c[1:])
    bounds = np.searchsorted(xs, mids, side="right").astype(np.int64)
    n = xs.size
    for k in range(bounds.size):
        b = bounds[k]
        lo_c, hi_c = c[k], c[k + 1]
        while b > 0 and abs(xs[b - 1] - lo_c) > abs(xs[b - 1] - hi_c):
            b -= 1
        while b < n and abs(xs[b] - lo_c) <= abs(xs[b] - hi_c):
            b += 1
        bounds[k] = b
    bounds = np.maximum.accumulate(bounds) if bounds.size else bounds
    sizes = np.diff(np.concatenate(([0], bounds, [n])))
    return bounds, sizes


def update_means(view: SortedView, boundaries, previous=None) -> tuple[np.ndarray, np.ndarray]:
    """Interval means from prefix sums.

    Returns ``(centers, empty)``.  Empty intervals keep their ``previous``
    center (NaN when no previous centers are supplied).
    """
    b = np.asarray(boundaries, dtype=np.int64)
    n = view.n
    if b.size and (np.any(np.diff(b) < 0) or b[0] < 0 or b[-1] > n):
        raise ValueError("boundaries must be non-decreasing within [0, N]")
    edges = np.concatenate(([0], b, [n]))
    lo, hi = edges[:-1], edges[1:]
    counts = hi - lo
    empty = counts == 0
    sums = view.prefix_sum[hi] - view.prefix_sum[lo]
    with np.errstate(invalid="ignore", divide="ignore"):
        means = sums / counts
    full = ~empty
    # prefix-sum rounding must not push a mean outside its own interval
    means[full] = np.clip(means[full], view.values[lo[full]], view.values[hi[full] - 1])
    if previous is None:
        means[empty] = np.nan
    else:
        means[empty] = np.asarray(previous, dtype=np.float64)[empty]
    return means, empty


def _prepare_init(init_centers) -> np.ndarray:
    c = np.sort(np.asarray(init_centers, dtype=np.float64).ravel())
    if c.size == 0:
        raise ValueError("need at least one initial center")
    if not np.all(np.isfinite(c)):
        raise ValueError("initial centers must be finite")
    for i in range(1, c.size):
        if c[i] <= c[i - 1]:
            c[i] = np.nextafter(c[i - 1], np.inf)
    return c


def nearest_assignments(values, centers) -> np.ndarray:
    """Nearest-center ids for arbitrary (unsorted) values; ties go to the lower id."""
    view = build_sorted_view(values)
    c = _prepare_init(centers)
    bounds, sizes = assign_step(view, c)
    out = np.empty(view.n, dtype=np.int64)
    out[view.order] = np.repeat(np.arange(c.size), sizes)
    return out


def kmeans_fast(
    values, init_centers, max_iters: int = 100, view: SortedView | None = None, window: int = 3
) -> Clustering:
    """Approximate 1-D k-means started from ``init_centers``.

    Each iteration re-partitions windows of ``window`` neighbouring clusters
    exactly (also trading one cluster between two windows when that pays),
    then does a Lloyd mean update and a binary-search assignment step.
    Stops when the boundary vector repeats exactly or after ``max_iters``
    iterations.  ``Clustering.history`` records the inertia after each
    assignment step and never increases.
    """
    if view is None:
        view = build_sorted_view(values)
    centers = _prepare_init(init_centers)
    bounds, sizes = assign_step(view, centers)

    def sorted_inertia(c, sz):
        return inertia(view.values, c, np.repeat(np.arange(c.size), sz))

    history = [sorted_inertia(centers, sizes)]
    it = 0
    while it < max_iters:
        moved = _window_moves(view, bounds, window) if window >= 2 else bounds
        new_centers, empty = update_means(view, moved, previous=centers)
        if empty.any():
            new_centers = _reseed_empty(view, moved, new_centers, empty)
        it += 1
        centers = _strictly_ascending(new_centers)
        new_bounds, sizes = assign_step(view, centers)
        history.append(sorted_inertia(centers, sizes))
        same = np.array_equal(new_bounds, bounds)
        bounds = new_bounds
        if same:
            break
    out = clustering_from_boundaries(view, bounds, centers=centers)
    out.n_iter = it
    out.history = history
    return out


def _strictly_ascending(c: np.ndarray) -> np.ndarray:
    if c.size < 2 or np.all(np.diff(c) > 0):
        return c
    c = c.copy()
    for i in range(1, c.size):
        if c[i] <= c[i - 1]:
            c[i] = np.nextafter(c[i - 1], np.inf)
    return c


def _best_split(view: SortedView, lo: int, hi: int) -> tuple[float, int]:
    """Largest cost reduction from cutting sorted[lo:hi] in two, and where."""
    if hi - lo < 2:
        return 0.0, -1
    p = np.arange(lo + 1, hi)
    p = p[view.values[p - 1] < view.values[p]]
    if p.size == 0:
        return 0.0, -1
    ps, pss = view.prefix_sum, view.prefix_sumsq

    def ssq(a, b):
        s = ps[b] - ps[a]
        return np.maximum(pss[b] - pss[a] - s * s / (b - a), 0.0)

    cost = ssq(np.full(p.size, lo), p) + ssq(p, np.full(p.size, hi))
    i = int(np.argmin(cost))
    return view.interval_cost(lo, hi) - float(cost[i]), int(p[i])


def _reseed_empty(view: SortedView, bounds, centers, empty) -> np.ndarray:
    # An empty cluster is moved into the interval whose best two-way cut
    # lowers the cost most; both halves get their means.  Never raises cost.
    edges = np.concatenate(([0], bounds, [view.n]))
    intervals = [(int(edges[k]), int(edges[k + 1])) for k in range(centers.size) if not empty[k]]
    spare = [float(centers[k]) for k in range(centers.size) if empty[k]]
    gains = {iv: _best_split(view, *iv) for iv in intervals}
    while spare:
        iv = max(intervals, key=lambda t: (gains[t][0], -t[0]))
        gain, cut = gains[iv]
        if gain <= 0.0:
            break
        spare.pop()
        j = intervals.index(iv)
        left, right = (iv[0], cut), (cut, iv[1])
        intervals[j:j + 1] = [left, right]
        gains[left] = _best_split(view, *left)
        gains[right] = _best_split(view, *right)
    means = [view.interval_sum(a, b) / (b - a) for a, b in intervals]
    return _strictly_ascending(np.sort(np.array(means + spare)))


def _window_moves(view: SortedView, bounds, w: int, max_moves: int | None = None) -> np.ndarray:
    # Lloyd stalls when a sparse tail holds too many clusters.  Windows of w
    # adjacent clusters are re-solved exactly with w, w-1 and w+1 clusters;
    # the best re-solve, or the best pair (shrink one window, grow a disjoint
    # one), is applied while it lowers the total cost.
    edges = [0, *(int(b) for b in bounds), view.n]
    k = len(edges) - 1
    if k < 2 or any(edges[j] == edges[j + 1] for j in range(k)):
        return np.asarray(bounds, dtype=np.int64)
    w = min(w, k)
    xs, ps, pss = view.values, view.prefix_sum, view.prefix_sumsq
    tol = 1e-12 * max(view.interval_cost(0, view.n), 1e-300)
    max_moves = k if max_moves is None else max_moves

    memo: dict[tuple[int, int, int], tuple[float, np.ndarray | None]] = {}

    def solve(lo, hi, m):
        key = (lo, hi, m)
        if key in memo:
            return memo[key]
        if m < 1:
            out = (np.inf, None)
        elif m == 1:
            out = (view.interval_cost(lo, hi), np.zeros(0, dtype=np.int64))
        elif np.count_nonzero(np.diff(xs[lo:hi])) + 1 < m:
            out = (np.inf, None)
        else:
            b, c = _dp_solve(xs[lo:hi], ps[lo:hi + 1], pss[lo:hi + 1], m)
            out = (c, b + lo)
        memo[key] = out
        return out

    for _ in range(max_moves):
        cost = [view.interval_cost(edges[j], edges[j + 1]) for j in range(k)]
        best = (-tol, None)
        shrink, grow = [], []
        for a in range(k - w + 1):
            lo, hi = edges[a], edges[a + w]
            cur = sum(cost[a:a + w])
            c, b = solve(lo, hi, w)
            if c - cur < best[0]:
                best = (c - cur, ("same", a, b))
            shrink.append((solve(lo, hi, w - 1), cur))
            grow.append((solve(lo, hi, w + 1), cur))
        for a, ((cs, bs), cur_s) in enumerate(shrink):
            if not np.isfinite(cs):
                continue
            for g, ((cg, bg), cur_g) in enumerate(grow):
                if abs(g - a) < w or not np.isfinite(cg):
                    continue
                delta = (cs - cur_s) + (cg - cur_g)
                if delta < best[0]:
                    best = (delta, ("trade", a, bs, g, bg))
        move = best[1]
        if move is None:
            break
        if move[0] == "same":
            _, a, b = move
            edges[a + 1:a + w] = list(b)
        else:
            _, a, bs, g, bg = move
            # splice the later window first so the earlier indices stay valid
            if a < g:
                edges[g + 1:g + w] = list(bg)
                edges[a + 1:a + w] = list(bs)
            else:
                edges[a + 1:a + w] = list(bs)
                edges[g + 1:g + w] = list(bg)
    return np.asarray(edges[1:-1], dtype=np.int64)
