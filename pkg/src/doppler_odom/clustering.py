"""HDBSCAN over dynamic candidates.

Plain implementation of the usual pipeline: core distances, an MST of the
mutual-reachability graph (Prim on the implicit dense graph), a single-linkage
hierarchy, the condensed tree and excess-of-mass cluster selection.  Only
positions are clustered; velocity consistency is checked downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .scan import build_tree

NOISE = -1


@dataclass(frozen=True)
class ClusterParams:
    min_cluster_size: int = 30
    min_samples: int = 10
    allow_single_cluster: bool = False

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise InvalidArgumentError("min_cluster_size must be >= 2")
        if self.min_samples < 1:
            raise InvalidArgumentError("min_samples must be >= 1")


@dataclass(frozen=True, eq=False)
class ClusterLabeling:
    labels: np.ndarray

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) and self.labels.max() >= 0 else 0

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.labels == k)

    @property
    def noise(self) -> np.ndarray:
        return np.flatnonzero(self.labels == NOISE)


def _dist_to(points: np.ndarray, i: int) -> np.ndarray:
    return np.sqrt(np.sum((points - points[i]) ** 2, axis=1))


def core_distances(points, min_samples: int) -> np.ndarray:
    """Distance from each point to its ``min_samples``-th nearest other point."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) <= min_samples:
        raise InvalidArgumentError(
            f"need more than min_samples={min_samples} points for core distances, got {len(pts)}"
        )
    k = min_samples + 1
    _, idx = build_tree(pts).query(pts, k=k, workers=-1)
    idx = idx.reshape(len(pts), k)
    # recompute with the same formula the MST uses so both agree bit-for-bit
    d = np.sqrt(np.sum((pts[idx] - pts[:, None, :]) ** 2, axis=2))
    d.sort(axis=1)
    return d[:, min_samples]


def mutual_reachability_mst(points, core) -> np.ndarray:
    """Minimum spanning tree of the mutual-reachability graph.

    Returns an ``(n - 1, 3)`` array of ``(a, b, weight)`` rows sorted by
    weight, ties broken by ``(min(a, b), max(a, b))``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    core = np.asarray(core, dtype=float)
    n = len(pts)
    if n < 2:
        return np.zeros((0, 3))
    remaining = np.arange(1, n)
    best = np.full(n - 1, np.inf)
    parent = np.zeros(n - 1, dtype=np.int64)
    edges = np.empty((n - 1, 3))
    current = 0
    m = n - 1
    for e in range(n - 1):
        rem = remaining[:m]
        d = np.sqrt(np.sum((pts[rem] - pts[current]) ** 2, axis=1))
        mr = np.maximum(np.maximum(d, core[current]), core[rem])
        b = best[:m]
        better = mr < b
        b[better] = mr[better]
        parent[:m][better] = current
        j = int(np.argmin(b))
        ties = np.flatnonzero(b == b[j])
        if len(ties) > 1:
            # lowest vertex id among equal keys, independent of array order
            j = int(ties[np.argmin(rem[ties])])
        current = int(rem[j])
        edges[e] = (parent[j], current, b[j])
        # swap-remove
        m -= 1
        remaining[j], best[j], parent[j] = remaining[m], best[m], parent[m]
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    order = np.lexsort((hi, lo, edges[:, 2]))
    return np.column_stack([lo[order], hi[order], edges[order, 2]])


def _single_linkage(mst: np.ndarray, n: int) -> np.ndarray:
    """Rows ``(left, right, distance, size)``; node ``n + i`` is row ``i``."""
    parent = np.arange(2 * n - 1)
    size = np.ones(2 * n - 1, dtype=np.int64)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    out = np.empty((n - 1, 4))
    for i, (a, b, w) in enumerate(mst):
        ra, rb = find(int(a)), find(int(b))
        node = n + i
        parent[ra] = parent[rb] = node
        size[node] = size[ra] + size[rb]
        out[i] = (ra, rb, w, size[node])
    return out


def _condense(linkage: np.ndarray, n: int, min_cluster_size: int):
    root = 2 * n - 2
    left = linkage[:, 0].astype(np.int64)
    right = linkage[:, 1].astype(np.int64)
    dist = linkage[:, 2]
    sizes = np.ones(2 * n - 1, dtype=np.int64)
    sizes[n:] = linkage[:, 3].astype(np.int64)

    def leaves(node):
        out, stack = [], [node]
        while stack:
            x = stack.pop()
            if x < n:
                out.append(x)
            else:
                stack.extend((left[x - n], right[x - n]))
        return out

    def split(node):
        # every subtree hanging below the run of merges at this node's height:
        # the components left once all edges of that weight are cut, which do
        # not depend on how equal-weight edges were ordered
        d = dist[node - n]
        out, stack = [], [node]
        while stack:
            x = stack.pop()
            if x >= n and dist[x - n] == d:
                stack.extend((left[x - n], right[x - n]))
            else:
                out.append(x)
        return out

    relabel = {root: n}
    next_label = n + 1
    rows = []  # (parent, child, lambda, child_size)
    queue = [root]
    while queue:
        node = queue.pop(0)
        if node < n:
            continue
        lam = 1.0 / max(dist[node - n], 1e-12)
        lab = relabel[node]
        parts = sorted(split(node), key=lambda x: min(leaves(x)))
        big = [x for x in parts if sizes[x] >= min_cluster_size]
        for x in parts:
            if sizes[x] < min_cluster_size:
                for leaf in leaves(x):
                    rows.append((lab, leaf, lam, 1))
        if len(big) >= 2:
            for child in big:
                relabel[child] = next_label
                rows.append((lab, next_label, lam, sizes[child]))
                next_label += 1
                queue.append(child)
        elif big:
            relabel[big[0]] = lab
            queue.append(big[0])
    return rows, next_label


def extract_clusters(mst, n: int, min_cluster_size: int, allow_single_cluster: bool = False) -> ClusterLabeling:
    """Condensed tree + excess-of-mass selection; unselected points are NOISE."""
    if n == 0:
        return ClusterLabeling(np.zeros(0, dtype=np.int64))
    if n < min_cluster_size or n < 2:
        return ClusterLabeling(np.full(n, NOISE, dtype=np.int64))
    mst = np.asarray(mst, dtype=float)
    rows, next_label = _condense(_single_linkage(mst, n), n, min_cluster_size)
    root = n
    clusters = list(range(n, next_label))
    birth = {root: 0.0}
    children = {c: [] for c in clusters}
    cluster_parent = {}
    for parent, child, lam, cnt in rows:
        if cnt > 1 or child >= n:
            birth[child] = lam
            children[parent].append(child)
            cluster_parent[child] = parent
    stability = {c: 0.0 for c in clusters}
    for parent, child, lam, cnt in rows:
        stability[parent] += (lam - birth[parent]) * cnt

    selected = {c: True for c in clusters}
    candidates = sorted(clusters, reverse=True)
    if not allow_single_cluster:
        candidates = candidates[:-1]
        selected[root] = False
    for c in candidates:
        sub = sum(stability[ch] for ch in children[c])
        if sub > stability[c]:
            selected[c] = False
            stability[c] = sub
        else:
            stack = list(children[c])
            while stack:
                x = stack.pop()
                selected[x] = False
                stack.extend(children[x])

    owner = {}
    for c in sorted(clusters):
        up = owner.get(cluster_parent.get(c))
        owner[c] = up if up is not None else (c if selected[c] else None)
    chosen = sorted(c for c in clusters if selected[c])
    new_id = {c: k for k, c in enumerate(chosen)}
    labels = np.full(n, NOISE, dtype=np.int64)
    for parent, child, lam, cnt in rows:
        if child < n:
            o = owner[parent]
            if o is not None:
                labels[child] = new_id[o]
    return ClusterLabeling(labels)


def cluster_dynamic(points, params: ClusterParams | None = None) -> ClusterLabeling:
    """HDBSCAN labelling of dynamic-candidate positions."""
    params = params or ClusterParams()
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    if n <= params.min_samples or n < params.min_cluster_size:
        return ClusterLabeling(np.full(n, NOISE, dtype=np.int64))
    core = core_distances(pts, params.min_samples)
    mst = mutual_reachability_mst(pts, core)
    return extract_clusters(mst, n, params.min_cluster_size, params.allow_single_cluster)
