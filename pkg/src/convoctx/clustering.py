"""Hierarchical density-based clustering.

Pipeline: core distances (distance to the min_samples-th nearest neighbor,
counting the point itself) -> mutual reachability distances -> minimum
spanning tree -> single-linkage dendrogram -> condensed tree at
min_cluster_size -> excess-of-mass cluster selection. With min_samples=1
all core distances are 0 and mutual reachability reduces to the metric.

Ties break deterministically: MST edges order by (weight, min index, max
index); zero merge distances map to a large finite density level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

NOISE = -1
_LAMBDA_CAP = 1e12  # density level used for merges at distance 0


@dataclass
class CondensedEdge:
    parent: int
    child: int          # cluster id or, when is_point, a point index
    lam: float          # density level at which the child departs the parent
    size: int
    is_point: bool


@dataclass
class ClusterResult:
    labels: np.ndarray
    stabilities: dict[int, float]
    condensed: list[CondensedEdge] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max() + 1) if self.labels.size and self.labels.max() >= 0 else 0

    @property
    def noise_fraction(self) -> float:
        return float((self.labels == NOISE).mean()) if self.labels.size else 0.0


def core_distances(points: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance to the min_samples-th nearest neighbor, self included as the
    first. min_samples=1 therefore yields all zeros."""
    n = points.shape[0]
    if min_samples <= 1:
        return np.zeros(n)
    D = _pairwise(points)
    k = min(min_samples, n)
    return np.sort(D, axis=1)[:, k - 1]


def _pairwise(points: np.ndarray) -> np.ndarray:
    sq = (points ** 2).sum(axis=1)
    D2 = sq[:, None] + sq[None, :] - 2.0 * points @ points.T
    np.maximum(D2, 0.0, out=D2)
    D = np.sqrt(D2)
    np.fill_diagonal(D, 0.0)
    return D


def mutual_reachability(points: np.ndarray, min_samples: int) -> np.ndarray:
    D = _pairwise(points)
    core = core_distances(points, min_samples)
    M = np.maximum(D, np.maximum(core[:, None], core[None, :]))
    np.fill_diagonal(M, 0.0)
    return M


def mst(D: np.ndarray) -> list[tuple[float, int, int]]:
    """Prim's algorithm over a dense symmetric distance matrix. Returns edges
    (weight, i, j) with i < j, sorted by (weight, i, j)."""
    n = D.shape[0]
    if n <= 1:
        return []
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    best_from = np.full(n, -1, dtype=np.int64)
    in_tree[0] = True
    best[:] = D[0]
    best_from[:] = 0
    best[0] = np.inf
    edges = []
    for _ in range(n - 1):
        cand = np.where(~in_tree)[0]
        # Deterministic tie-break: smallest weight, then smallest endpoints.
        w = best[cand]
        order = np.lexsort((np.maximum(best_from[cand], cand),
                            np.minimum(best_from[cand], cand), w))
        nxt = cand[order[0]]
        a, b = best_from[nxt], nxt
        edges.append((float(best[nxt]), int(min(a, b)), int(max(a, b))))
        in_tree[nxt] = True
        best[nxt] = np.inf
        improve = D[nxt] < best
        improve &= ~in_tree
        best[improve] = D[nxt][improve]
        best_from[improve] = nxt
    edges.sort(key=lambda e: (e[0], e[1], e[2]))
    return edges


def single_linkage(edges: list[tuple[float, int, int]], n: int) -> np.ndarray:
    """Scipy-style linkage from sorted MST edges: row k merges two current
    clusters into node n+k at the edge's distance."""
    Z = np.zeros((max(n - 1, 0), 4))
    parent = list(range(2 * n - 1 if n else 0))
    size = [1] * n + [0] * max(n - 1, 0)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    nxt = n
    for w, a, b in edges:
        ra, rb = find(a), find(b)
        Z[nxt - n] = (min(ra, rb), max(ra, rb), w, size[ra] + size[rb])
        size[nxt] = size[ra] + size[rb]
        parent[ra] = parent[rb] = nxt
        nxt += 1
    return Z


def _leaves_under(Z: np.ndarray, node: int, n: int) -> list[int]:
    stack, out = [node], []
    while stack:
        v = stack.pop()
        if v < n:
            out.append(v)
        else:
            stack.append(int(Z[v - n, 0]))
            stack.append(int(Z[v - n, 1]))
    return out


def condense_tree(Z: np.ndarray, n: int, min_cluster_size: int) -> list[CondensedEdge]:
    """Walk the dendrogram top-down; splits where both sides reach
    min_cluster_size spawn child clusters, smaller sides shed their points at
    the split's density level."""
    edges: list[CondensedEdge] = []
    if n == 0:
        return edges
    if n == 1:
        edges.append(CondensedEdge(parent=1, child=0, lam=_LAMBDA_CAP, size=1, is_point=True))
        return edges
    root = 2 * n - 2
    next_cluster = n + 1  # condensed cluster ids start at n (the root cluster)
    # stack entries: (hierarchy node, condensed cluster id it belongs to)
    stack = [(root, n)]
    while stack:
        node, cluster = stack.pop()
        if node < n:
            # A bare point reached while its cluster persists: it departs when
            # it would have merged, i.e. at the level of its parent edge; here
            # that level was recorded by the caller via shed().
            continue
        left, right = int(Z[node - n, 0]), int(Z[node - n, 1])
        dist = float(Z[node - n, 2])
        lam = 1.0 / dist if dist > 0 else _LAMBDA_CAP
        size_l = 1 if left < n else int(Z[left - n, 3])
        size_r = 1 if right < n else int(Z[right - n, 3])

        def shed(child_node):
            for p in _leaves_under(Z, child_node, n):
                edges.append(CondensedEdge(cluster, p, lam, 1, True))

        big_l, big_r = size_l >= min_cluster_size, size_r >= min_cluster_size
        if big_l and big_r:
            for child_node, child_size in ((left, size_l), (right, size_r)):
                cid = next_cluster
                next_cluster += 1
                edges.append(CondensedEdge(cluster, cid, lam, child_size, False))
                stack.append((child_node, cid))
        elif big_l or big_r:
            keep, drop = (left, right) if big_l else (right, left)
            shed(drop)
            if keep >= n:
                stack.append((keep, cluster))
            else:
                edges.append(CondensedEdge(cluster, keep, lam, 1, True))
        else:
            shed(left)
            shed(right)
    return edges


def _compute_stability(edges: list[CondensedEdge], root: int) -> dict[int, float]:
    births: dict[int, float] = {root: 0.0}
    for e in edges:
        if not e.is_point:
            births[e.child] = e.lam
    stability: dict[int, float] = {c: 0.0 for c in births}
    for e in edges:
        stability[e.parent] += (e.lam - births[e.parent]) * e.size
    return stability


def select_eom(edges: list[CondensedEdge], root: int) -> tuple[set[int], dict[int, float]]:
    """Excess-of-mass: pick each cluster whose own stability beats the summed
    stability of its selected descendants. The root is never selected."""
    stability = _compute_stability(edges, root)
    children: dict[int, list[int]] = {c: [] for c in stability}
    for e in edges:
        if not e.is_point:
            children[e.parent].append(e.child)
    selected = {c: True for c in stability if c != root}
    work = dict(stability)
    for c in sorted(stability, reverse=True):
        if c == root:
            continue
        subtree = sum(work[ch] for ch in children[c])
        if children[c] and subtree > work[c]:
            work[c] = subtree
            selected[c] = False
        else:
            stack = list(children[c])
            while stack:
                d = stack.pop()
                selected[d] = False
                stack.extend(children[d])
    return {c for c, keep in selected.items() if keep}, stability


def labels_from_selection(edges: list[CondensedEdge], selected: set[int],
                          n: int) -> np.ndarray:
    parent_of: dict[int, int] = {}
    for e in edges:
        if not e.is_point:
            parent_of[e.child] = e.parent
    label_of_cluster: dict[int, int] = {
        c: k for k, c in enumerate(sorted(selected))}
    labels = np.full(n, NOISE, dtype=np.int64)
    for e in edges:
        if not e.is_point:
            continue
        c = e.parent
        while c is not None and c not in selected:
            c = parent_of.get(c)
        if c is not None:
            labels[e.child] = label_of_cluster[c]
    return labels


def cluster(points: np.ndarray, min_cluster_size: int = 100,
            min_samples: int = 1) -> ClusterResult:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 1:
        raise DataError("cluster requires an n x d matrix with n >= 1")
    if not np.all(np.isfinite(points)):
        raise DataError("cluster requires finite coordinates")
    if min_cluster_size < 2:
        raise DataError("min_cluster_size must be >= 2")
    if min_samples < 1:
        raise DataError("min_samples must be >= 1")
    n = points.shape[0]
    M = mutual_reachability(points, min_samples)
    edges = mst(M)
    Z = single_linkage(edges, n)
    condensed = condense_tree(Z, n, min_cluster_size)
    root = n if n > 1 else 1
    selected, stability = select_eom(condensed, root)
    labels = labels_from_selection(condensed, selected, n)
    kept = {c: stability[c] for c in selected}
    return ClusterResult(labels=labels, stabilities=kept, condensed=condensed)
