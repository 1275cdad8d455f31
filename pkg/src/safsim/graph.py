"""Immutable graphs, hop-distance metric, vertex partitions and quotient graphs."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

# Above this many nodes the dense distance table is not materialised.
DENSE_APSP_LIMIT = 4000


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected, connected, simple graph on nodes ``0..n-1``.

    Build instances with :func:`build_graph`; the constructor trusts its input.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    adj: tuple[tuple[int, ...], ...] = field(repr=False)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Graph) and self.n == other.n and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.n, self.edges))

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def csr(self) -> csr_matrix:
        if not self.edges:
            return csr_matrix((self.n, self.n), dtype=np.int8)
        e = np.asarray(self.edges, dtype=np.int64)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.ones(len(rows), dtype=np.int8)
        return csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def max_degree(self) -> int:
        return max((len(a) for a in self.adj), default=0)

    @cached_property
    def distances(self) -> np.ndarray:
        """Dense all-pairs hop distances (int32). See :func:`apsp`."""
        return apsp(self)

    @cached_property
    def diameter(self) -> int:
        if self.n <= DENSE_APSP_LIMIT:
            return int(self.distances.max())
        return max(int(bfs_distances(self, v).max()) for v in range(self.n))

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adj[v]

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adj[u]

    def dist(self, u: int, v: int) -> int:
        if self.n <= DENSE_APSP_LIMIT:
            return int(self.distances[u, v])
        return int(bfs_distances(self, u)[v])


def build_graph(n: int, edge_list: Iterable[Sequence[int]]) -> Graph:
    """Validate an edge list and return a connected simple :class:`Graph`.

    Duplicate edges (in either orientation) are collapsed. Self-loops,
    out-of-range ids and disconnected inputs raise :class:`GraphError`.
    """
    if n < 1:
        raise GraphError(f"node count must be positive, got {n}")
    seen: set[tuple[int, int]] = set()
    for pair in edge_list:
        u, v = int(pair[0]), int(pair[1])
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"edge ({u}, {v}) out of range for n={n}")
        if u == v:
            raise GraphError(f"self-loop at node {u}")
        seen.add((u, v) if u < v else (v, u))
    edges = tuple(sorted(seen))
    nbrs: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        nbrs[u].append(v)
        nbrs[v].append(u)
    g = Graph(n, edges, tuple(tuple(sorted(a)) for a in nbrs))
    if n > 1:
        ncomp, _ = connected_components(g.csr, directed=False)
        if ncomp != 1:
            raise GraphError(f"graph is disconnected ({ncomp} components)")
    return g


def bfs_distances(g: Graph, source: int) -> np.ndarray:
    dist = np.full(g.n, -1, dtype=np.int32)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for w in g.adj[u]:
            if dist[w] < 0:
                dist[w] = du
                queue.append(w)
    return dist


def apsp(g: Graph) -> np.ndarray:
    """All-pairs hop distances as a dense ``n x n`` int32 table."""
    if g.n > DENSE_APSP_LIMIT:
        raise GraphError(f"dense APSP refused for n={g.n} > {DENSE_APSP_LIMIT}; use bfs_distances")
    if g.n == 1:
        return np.zeros((1, 1), dtype=np.int32)
    d = shortest_path(g.csr, method="D", directed=False, unweighted=True)
    return d.astype(np.int32)


# ---------------------------------------------------------------------------
# Partitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Partition:
    """Cluster assignment with per-cluster spanning trees.

    Cluster ids are the node ids of the cluster centers. ``parent[v]`` is a
    same-cluster neighbour one hop closer to the center (``-1`` at centers).
    """

    cluster_of: np.ndarray
    depth_of: np.ndarray
    parent: np.ndarray

    @property
    def n(self) -> int:
        return len(self.cluster_of)

    @cached_property
    def clusters(self) -> np.ndarray:
        """Sorted array of cluster ids (= center node ids)."""
        return np.unique(self.cluster_of)

    @property
    def center_of(self) -> dict[int, int]:
        return {int(c): int(c) for c in self.clusters}

    @cached_property
    def index_of_cluster(self) -> np.ndarray:
        """Per node: index of its cluster in :attr:`clusters`."""
        return np.searchsorted(self.clusters, self.cluster_of).astype(np.int32)

    @cached_property
    def members(self) -> dict[int, np.ndarray]:
        order = np.argsort(self.cluster_of, kind="stable")
        starts = np.searchsorted(self.cluster_of[order], self.clusters)
        ends = np.r_[starts[1:], self.n]
        return {int(c): order[s:e] for c, s, e in zip(self.clusters, starts, ends)}

    @property
    def max_depth(self) -> int:
        return int(self.depth_of.max()) if self.n else 0

    def same(self, other: "Partition") -> bool:
        return bool(np.array_equal(self.cluster_of, other.cluster_of)
                    and np.array_equal(self.depth_of, other.depth_of))

    def to_json(self) -> dict[str, list[int]]:
        return {str(v): [int(self.cluster_of[v]), int(self.depth_of[v])] for v in range(self.n)}


def make_partition(g: Graph, cluster_of: Sequence[int], depth_of: Sequence[int]) -> Partition:
    """Build and validate a :class:`Partition` from cluster labels and depths.

    The parent of a non-center node is its smallest-id same-cluster neighbour
    of depth one less; a missing parent is a validation error.
    """
    cl = np.asarray(cluster_of, dtype=np.int32)
    dp = np.asarray(depth_of, dtype=np.int32)
    if cl.shape != (g.n,) or dp.shape != (g.n,):
        raise GraphError("cluster_of and depth_of must have one entry per node")
    parent = np.full(g.n, -1, dtype=np.int32)
    for v in range(g.n):
        c = int(cl[v])
        if not 0 <= c < g.n:
            raise GraphError(f"node {v} assigned to invalid cluster {c}")
        if v == c:
            if dp[v] != 0:
                raise GraphError(f"center {v} has depth {dp[v]}")
            continue
        if dp[v] <= 0:
            raise GraphError(f"non-center node {v} has depth {dp[v]}")
        for w in g.adj[v]:
            if cl[w] == c and dp[w] == dp[v] - 1:
                parent[v] = w
                break
        else:
            raise GraphError(f"node {v} has no same-cluster neighbour at depth {dp[v] - 1}")
    for c in np.unique(cl):
        if cl[c] != c:
            raise GraphError(f"cluster {c} does not contain its center")
    return Partition(cl, dp, parent)


def check_partition(g: Graph, p: Partition) -> None:
    """Raise :class:`GraphError` unless ``p`` satisfies every partition invariant."""
    rebuilt = make_partition(g, p.cluster_of, p.depth_of)
    for c, mem in p.members.items():
        sub = g.csr[mem][:, mem]
        if len(mem) > 1 and connected_components(sub, directed=False)[0] != 1:
            raise GraphError(f"cluster {c} does not induce a connected subgraph")
    if not np.array_equal(rebuilt.parent >= 0, p.parent >= 0):
        raise GraphError("parent pointers inconsistent with centers")


def singleton_partition(g: Graph) -> Partition:
    ids = np.arange(g.n, dtype=np.int32)
    return Partition(ids, np.zeros(g.n, dtype=np.int32), np.full(g.n, -1, dtype=np.int32))


def one_cluster_partition(g: Graph, center: int = 0) -> Partition:
    d = bfs_distances(g, center)
    return make_partition(g, np.full(g.n, center), d)


def partition_from_json(g: Graph, data: dict[str, Sequence[int]]) -> Partition:
    cl = [0] * g.n
    dp = [0] * g.n
    for key, (c, d) in data.items():
        cl[int(key)] = int(c)
        dp[int(key)] = int(d)
    return make_partition(g, cl, dp)


# ---------------------------------------------------------------------------
# Quotient graphs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuotientGraph:
    """Cluster graph ``G/P``; node ``i`` stands for cluster ``partition.clusters[i]``."""

    graph: Graph
    partition: Partition

    @cached_property
    def distances(self) -> np.ndarray:
        return self.graph.distances

    def cluster_distance(self, u: int, v: int) -> int:
        """Quotient distance between the clusters of G-nodes ``u`` and ``v``."""
        idx = self.partition.index_of_cluster
        return int(self.distances[idx[u], idx[v]])

    @cached_property
    def node_distances(self) -> np.ndarray:
        """``d*([u],[v])`` for every pair of G-nodes, as an ``n x n`` table."""
        idx = self.partition.index_of_cluster
        return self.distances[np.ix_(idx, idx)]


def quotient(g: Graph, p: Partition) -> QuotientGraph:
    idx = p.index_of_cluster
    k = len(p.clusters)
    pairs = []
    for u, v in g.edges:
        a, b = int(idx[u]), int(idx[v])
        if a != b:
            pairs.append((a, b))
    return QuotientGraph(build_graph(k, pairs), p)


def cluster_ball(level: tuple[Partition, QuotientGraph], v: int, r: int) -> np.ndarray:
    """Nodes whose cluster lies within quotient distance ``r`` of ``[v]``.

    Returns a boolean mask over G's nodes.
    """
    p, q = level
    idx = p.index_of_cluster
    near = q.distances[idx[v]] <= r
    return near[idx]


def adpp_bounds(d_uv: int, R: int, alpha: int, beta: int) -> tuple[int, int]:
    """Lower and upper bounds on quotient distance for an (R, alpha, beta) partition."""
    if d_uv < 0 or min(R, alpha, beta) < 1:
        raise ValueError("need d_uv >= 0 and R, alpha, beta >= 1")
    return d_uv // (beta * R + 1), alpha * math.ceil(d_uv / R)


# ---------------------------------------------------------------------------
# Edge-list text format
# ---------------------------------------------------------------------------


def write_edge_list(g: Graph, path: str | Path) -> None:
    lines = [f"{g.n} {g.m}"] + [f"{u} {v}" for u, v in g.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path: str | Path) -> Graph:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows:
        raise GraphError(f"{path}: empty edge list")
    n, m = int(rows[0][0]), int(rows[0][1])
    body = rows[1:]
    if len(body) != m:
        raise GraphError(f"{path}: header says {m} edges, found {len(body)}")
    return build_graph(n, [(int(a), int(b)) for a, b in body])


def write_partition(p: Partition, path: str | Path) -> None:
    Path(path).write_text(json.dumps(p.to_json(), sort_keys=True))
