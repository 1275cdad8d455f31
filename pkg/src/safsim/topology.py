"""Deterministic topology generators. Random families retry until connected."""

from __future__ import annotations

import math
from typing import Any

import networkx as nx
import numpy as np

from .graph import Graph, GraphError, build_graph

MAX_RETRIES = 200


def path_graph(n: int) -> Graph:
    return build_graph(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise GraphError("cycle needs n >= 3")
    return build_graph(n, [(i, (i + 1) % n) for i in range(n)])


def grid_graph(side: int, cols: int | None = None) -> Graph:
    """``side x cols`` grid; node ``(x, y)`` has id ``x * cols + y``."""
    cols = side if cols is None else cols
    edges = []
    for x in range(side):
        for y in range(cols):
            v = x * cols + y
            if y + 1 < cols:
                edges.append((v, v + 1))
            if x + 1 < side:
                edges.append((v, v + cols))
    return build_graph(side * cols, edges)


def random_geometric(n: int, radius: float | None = None, seed: int = 0) -> Graph:
    """Unit-disk graph on uniform points in the unit square.

    The default radius is ``1.5 * sqrt(ln n / (pi n))``, just above the
    connectivity threshold.
    """
    if radius is None:
        radius = 1.5 * math.sqrt(math.log(max(n, 2)) / (math.pi * max(n, 1)))
    rng = np.random.default_rng([seed, 0x6E0])
    for _ in range(MAX_RETRIES):
        pts = rng.random((n, 2))
        diff = pts[:, None, :] - pts[None, :, :]
        close = (diff ** 2).sum(-1) <= radius * radius
        iu, ju = np.nonzero(np.triu(close, 1))
        try:
            return build_graph(n, zip(iu.tolist(), ju.tolist()))
        except GraphError:
            continue
    raise GraphError(f"random_geometric(n={n}, radius={radius}) not connected after {MAX_RETRIES} tries")


def erdos_renyi(n: int, p: float | None = None, seed: int = 0) -> Graph:
    """G(n, p) with default ``p = 2 ln n / n``."""
    if p is None:
        p = min(1.0, 2 * math.log(max(n, 2)) / max(n, 1))
    rng = np.random.default_rng([seed, 0xE4])
    for _ in range(MAX_RETRIES):
        mask = np.triu(rng.random((n, n)) < p, 1)
        iu, ju = np.nonzero(mask)
        try:
            return build_graph(n, zip(iu.tolist(), ju.tolist()))
        except GraphError:
            continue
    raise GraphError(f"erdos_renyi(n={n}, p={p}) not connected after {MAX_RETRIES} tries")


def generate_topology(topo: dict[str, Any], seed: int = 0) -> Graph:
    """Build a graph from ``{"kind": ..., **params}``."""
    kind = topo["kind"]
    if kind == "path":
        return path_graph(int(topo["n"]))
    if kind == "cycle":
        return cycle_graph(int(topo["n"]))
    if kind == "grid":
        return grid_graph(int(topo["side"]), topo.get("cols"))
    if kind == "random_geometric":
        return random_geometric(int(topo["n"]), topo.get("radius"), seed)
    if kind == "erdos_renyi":
        return erdos_renyi(int(topo["n"]), topo.get("p"), seed)
    raise ValueError(f"unknown topology kind {kind!r}")


def small_graph_catalog(max_n: int = 5) -> list[Graph]:
    """Every connected graph on ``1..max_n`` nodes, one per isomorphism class (``max_n <= 7``)."""
    out = []
    for h in nx.graph_atlas_g():
        k = h.number_of_nodes()
        if 1 <= k <= max_n and nx.is_connected(h):
            out.append(build_graph(k, h.edges()))
    return out
