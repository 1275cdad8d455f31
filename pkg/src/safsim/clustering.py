"""Additively weighted Voronoi partitions, ADPP validation and multi-scale clusterings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .engine import node_tape
from .graph import (Graph, Partition, QuotientGraph, cluster_ball, make_partition, quotient,
                    singleton_partition)


class MscError(ValueError):
    pass


# ---------------------------------------------------------------------------
# AWVD / MPX
# ---------------------------------------------------------------------------


def awvd_generators(dist: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per node, the generator minimising ``d(u, v) - W(v)``.

    Ties are broken by the larger fractional part of ``W`` and then by the
    smaller id, comparing ``d - floor(W)`` exactly as integers first.
    """
    w = np.asarray(weights, dtype=float)
    fl = np.floor(w)
    frac = w - fl
    key = dist.astype(np.float64) - fl[None, :]
    best = key.min(axis=1, keepdims=True)
    tied = key == best
    f = np.where(tied, frac[None, :], -1.0)
    tied &= f == f.max(axis=1, keepdims=True)
    return tied.argmax(axis=1).astype(np.int32)


def awvd_reference(g: Graph, weights: Sequence[float]) -> Partition:
    """Centralised additively weighted Voronoi partition of ``g``.

    Depths are hop distances to the generator; cells are star-shaped, so a
    shortest path to the center stays inside the cell (validated by
    :func:`~safsim.graph.make_partition`).
    """
    dist = g.distances
    gen = awvd_generators(dist, np.asarray(weights, dtype=float))
    depth = dist[np.arange(g.n), gen]
    return make_partition(g, gen, depth)


def mpx_weights(n: int, R: float, seed: int, level: int = 1) -> np.ndarray:
    """The exponential weights :class:`~safsim.protocols.NaivelyBuildMpx` draws for the same seed."""
    return np.array([node_tape(seed, v, 7919, level).exponential(R) for v in range(n)])


def grid_rounding_partition(side: int, R: int) -> Partition:
    """Round ``(x, y)`` down to multiples of ``R`` on the ``side x side`` grid (node id ``x*side + y``)."""
    xs, ys = np.divmod(np.arange(side * side), side)
    cx, cy = (xs // R) * R, (ys // R) * R
    cluster = (cx * side + cy).astype(np.int32)
    depth = ((xs - cx) + (ys - cy)).astype(np.int32)
    from .topology import grid_graph
    return make_partition(grid_graph(side), cluster, depth)


# ---------------------------------------------------------------------------
# ADPP validation and statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdppParams:
    R: int
    alpha: int
    beta: int

    def __post_init__(self):
        if min(self.R, self.alpha, self.beta) < 1:
            raise ValueError(f"ADPP parameters must be >= 1: {self}")


def validate_adpp(g: Graph, p: Partition, R: int, q: QuotientGraph | None = None) -> tuple[int, int]:
    """Smallest ``(alpha, beta)`` for which ``p`` is an ``(R, alpha, beta)``-ADPP of ``g``.

    Both are clamped to at least 1.
    """
    q = quotient(g, p) if q is None else q
    dist = g.distances
    dstar = q.node_distances
    close = dist <= R
    alpha = int(dstar[close].max()) if close.any() else 0
    same = dstar == 0
    intra = int(dist[same].max())
    beta = math.ceil(intra / R)
    return max(1, alpha), max(1, beta)


def cluster_diameters(dist: np.ndarray, cluster_of: np.ndarray) -> np.ndarray:
    """Max G-distance between two members, per node's cluster (weak diameter)."""
    same = cluster_of[:, None] == cluster_of[None, :]
    return np.where(same, dist, 0).max(axis=1)


def mpx_diameter_stats(g: Graph, R: float, trials: int, seed: int,
                       log_base: float = math.e) -> dict[str, float]:
    """Fraction of MPX trials whose largest cluster diameter exceeds ``3 R log n``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    threshold = 3 * R * math.log(g.n, log_base) if g.n > 1 else 0.0
    dist = g.distances
    diams = np.empty(trials, dtype=np.int64)
    for k in range(trials):
        gen = awvd_generators(dist, rng.exponential(R, g.n))
        diams[k] = cluster_diameters(dist, gen).max()
    return {"trials": trials, "threshold": threshold, "max_diameter": int(diams.max()),
            "exceed_fraction": float((diams > threshold).mean()), "diameters": diams}


def ball_cluster_counts(ball: np.ndarray, cluster_of: np.ndarray) -> np.ndarray:
    """Number of distinct clusters meeting each row's ball (``ball`` is an n x n mask)."""
    _, idx = np.unique(cluster_of, return_inverse=True)
    onehot = np.zeros((len(cluster_of), idx.max() + 1), dtype=np.int32)
    onehot[np.arange(len(cluster_of)), idx] = 1
    return ((ball.astype(np.int32) @ onehot) > 0).sum(axis=1)


def ball_intersection_stats(g: Graph, R: float, ell: int, trials: int, seed: int,
                            C: float = 23.0, log_base: float = math.e) -> dict[str, float]:
    """Max number of clusters meeting a radius-``ell`` ball, and the fraction of
    trials in which some ball meets more than ``C log n`` clusters."""
    rng = np.random.default_rng(seed)
    threshold = C * math.log(g.n, log_base) if g.n > 1 else 0.0
    dist = g.distances
    ball = dist <= ell
    maxima = np.empty(trials, dtype=np.int64)
    for k in range(trials):
        gen = awvd_generators(dist, rng.exponential(R, g.n))
        maxima[k] = ball_cluster_counts(ball, gen).max()
    return {"trials": trials, "threshold": threshold, "max_count": int(maxima.max()),
            "tail_fraction": float((maxima > threshold).mean()), "maxima": maxima}


def sandwich_holds(g: Graph, q: QuotientGraph, params: AdppParams) -> bool:
    """Check ``floor(d/(beta R + 1)) <= d* <= alpha ceil(d/R)`` for every pair."""
    d = g.distances.astype(np.int64)
    dstar = q.node_distances
    lo = d // (params.beta * params.R + 1)
    hi = params.alpha * (-(-d // params.R))
    return bool(((lo <= dstar) & (dstar <= hi)).all())


# ---------------------------------------------------------------------------
# Multi-scale clustering
# ---------------------------------------------------------------------------


def growth_min_ratio(alpha: int, beta: int) -> int:
    """Smallest admissible ``R_{j+1} / R_j`` after a level with parameters ``(alpha, beta)``."""
    return (2 * alpha + 1) * (beta + 1) - 1


@dataclass
class MscLevel:
    partition: Partition
    quotient: QuotientGraph
    params: AdppParams
    measured: tuple[int, int]  # (alpha_emp, beta_emp)
    depth_bound: int  # Dmax used for cluster operations (>= 1)

    @property
    def R(self) -> int:
        return self.params.R

    @property
    def alpha(self) -> int:
        return self.params.alpha

    @property
    def beta(self) -> int:
        return self.params.beta


@dataclass
class MultiScaleClustering:
    """Levels ``0..ell``; level 0 is the singleton partition with ``R = alpha = beta = 1``."""

    graph: Graph
    levels: list[MscLevel]
    mode: str = "empirical"
    attempts: list[int] = field(default_factory=list)

    @property
    def ell(self) -> int:
        return len(self.levels) - 1

    def __getitem__(self, j: int) -> MscLevel:
        return self.levels[j]

    def radii(self) -> list[int]:
        return [lv.R for lv in self.levels]

    def truncated(self, top: int) -> "MultiScaleClustering":
        return MultiScaleClustering(self.graph, self.levels[: top + 1], self.mode, self.attempts[:top])

    def growth_violations(self) -> list[tuple[int, float, int]]:
        """``(j, R_{j+1}/R_j, required)`` for each level breaking the growth condition."""
        out = []
        for j in range(1, self.ell):
            lv, up = self.levels[j], self.levels[j + 1]
            need = growth_min_ratio(lv.alpha, lv.beta)
            if up.R < need * lv.R:
                out.append((j, up.R / lv.R, need))
        return out

    def summary(self) -> list[dict[str, int]]:
        return [{"level": j, "R": lv.R, "alpha": lv.alpha, "beta": lv.beta,
                 "alpha_emp": lv.measured[0], "beta_emp": lv.measured[1],
                 "clusters": int(len(lv.partition.clusters)), "Dmax": lv.depth_bound}
                for j, lv in enumerate(self.levels)]

    def to_json(self) -> dict:
        return {"mode": self.mode, "levels": [
            {"R": lv.R, "alpha": lv.alpha, "beta": lv.beta,
             "cluster_of": lv.partition.cluster_of.tolist(),
             "depth_of": lv.partition.depth_of.tolist(),
             "center_of": {str(c): c for c in lv.partition.center_of}}
            for lv in self.levels[1:]]}


def level_zero(g: Graph) -> MscLevel:
    p = singleton_partition(g)
    return MscLevel(p, quotient(g, p), AdppParams(1, 1, 1), (1, 1), 1)


def strict_params(n: int, R: int, preset: str = "beta3") -> tuple[int, int]:
    """Worst-case ``(alpha, beta)`` for an MPX level: ``(23 ln n, 3 ln n)`` or ``(23 ln n, 12 ln n)``."""
    ln = math.log(n) if n > 1 else 1.0
    factor = {"beta3": 3, "beta12": 12}[preset]
    return max(1, math.ceil(23 * ln)), max(1, math.ceil(factor * ln))


def make_level(g: Graph, p: Partition, R: int, mode: str = "empirical",
               declared: tuple[int, int] | None = None, preset: str = "beta3") -> MscLevel:
    q = quotient(g, p)
    measured = validate_adpp(g, p, R, q)
    dmax = max(1, p.max_depth)
    if mode == "empirical":
        alpha, beta = measured
    elif mode == "declared":
        if declared is None:
            raise ValueError("declared mode needs (alpha, beta)")
        alpha, beta = declared
    elif mode == "strict":
        alpha, beta = strict_params(g.n, R, preset)
        dmax = max(1, math.ceil(3 * R * math.log(g.n))) if g.n > 1 else 1
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return MscLevel(p, q, AdppParams(int(R), int(alpha), int(beta)), measured, dmax)


def assemble_msc(g: Graph, levels: Sequence[tuple[Partition, int]], mode: str = "empirical",
                 declared: Sequence[tuple[int, int]] | None = None, check: bool = True) -> MultiScaleClustering:
    """Stack partitions into a multi-scale clustering and check the growth condition.

    Raises :class:`MscError` naming the first failing level when
    ``R_{j+1}/R_j < (2 alpha_j + 1)(beta_j + 1) - 1``.
    """
    radii = [R for _, R in levels]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise MscError(f"radii must be strictly increasing: {radii}")
    built = [level_zero(g)]
    for k, (p, R) in enumerate(levels):
        built.append(make_level(g, p, R, mode, None if declared is None else declared[k]))
    msc = MultiScaleClustering(g, built, mode, [1] * len(levels))
    if check:
        bad = msc.growth_violations()
        if bad:
            j, ratio, need = bad[0]
            raise MscError(f"growth condition fails at level {j}: R_{j + 1}/R_{j} = {ratio:g} < {need}")
    return msc


def check_nesting(msc: MultiScaleClustering, u: int, v: int, j: int) -> bool:
    """Whether ``B_j(v, 2 alpha_j)`` is contained in ``B_{j+1}(u, 2 alpha_{j+1})``."""
    if not 1 <= j < msc.ell:
        raise ValueError(f"need 1 <= j < {msc.ell}, got {j}")
    lo, hi = msc[j], msc[j + 1]
    if msc.graph.dist(u, v) > hi.R - lo.R:
        raise ValueError(f"d({u},{v}) exceeds R_{j + 1} - R_{j}")
    inner = cluster_ball((lo.partition, lo.quotient), v, 2 * lo.alpha)
    outer = cluster_ball((hi.partition, hi.quotient), u, 2 * hi.alpha)
    return bool(not (inner & ~outer).any())


def geometric_base(n: int, C: float = 1.0) -> int:
    """Geometric scale ``R = max(ceil(C ln^2 n), 13)``."""
    ln = math.log(n) if n > 1 else 0.0
    return max(math.ceil(C * ln * ln), 13)


def default_level_count(n: int, R: int) -> int:
    """Fewest levels with ``R^ell >= n``."""
    ell = 1
    while R ** ell < n:
        ell += 1
    return ell


def mpx_partition(g: Graph, R: int, seed: int, level: int, attempt: int = 0) -> Partition:
    stream_seed = seed if attempt == 0 else seed * 1_000_003 + attempt
    return awvd_reference(g, mpx_weights(g.n, R, stream_seed, level))


def build_msc_central(g: Graph, radii: Sequence[int] | None = None, *, R: int | None = None,
                      levels: int | None = None, growth: int | None = None, seed: int = 0,
                      mode: str = "empirical", max_attempts: int = 20) -> MultiScaleClustering:
    """Multi-scale MPX clustering computed centrally (the reference for bootstrapped builds).

    Radii are either given, geometric (``R^j`` for ``j = 1..levels``), or
    adaptive when ``growth`` is set: ``R_{j+1} = R_j * max(growth, required ratio)``.
    A level whose measured parameters break the growth condition is redrawn
    with a fresh seed, up to ``max_attempts`` times.
    """
    if radii is None:
        if R is None:
            R = geometric_base(g.n)
        levels = default_level_count(g.n, R) if levels is None else levels
        radii = [R ** j for j in range(1, levels + 1)] if growth is None else None
    built = [level_zero(g)]
    attempts = []
    count = len(radii) if radii is not None else levels
    Rj = radii[0] if radii is not None else R
    for j in range(1, count + 1):
        if radii is not None:
            Rj = radii[j - 1]
        nxt = radii[j] if radii is not None and j < count else None
        for attempt in range(max_attempts):
            p = mpx_partition(g, Rj, seed, j, attempt)
            lv = make_level(g, p, Rj, mode)
            need = growth_min_ratio(lv.alpha, lv.beta)
            if j == count or nxt is None or nxt >= need * Rj:
                break
        else:
            raise MscError(f"level {j}: growth condition unmet after {max_attempts} attempts "
                           f"(R_{j + 1}/R_{j} = {nxt / Rj:g} < {need})")
        built.append(lv)
        attempts.append(attempt + 1)
        if radii is None:
            Rj = Rj * max(growth, growth_min_ratio(lv.alpha, lv.beta))
    return MultiScaleClustering(g, built, mode, attempts)


def msc_from_partitions(g: Graph, parts: Iterable[tuple[Partition, int]], mode: str = "empirical") -> MultiScaleClustering:
    return assemble_msc(g, list(parts), mode)
