"""Cluster operations (upcast, downcast, intercast), the Notify procedure and the shared real-time schedule.

Slot layout of one Notify call at a level with depth bound ``Dmax`` and
radius ``r``::

    r x [ upcast: Dmax slots | downcast: Dmax slots | intercast: 1 slot ]
        [ upcast: Dmax slots | downcast: Dmax slots ]

Upcast and downcast receptions are restricted to same-cluster neighbours
(adjacent clusters are assumed separated, as inter-cluster backoff would);
intercast hears any participating neighbour.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import Graph, Partition


class ScheduleOverflow(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Schedule
# ---------------------------------------------------------------------------


def notify_length(r: int, dmax: int) -> int:
    """Real timesteps taken by one Notify call: ``(r+1) * 2 Dmax + r``."""
    return (r + 1) * 2 * max(1, dmax) + r


@dataclass(frozen=True)
class LevelTiming:
    R: int
    alpha: int
    dmax: int

    @property
    def r(self) -> int:
        return 2 * self.alpha

    @property
    def notify_len(self) -> int:
        return notify_length(self.r, self.dmax)


@dataclass(frozen=True)
class SafSchedule:
    """Fixed layout mapping simulated timesteps to real ones, shared by every node.

    ``levels[0]`` is a placeholder for native execution. Level ``j``
    splits an interval into epochs of ``R_j`` steps (the last possibly
    shorter); each epoch is a Notify block followed by the level ``j-1``
    layout of the epoch.
    """

    levels: tuple[LevelTiming, ...]
    horizon: int

    @property
    def top(self) -> int:
        return len(self.levels) - 1

    def duration(self, j: int, length: int) -> int:
        return _duration(self.levels, j, length)

    @property
    def real_duration(self) -> int:
        return self.duration(self.top, self.horizon)

    def tau(self, t: int) -> int:
        """Real slot (1-based) at which simulated step ``t`` executes."""
        if not 1 <= t <= self.horizon:
            raise ValueError(f"t={t} outside 1..{self.horizon}")
        base, s = 0, t
        for j in range(self.top, 0, -1):
            lv = self.levels[j]
            i = (s - 1) // lv.R
            base += i * (lv.notify_len + self.duration(j - 1, lv.R)) + lv.notify_len
            s -= i * lv.R
        return base + s

    def notify_block(self, j: int, t0: int) -> tuple[int, int]:
        """Real slots ``[first, last]`` of the level-``j`` Notify for the epoch starting at ``t0``."""
        if not 1 <= j <= self.top:
            raise ValueError(f"level {j} has no Notify")
        base, s = 0, t0
        for k in range(self.top, j - 1, -1):
            lv = self.levels[k]
            i = (s - 1) // lv.R
            base += i * (lv.notify_len + self.duration(k - 1, lv.R))
            s -= i * lv.R
            if k == j:
                if s != 1:
                    raise ValueError(f"t0={t0} is not a level-{j} epoch start")
                return base + 1, base + lv.notify_len
            base += lv.notify_len
        raise AssertionError("unreachable")

    def to_json(self) -> dict:
        return {"horizon": self.horizon, "real_duration": self.real_duration,
                "levels": [{"R": lv.R, "alpha": lv.alpha, "Dmax": lv.dmax, "N": lv.notify_len}
                           for lv in self.levels[1:]],
                "tau_formula": "tau(t) = sum over levels j=top..1 of i_j*(N_j + duration(j-1, R_j)) + N_j, "
                               "i_j = (s_j - 1) // R_j, s_{j-1} = s_j - i_j*R_j; plus s_0"}

    def dump(self, path: str | Path, with_table: bool = False) -> None:
        data = self.to_json()
        if with_table:
            data["tau_table"] = [self.tau(t) for t in range(1, self.horizon + 1)]
        Path(path).write_text(json.dumps(data, indent=1))


@lru_cache(maxsize=65536)
def _duration(levels: tuple[LevelTiming, ...], j: int, length: int) -> int:
    if length <= 0:
        return 0
    if j == 0:
        return length
    lv = levels[j]
    full, rem = divmod(length, lv.R)
    total = full * (lv.notify_len + _duration(levels, j - 1, lv.R))
    if rem:
        total += lv.notify_len + _duration(levels, j - 1, rem)
    return total


def schedule_build(msc, horizon: int, top: int | None = None,
                   budget: int | None = None) -> SafSchedule:
    """Schedule for simulating ``horizon`` steps with levels ``1..top`` of ``msc``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    top = msc.ell if top is None else top
    if top > msc.ell:
        raise ValueError(f"clustering has {msc.ell} levels, schedule asks for {top}")
    levels = [LevelTiming(1, 1, 1)]
    for j in range(1, top + 1):
        lv = msc[j]
        levels.append(LevelTiming(lv.R, lv.alpha, lv.depth_bound))
    sched = SafSchedule(tuple(levels), horizon)
    if budget is not None and sched.real_duration > budget:
        raise ScheduleOverflow(f"schedule needs {sched.real_duration} real steps, budget is {budget}")
    return sched


# ---------------------------------------------------------------------------
# Cluster layout
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ClusterLayout:
    """Per-level routing tables: same-cluster neighbours one level up/down the depth order."""

    graph: Graph
    cluster_of: np.ndarray
    depth_of: np.ndarray
    up: tuple[tuple[int, ...], ...]
    down: tuple[tuple[int, ...], ...]
    by_depth: tuple[np.ndarray, ...]

    @property
    def n(self) -> int:
        return self.graph.n

    def at_depth(self, d: int) -> np.ndarray:
        return self.by_depth[d] if 0 <= d < len(self.by_depth) else _EMPTY


_EMPTY = np.zeros(0, dtype=np.int64)


def cluster_layout(g: Graph, p: Partition) -> ClusterLayout:
    cl, dp = p.cluster_of, p.depth_of
    up, down = [], []
    for v in range(g.n):
        same = [w for w in g.adj[v] if cl[w] == cl[v]]
        up.append(tuple(w for w in same if dp[w] == dp[v] - 1))
        down.append(tuple(w for w in same if dp[w] == dp[v] + 1))
    by_depth = tuple(np.flatnonzero(dp == d) for d in range(int(dp.max()) + 1))
    return ClusterLayout(g, cl, dp, tuple(up), tuple(down), by_depth)


# ---------------------------------------------------------------------------
# Cluster operations
# ---------------------------------------------------------------------------


@dataclass
class NotifyState:
    """Mutable per-call bookkeeping shared by the cluster operations."""

    holder: np.ndarray
    participating: np.ndarray
    saturated_at: np.ndarray = None  # 0 = not saturated
    touched: np.ndarray = None
    sends: np.ndarray = None
    listens: np.ndarray = None

    def __post_init__(self):
        n = len(self.holder)
        self.holder = self.holder.copy()
        if self.saturated_at is None:
            self.saturated_at = np.zeros(n, dtype=np.int32)
        if self.touched is None:
            self.touched = np.zeros(n, dtype=bool)
        if self.sends is None:
            self.sends = np.zeros(n, dtype=np.int64)
        if self.listens is None:
            self.listens = np.zeros(n, dtype=np.int64)


def start_notify(n: int, participating: np.ndarray, initiators: np.ndarray) -> NotifyState:
    part = np.asarray(participating, dtype=bool)
    init = np.asarray(initiators, dtype=bool)
    if (init & ~part).any():
        raise ValueError("initiators must participate")
    return NotifyState(init, part)


def _slot(state: NotifyState, layout: ClusterLayout, send_depth: int, listen_depth: int,
          targets: Sequence[Sequence[int]]) -> None:
    part, holder = state.participating, state.holder
    tx = layout.at_depth(send_depth)
    tx = tx[part[tx] & holder[tx] & (state.saturated_at[tx] == 0)]
    rx = layout.at_depth(listen_depth)
    rx = rx[part[rx] & ~holder[rx]]
    state.listens[rx] += 1
    if not len(tx):
        return
    state.sends[tx] += 1
    state.touched[tx] = True
    for u in tx:
        for w in targets[u]:
            if part[w] and not holder[w]:
                holder[w] = True
                state.touched[w] = True


def upcast(state: NotifyState, layout: ClusterLayout, dmax: int) -> None:
    """``dmax`` slots; at slot ``s`` depth ``dmax - s`` holders send toward the center."""
    for s in range(dmax):
        d = dmax - s
        _slot(state, layout, d, d - 1, layout.up)


def downcast(state: NotifyState, layout: ClusterLayout, dmax: int) -> None:
    """``dmax`` slots; at slot ``s`` depth ``s - 1`` holders send away from the center."""
    for s in range(1, dmax + 1):
        _slot(state, layout, s - 1, s, layout.down)


def saturate(state: NotifyState, k: int) -> None:
    """Holders not yet saturated stop relaying in later upcasts/downcasts and intercast at iteration ``k``."""
    fresh = state.holder & (state.saturated_at == 0)
    state.saturated_at[fresh] = k


def intercast(state: NotifyState, layout: ClusterLayout, k: int) -> None:
    """One slot: nodes saturated at iteration ``k`` send, participating non-holders listen."""
    part, holder = state.participating, state.holder
    tx = np.flatnonzero(part & holder & (state.saturated_at == k))
    rx = part & ~holder
    state.listens[rx] += 1
    if not len(tx):
        return
    state.sends[tx] += 1
    state.touched[tx] = True
    adj = layout.graph.adj
    heard = []
    for u in tx:
        for w in adj[u]:
            if rx[w]:
                heard.append(w)
    if heard:
        holder[heard] = True
        state.touched[heard] = True


@dataclass
class NotifyOutcome:
    stay: np.ndarray  # STAY_AWAKE per node (False for non-participants)
    sends: np.ndarray
    listens: np.ndarray
    holder: np.ndarray = field(repr=False, default=None)

    @property
    def energy(self) -> np.ndarray:
        return self.sends + self.listens


def notify(layout: ClusterLayout, participating: np.ndarray, initiators: np.ndarray,
           r: int, dmax: int, fast: bool = True) -> NotifyOutcome:
    """Spread the activity token up to ``r`` cluster hops from the initiators' clusters.

    A participant stays awake iff it sent or received during the call.
    """
    if r < 1:
        raise ValueError("Notify radius must be >= 1")
    dmax = max(1, dmax)
    part = np.asarray(participating, dtype=bool)
    init = np.asarray(initiators, dtype=bool)
    if fast and not init.any():
        return _silent_notify(layout, part, r, dmax)
    state = start_notify(layout.n, part, init)
    for k in range(1, r + 1):
        upcast(state, layout, dmax)
        downcast(state, layout, dmax)
        saturate(state, k)
        intercast(state, layout, k)
    upcast(state, layout, dmax)
    downcast(state, layout, dmax)
    return NotifyOutcome(state.touched & part, state.sends, state.listens, state.holder)


def _silent_notify(layout: ClusterLayout, part: np.ndarray, r: int, dmax: int) -> NotifyOutcome:
    n = layout.n
    d = layout.depth_of
    per_pair = (d < dmax).astype(np.int64) + (d >= 1).astype(np.int64)
    listens = np.where(part, (r + 1) * per_pair + r, 0)
    zeros = np.zeros(n, dtype=bool)
    return NotifyOutcome(zeros, np.zeros(n, dtype=np.int64), listens, zeros.copy())


def notify_energy_bound(r: int) -> int:
    """Worst-case per-participant cost of one Notify call under the saturation rule."""
    return 3 * r + 3
