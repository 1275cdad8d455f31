"""Concrete protocols: naive broadcast, naive parallel BFS, naive MPX clustering.

Broadcast and BFS are written in send-only form and wrapped in
:class:`~safsim.engine.NaiveConversion`, so every non-sending step is an
explicit LISTEN. Their listen energy is therefore the full running time,
which is the waste SAF removes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .engine import (INF, LISTEN, SLEEP, IntCodec, NaiveConversion, ProtocolBehavior, node_tape,
                     send)

TOKEN = b"\x01"


@dataclass(frozen=True, slots=True)
class BroadcastState:
    informed: bool
    has_sent: bool
    source: bool


class _BroadcastCore(ProtocolBehavior):
    name = "broadcast"

    def __init__(self, source: int):
        self.source = source

    def init(self, node, n, tape):
        return BroadcastState(node == self.source, False, node == self.source)

    def action(self, state, t):
        if state.informed and not state.has_sent:
            return send(TOKEN)
        return SLEEP

    def step(self, state, t, received):
        if state.informed and not state.has_sent:
            return replace(state, has_sent=True)
        if received is not None and not state.informed:
            return replace(state, informed=True)
        return state

    def output(self, state):
        return state.informed

    def next_send(self, state, t, cap):
        return t if state.informed and not state.has_sent and t <= cap else INF

    def advance(self, state, t_from, t_to):
        if t_from <= t_to and state.informed and not state.has_sent:
            return replace(state, has_sent=True)
        return state


def naive_broadcast(source: int) -> ProtocolBehavior:
    """Source sends at t=1; everyone else relays once, one step after first hearing the token."""
    return NaiveConversion(_BroadcastCore(source))


@dataclass(frozen=True, slots=True)
class BfsState:
    dist: int | None
    has_sent: bool
    n: int


class _BfsCore(ProtocolBehavior):
    name = "bfs"

    def __init__(self, root: int):
        self.root = root
        self._codecs: dict[int, IntCodec] = {}

    def codec(self, n: int) -> IntCodec:
        c = self._codecs.get(n)
        if c is None:
            c = self._codecs[n] = IntCodec(n, 1)
        return c

    def init(self, node, n, tape):
        return BfsState(0 if node == self.root else None, False, n)

    def action(self, state, t):
        if state.dist is not None and not state.has_sent:
            return send(self.codec(state.n).encode(state.dist))
        return SLEEP

    def step(self, state, t, received):
        if state.dist is not None and not state.has_sent:
            return replace(state, has_sent=True)
        if received is not None and state.dist is None:
            (k,) = self.codec(state.n).decode(received)
            return replace(state, dist=k + 1)
        return state

    def output(self, state):
        return state.dist

    def next_send(self, state, t, cap):
        return t if state.dist is not None and not state.has_sent and t <= cap else INF

    def advance(self, state, t_from, t_to):
        if t_from <= t_to and state.dist is not None and not state.has_sent:
            return replace(state, has_sent=True)
        return state


def naive_parallel_bfs(root: int) -> ProtocolBehavior:
    """Root sends 0 at t=1; a node first hearing k sets its distance to k+1 and sends it next step."""
    return NaiveConversion(_BfsCore(root))


# ---------------------------------------------------------------------------
# MPX clustering
# ---------------------------------------------------------------------------


def mpx_t_max(R: float, n: int, log_base: float = math.e) -> int:
    """Running time ``ceil(3 R log n)`` of one MPX build (at least 1)."""
    return max(1, math.ceil(3 * R * math.log(n, log_base))) if n > 1 else 1


@dataclass(frozen=True, slots=True)
class MpxState:
    node: int
    n: int
    W: float
    t_max: int
    center: int | None
    depth: int | None
    sent: bool


class NaivelyBuildMpx(ProtocolBehavior):
    """Distributed MPX clustering with radius parameter ``R``.

    Each node draws ``W ~ Exponential(mean R)``. At iteration ``i`` a claimed
    node sends ``(center, depth)`` once and then sleeps; an unclaimed node
    with ``i + W >= t_max`` appoints itself (sending on the next iteration);
    otherwise it listens and joins the first cluster it hears.
    """

    name = "mpx"

    def __init__(self, R: float, level: int = 1, seed: int = 0,
                 weights: Sequence[float] | None = None, log_base: float = math.e):
        if R < 1:
            raise ValueError("R must be >= 1")
        self.R = R
        self.level = level
        self.seed = seed
        self.weights = None if weights is None else np.asarray(weights, dtype=float)
        self.log_base = log_base
        self._codecs: dict[int, IntCodec] = {}

    def codec(self, n: int) -> IntCodec:
        c = self._codecs.get(n)
        if c is None:
            c = self._codecs[n] = IntCodec(n, 2)
        return c

    def weight(self, node: int) -> float:
        if self.weights is not None:
            return float(self.weights[node])
        return float(node_tape(self.seed, node, 7919, self.level).exponential(self.R))

    def init(self, node, n, tape):
        return MpxState(node, n, self.weight(node), mpx_t_max(self.R, n, self.log_base), None, None, False)

    def action(self, state, t):
        if state.sent or t > state.t_max:
            return SLEEP
        if state.center is not None:
            return send(self.codec(state.n).encode(state.center, state.depth))
        if t + state.W >= state.t_max:
            return SLEEP
        return LISTEN

    def step(self, state, t, received):
        if state.sent or t > state.t_max:
            return state
        if state.center is not None:
            return replace(state, sent=True)
        if t + state.W >= state.t_max:
            return replace(state, center=state.node, depth=0)
        if received is not None:
            c, d = self.codec(state.n).decode(received)
            return replace(state, center=c, depth=d + 1)
        return state

    def output(self, state):
        return (state.center, state.depth)

    @staticmethod
    def _appoint_time(state: MpxState, t: int) -> int:
        """First iteration ``>= t`` at which an unclaimed node appoints itself."""
        i = max(t, math.ceil(state.t_max - state.W))
        while i + state.W < state.t_max:
            i += 1
        while i - 1 >= t and (i - 1) + state.W >= state.t_max:
            i -= 1
        return i

    def next_send(self, state, t, cap):
        last = min(cap, state.t_max)
        if state.sent or t > last:
            return INF
        if state.center is not None:
            return t
        ts = self._appoint_time(state, t) + 1
        return ts if ts <= last else INF

    def advance(self, state, t_from, t_to):
        last = min(t_to, state.t_max)
        if state.sent or t_from > last:
            return state
        if state.center is not None:
            return replace(state, sent=True)
        i = self._appoint_time(state, t_from)
        if i > last:
            return state
        return replace(state, center=state.node, depth=0, sent=i + 1 <= last)


def naively_build_mpx(R: float, level: int = 1, seed: int = 0,
                      weights: Sequence[float] | None = None,
                      log_base: float = math.e) -> NaivelyBuildMpx:
    return NaivelyBuildMpx(R, level, seed, weights, log_base)


class AllSleep(ProtocolBehavior):
    """Never sends, never listens."""

    name = "sleep"

    def init(self, node, n, tape):
        return None

    def action(self, state, t):
        return SLEEP

    def step(self, state, t, received):
        return state

    def next_send(self, state, t, cap):
        return INF

    def advance(self, state, t_from, t_to):
        return state


def make_protocol(name: str, *, root: int = 0, R: float = 4.0, level: int = 1,
                  seed: int = 0) -> ProtocolBehavior:
    if name == "broadcast":
        return naive_broadcast(root)
    if name == "bfs":
        return naive_parallel_bfs(root)
    if name == "mpx":
        return naively_build_mpx(R, level, seed)
    if name == "sleep":
        return AllSleep()
    raise ValueError(f"unknown protocol {name!r}")
