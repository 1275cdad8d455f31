"""Lock-step radio network engine under the OR delivery model.

Every node runs a black-box :class:`ProtocolBehavior`. At each timestep the
engine collects one action per node, resolves deliveries (a listener with at
least one sending neighbour hears exactly one of them, chosen by the delivery
policy) and feeds receipts back into the behaviours. SEND and LISTEN cost one
unit of energy; SLEEP is free.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, NamedTuple, Sequence

import numpy as np

from .graph import Graph

INF = math.inf


class ActionKind(enum.IntEnum):
    SLEEP = 0
    LISTEN = 1
    SEND = 2


class Action(NamedTuple):
    kind: ActionKind
    msg: bytes | None = None


SLEEP = Action(ActionKind.SLEEP)
LISTEN = Action(ActionKind.LISTEN)


def send(msg: bytes) -> Action:
    return Action(ActionKind.SEND, msg)


class EngineError(RuntimeError):
    pass


class MessageTooLarge(EngineError):
    pass


class MalformedAction(EngineError):
    pass


def message_cap_bytes(n: int) -> int:
    """Default cap of ``8 * ceil(log2 n)`` bits, expressed in bytes."""
    return max(1, math.ceil(math.log2(n))) if n > 1 else 1


class IntCodec:
    """Packs a fixed number of integers in ``[0, n)`` into a short byte string."""

    def __init__(self, n: int, arity: int):
        self.n = max(2, n)
        self.arity = arity
        self.width = max(1, math.ceil(arity * math.log2(self.n) / 8))

    def encode(self, *values: int) -> bytes:
        x = 0
        for v in values:
            if not 0 <= v < self.n:
                raise ValueError(f"value {v} outside [0, {self.n})")
            x = x * self.n + v
        return x.to_bytes(self.width, "big")

    def decode(self, data: bytes) -> tuple[int, ...]:
        x = int.from_bytes(data, "big")
        out = []
        for _ in range(self.arity):
            x, r = divmod(x, self.n)
            out.append(r)
        return tuple(reversed(out))


def node_tape(seed: int, node: int, *stream: int) -> np.random.Generator:
    """Per-node random tape, drawn before the run starts."""
    return np.random.default_rng([seed, node, *stream])


# ---------------------------------------------------------------------------
# Behaviours
# ---------------------------------------------------------------------------


class ProtocolBehavior:
    """Black-box per-node protocol.

    States must be immutable values. ``action(state, t)`` is the action the
    node takes at timestep ``t``; ``step(state, t, received)`` consumes the
    outcome of timestep ``t`` and returns the state for ``t + 1``. Randomness
    lives in the tape handed to :meth:`init`, so ``step`` is a pure function.
    """

    name = "protocol"

    def init(self, node: int, n: int, tape: np.random.Generator) -> Any:
        raise NotImplementedError

    def action(self, state: Any, t: int) -> Action:
        raise NotImplementedError

    def step(self, state: Any, t: int, received: bytes | None) -> Any:
        raise NotImplementedError

    def output(self, state: Any) -> Any:
        return None

    def next_send(self, state: Any, t: int, cap: int) -> float:
        """First ``t' >= t`` (and ``<= cap``) at which the node would SEND with no receipts."""
        return lookahead_next_send(self, state, t, cap)

    def advance(self, state: Any, t_from: int, t_to: int) -> Any:
        """Step silently through timesteps ``t_from..t_to``; returns the state for ``t_to + 1``."""
        for t in range(t_from, t_to + 1):
            state = self.step(state, t, None)
        return state


def lookahead_next_send(behavior: ProtocolBehavior, state: Any, t: int, cap: int) -> float:
    """Generic next-send lookahead by silent stepping of a copy of ``state``."""
    s = state
    for tt in range(t, cap + 1):
        if behavior.action(s, tt).kind is ActionKind.SEND:
            return tt
        s = behavior.step(s, tt, None)
    return INF


class NaiveConversion(ProtocolBehavior):
    """Makes every implicit LISTEN explicit: any SLEEP of the wrapped protocol becomes LISTEN."""

    def __init__(self, inner: ProtocolBehavior):
        self.inner = inner
        self.name = inner.name

    def init(self, node, n, tape):
        return self.inner.init(node, n, tape)

    def action(self, state, t):
        a = self.inner.action(state, t)
        return LISTEN if a.kind is ActionKind.SLEEP else a

    def step(self, state, t, received):
        return self.inner.step(state, t, received)

    def output(self, state):
        return self.inner.output(state)

    def next_send(self, state, t, cap):
        return self.inner.next_send(state, t, cap)

    def advance(self, state, t_from, t_to):
        return self.inner.advance(state, t_from, t_to)


# ---------------------------------------------------------------------------
# Delivery
# ---------------------------------------------------------------------------


class DeliveryPolicy(enum.Enum):
    LOWEST_ID = "lowest_id"
    SEEDED_RANDOM = "seeded_random"


def delivery_choice(policy: DeliveryPolicy, senders: Sequence[int], listener: int,
                    seed: int, t: int) -> int:
    """Pick the sender a listener hears. ``senders`` must be sorted ascending."""
    if len(senders) == 1 or policy is DeliveryPolicy.LOWEST_ID:
        return senders[0]
    h = hashlib.blake2b(f"{seed}:{t}:{listener}".encode(), digest_size=8).digest()
    return senders[int.from_bytes(h, "big") % len(senders)]


def resolve_slot(adj: Sequence[Sequence[int]], actions: dict[int, Action],
                 policy: DeliveryPolicy, seed: int, t: int) -> dict[int, int]:
    """Resolve one timestep. Returns ``{listener: chosen sender}``.

    ``actions`` may cover a subset of nodes; absent nodes are asleep.
    """
    senders = sorted(v for v, a in actions.items() if a.kind is ActionKind.SEND)
    if not senders:
        return {}
    heard: dict[int, list[int]] = {}
    for u in senders:
        for v in adj[u]:
            a = actions.get(v)
            if a is not None and a.kind is ActionKind.LISTEN:
                heard.setdefault(v, []).append(u)
    return {v: delivery_choice(policy, cand, v, seed, t) for v, cand in heard.items()}


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass
class EnergyLedger:
    """Per-node send/listen counters, broken down by phase tag."""

    n: int
    phases: dict[str, np.ndarray] = field(default_factory=dict)

    def _row(self, phase: str) -> np.ndarray:
        arr = self.phases.get(phase)
        if arr is None:
            arr = self.phases[phase] = np.zeros((2, self.n), dtype=np.int64)
        return arr

    def charge(self, phase: str, nodes: Any, kind: ActionKind, count: Any = 1) -> None:
        if kind is ActionKind.SLEEP:
            return
        row = 0 if kind is ActionKind.SEND else 1
        np.add.at(self._row(phase)[row], nodes, count)

    def charge_arrays(self, phase: str, sends: np.ndarray, listens: np.ndarray) -> None:
        arr = self._row(phase)
        arr[0] += sends
        arr[1] += listens

    def merge(self, other: "EnergyLedger") -> None:
        for phase, arr in other.phases.items():
            self._row(phase)[:] += arr

    def select(self, prefix: str) -> np.ndarray:
        """(2, n) totals over phases whose tag starts with ``prefix``."""
        out = np.zeros((2, self.n), dtype=np.int64)
        for phase, arr in self.phases.items():
            if phase.startswith(prefix):
                out += arr
        return out

    @property
    def sends(self) -> np.ndarray:
        return self.select("")[0]

    @property
    def listens(self) -> np.ndarray:
        return self.select("")[1]

    @property
    def energy(self) -> np.ndarray:
        return self.sends + self.listens

    def phase_energy(self, prefix: str) -> np.ndarray:
        return self.select(prefix).sum(axis=0)

    def to_csv(self, path: str | Path) -> None:
        tags = sorted(self.phases)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "sends", "listens"] + [f"{p}_{k}" for p in tags for k in ("sends", "listens")])
            sends, listens = self.sends, self.listens
            for v in range(self.n):
                row = [v, int(sends[v]), int(listens[v])]
                for p in tags:
                    row += [int(self.phases[p][0, v]), int(self.phases[p][1, v])]
                w.writerow(row)

    def digest(self) -> str:
        h = hashlib.sha256()
        for p in sorted(self.phases):
            h.update(p.encode())
            h.update(self.phases[p].tobytes())
        return h.hexdigest()


@dataclass
class Transcript:
    """What every node did and heard at each timestep ``1..horizon``.

    ``sends[t-1]`` maps sender to message and ``receipts[t-1]`` maps
    listener to the sender it heard. ``actions`` is the dense
    ``(horizon, n)`` action table when recorded.
    """

    n: int
    horizon: int
    sends: list[dict[int, bytes]]
    receipts: list[dict[int, int]]
    actions: np.ndarray | None = None

    def received(self, t: int, v: int) -> bytes | None:
        u = self.receipts[t - 1].get(v)
        return None if u is None else self.sends[t - 1][u]

    def active(self, t: int) -> set[int]:
        """Nodes that send or receive at timestep ``t``."""
        return set(self.sends[t - 1]) | set(self.receipts[t - 1])

    def last_send_time(self) -> int:
        for t in range(self.horizon, 0, -1):
            if self.sends[t - 1]:
                return t
        return 0

    def iter_records(self) -> Iterable[dict[str, Any]]:
        if self.actions is None:
            raise EngineError("dense actions were not recorded for this run")
        names = {k.value: k.name for k in ActionKind}
        for t in range(1, self.horizon + 1):
            for v in range(self.n):
                sent = self.sends[t - 1].get(v)
                recv = self.received(t, v)
                yield {"t": t, "node": v, "action": names[int(self.actions[t - 1, v])],
                       "sent_msg_hex": sent.hex() if sent is not None else None,
                       "recv_msg_hex": recv.hex() if recv is not None else None}

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for rec in self.iter_records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def digest(self) -> str:
        h = hashlib.sha256()
        for t in range(self.horizon):
            for u in sorted(self.sends[t]):
                h.update(f"{t}:s:{u}:".encode() + self.sends[t][u])
            for v in sorted(self.receipts[t]):
                h.update(f"{t}:r:{v}:{self.receipts[t][v]}".encode())
        if self.actions is not None:
            h.update(self.actions.tobytes())
        return h.hexdigest()


@dataclass
class RunResult:
    transcript: Transcript
    ledger: EnergyLedger
    outputs: list[Any]
    final_states: list[Any]
    # next_send_table[t, w]: first send time > t of w under silence after step t (row 0 = initial).
    next_send_table: np.ndarray | None = None


def check_action(a: Any, cap: int) -> Action:
    if not isinstance(a, Action) or not isinstance(a.kind, ActionKind):
        raise MalformedAction(f"behaviour returned {a!r}")
    if a.kind is ActionKind.SEND:
        if not isinstance(a.msg, (bytes, bytearray)):
            raise MalformedAction("SEND without a byte-string message")
        if len(a.msg) > cap:
            raise MessageTooLarge(f"message of {len(a.msg)} bytes exceeds cap of {cap}")
    elif a.msg is not None:
        raise MalformedAction(f"{a.kind.name} must not carry a message")
    return a


def run(g: Graph, behavior: ProtocolBehavior, horizon: int, *,
        policy: DeliveryPolicy = DeliveryPolicy.LOWEST_ID, seed: int = 0,
        msg_cap: int | None = None, phase: str = "sim", record_actions: bool = True,
        track_next_send: bool = False, initial_states: list[Any] | None = None) -> RunResult:
    """Run ``behavior`` on every node of ``g`` for timesteps ``1..horizon``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = g.n
    cap = message_cap_bytes(n) if msg_cap is None else msg_cap
    states = list(initial_states) if initial_states is not None else [
        behavior.init(v, n, node_tape(seed, v)) for v in range(n)]
    adj = g.adj
    sends_log: list[dict[int, bytes]] = []
    recv_log: list[dict[int, int]] = []
    dense = np.zeros((horizon, n), dtype=np.int8) if record_actions else None
    n_send = np.zeros(n, dtype=np.int64)
    n_listen = np.zeros(n, dtype=np.int64)
    tnext = None
    if track_next_send:
        tnext = np.full((horizon + 1, n), INF)
        for v in range(n):
            tnext[0, v] = behavior.next_send(states[v], 1, horizon)

    for t in range(1, horizon + 1):
        acts = {}
        for v in range(n):
            acts[v] = check_action(behavior.action(states[v], t), cap)
        sent = {v: a.msg for v, a in acts.items() if a.kind is ActionKind.SEND}
        heard = resolve_slot(adj, acts, policy, seed, t)
        for v, a in acts.items():
            if a.kind is ActionKind.SEND:
                n_send[v] += 1
            elif a.kind is ActionKind.LISTEN:
                n_listen[v] += 1
            if dense is not None:
                dense[t - 1, v] = a.kind
        for v in range(n):
            u = heard.get(v)
            states[v] = behavior.step(states[v], t, None if u is None else sent[u])
        if tnext is not None:
            prev = tnext[t - 1]
            row = tnext[t]
            for v in range(n):
                if v in heard or prev[v] <= t:
                    row[v] = behavior.next_send(states[v], t + 1, horizon)
                else:
                    row[v] = prev[v]
        sends_log.append(sent)
        recv_log.append(heard)

    ledger = EnergyLedger(n)
    ledger.charge_arrays(phase, n_send, n_listen)
    transcript = Transcript(n, horizon, sends_log, recv_log, dense)
    outputs = [behavior.output(s) for s in states]
    return RunResult(transcript, ledger, outputs, states, tnext)
