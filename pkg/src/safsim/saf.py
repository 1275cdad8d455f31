"""The SAF simulator: sleep through epochs whose activity is certified to be far away.

Each level-``j`` epoch starts with a silent lookahead at every participant; the
nodes that would send become Notify initiators. Participants that end the
Notify call with OK_TO_SLEEP fast-forward their simulated state over the
epoch; the rest recurse into level ``j-1``. Level 0 executes the protocol
natively among its participants.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .cluster_comm import ClusterLayout, SafSchedule, cluster_layout, notify, schedule_build
from .clustering import (MscError, MultiScaleClustering, growth_min_ratio, level_zero, make_level,
                         mpx_weights)
from .engine import (ActionKind, DeliveryPolicy, EnergyLedger, ProtocolBehavior, RunResult,
                     Transcript, check_action, message_cap_bytes, node_tape, resolve_slot, run)
from .graph import Graph, GraphError, make_partition
from .protocols import NaivelyBuildMpx, mpx_t_max


def silent_lookahead(behavior: ProtocolBehavior, state: Any, t_from: int, t_to: int) -> tuple[bool, Any]:
    """Whether the node would send in ``t_from..t_to`` with no receipts, and its state afterwards."""
    would_send = behavior.next_send(state, t_from, t_to) <= t_to
    return would_send, behavior.advance(state, t_from, t_to)


@dataclass
class NotifyRecord:
    level: int
    start: int  # first simulated step of the epoch
    length: int
    participants: np.ndarray
    initiators: np.ndarray
    stay: np.ndarray


@dataclass
class NativeBlock:
    start: int
    length: int
    participants: np.ndarray
    real_start: int


@dataclass
class SafResult:
    graph: Graph
    schedule: SafSchedule
    outputs: list[Any]
    final_states: list[Any]
    ledger: EnergyLedger
    transcript: Transcript  # level-0 sends/receipts, indexed by simulated step
    notify_log: list[NotifyRecord]
    blocks: list[NativeBlock]
    real_elapsed: int

    @property
    def horizon(self) -> int:
        return self.schedule.horizon

    def awake_sets(self) -> list[set[int]]:
        """Per simulated step (index ``t-1``), the nodes executing it natively."""
        out: list[set[int]] = [set() for _ in range(self.horizon)]
        for b in self.blocks:
            members = set(np.flatnonzero(b.participants).tolist())
            for t in range(b.start, b.start + b.length):
                out[t - 1] = set(members)
        return out

    def summary(self, phase_prefix: str = "") -> dict[str, Any]:
        return {"T": self.horizon, "real_duration": self.schedule.real_duration,
                "levels": self.schedule.top,
                "max_energy": int(self.ledger.energy.max()) if self.graph.n else 0}


class SafSimulator:
    """Runs ``behavior`` for ``horizon`` steps under SAF with levels ``1..top`` of ``msc``.

    ``phase_prefix`` is prepended to ledger tags (``sim`` and ``notify.{j}``).
    With ``closure=True`` a whole level-``(j-1)`` cluster participates as soon
    as one member stays awake; the default gates node by node.
    """

    def __init__(self, g: Graph, msc: MultiScaleClustering, behavior: ProtocolBehavior, horizon: int, *,
                 top: int | None = None, policy: DeliveryPolicy = DeliveryPolicy.LOWEST_ID,
                 seed: int = 0, msg_cap: int | None = None, phase_prefix: str = "",
                 closure: bool = False, budget: int | None = None):
        if msc.graph != g:
            raise ValueError("clustering was built for a different graph")
        self.g = g
        self.msc = msc
        self.behavior = behavior
        self.horizon = horizon
        self.top = msc.ell if top is None else top
        self.policy = policy
        self.seed = seed
        self.cap = message_cap_bytes(g.n) if msg_cap is None else msg_cap
        self.prefix = phase_prefix
        self.closure = closure
        self.schedule = schedule_build(msc, horizon, self.top, budget)
        self._layouts: dict[int, ClusterLayout] = {}

    def layout(self, j: int) -> ClusterLayout:
        lay = self._layouts.get(j)
        if lay is None:
            lay = self._layouts[j] = cluster_layout(self.g, self.msc[j].partition)
        return lay

    def run(self, initial_states: list[Any] | None = None) -> SafResult:
        n = self.g.n
        self.states = list(initial_states) if initial_states is not None else [
            self.behavior.init(v, n, node_tape(self.seed, v)) for v in range(n)]
        self.ledger = EnergyLedger(n)
        self.notify_log: list[NotifyRecord] = []
        self.blocks: list[NativeBlock] = []
        self.sends_log: list[dict[int, bytes]] = [{} for _ in range(self.horizon)]
        self.recv_log: list[dict[int, int]] = [{} for _ in range(self.horizon)]
        self.clock = 0
        self._level(self.top, 1, self.horizon, np.ones(n, dtype=bool))
        if self.clock != self.schedule.real_duration:
            raise AssertionError(f"real clock {self.clock} != scheduled {self.schedule.real_duration}")
        outputs = [self.behavior.output(s) for s in self.states]
        transcript = Transcript(n, self.horizon, self.sends_log, self.recv_log, None)
        return SafResult(self.g, self.schedule, outputs, self.states, self.ledger, transcript,
                         self.notify_log, self.blocks, self.clock)

    def _level(self, j: int, start: int, length: int, part: np.ndarray) -> None:
        if j == 0:
            self._native(start, length, part)
            return
        lv = self.msc[j]
        timing = self.schedule.levels[j]
        beh, states = self.behavior, self.states
        end_all = start + length - 1
        for e0 in range(start, end_all + 1, lv.R):
            e1 = min(e0 + lv.R - 1, end_all)
            idx = np.flatnonzero(part)
            init = np.zeros(self.g.n, dtype=bool)
            for v in idx:
                if beh.next_send(states[v], e0, e1) <= e1:
                    init[v] = True
            if part.any():
                out = notify(self.layout(j), part, init, timing.r, timing.dmax)
                self.ledger.charge_arrays(f"{self.prefix}notify.{j}", out.sends, out.listens)
                stay = out.stay & part
            else:
                stay = part.copy()
            self.clock += timing.notify_len
            if self.closure and j > 1 and stay.any():
                below = self.msc[j - 1].partition.cluster_of
                stay = part & np.isin(below, below[stay])
            self.notify_log.append(NotifyRecord(j, e0, e1 - e0 + 1, part.copy(), init, stay.copy()))
            for v in np.flatnonzero(part & ~stay):
                states[v] = beh.advance(states[v], e0, e1)
            if stay.any():
                self._level(j - 1, e0, e1 - e0 + 1, stay)
            else:
                self.clock += self.schedule.duration(j - 1, e1 - e0 + 1)

    def _native(self, start: int, length: int, part: np.ndarray) -> None:
        members = np.flatnonzero(part).tolist()
        self.blocks.append(NativeBlock(start, length, part.copy(), self.clock + 1))
        beh, states, adj = self.behavior, self.states, self.g.adj
        sends = np.zeros(self.g.n, dtype=np.int64)
        listens = np.zeros(self.g.n, dtype=np.int64)
        for t in range(start, start + length):
            acts = {}
            for v in members:
                a = check_action(beh.action(states[v], t), self.cap)
                if a.kind is not ActionKind.SLEEP:
                    acts[v] = a
                    if a.kind is ActionKind.SEND:
                        sends[v] += 1
                    else:
                        listens[v] += 1
            heard = resolve_slot(adj, acts, self.policy, self.seed, t)
            sent = {v: a.msg for v, a in acts.items() if a.kind is ActionKind.SEND}
            for v in members:
                u = heard.get(v)
                states[v] = beh.step(states[v], t, None if u is None else sent[u])
            self.sends_log[t - 1] = sent
            self.recv_log[t - 1] = heard
        self.ledger.charge_arrays(f"{self.prefix}sim", sends, listens)
        self.clock += length


def saf(g: Graph, msc: MultiScaleClustering, behavior: ProtocolBehavior, horizon: int, **kw) -> SafResult:
    return SafSimulator(g, msc, behavior, horizon, **kw).run()


# ---------------------------------------------------------------------------
# Audits
# ---------------------------------------------------------------------------


def safety_audit(awake: list[set[int]], reference: Transcript,
                 schedule: SafSchedule | None = None, blocks: list[NativeBlock] | None = None) -> list[tuple[int, int]]:
    """``(t, v)`` pairs where the reference has ``v`` send or receive but ``v`` slept through ``t``.

    With ``schedule`` and ``blocks`` given, a native block whose real start
    disagrees with ``tau`` is reported as ``(t, -1)``.
    """
    violations = []
    for t in range(1, reference.horizon + 1):
        for v in sorted(reference.active(t)):
            if v not in awake[t - 1]:
                violations.append((t, v))
    if schedule is not None and blocks is not None:
        for b in blocks:
            if schedule.tau(b.start) != b.real_start:
                violations.append((b.start, -1))
    return violations


def far_node_participation(result: SafResult, msc: MultiScaleClustering) -> list[tuple[int, int, int]]:
    """Nodes taking part in level ``j-1`` work during a level-``j`` epoch while at distance
    ``>= (2 alpha_j + 1)(beta_j R_j + 1)`` from every initiator of that epoch.

    Returns ``(level, epoch start, node)`` triples; level 1 covers native execution.
    """
    dist = result.graph.distances
    bad = []
    for rec in result.notify_log:
        lv = msc[rec.level]
        limit = (2 * lv.alpha + 1) * (lv.beta * lv.R + 1)
        below = np.flatnonzero(rec.stay)
        if not len(below):
            continue
        src = np.flatnonzero(rec.initiators)
        if not len(src):
            bad.extend((rec.level, rec.start, int(v)) for v in below)
            continue
        near = dist[np.ix_(below, src)].min(axis=1)
        bad.extend((rec.level, rec.start, int(v)) for v in below[near >= limit])
    return bad


def compare_with_reference(result: SafResult, ref: RunResult) -> dict[str, Any]:
    mismatched = [v for v, (a, b) in enumerate(zip(result.outputs, ref.outputs)) if a != b]
    return {"outputs_equal": not mismatched, "mismatched_nodes": mismatched,
            "transcripts_equal": result.transcript.digest() == Transcript(
                ref.transcript.n, ref.transcript.horizon, ref.transcript.sends,
                ref.transcript.receipts, None).digest()}


def run_record(result: SafResult, msc: MultiScaleClustering, seed: int, audit_ok: bool,
               build: EnergyLedger | None = None, graph_name: str = "") -> dict[str, Any]:
    led = result.ledger
    rec = {"graph": {"name": graph_name, "n": result.graph.n, "m": result.graph.m},
           "seed": seed, "msc": msc.summary(), "T": result.horizon,
           "real_duration": result.schedule.real_duration,
           "per_node_energy": {"sim": led.phase_energy("sim").tolist(),
                               "notify": led.phase_energy("notify").tolist(),
                               "build": (build.energy.tolist() if build is not None else [0] * result.graph.n)},
           "outputs": [o if not isinstance(o, tuple) else list(o) for o in result.outputs],
           "audit": "pass" if audit_ok else "fail"}
    return rec


def write_run_record(rec: dict[str, Any], path: str | Path) -> None:
    Path(path).write_text(json.dumps(rec, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


# ---------------------------------------------------------------------------
# Bootstrapped multi-scale clustering
# ---------------------------------------------------------------------------


@dataclass
class BootstrapResult:
    msc: MultiScaleClustering
    ledger: EnergyLedger
    horizons: list[int]
    audits: list[list[tuple[int, int]]] = field(default_factory=list)


def build_msc_bootstrapped(g: Graph, radii: list[int] | None = None, *, R: int | None = None,
                           levels: int | None = None, growth: int | None = None, seed: int = 0,
                           mode: str = "empirical", policy: DeliveryPolicy = DeliveryPolicy.LOWEST_ID,
                           max_attempts: int = 5, audit: bool = False, closure: bool = False) -> BootstrapResult:
    """Build levels by running the MPX protocol, level ``j`` simulated under SAF on levels ``< j``.

    Radii are given explicitly, or adaptive from ``R`` with
    ``R_{j+1} = R_j * max(growth, required ratio)`` for ``levels`` levels.
    Every level is validated before use; if the growth condition towards the
    next given radius fails, the level is rebuilt from a derived seed (the
    energy of discarded attempts stays on the ledger). ``audit=True`` also
    runs each build natively and records safety violations.
    """
    if radii is None:
        if R is None or levels is None or growth is None:
            raise ValueError("give radii, or R, levels and growth")
    elif any(b <= a for a, b in zip(radii, radii[1:])):
        raise MscError(f"radii must be strictly increasing: {radii}")
    count = len(radii) if radii is not None else levels
    ledger = EnergyLedger(g.n)
    msc = MultiScaleClustering(g, [level_zero(g)], mode, [])
    horizons, audits = [], []
    for j in range(1, count + 1):
        if radii is not None:
            R = radii[j - 1]
        nxt = radii[j] if radii is not None and j < count else None
        for attempt in range(max_attempts):
            stream = seed if attempt == 0 else seed * 1_000_003 + attempt
            beh = NaivelyBuildMpx(R, level=j, seed=stream)
            T = mpx_t_max(R, g.n)
            if j == 1:
                res = run(g, beh, T, policy=policy, seed=seed, phase="build.sim", record_actions=False)
                outputs = res.outputs
                ledger.merge(res.ledger)
            else:
                sim = SafSimulator(g, msc, beh, T, policy=policy, seed=seed, phase_prefix="build.",
                                   closure=closure)
                sres = sim.run()
                outputs = sres.outputs
                ledger.merge(sres.ledger)
                if audit:
                    ref = run(g, beh, T, policy=policy, seed=seed, record_actions=False)
                    audits.append(safety_audit(sres.awake_sets(), ref.transcript))
            centers = [c for c, _ in outputs]
            depths = [d for _, d in outputs]
            if any(c is None for c in centers):
                raise GraphError(f"level {j}: MPX left nodes unclaimed")
            p = make_partition(g, centers, depths)
            lv = make_level(g, p, R, mode)
            if nxt is None or nxt >= growth_min_ratio(lv.alpha, lv.beta) * R:
                break
        else:
            raise MscError(f"level {j}: growth condition unmet after {max_attempts} attempts "
                           f"(R_{j + 1}/R_{j} = {nxt / R:g} < {growth_min_ratio(lv.alpha, lv.beta)})")
        msc.levels.append(lv)
        msc.attempts.append(attempt + 1)
        horizons.append(T)
        if radii is None:
            R = R * max(growth, growth_min_ratio(lv.alpha, lv.beta))
    return BootstrapResult(msc, ledger, horizons, audits)


def expected_mpx_partition(g: Graph, R: int, seed: int, level: int):
    """Central AWVD partition for the weights the MPX protocol draws with ``seed``."""
    from .clustering import awvd_reference
    return awvd_reference(g, mpx_weights(g.n, R, seed, level))
