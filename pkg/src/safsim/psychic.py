"""Greedy Psychic: the per-vertex optimal wake schedule of a full-information one-pass simulator."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .engine import INF, ActionKind, EnergyLedger, RunResult
from .graph import Graph


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class NextSendTable:
    """``table[t, w]``: first send time of ``w`` after step ``t`` assuming silence (row 0: before step 1)."""

    table: np.ndarray

    @classmethod
    def from_run(cls, ref: RunResult) -> "NextSendTable":
        if ref.next_send_table is None:
            raise ValueError("reference run lacks next-send tracking (use track_next_send=True)")
        return cls(ref.next_send_table)

    @property
    def horizon(self) -> int:
        return self.table.shape[0] - 1

    def __call__(self, w: int, t: int) -> float:
        return float(self.table[t, w])


@dataclass(frozen=True)
class WakeSchedule:
    node: int
    wake_times: tuple[int, ...]
    energy: int


def wake_target(nst: NextSendTable, dist_row: np.ndarray, v: int, t: int) -> float:
    """Latest step ``v`` may sleep until, knowing the table after step ``t``."""
    row = nst.table[t]
    others = row + dist_row - 1
    others[v] = INF
    return float(min(row[v], others.min()))


def _cost(ref: RunResult, v: int, t: int, every_step: bool) -> int:
    if every_step:
        return 1
    return int(ref.transcript.actions[t - 1, v] != ActionKind.SLEEP)


def greedy_psychic(g: Graph, ref: RunResult, v: int, *, informed: bool = True,
                   every_step_costs: bool = False) -> WakeSchedule:
    nst = NextSendTable.from_run(ref)
    T = nst.horizon
    drow = g.distances[v].astype(float)
    target = wake_target(nst, drow, v, 0) if informed else 1.0
    wakes = []
    while target <= T:
        t = int(target)
        wakes.append(t)
        target = wake_target(nst, drow, v, t)
    energy = sum(_cost(ref, v, t, every_step_costs) for t in wakes)
    return WakeSchedule(v, tuple(wakes), energy)


def greedy_psychic_all(g: Graph, ref: RunResult, **kw) -> list[WakeSchedule]:
    return [greedy_psychic(g, ref, v, **kw) for v in range(g.n)]


def brute_force_opt(g: Graph, ref: RunResult, v: int, T: int | None = None, *,
                    informed: bool = True, every_step_costs: bool = False,
                    max_horizon: int = 12) -> int:
    """Minimum energy over every wake set of ``[1, T]`` that never oversleeps its known wake target."""
    nst = NextSendTable.from_run(ref)
    T = nst.horizon if T is None else T
    if T > max_horizon:
        raise BudgetExceeded(f"T={T} exceeds enumeration budget {max_horizon}")
    drow = g.distances[v].astype(float)
    init = wake_target(nst, drow, v, 0) if informed else 1.0
    targets = [math.inf] + [wake_target(nst, drow, v, t) for t in range(1, T + 1)]
    costs = [0] + [_cost(ref, v, t, every_step_costs) for t in range(1, T + 1)]
    best = 0 if init > T else math.inf
    for k in range(1, T + 1):
        for subset in itertools.combinations(range(1, T + 1), k):
            if subset[0] > init or targets[subset[-1]] <= T:
                continue
            if all(b <= targets[a] for a, b in zip(subset, subset[1:])):
                best = min(best, sum(costs[t] for t in subset))
    return int(best)


def safe_against(ref: RunResult, schedule: WakeSchedule) -> bool:
    """True iff the schedule is awake whenever the reference has the node send or receive."""
    awake = set(schedule.wake_times)
    v = schedule.node
    return all(t in awake for t in range(1, ref.transcript.horizon + 1) if v in ref.transcript.active(t))


def energy_ratio_report(saf_ledger: EnergyLedger, gp_energies: Sequence[int],
                        prefix: str = "") -> dict:
    """Per-node ``SAF / max(1, GP)`` ratios; the top-level Notify share is reported separately."""
    saf = saf_ledger.phase_energy(prefix) if prefix else saf_ledger.energy
    gp = np.asarray(gp_energies, dtype=np.int64)
    ratios = saf / np.maximum(1, gp)
    levels = sorted(int(p.rsplit(".", 1)[1]) for p in saf_ledger.phases
                    if p.startswith(f"{prefix}notify."))
    top = saf_ledger.phase_energy(f"{prefix}notify.{levels[-1]}") if levels else np.zeros_like(saf)
    return {"per_node": ratios.tolist(), "max": float(ratios.max()), "mean": float(ratios.mean()),
            "argmax": int(ratios.argmax()), "saf_energy": saf.tolist(), "gp_energy": gp.tolist(),
            "top_level_notify": top.tolist()}


def write_gp_csv(schedules: Sequence[WakeSchedule], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "gp_energy", "wake_times"])
        for s in schedules:
            w.writerow([s.node, s.energy, " ".join(map(str, s.wake_times))])
