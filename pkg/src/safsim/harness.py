"""Experiment configuration, end-to-end runs and report persistence."""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .clustering import (MultiScaleClustering, build_msc_central, default_level_count, geometric_base)
from .engine import DeliveryPolicy, EnergyLedger, run
from .graph import Graph
from .protocols import make_protocol, naive_parallel_bfs
from .psychic import energy_ratio_report, greedy_psychic_all
from .saf import build_msc_bootstrapped, far_node_participation, safety_audit, saf
from .topology import generate_topology

OUT_ENV = "SAFSIM_OUT"


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "safsim_out"))


@dataclass
class MscConfig:
    R: int | None = None  # None: geometric base max(ceil(C ln^2 n), 13)
    C: float = 1.0
    levels: int | None = None
    radii: list[int] | None = None
    growth: int | None = None
    mode: str = "empirical"
    bootstrap: bool = False
    closure: bool = False


@dataclass
class ExperimentConfig:
    topology: dict[str, Any] = field(default_factory=lambda: {"kind": "path", "n": 64})
    seed: int = 0
    protocol: str = "bfs"
    root: int = 0
    mpx_R: float = 4.0
    horizon: int | None = None
    msc: MscConfig = field(default_factory=MscConfig)
    policy: str = "lowest_id"
    out: str | None = None

    def to_json(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        msc = MscConfig(**data.pop("msc", {}))
        return cls(msc=msc, **data)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @property
    def delivery(self) -> DeliveryPolicy:
        return DeliveryPolicy(self.policy)

    def out_dir(self) -> Path:
        return Path(self.out) if self.out else default_out_dir()


def header(config: ExperimentConfig) -> dict[str, Any]:
    """Reproducibility header embedded in every report."""
    import matplotlib
    import networkx
    import scipy
    return {"config": config.to_json(), "seed": config.seed,
            "versions": {"safsim": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "networkx": networkx.__version__, "matplotlib": matplotlib.__version__,
                         "python": platform.python_version()}}


def make_graph(config: ExperimentConfig) -> Graph:
    return generate_topology(config.topology, config.seed)


def msc_radii(n: int, mc: MscConfig) -> list[int]:
    if mc.radii:
        return list(mc.radii)
    R = mc.R if mc.R is not None else geometric_base(n, mc.C)
    levels = mc.levels if mc.levels is not None else default_level_count(n, R)
    return [R ** j for j in range(1, levels + 1)]


def build_msc(g: Graph, config: ExperimentConfig) -> tuple[MultiScaleClustering, EnergyLedger | None]:
    mc = config.msc
    adaptive = {}
    if mc.growth is not None and not mc.radii:
        R = mc.R if mc.R is not None else geometric_base(g.n, mc.C)
        levels = mc.levels if mc.levels is not None else default_level_count(g.n, R)
        adaptive = {"R": R, "levels": levels, "growth": mc.growth}
    if mc.bootstrap:
        radii = None if adaptive else msc_radii(g.n, mc)
        b = build_msc_bootstrapped(g, radii, **adaptive, seed=config.seed, mode=mc.mode,
                                   policy=config.delivery, closure=mc.closure)
        return b.msc, b.ledger
    if adaptive:
        return build_msc_central(g, **adaptive, seed=config.seed, mode=mc.mode), None
    return build_msc_central(g, msc_radii(g.n, mc), seed=config.seed, mode=mc.mode), None


def protocol_horizon(g: Graph, config: ExperimentConfig) -> int:
    if config.horizon is not None:
        return config.horizon
    if config.protocol == "mpx":
        from .protocols import mpx_t_max
        return mpx_t_max(config.mpx_R, g.n)
    return g.diameter + 1


def efficient_bfs(g: Graph, root: int, config: ExperimentConfig) -> dict[str, Any]:
    """Build the clustering, then run BFS from ``root`` under SAF for ``D + 1`` steps."""
    msc, build = build_msc(g, config)
    T = g.diameter + 1
    res = saf(g, msc, naive_parallel_bfs(root), T, policy=config.delivery, seed=config.seed,
              closure=config.msc.closure)
    ref = run(g, naive_parallel_bfs(root), T, policy=config.delivery, seed=config.seed, record_actions=False)
    truth = g.distances[root].tolist()
    violations = safety_audit(res.awake_sets(), ref.transcript, res.schedule, res.blocks)
    build_e = build.energy if build is not None else np.zeros(g.n, dtype=np.int64)
    query_e = res.ledger.energy
    return {"distances": res.outputs, "correct": res.outputs == truth,
            "audit_violations": len(violations), "far_participation": len(far_node_participation(res, msc)),
            "msc": msc.summary(), "T": T, "real_duration": res.schedule.real_duration,
            "energy": {"build": build_e.tolist(), "query": query_e.tolist(),
                       "sim": res.ledger.phase_energy("sim").tolist(),
                       "notify": res.ledger.phase_energy("notify").tolist()},
            "max_energy": {"build": int(build_e.max()), "query": int(query_e.max()),
                           "total": int((build_e + query_e).max()),
                           "naive": int(ref.ledger.energy.max())}}


def compare(config: ExperimentConfig, g: Graph | None = None) -> dict[str, Any]:
    """Naive, SAF and Greedy Psychic on the same graph, protocol and seed."""
    g = make_graph(config) if g is None else g
    T = protocol_horizon(g, config)
    beh = make_protocol(config.protocol, root=config.root, R=config.mpx_R, seed=config.seed)
    ref = run(g, beh, T, policy=config.delivery, seed=config.seed, track_next_send=True)
    msc, _ = build_msc(g, config)
    res = saf(g, msc, beh, T, policy=config.delivery, seed=config.seed, closure=config.msc.closure)
    gp = greedy_psychic_all(g, ref)
    gp_e = [s.energy for s in gp]
    violations = safety_audit(res.awake_sets(), ref.transcript, res.schedule, res.blocks)
    ratio = energy_ratio_report(res.ledger, gp_e)
    naive_e = ref.ledger.energy
    return {"n": g.n, "T": T, "real_duration_naive": T, "real_duration_saf": res.schedule.real_duration,
            "outputs_equal": res.outputs == ref.outputs, "audit_violations": len(violations),
            "msc": msc.summary(),
            "per_node": {"naive": naive_e.tolist(), "saf": res.ledger.energy.tolist(), "gp": gp_e},
            "max": {"naive": int(naive_e.max()), "saf": int(res.ledger.energy.max()), "gp": int(max(gp_e))},
            "mean": {"naive": float(naive_e.mean()), "saf": float(res.ledger.energy.mean()),
                     "gp": float(np.mean(gp_e))},
            "ratio_max": ratio["max"], "ratio_mean": ratio["mean"]}


def bfs_path_sweep(diameters: Sequence[int], seed: int = 0, mc: MscConfig | None = None) -> list[dict[str, Any]]:
    rows = []
    for D in diameters:
        cfg = ExperimentConfig(topology={"kind": "path", "n": D + 1}, seed=seed,
                               msc=mc if mc is not None else MscConfig(bootstrap=True))
        rep = efficient_bfs(make_graph(cfg), 0, cfg)
        rows.append({"D": D, "correct": rep["correct"], "audit_violations": rep["audit_violations"],
                     **{f"max_{k}": v for k, v in rep["max_energy"].items()},
                     "real_duration": rep["real_duration"], "levels": len(rep["msc"]) - 1})
    return rows


def append_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> None:
    with open(path, "a") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, default=_default) + "\n")


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1, default=_default))


def write_csv(path: str | Path, rows: Sequence[dict[str, Any]]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def _default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o)}")
