"""Command-line entry point: ``safsim {gen,cluster,run,bfs,compare,validate,audit}``.

Exit codes: 0 ok, 2 validation failure, 3 audit failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness as H
from .cluster_comm import schedule_build
from .clustering import MscError, ball_intersection_stats, mpx_diameter_stats
from .engine import run
from .graph import write_edge_list
from .plotting import plot_histogram, plot_node_energies
from .protocols import make_protocol
from .psychic import greedy_psychic_all, write_gp_csv
from .saf import far_node_participation, run_record, safety_audit, saf, write_run_record

EXIT_OK, EXIT_VALIDATION, EXIT_AUDIT = 0, 2, 3


def _config(args) -> H.ExperimentConfig:
    cfg = H.ExperimentConfig.load(args.config) if args.config else H.ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.kind is not None:
        topo = {"kind": args.kind}
        for key in ("n", "side", "radius", "p"):
            val = getattr(args, key)
            if val is not None:
                topo[key] = val
        cfg.topology = topo
    for key in ("protocol", "root", "policy", "horizon"):
        val = getattr(args, key)
        if val is not None:
            setattr(cfg, key, val)
    if args.mpx_R is not None:
        cfg.mpx_R = args.mpx_R
    for key in ("R", "levels", "growth", "mode"):
        val = getattr(args, key)
        if val is not None:
            setattr(cfg.msc, key, val)
    if args.radii:
        cfg.msc.radii = [int(x) for x in args.radii.split(",")]
    if args.bootstrap:
        cfg.msc.bootstrap = True
    if args.closure:
        cfg.msc.closure = True
    return cfg


def _outdir(cfg: H.ExperimentConfig) -> Path:
    d = cfg.out_dir()
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_gen(cfg, args) -> int:
    g = H.make_graph(cfg)
    out = _outdir(cfg)
    write_edge_list(g, out / "graph.txt")
    H.write_json(out / "graph.json", {**H.header(cfg), "n": g.n, "m": g.m, "diameter": g.diameter,
                                      "max_degree": g.max_degree})
    print(f"n={g.n} m={g.m} D={g.diameter} -> {out / 'graph.txt'}")
    return EXIT_OK


def cmd_cluster(cfg, args) -> int:
    g = H.make_graph(cfg)
    out = _outdir(cfg)
    try:
        msc, build = H.build_msc(g, cfg)
    except MscError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    H.write_json(out / "msc.json", {**H.header(cfg), **msc.to_json()})
    H.write_csv(out / "msc_levels.csv", msc.summary())
    schedule_build(msc, g.diameter + 1).dump(out / "schedule.json")
    if build is not None:
        build.to_csv(out / "build_ledger.csv")
    for row in msc.summary():
        print(row)
    return EXIT_OK


def _saf_and_reference(cfg, g):
    T = H.protocol_horizon(g, cfg)
    beh = make_protocol(cfg.protocol, root=cfg.root, R=cfg.mpx_R, seed=cfg.seed)
    msc, build = H.build_msc(g, cfg)
    res = saf(g, msc, beh, T, policy=cfg.delivery, seed=cfg.seed, closure=cfg.msc.closure)
    ref = run(g, beh, T, policy=cfg.delivery, seed=cfg.seed, track_next_send=True)
    return msc, build, res, ref


def cmd_run(cfg, args) -> int:
    g = H.make_graph(cfg)
    out = _outdir(cfg)
    msc, build, res, ref = _saf_and_reference(cfg, g)
    violations = safety_audit(res.awake_sets(), ref.transcript, res.schedule, res.blocks)
    rec = run_record(res, msc, cfg.seed, not violations, build, cfg.topology["kind"])
    rec["header"] = H.header(cfg)
    write_run_record(rec, out / "run.json")
    res.ledger.to_csv(out / "ledger.csv")
    ref.transcript.to_jsonl(out / "reference_transcript.jsonl")
    res.schedule.dump(out / "schedule.json")
    plot_node_energies({"naive": ref.ledger.energy, "saf": res.ledger.energy}, out / "energy.png",
                       f"{cfg.protocol} on {cfg.topology['kind']} (n={g.n})")
    print(f"T={res.horizon} real={res.schedule.real_duration} max SAF energy={int(res.ledger.energy.max())} "
          f"audit={'pass' if not violations else 'fail'}")
    return EXIT_OK if not violations else EXIT_AUDIT


def cmd_bfs(cfg, args) -> int:
    g = H.make_graph(cfg)
    out = _outdir(cfg)
    rep = H.efficient_bfs(g, cfg.root, cfg)
    H.write_json(out / "bfs.json", {**H.header(cfg), **rep})
    H.append_jsonl(out / "reports.jsonl", [{**H.header(cfg), "kind": "bfs", "max_energy": rep["max_energy"],
                                            "correct": rep["correct"]}])
    plot_node_energies({"build": rep["energy"]["build"], "query": rep["energy"]["query"]},
                       out / "bfs_energy.png", f"Efficient BFS on {cfg.topology['kind']} (n={g.n})")
    print(json.dumps(rep["max_energy"]), "correct" if rep["correct"] else "WRONG")
    if rep["audit_violations"]:
        return EXIT_AUDIT
    return EXIT_OK if rep["correct"] else EXIT_VALIDATION


def cmd_compare(cfg, args) -> int:
    g = H.make_graph(cfg)
    out = _outdir(cfg)
    rep = H.compare(cfg, g)
    H.write_json(out / "compare.json", {**H.header(cfg), **rep})
    pn = rep["per_node"]
    H.write_csv(out / "compare.csv", [{"node": v, "naive": pn["naive"][v], "saf": pn["saf"][v], "gp": pn["gp"][v]}
                                      for v in range(g.n)])
    H.append_jsonl(out / "reports.jsonl", [{**H.header(cfg), "kind": "compare", "max": rep["max"],
                                            "ratio_max": rep["ratio_max"]}])
    plot_node_energies(pn, out / "compare.png", f"{cfg.protocol} on {cfg.topology['kind']} (n={g.n})")
    print(json.dumps({"max": rep["max"], "ratio_max": rep["ratio_max"], "audit": rep["audit_violations"]}))
    return EXIT_OK if rep["audit_violations"] == 0 else EXIT_AUDIT


def cmd_validate(cfg, args) -> int:
    g = H.make_graph(cfg)
    out = _outdir(cfg)
    R = cfg.mpx_R
    diam = mpx_diameter_stats(g, R, args.trials, cfg.seed)
    balls = ball_intersection_stats(g, R, int(R), args.trials, cfg.seed + 1)
    rows = [{"trial": k, "metric": "max_diameter", "value": int(v)} for k, v in enumerate(diam["diameters"])]
    rows += [{"trial": k, "metric": "max_ball_clusters", "value": int(v)} for k, v in enumerate(balls["maxima"])]
    H.write_csv(out / "stats.csv", rows)
    plot_histogram(diam["diameters"], diam["threshold"], out / "diameters.png", "max cluster diameter")
    summary = {"diameter_exceed_fraction": diam["exceed_fraction"], "diameter_threshold": diam["threshold"],
               "ball_tail_fraction": balls["tail_fraction"], "ball_threshold": balls["threshold"]}
    ok = diam["exceed_fraction"] <= args.tolerance and balls["tail_fraction"] <= args.tolerance
    try:
        msc, _ = H.build_msc(g, cfg)
        summary["msc"] = msc.summary()
    except MscError as exc:
        summary["msc_error"] = str(exc)
        ok = False
    H.write_json(out / "validate.json", {**H.header(cfg), **summary, "ok": ok})
    print(json.dumps({k: v for k, v in summary.items() if k != "msc"}), "ok" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_audit(cfg, args) -> int:
    g = H.make_graph(cfg)
    out = _outdir(cfg)
    msc, _, res, ref = _saf_and_reference(cfg, g)
    violations = safety_audit(res.awake_sets(), ref.transcript, res.schedule, res.blocks)
    far = far_node_participation(res, msc)
    gp = greedy_psychic_all(g, ref)
    write_gp_csv(gp, out / "gp.csv")
    H.write_json(out / "audit.json", {**H.header(cfg), "violations": violations, "far_participation": far,
                                      "outputs_equal": res.outputs == ref.outputs})
    print(f"safety violations={len(violations)} far participation={len(far)}")
    return EXIT_OK if not violations and not far and res.outputs == ref.outputs else EXIT_AUDIT


COMMANDS = {"gen": cmd_gen, "cluster": cmd_cluster, "run": cmd_run, "bfs": cmd_bfs,
            "compare": cmd_compare, "validate": cmd_validate, "audit": cmd_audit}


def parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON; flags override its fields")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help=f"output directory (default ${H.OUT_ENV} or ./safsim_out)")
    common.add_argument("--kind", choices=["path", "cycle", "grid", "random_geometric", "erdos_renyi"])
    common.add_argument("--n", type=int)
    common.add_argument("--side", type=int)
    common.add_argument("--radius", type=float)
    common.add_argument("--p", type=float)
    common.add_argument("--protocol", choices=["broadcast", "bfs", "mpx", "sleep"])
    common.add_argument("--root", type=int)
    common.add_argument("--policy", choices=["lowest_id", "seeded_random"])
    common.add_argument("--horizon", type=int)
    common.add_argument("--mpx-R", dest="mpx_R", type=float, help="radius parameter of the simulated MPX protocol")
    common.add_argument("--R", type=int, help="base clustering radius")
    common.add_argument("--levels", type=int)
    common.add_argument("--radii", help="comma-separated explicit radii R_1,...,R_l")
    common.add_argument("--growth", type=int, help="adaptive radii: R_{j+1} = R_j * max(growth, required ratio)")
    common.add_argument("--mode", choices=["empirical", "declared", "strict"])
    common.add_argument("--bootstrap", action="store_true", help="build the clustering distributedly under SAF")
    common.add_argument("--closure", action="store_true", help="gate lower levels by whole clusters")
    p = argparse.ArgumentParser(prog="safsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "validate":
            sp.add_argument("--trials", type=int, default=200)
            sp.add_argument("--tolerance", type=float, default=0.01)
    return p


def main(argv: list[str] | None = None) -> int:
    args = parser().parse_args(argv)
    cfg = _config(args)
    return COMMANDS[args.command](cfg, args)


if __name__ == "__main__":
    sys.exit(main())
