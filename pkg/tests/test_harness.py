import json

import numpy as np
import pytest

from safsim import harness as H
from safsim.cli import EXIT_AUDIT, EXIT_OK, EXIT_VALIDATION, main
from safsim.topology import cycle_graph, generate_topology, grid_graph, random_geometric


def test_config_round_trip(tmp_path):
    cfg = H.ExperimentConfig(topology={"kind": "grid", "side": 6}, seed=4,
                             msc=H.MscConfig(R=2, levels=2, growth=3, bootstrap=True))
    cfg.save(tmp_path / "c.json")
    assert H.ExperimentConfig.load(tmp_path / "c.json") == cfg


def test_topologies():
    g = generate_topology({"kind": "path", "n": 5})
    assert g.n == 5 and g.m == 4 and g.diameter == 4
    assert grid_graph(12).diameter == 22
    assert cycle_graph(10).diameter == 5
    a, b = random_geometric(80, seed=3), random_geometric(80, seed=3)
    assert a.edges == b.edges
    with pytest.raises(ValueError):
        generate_topology({"kind": "torus"})


def test_header_records_versions():
    h = H.header(H.ExperimentConfig())
    assert {"numpy", "scipy", "networkx", "matplotlib", "safsim"} <= set(h["versions"])


def test_efficient_bfs_on_path():
    cfg = H.ExperimentConfig(topology={"kind": "path", "n": 65}, msc=H.MscConfig(bootstrap=True))
    rep = H.efficient_bfs(H.make_graph(cfg), 0, cfg)
    assert rep["correct"] and rep["audit_violations"] == 0 and rep["far_participation"] == 0
    assert rep["distances"] == list(range(65))
    assert rep["max_energy"]["naive"] == 65


def test_efficient_bfs_grid_corner_is_manhattan():
    cfg = H.ExperimentConfig(topology={"kind": "grid", "side": 12}, msc=H.MscConfig(R=2, levels=2, growth=2))
    rep = H.efficient_bfs(H.make_graph(cfg), 0, cfg)
    assert rep["distances"] == [x + y for x in range(12) for y in range(12)]
    assert rep["audit_violations"] == 0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_efficient_bfs_random_geometric(seed):
    cfg = H.ExperimentConfig(topology={"kind": "random_geometric", "n": 120}, seed=seed, policy="seeded_random",
                             msc=H.MscConfig(R=2, levels=2, growth=2))
    g = H.make_graph(cfg)
    rep = H.efficient_bfs(g, seed, cfg)
    assert rep["correct"] and rep["audit_violations"] == 0


def test_compare_all_sleep_has_zero_gp():
    cfg = H.ExperimentConfig(topology={"kind": "path", "n": 30}, protocol="sleep", horizon=20,
                             msc=H.MscConfig(R=2, levels=2, growth=2))
    rep = H.compare(cfg)
    assert rep["max"]["gp"] == 0 and rep["max"]["naive"] == 0
    assert rep["outputs_equal"] and rep["audit_violations"] == 0


def test_writers(tmp_path):
    H.write_csv(tmp_path / "a.csv", [{"x": 1, "y": np.int64(2)}])
    assert (tmp_path / "a.csv").read_text().splitlines() == ["x,y", "1,2"]
    H.append_jsonl(tmp_path / "r.jsonl", [{"v": np.float64(0.5)}, {"v": np.arange(2)}])
    assert [json.loads(l)["v"] for l in (tmp_path / "r.jsonl").read_text().splitlines()] == [0.5, [0, 1]]


def test_cli_run_and_audit(tmp_path):
    base = ["--kind", "path", "--n", "40", "--R", "2", "--levels", "2", "--growth", "2", "--out", str(tmp_path)]
    assert main(["run", "--protocol", "broadcast", *base]) == EXIT_OK
    for name in ("run.json", "ledger.csv", "schedule.json", "energy.png", "reference_transcript.jsonl"):
        assert (tmp_path / name).exists()
    assert main(["audit", "--protocol", "mpx", "--mpx-R", "3", *base]) == EXIT_OK
    assert (tmp_path / "gp.csv").exists()
    assert main(["compare", "--protocol", "bfs", *base]) == EXIT_OK
    assert (tmp_path / "compare.png").exists() and (tmp_path / "compare.csv").exists()


def test_cli_validation_failure_exit_code(tmp_path):
    # explicit radii 2,4 violate the growth condition between levels
    code = main(["cluster", "--kind", "path", "--n", "40", "--radii", "2,4", "--out", str(tmp_path)])
    assert code == EXIT_VALIDATION
    code = main(["validate", "--kind", "path", "--n", "40", "--mpx-R", "3", "--trials", "20",
                 "--tolerance", "-1", "--R", "2", "--levels", "1", "--out", str(tmp_path)])
    assert code == EXIT_VALIDATION


def test_cli_out_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(H.OUT_ENV, str(tmp_path / "env"))
    assert main(["gen", "--kind", "grid", "--side", "4"]) == EXIT_OK
    assert (tmp_path / "env" / "graph.txt").exists()


def test_cli_config_file(tmp_path):
    cfg = H.ExperimentConfig(topology={"kind": "cycle", "n": 16}, msc=H.MscConfig(R=2, levels=1),
                             out=str(tmp_path))
    cfg.save(tmp_path / "c.json")
    assert main(["bfs", "--config", str(tmp_path / "c.json")]) == EXIT_OK
    assert json.loads((tmp_path / "bfs.json").read_text())["correct"]
    assert EXIT_AUDIT == 3
