import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import connected_graphs
from oracles import timed_spreading
from safsim.clustering import (AdppParams, MscError, assemble_msc, awvd_reference, ball_intersection_stats,
                               build_msc_central, check_nesting, default_level_count, growth_min_ratio,
                               geometric_base, grid_rounding_partition, mpx_diameter_stats, mpx_weights,
                               sandwich_holds, strict_params, validate_adpp)
from safsim.graph import build_graph, check_partition, one_cluster_partition, quotient, singleton_partition
from safsim.topology import erdos_renyi, grid_graph, path_graph, random_geometric


def test_zero_weights_singletons():
    g = random_geometric(40, seed=2)
    p = awvd_reference(g, np.zeros(g.n))
    assert p.cluster_of.tolist() == list(range(g.n))


def test_dominant_weight_single_cluster():
    g = random_geometric(40, seed=2)
    w = np.zeros(g.n)
    w[7] = g.n
    p = awvd_reference(g, w)
    assert set(p.cluster_of.tolist()) == {7}
    assert p.depth_of.tolist() == g.distances[7].tolist()


def test_tie_rule():
    g = path_graph(3)
    # both ends reach the middle with key 1 - 2 = -1; larger fraction wins
    p = awvd_reference(g, [2.2, 0.0, 2.7])
    assert p.cluster_of.tolist() == [0, 2, 2]
    p = awvd_reference(g, [2.5, 0.0, 2.5])
    assert p.cluster_of.tolist() == [0, 0, 2]


def test_matches_timed_spreading():
    for s in range(20):
        g = erdos_renyi(40, p=0.08, seed=s)
        w = np.random.default_rng(s).exponential(3.0, g.n)
        cl, dp = timed_spreading(g.n, g.edges, w.tolist())
        p = awvd_reference(g, w)
        assert p.cluster_of.tolist() == cl
        assert p.depth_of.tolist() == dp


@given(connected_graphs(min_n=2, max_n=30), st.integers(0, 10_000))
def test_cells_are_star_shaped(g, seed):
    w = np.random.default_rng(seed).exponential(2.0, g.n)
    p = awvd_reference(g, w)
    check_partition(g, p)
    assert (p.depth_of == g.distances[np.arange(g.n), p.cluster_of]).all()


def test_weights_match_protocol_tape():
    from safsim.protocols import naively_build_mpx
    beh = naively_build_mpx(5.0, level=2, seed=11)
    assert mpx_weights(6, 5.0, 11, 2).tolist() == [beh.weight(v) for v in range(6)]


@pytest.mark.parametrize("side", [12, 24])
@pytest.mark.parametrize("R", [2, 3, 4])
def test_grid_rounding_is_22_adpp(side, R):
    g = grid_graph(side)
    p = grid_rounding_partition(side, R)
    check_partition(g, p)
    a, b = validate_adpp(g, p, R)
    assert a <= 2 and b <= 2
    assert sandwich_holds(g, quotient(g, p), AdppParams(R, a, b))


def test_validate_singletons():
    g = path_graph(9)
    assert validate_adpp(g, singleton_partition(g), 1) == (1, 1)


def test_validate_adpp_definition_brute_force():
    g = erdos_renyi(50, p=0.07, seed=3)
    from safsim.clustering import mpx_partition
    R = 2
    p = mpx_partition(g, R, 8, 1)
    q = quotient(g, p)
    a, b = validate_adpp(g, p, R, q)
    pairs = [(u, v) for u in range(g.n) for v in range(g.n)]
    worst_alpha = max(q.cluster_distance(u, v) for u, v in pairs if g.dist(u, v) <= R)
    worst_diam = max(g.dist(u, v) for u, v in pairs if p.cluster_of[u] == p.cluster_of[v])
    assert a == max(1, worst_alpha)
    assert b == max(1, math.ceil(worst_diam / R))


def test_diameter_stats_trivial_cases():
    one = build_graph(1, [])
    assert mpx_diameter_stats(one, 4, 10, 0)["exceed_fraction"] == 0.0
    g = path_graph(30)
    s = mpx_diameter_stats(g, 100, 20, 0)
    assert s["max_diameter"] <= g.diameter and s["exceed_fraction"] == 0.0
    with pytest.raises(ValueError):
        mpx_diameter_stats(g, 4, 0, 0)


def test_ball_counts_trivial_cases():
    from safsim.clustering import ball_cluster_counts
    g = random_geometric(30, seed=1)
    ball0 = g.distances <= 0
    assert (ball_cluster_counts(ball0, np.arange(g.n)) == 1).all()
    ball = g.distances <= 3
    assert (ball_cluster_counts(ball, np.zeros(g.n, dtype=int)) == 1).all()
    stats = ball_intersection_stats(g, 2, 2, 5, 0)
    assert stats["max_count"] >= 1 and 0.0 <= stats["tail_fraction"] <= 1.0


def _grid_levels(side, radii):
    return [(grid_rounding_partition(side, R), R) for R in radii]


def test_assemble_single_level_is_valid():
    g = grid_graph(12)
    msc = assemble_msc(g, _grid_levels(12, [3]))
    assert msc.ell == 1 and msc[0].R == 1 and msc[0].partition.n == 144


def test_assemble_declared_catches_slow_growth():
    g = grid_graph(16)
    with pytest.raises(MscError, match="level 1.*4 < 14"):
        assemble_msc(g, _grid_levels(16, [4, 16]), mode="declared", declared=[(2, 2), (2, 2)])
    assert growth_min_ratio(2, 2) == 14


def test_assemble_declared_geometric_16_passes():
    g = grid_graph(32)
    msc = assemble_msc(g, _grid_levels(32, [16, 256]), mode="declared", declared=[(2, 2), (2, 2)])
    assert msc.radii() == [1, 16, 256]


def test_assemble_rejects_non_increasing():
    g = grid_graph(12)
    with pytest.raises(MscError):
        assemble_msc(g, _grid_levels(12, [4, 4]))


def test_nesting_examples():
    g = random_geometric(120, seed=4)
    msc = build_msc_central(g, R=2, levels=3, growth=2, seed=3)
    assert not msc.growth_violations()
    for v in range(0, g.n, 5):
        assert check_nesting(msc, v, v, 1)
    with pytest.raises(ValueError):
        check_nesting(msc, 0, 0, msc.ell)
    far = int(np.argmax(g.distances[0]))
    if g.dist(0, far) > msc[2].R - msc[1].R:
        with pytest.raises(ValueError):
            check_nesting(msc, 0, far, 1)


def test_nesting_can_fail_when_growth_is_violated():
    g = path_graph(80)
    msc = assemble_msc(g, [(one_cluster_partition(g, 0), 2), (singleton_partition(g), 3)],
                       mode="declared", declared=[(1, 1), (1, 1)], check=False)
    assert msc.growth_violations()
    results = {check_nesting(msc, u, u + 1, 1) for u in range(10)}
    assert False in results


def test_geometric_defaults():
    assert geometric_base(10) == 13
    assert geometric_base(1025) == math.ceil(math.log(1025) ** 2)
    assert default_level_count(1025, 49) == 2 and default_level_count(49, 49) == 1
    a, b = strict_params(100, 4)
    assert (a, b) == (math.ceil(23 * math.log(100)), math.ceil(3 * math.log(100)))
    assert strict_params(100, 4, "beta12")[1] == math.ceil(12 * math.log(100))


def test_central_build_is_deterministic_and_valid():
    g = random_geometric(100, seed=9)
    a = build_msc_central(g, R=2, levels=3, growth=3, seed=5)
    b = build_msc_central(g, R=2, levels=3, growth=3, seed=5)
    assert a.to_json() == b.to_json()
    for lv in a.levels[1:]:
        check_partition(g, lv.partition)
        assert sandwich_holds(g, lv.quotient, lv.params)


def test_central_build_retries_then_gives_up():
    g = path_graph(60)
    with pytest.raises(MscError, match="attempts"):
        build_msc_central(g, [4, 5], seed=1, max_attempts=3)


def test_strict_mode_uses_worst_case_parameters():
    g = path_graph(40)
    msc = build_msc_central(g, [3], mode="strict")
    assert msc[1].alpha == math.ceil(23 * math.log(40))
    assert msc[1].depth_bound == math.ceil(9 * math.log(40))


def test_mpx_parameters_hold_in_most_runs():
    g = erdos_renyi(100, seed=1)
    ok = 0
    rng = np.random.default_rng(0)
    runs = 200
    for _ in range(runs):
        p = awvd_reference(g, rng.exponential(4, g.n))
        a, b = validate_adpp(g, p, 4)
        ok += a <= 23 * math.log(100) and b <= 3 * math.log(100)
    assert ok >= 0.99 * runs


def test_msc_json_shape():
    g = random_geometric(50, seed=1)
    data = build_msc_central(g, R=2, levels=2, growth=2).to_json()
    assert set(data["levels"][0]) == {"R", "alpha", "beta", "cluster_of", "depth_of", "center_of"}
