import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import connected_graphs
from oracles import bfs_apsp, timed_spreading
from safsim.engine import DeliveryPolicy, lookahead_next_send, node_tape, run
from safsim.graph import build_graph, check_partition, make_partition
from safsim.protocols import (MpxState, make_protocol, mpx_t_max, naive_broadcast, naive_parallel_bfs,
                              naively_build_mpx)
from safsim.topology import cycle_graph, erdos_renyi, path_graph, random_geometric

POLICIES = [(DeliveryPolicy.LOWEST_ID, 0)] + [(DeliveryPolicy.SEEDED_RANDOM, s) for s in (1, 2, 3)]


def first_receipt(tr, v):
    return next(t for t in range(1, tr.horizon + 1) if tr.receipts[t - 1].get(v) is not None)


def test_broadcast_path_of_five():
    r = run(path_graph(5), naive_broadcast(0), 6)
    tr = r.transcript
    for i in range(1, 5):
        assert first_receipt(tr, i) == i
        assert i in tr.sends[i]  # sends at t = i + 1
    assert all(r.outputs)


def test_broadcast_single_node():
    r = run(build_graph(1, []), naive_broadcast(0), 2)
    assert r.transcript.sends[0] == {0: b"\x01"} and r.outputs == [True]


@pytest.mark.parametrize("policy,seed", POLICIES[:2])
def test_broadcast_cycle(policy, seed):
    r = run(cycle_graph(4), naive_broadcast(0), 4, policy=policy, seed=seed)
    assert [first_receipt(r.transcript, v) for v in (1, 2, 3)] == [1, 2, 1]


def test_bfs_path_of_four():
    r = run(path_graph(4), naive_parallel_bfs(0), 6)
    assert r.outputs == [0, 1, 2, 3]
    assert r.transcript.last_send_time() == 4


def test_bfs_matches_apsp_on_random_graphs():
    for s in range(200):
        g = erdos_renyi(10 + s % 30, seed=s) if s % 2 else random_geometric(10 + s % 30, seed=s)
        root = s % g.n
        r = run(g, naive_parallel_bfs(root), g.diameter + 1, record_actions=False)
        assert r.outputs == bfs_apsp(g.n, g.edges)[root]


def test_mpx_zero_weights_give_singletons():
    g = random_geometric(30, seed=1)
    R = 3
    r = run(g, naively_build_mpx(R, weights=np.zeros(g.n)), mpx_t_max(R, g.n))
    assert r.outputs == [(v, 0) for v in range(g.n)]


def test_mpx_dominant_hub():
    g = build_graph(5, [(0, 1), (0, 2), (0, 3), (0, 4)])
    w = [30.5, 0.1, 0.2, 0.3, 0.4]
    r = run(g, naively_build_mpx(10, weights=w), mpx_t_max(10, 5))
    assert r.outputs == [(0, 0)] + [(0, 1)] * 4


def test_mpx_path_of_eight_matches_spreading():
    g = path_graph(8)
    w = [0.3, 5.7, 1.2, 0.9, 2.4, 8.1, 0.5, 3.6]
    cl, dp = timed_spreading(g.n, g.edges, w)
    r = run(g, naively_build_mpx(4, weights=w), mpx_t_max(4, 8))
    assert [o[0] for o in r.outputs] == cl
    assert [o[1] for o in r.outputs] == dp


@given(connected_graphs(min_n=2, max_n=12), st.integers(0, 10_000), st.sampled_from([1.5, 3.0, 6.0]))
def test_mpx_terminates_with_valid_partition(g, seed, R):
    T = mpx_t_max(R, g.n)
    for policy, ps in POLICIES[:2]:
        r = run(g, naively_build_mpx(R, seed=seed), T, policy=policy, seed=ps)
        assert all(c is not None for c, _ in r.outputs)
        check_partition(g, make_partition(g, [c for c, _ in r.outputs], [d for _, d in r.outputs]))
        assert all(st_.sent or st_.center == st_.node for st_ in r.final_states)


@given(connected_graphs(min_n=2, max_n=10), st.integers(0, 1000))
def test_outputs_agree_across_policies(g, seed):
    root = seed % g.n
    for name in ("broadcast", "bfs"):
        beh = make_protocol(name, root=root)
        outs = {tuple(run(g, beh, g.n + 1, policy=p, seed=s).outputs) for p, s in POLICIES}
        assert len(outs) == 1


def _random_states(beh, g, T, seed):
    """States observed along a real run, at every step."""
    r_states = [beh.init(v, g.n, node_tape(seed, v)) for v in range(g.n)]
    ref = run(g, beh, T, seed=seed)
    seen = [(1, s) for s in r_states]
    states = r_states
    for t in range(1, T + 1):
        states = [beh.step(states[v], t, ref.transcript.received(t, v)) for v in range(g.n)]
        seen += [(t + 1, s) for s in states]
    return seen


@given(connected_graphs(min_n=2, max_n=10), st.integers(0, 1000))
def test_analytic_next_send_and_advance(g, seed):
    T = 30
    for beh in (naive_broadcast(seed % g.n), naive_parallel_bfs(seed % g.n), naively_build_mpx(2.0, seed=seed)):
        for t, s in _random_states(beh, g, T, seed)[:: max(1, g.n // 3)]:
            for cap in (t, t + 3, T + 5):
                got = beh.next_send(s, t, cap)
                slow = lookahead_next_send(beh, s, t, cap)
                assert got == slow
                if t <= cap:
                    quick = beh.advance(s, t, cap)
                    stepped = s
                    for tt in range(t, cap + 1):
                        stepped = beh.step(stepped, tt, None)
                    assert quick == stepped


def test_mpx_next_send_when_appointing():
    beh = naively_build_mpx(4)
    s = MpxState(0, 10, 2.5, 20, None, None, False)
    assert beh.next_send(s, 1, 20) == 19
    assert beh.next_send(s, 1, 18) == float("inf")
    assert beh.advance(s, 1, 18).center == 0
    assert not beh.advance(s, 1, 18).sent


def test_unknown_protocol():
    with pytest.raises(ValueError):
        make_protocol("gossip")
