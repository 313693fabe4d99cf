import collections
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bpmm.mpengine import REASONS, MpConfig, build_factor_graph, factor_value, run_mp
from bpmm.network import Topology
from bpmm.power import PowerPolicy, conditional_weight, positive_pressure
from bpmm.schedulers import audit_schedule, exact_mbp, role_search
from bpmm.traffic import backpressure
from oracles import exhaustive_roles, minsum_reference, pressure, random_queues, random_topology, random_tree


def test_two_node_example():
    topo = Topology.from_snr({(0, 1): 4.0}, [((0,), (1,))])
    q = np.array([[10.0], [0.0]])
    for pol in PowerPolicy:
        sch = run_mp(q, topo, pol)
        assert sch.s.tolist() == [1, 0]
        assert sch.weight == pytest.approx(exact_mbp(q, topo, PowerPolicy.OVER_POWER).weight)


def test_zero_queues_decode_idle(drop0):
    sch = run_mp(np.zeros((drop0.n_nodes, drop0.n_flows)), drop0)
    assert sch.s.tolist() == [0] * drop0.n_nodes and sch.weight == 0.0


def test_factor_value_examples():
    topo = Topology.from_snr({(0, 1): 3.0, (0, 2): 1.0}, [((0,), (1,)), ((0,), (2,))])
    Q, _ = backpressure(np.array([[6.0, 2.0], [0.0, 0.0], [0.0, 0.0]]), topo)
    for pol in PowerPolicy:
        assert factor_value(0, [0, 0, 0], pol, Q, topo) == 0.0
        assert factor_value(0, [1, 1, 1], pol, Q, topo) == 0.0
    assert factor_value(0, [1, 0, 1], PowerPolicy.SINGLE_DEST, Q, topo) == pytest.approx(-topo.cap_full[0, 1] * 6.0)
    # factor value is minus the conditional weight of the transmitter
    for pol in PowerPolicy:
        w, _ = conditional_weight([1, 0, 0], pol, Q, topo)
        assert factor_value(0, [1, 0, 0], pol, Q, topo) == pytest.approx(-w)


def test_factor_scope_is_node_plus_pressured_neighbors(drop0, rng):
    q = random_queues(rng, drop0)
    Q, _ = backpressure(q, drop0)
    qpos = positive_pressure(Q, drop0)
    fg = build_factor_graph(qpos, drop0)
    for k, n in enumerate(fg.fac_node):
        sc = fg.scope(k)
        assert sc[0] == n
        assert set(sc[1:]) == {m for m in drop0.neighbors[n] if qpos[n, m] > 0}


@pytest.mark.parametrize("policy", list(PowerPolicy))
def test_trace_matches_reference_min_sum(policy):
    rng = np.random.default_rng(4)
    for _ in range(25):
        topo = random_topology(rng, int(rng.integers(3, 7)), n_flows=3)
        q = random_queues(rng, topo, scale=1.0)
        Q, _ = backpressure(q, topo)
        sch = run_mp(q, topo, policy, MpConfig(max_iters=12, trace=True), Q=Q)
        trace = sch.info["trace"]
        ref = list(itertools.islice(minsum_reference(topo, Q, int(policy), len(trace)), len(trace)))
        for got, want in zip(trace, ref):
            assert got.tolist() == want.tolist()


@pytest.mark.parametrize("policy", list(PowerPolicy))
def test_exact_on_trees(policy):
    rng = np.random.default_rng(100 + int(policy))
    for _ in range(25):
        topo = random_tree(rng, int(rng.integers(2, 10)))
        q = np.zeros((topo.n_nodes, 1))
        q[1:, 0] = rng.exponential(1.0, topo.n_nodes - 1)
        best, _ = exhaustive_roles(int(policy), topo, pressure(q, topo))
        sch = run_mp(q, topo, policy)
        assert sch.weight == pytest.approx(best, rel=1e-9, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_feasible_and_bounded_by_exact(seed):
    rng = np.random.default_rng(seed)
    topo = random_topology(rng, int(rng.integers(2, 9)), n_flows=3)
    q = random_queues(rng, topo, scale=1.0)
    Q, _ = backpressure(q, topo)
    for pol in PowerPolicy:
        sch = run_mp(q, topo, pol, Q=Q)
        audit_schedule(sch, topo)
        w, p = conditional_weight(sch.s, pol, Q, topo)
        assert sch.weight == pytest.approx(w, rel=1e-12, abs=1e-15)
        np.testing.assert_allclose(sch.p, p)
        best = role_search(q, topo, pol, Q=Q).weight
        assert sch.weight <= best * (1 + 1e-9) + 1e-12
        assert sch.info["iterations"] <= 100 and sch.info["reason"] in REASONS


def test_iteration_cap_is_respected(drop0, rng):
    q = random_queues(rng, drop0)
    for cap in (1, 2, 5):
        sch = run_mp(q, drop0, cfg=MpConfig(max_iters=cap))
        assert sch.info["iterations"] <= cap
        audit_schedule(sch, drop0)


def test_termination_diagnostic(drop0):
    rng = np.random.default_rng(9)
    reasons = collections.Counter()
    for _ in range(40):
        reasons[run_mp(random_queues(rng, drop0), drop0).info["reason"]] += 1
    frac = 1 - reasons["max_iters"] / sum(reasons.values())
    print(f"mp termination reasons {dict(reasons)}; {100 * frac:.0f}% before the cap")
    assert set(reasons) <= set(REASONS)


def test_greedy_fallback_is_feasible(drop0, rng):
    q = random_queues(rng, drop0, density=1.0)
    sch = run_mp(q, drop0, PowerPolicy.WATERFILLING, MpConfig(local_cap=1))
    audit_schedule(sch, drop0)
    assert sch.weight <= exact_mbp(q, drop0).weight * (1 + 1e-9)
