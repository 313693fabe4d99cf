import math

import numpy as np
import pytest

from bpmm.network import Flow, Topology, dumps, generate_drop, loads, pair_allowed, validate


def test_default_drop_size(drop0):
    assert drop0.n_nodes == 15
    assert drop0.n_flows == 20


def test_single_ue_drop():
    topo = generate_drop(1, n_ue=1, radius=10.0)
    assert topo.n_nodes == 6 and topo.n_flows == 2
    assert math.hypot(*topo.nodes[5].position) <= 10.0


def test_rn_ring(drop0):
    rns = [nd for nd in drop0.nodes if nd.kind == "RN"]
    assert len(rns) == 4
    angles = []
    for nd in rns:
        assert math.hypot(*nd.position) == pytest.approx(115.0, abs=1e-9)
        angles.append(math.degrees(math.atan2(nd.position[1], nd.position[0])) % 360)
    assert sorted(round(a, 9) for a in angles) == [0.0, 90.0, 180.0, 270.0]
    assert drop0.nodes[0].kind == "BS" and drop0.nodes[0].position == (0.0, 0.0)


def test_rejects_zero_ues():
    with pytest.raises(ValueError):
        generate_drop(0, n_ue=0)


def test_flow_validation():
    with pytest.raises(ValueError):
        Flow(0, frozenset({1}), frozenset({1, 2}))
    with pytest.raises(ValueError):
        Flow(0, frozenset(), frozenset({1}))


@pytest.mark.parametrize("seed", range(8))
def test_drop_invariants(seed):
    topo = generate_drop(seed)
    for n in range(topo.n_nodes):
        for m in topo.neighbors[n]:
            assert n in topo.neighbors[m]
            assert pair_allowed(topo.nodes[n].kind, topo.nodes[m].kind)
            ch = topo.channels[(n, m)]
            assert ch.pathloss_db <= 200.0
            assert ch.state.value != "OUT"
    for k in range(topo.n_nodes - 5):
        ue = 5 + k
        ul, dl = topo.flows[2 * k], topo.flows[2 * k + 1]
        assert ul.sources == {ue} and ul.destinations == {0}
        assert dl.sources == {0} and dl.destinations == {ue}
    assert topo.omega_max <= 14


def test_reciprocal_channels(drop0):
    for (a, b), ch in drop0.channels.items():
        back = drop0.channels[(b, a)]
        assert back.pathloss_db == ch.pathloss_db and back.state == ch.state
        np.testing.assert_array_equal(back.fading, ch.fading.T)
        assert back.bf_gain == pytest.approx(ch.bf_gain, rel=1e-10)


def test_serialization_roundtrip_is_byte_identical(drop0):
    text = dumps(drop0)
    assert dumps(generate_drop(0)) == text
    again = loads(text)
    assert dumps(again) == text
    np.testing.assert_array_equal(again.snr, drop0.snr)
    np.testing.assert_array_equal(again.cap_full, drop0.cap_full)


def test_validate_line():
    topo = Topology.from_snr({(0, 1): 10.0, (1, 2): 10.0}, [((2,), (0,))], kinds=["BS", "RN", "UE"])
    diag = validate(topo)
    assert diag.ok and diag.flags == []
    assert diag.omega_max == 2


def test_validate_isolated_node():
    topo = Topology.from_snr({(0, 1): 10.0}, [((2,), (0,))], kinds=["BS", "RN", "UE"])
    diag = validate(topo)
    assert diag.isolated_nodes == [2]
    assert diag.infeasible_flows == [0]
    assert "isolated node 2" in diag.flags and "infeasible flow 0" in diag.flags
