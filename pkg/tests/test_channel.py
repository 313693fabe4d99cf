import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bpmm.channel import (ArrayGeometry, LinkChannel, LinkState, RadioParams, array_response, beamform,
                          cluster_channel, evaluate_interference, link_rate, los_probability,
                          outage_probability, sample_fading, sample_link_state, sample_pathloss, snr_slope)
from bpmm.network import Flow, Node, Topology, _make_channels, generate_drop
from bpmm.schedulers import Schedule


def test_outage_zero_at_100m():
    # exponent -0.0334*100 + 5.2 = 1.86 > 0, so min(1, e^1.86) = 1
    assert outage_probability(100.0) == 0.0


def test_outage_at_200m():
    assert outage_probability(200.0) == pytest.approx(1 - math.exp(-1.48), abs=1e-12)
    assert outage_probability(200.0) == pytest.approx(0.772, abs=5e-4)


def test_los_limit_near_zero():
    assert outage_probability(1e-9) == 0.0
    assert los_probability(1e-9) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("d", [0.0, -3.0])
def test_state_rejects_nonpositive_distance(d, rng):
    with pytest.raises(ValueError):
        sample_link_state(d, rng)


def test_state_frequency_at_200m():
    rng = np.random.default_rng(7)
    n = 100_000
    outs = sum(sample_link_state(200.0, rng) is LinkState.OUT for _ in range(n))
    assert outs / n == pytest.approx(1 - math.exp(-1.48), abs=0.01)


def test_pathloss_examples():
    assert sample_pathloss(100.0, LinkState.LOS, shadowing=0.0) == pytest.approx(101.4)
    assert sample_pathloss(1.0, LinkState.LOS, shadowing=0.0) == pytest.approx(61.4)
    assert sample_pathloss(10.0, LinkState.NLOS, shadowing=0.0) == pytest.approx(72.0 + 29.2)
    assert sample_pathloss(37.0, LinkState.OUT) == math.inf


def test_shadowing_spread(rng):
    los = np.array([sample_pathloss(50.0, LinkState.LOS, rng) for _ in range(20000)])
    nlos = np.array([sample_pathloss(50.0, LinkState.NLOS, rng) for _ in range(20000)])
    assert los.std() == pytest.approx(5.8, rel=0.03)
    assert nlos.std() == pytest.approx(8.7, rel=0.03)
    assert los.mean() == pytest.approx(61.4 + 20 * math.log10(50), abs=0.15)


def test_array_response_examples():
    np.testing.assert_allclose(array_response(ArrayGeometry(4), 0.0), [0.5] * 4)
    np.testing.assert_allclose(array_response(ArrayGeometry(2), math.pi / 2), np.array([1, -1]) / math.sqrt(2),
                               atol=1e-15)


@given(st.integers(1, 64), st.floats(-10, 10, allow_nan=False))
def test_array_response_unit_norm(n, theta):
    assert np.linalg.norm(array_response(ArrayGeometry(n), theta)) == pytest.approx(1.0, rel=1e-12)


def test_single_ray_channel():
    tx, rx = ArrayGeometry(8), ArrayGeometry(4)
    h = cluster_channel(tx, rx, [1.0], [0.3], [1.1])
    assert np.linalg.matrix_rank(h) == 1
    assert np.linalg.norm(h) == pytest.approx(1.0)
    np.testing.assert_allclose(h, np.outer(array_response(rx, 1.1), array_response(tx, 0.3)))


def test_fading_shape_and_transmit_signature_at_zero():
    h = sample_fading(ArrayGeometry(16), ArrayGeometry(4), np.random.default_rng(1))
    assert h.shape == (4, 16)
    np.testing.assert_allclose(array_response(ArrayGeometry(16), 0.0), np.full(16, 0.25))


def test_beamform_examples():
    w_r, w_t, g = beamform(np.diag([3.0, 1.0]))
    assert g == pytest.approx(9.0)
    a_r = array_response(ArrayGeometry(4), 0.4)
    a_t = array_response(ArrayGeometry(6), -0.9)
    w_r, w_t, g = beamform(np.outer(a_r, a_t))
    assert g == pytest.approx(1.0)
    assert abs(w_r @ a_r) == pytest.approx(1.0)
    assert abs(a_t @ w_t) == pytest.approx(1.0)


def test_beamform_zero_matrix():
    w_r, w_t, g = beamform(np.zeros((3, 5)))
    assert g == 0.0
    assert np.linalg.norm(w_r) == 1.0 and np.linalg.norm(w_t) == 1.0


def test_beamform_matches_eigen_oracle(rng):
    for _ in range(100):
        nr, nt = rng.integers(1, 9, 2)
        h = rng.normal(size=(nr, nt)) + 1j * rng.normal(size=(nr, nt))
        w_r, w_t, g = beamform(h)
        lam = np.linalg.eigvalsh(h.conj().T @ h).max()
        assert abs(g - lam) <= 1e-8 * lam
        assert abs(w_r @ h @ w_t) ** 2 == pytest.approx(g, rel=1e-10)


def _unit_rows(z):
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def test_beamform_random_search_lower_bound():
    # adaptive random search: 10^6 random unit-vector pairs drawn around the incumbent
    rng = np.random.default_rng(3)
    h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    _, _, g = beamform(h)
    u = _unit_rows(rng.normal(size=(1, 4)) + 1j * rng.normal(size=(1, 4)))[0]
    v = _unit_rows(rng.normal(size=(1, 4)) + 1j * rng.normal(size=(1, 4)))[0]
    best = abs(u.conj() @ h @ v) ** 2
    spread = 1.0
    for _ in range(100):
        cu = _unit_rows(u + spread * (rng.normal(size=(10_000, 4)) + 1j * rng.normal(size=(10_000, 4))))
        cv = _unit_rows(v + spread * (rng.normal(size=(10_000, 4)) + 1j * rng.normal(size=(10_000, 4))))
        vals = np.abs(np.einsum("ki,ij,kj->k", cu.conj(), h, cv)) ** 2
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, u, v = vals[k], cu[k], cv[k]
        spread *= 0.93
    assert 0.98 * g <= best <= g * (1 + 1e-12)


def test_frobenius_normalization_monte_carlo():
    rng = np.random.default_rng(11)
    tx, rx = ArrayGeometry(16), ArrayGeometry(8)
    vals = [np.linalg.norm(sample_fading(tx, rx, rng)) ** 2 for _ in range(10_000)]
    assert np.mean(vals) == pytest.approx(1.0, abs=0.05)


def _unit_channel(gain_linear_snr_2=True):
    # bf_gain and pathloss arranged so that P*G*g/(W N0) = 2 for a 30 dBm BS with 5 dB noise figure
    params = RadioParams()
    noise = params.noise_mw(5.0)
    p_mw = 1000.0
    bf = 2.0 * noise / p_mw  # with pathloss 0 dB
    return params, LinkChannel(LinkState.LOS, 0.0, bf, 0.0, 0.0, 0.0)


def test_link_rate_examples():
    params, ch = _unit_channel()
    assert link_rate(0.0, ch, 30.0, params, 5.0) == 0.0
    # alpha2 = 0.5 turns SNR 2 into log2(1 + 1) = 1 bit/s/Hz
    assert link_rate(1.0, ch, 30.0, params, 5.0) == pytest.approx(params.bandwidth_hz)
    out = LinkChannel(LinkState.OUT, math.inf, 1.0, 0.0, 0.0, 0.0)
    assert link_rate(1.0, out, 30.0, params, 5.0) == 0.0
    with pytest.raises(ValueError):
        link_rate(1.5, ch, 30.0, params, 5.0)


@given(st.floats(0, 1), st.floats(0, 1))
def test_link_rate_monotone(p1, p2):
    params, ch = _unit_channel()
    lo, hi = sorted((p1, p2))
    assert link_rate(lo, ch, 30.0, params, 5.0) <= link_rate(hi, ch, 30.0, params, 5.0)
    if hi - lo > 1e-9:  # below this log1p rounds the two rates together
        assert link_rate(lo, ch, 30.0, params, 5.0) < link_rate(hi, ch, 30.0, params, 5.0)


def test_snr_slope_formula():
    params = RadioParams()
    got = snr_slope(20.0, 7.0, 0.5, 120.0, params)
    noise_dbm = -174 + 7 + 90
    want = 0.5 * 10 ** ((20 + 10 * math.log10(0.5) - 120 - noise_dbm) / 10)
    assert got == pytest.approx(want, rel=1e-12)


def test_drop_is_deterministic():
    a, b = generate_drop(42), generate_drop(42)
    assert sorted(a.channels) == sorted(b.channels)
    for k in a.channels:
        assert a.channels[k].pathloss_db == b.channels[k].pathloss_db
        np.testing.assert_array_equal(a.channels[k].fading, b.channels[k].fading)


def _three_node_topo(h_same: bool):
    params = RadioParams()
    kinds = ["BS", "RN", "RN"]
    nodes = [Node(i, k, (0.0, float(i)), params.tx_power_dbm[k], params.noise_figure_db[k],
                  ArrayGeometry(params.array_elements[k])) for i, k in enumerate(kinds)]
    rng = np.random.default_rng(5)
    h = sample_fading(nodes[0].array, nodes[1].array, rng)
    samples = {(0, 1): (LinkState.LOS, 90.0, h),
               (0, 2): (LinkState.LOS, 90.0, h if h_same else sample_fading(nodes[0].array, nodes[2].array, rng))}
    return Topology(nodes, _make_channels(nodes, samples, params), [Flow(0, frozenset({1}), frozenset({0}))])


def test_interference_single_link_is_clean():
    topo = _three_node_topo(False)
    p = np.zeros((3, 3))
    p[1, 0] = 1.0
    rep = evaluate_interference(Schedule(np.array([0, 1, 0]), p, 0.0), topo)
    assert rep.links == [(1, 0)]
    assert rep.auto[0] == rep.same_port[0] == rep.cross[0] == 0.0
    assert rep.sinr_rate[0] == rep.if_rate[0]


def test_interference_colocated_transmitters_leak_fully():
    # nodes 1 and 2 see node 0 through the same matrix with the same power and pathloss
    topo = _three_node_topo(True)
    p = np.zeros((3, 3))
    p[1, 0] = p[2, 0] = 1.0
    rep = evaluate_interference(Schedule(np.array([0, 1, 1]), p, 0.0), topo)
    k = rep.links.index((1, 0))
    assert rep.same_port[k] == pytest.approx(rep.desired[k], rel=1e-12)
    assert rep.same_port[k] > 0
    assert rep.auto[k] == 0.0 and rep.cross[k] == 0.0
