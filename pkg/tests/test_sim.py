import csv
import json
import math

import numpy as np
import pytest

from bpmm.network import Topology, generate_drop
from bpmm.power import PowerPolicy
from bpmm.schedulers import Schedule, SchedulerKind
from bpmm.sim import SimConfig, coverage95, run, schedule_key, utility, write_outputs
from bpmm.traffic import CcParams


def _two_node():
    return Topology.from_snr({(0, 1): 15.0}, [((0,), (1,))])


def test_single_link_bottleneck():
    topo = _two_node()
    res = run(topo, SimConfig(frames=10_000, scheduler="exactmbp"))
    c = topo.cap_full[0, 1]
    assert res.summary.rates[0] == pytest.approx(c, rel=0.02)


def test_first_frame():
    topo = generate_drop(2, n_ue=2)
    res = run(topo, SimConfig(frames=1, scheduler="sfwbf"))
    assert res.summary.delivered == 0.0
    assert res.summary.schedule_histogram == {"idle": 1}
    expect = np.where(topo.src_mask, topo.c_max, 0.0)
    np.testing.assert_array_equal(res.final_q, expect)


@pytest.mark.parametrize("kind", ["mfwpac", "mfwmp", "sfwbf"])
def test_determinism(kind, small_drop):
    cfg = SimConfig(frames=300, scheduler=kind, seed=4)
    a, b = run(small_drop, cfg).summary, run(small_drop, cfg).summary
    assert a.to_dict() == b.to_dict()


def test_conservation_and_histogram(small_drop):
    res = run(small_drop, SimConfig(frames=2000, scheduler="mfwlinop", record_interval=7))
    s = res.summary
    assert abs(s.injected - s.delivered - s.final_queue_total) <= 1e-6 * s.injected
    assert sum(s.schedule_histogram.values()) == 2000
    assert [r[0] for r in res.records][-1] == 2000
    assert all(r[0] % 7 == 0 for r in res.records[:-1])
    assert np.all(np.diff([r[2].sum() for r in res.records]) >= 0)


def test_poisson_mode_runs(small_drop):
    res = run(small_drop, SimConfig(frames=500, scheduler="mwm", arrival_mode="poisson"))
    s = res.summary
    assert s.injected == int(s.injected)
    assert abs(s.injected - s.delivered - s.final_queue_total) <= 1e-6 * s.injected


def test_mp_diagnostics_reported(small_drop):
    s = run(small_drop, SimConfig(frames=200, scheduler="sfwmp")).summary
    assert sum(s.mp["reasons"].values()) == 200
    assert s.mp["max_iterations"] <= 100
    s = run(small_drop, SimConfig(frames=50, scheduler="mfwmp", mp_policy="split_power")).summary
    assert s.scheduler == "mfwmp"


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(frames=0)
    with pytest.raises(ValueError):
        SimConfig(arrival_mode="burst")
    with pytest.raises(ValueError):
        SimConfig.from_dict({"frames": 5, "nosuch": 1})
    cfg = SimConfig(frames=5, scheduler="mfwmp", mp_policy="split_power", cc=CcParams(V=2.0, c_max=1.0))
    assert SimConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.mp_policy is PowerPolicy.SPLIT_POWER


def test_schedule_keys():
    n = 3
    p = np.zeros((n, n))
    p[0, 1] = 0.6
    p[0, 2] = 0.4
    a = Schedule(np.array([1, 0, 0]), p, 1.0)
    b = Schedule(np.array([1, 0, 0]), p + np.where(p > 0, 5e-10, 0.0), 1.0)
    assert schedule_key(a) == schedule_key(b) == "100|0>1,0>2"
    assert schedule_key(Schedule.idle(n)) == "idle"


def test_coverage95():
    assert coverage95([100, 50, 30, 20]) == 4
    assert coverage95([190, 5, 5]) == 1
    assert coverage95([1]) == 1


def test_utility():
    assert utility([1.0, 1.0]) == (0.0, False)
    assert utility([math.e ** 2])[0] == pytest.approx(1.0)
    val, bad = utility([3.0, 0.0])
    assert val == -math.inf and bad
    with pytest.raises(ValueError):
        utility([-1.0])


def test_write_outputs(tmp_path, small_drop):
    res = run(small_drop, SimConfig(frames=40, scheduler="mwm", record_interval=10))
    paths = write_outputs(res, tmp_path)
    summary = json.loads(open(paths["summary"]).read())
    assert summary["frames"] == 40 and len(summary["rates"]) == small_drop.n_flows
    with open(paths["frames"]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:2] == ["frame", "sum_queue"] and rows[0][-1] == "schedule_hash"
    assert [int(r[0]) for r in rows[1:]] == [10, 20, 30, 40]
    with open(paths["histogram"]) as fh:
        hist = list(csv.DictReader(fh))
    assert sum(int(r["count"]) for r in hist) == 40
    assert [int(r["rank"]) for r in hist] == list(range(1, len(hist) + 1))


def test_infinite_utility_serializes(tmp_path):
    # the uplink of an isolated UE can never be served
    topo = Topology.from_snr({(0, 1): 3.0}, [((1,), (0,)), ((2,), (0,))], kinds=["BS", "RN", "UE"])
    res = run(topo, SimConfig(frames=20, scheduler="exactmbp"))
    assert res.summary.fairness_violation
    paths = write_outputs(res, tmp_path)
    assert json.loads(open(paths["summary"]).read())["utility"] == "-inf"
