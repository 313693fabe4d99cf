"""Frame loop: congestion control, scheduling, flow-rate assignment and queue update."""
from __future__ import annotations

import collections
import csv
import json
import math
import os
import tempfile
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from .mpengine import MpConfig
from .power import PowerPolicy
from .schedulers import (DEFAULT_EXHAUSTIVE_MAX_N, MP_KINDS, FrameScheduler, InfeasibleSchedule, Schedule,
                         SchedulerKind, audit_schedule)
from .traffic import (CcParams, assign_flow_rates, backpressure, congestion_control, sample_arrivals,
                      update_queues)

IDLE_KEY = "idle"


@dataclass
class SimConfig:
    frames: int = 200_000
    scheduler: SchedulerKind = SchedulerKind.EXACT_MBP
    cc: CcParams | None = None  # None: V = v_factor * C_max^2 for the drop
    v_factor: float = 10.0
    arrival_mode: str = "fluid"
    seed: int = 0
    record_interval: int = 1
    exhaustive_max_n: int = DEFAULT_EXHAUSTIVE_MAX_N
    mp_max_iters: int = 100
    mp_policy: PowerPolicy | None = None
    milp_method: str = "roles"
    audit: bool = True

    def __post_init__(self):
        self.scheduler = SchedulerKind(self.scheduler)
        if self.mp_policy is not None:
            self.mp_policy = _parse_policy(self.mp_policy)
        if self.frames < 1:
            raise ValueError("frames must be at least 1")
        if self.record_interval < 1:
            raise ValueError("record_interval must be at least 1")
        if self.arrival_mode not in ("fluid", "poisson"):
            raise ValueError(f"unknown arrival mode {self.arrival_mode!r}")
        if self.milp_method not in ("roles", "bnb"):
            raise ValueError(f"unknown milp method {self.milp_method!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scheduler"] = self.scheduler.value
        d["mp_policy"] = None if self.mp_policy is None else self.mp_policy.name.lower()
        d["cc"] = None if self.cc is None else {"V": self.cc.V, "c_max": self.cc.c_max}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if d.get("cc") is not None:
            d["cc"] = CcParams(**d["cc"])
        return cls(**d)


def _parse_policy(v) -> PowerPolicy:
    if isinstance(v, str):
        try:
            return PowerPolicy[v.upper().replace("-", "_")]
        except KeyError:
            raise ValueError(f"unknown power policy {v!r}") from None
    return PowerPolicy(v)


def schedule_key(sch: Schedule) -> str:
    """Role vector plus the active links; ``'idle'`` when nothing transmits."""
    n_idx, m_idx = np.nonzero(sch.p > 1e-9)
    if n_idx.size == 0:
        return IDLE_KEY
    roles = "".join("1" if x == 1 else "0" for x in np.asarray(sch.s))
    links = ",".join(f"{a}>{b}" for a, b in zip(n_idx, m_idx))
    return f"{roles}|{links}"


def key_hash(key: str) -> str:
    return f"{zlib.crc32(key.encode()):08x}"


def coverage95(counts) -> int:
    """Fewest distinct schedules whose frames add up to at least 95% of all frames."""
    counts = sorted((int(c) for c in counts), reverse=True)
    total = sum(counts)
    cum = 0
    for k, c in enumerate(counts, 1):
        cum += c
        if 100 * cum >= 95 * total:
            return k
    return len(counts)


def utility(rates) -> tuple[float, bool]:
    """``sum 0.5 ln x_f``.  Returns ``(value, violation)``; a zero rate gives ``-inf`` and flags it."""
    rates = np.asarray(rates, dtype=float)
    if np.any(rates < 0):
        raise ValueError("rates must be nonnegative")
    if np.any(rates == 0):
        return -math.inf, True
    return float(0.5 * np.log(rates).sum()), False


@dataclass
class SummaryMetrics:
    scheduler: str
    frames: int
    rates: list
    sum_rate: float
    utility: float
    fairness_violation: bool
    schedule_histogram: dict
    coverage95: int
    final_max_queue: float
    injected: float
    delivered: float
    final_queue_total: float
    rate_drift: float
    mp: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(self.utility):
            d["utility"] = "-inf"
        return d


@dataclass
class SimResult:
    summary: SummaryMetrics
    records: list  # (frame, sum_queue, cumulative delivered per flow, key hash)
    max_queue: np.ndarray  # per frame, after the update
    final_q: np.ndarray


def make_cc(topo, cfg: SimConfig) -> CcParams:
    return cfg.cc if cfg.cc is not None else CcParams.for_topology(topo, cfg.v_factor)


def run(topo, cfg: SimConfig, on_frame=None) -> SimResult:
    """Simulate ``cfg.frames`` frames on ``topo`` from empty queues.

    Each frame schedules on the current queues, then the arrivals admitted
    by congestion control and the scheduled transfers update them together.
    ``on_frame(t, schedule)`` is called after every frame.  Raises
    :class:`InfeasibleSchedule` if a scheduler returns an infeasible schedule.
    """
    rng = np.random.default_rng(cfg.seed)
    cc = make_cc(topo, cfg)
    sched = FrameScheduler(cfg.scheduler, topo, rng, exhaustive_max_n=cfg.exhaustive_max_n,
                           mp_cfg=MpConfig(max_iters=cfg.mp_max_iters),
                           mp_policy=cfg.mp_policy if cfg.scheduler in MP_KINDS else None,
                           milp_method=cfg.milp_method)
    n, f = topo.n_nodes, topo.n_flows
    q = np.zeros((n, f))
    delivered = np.zeros(f)
    injected = 0.0
    hist = collections.Counter()
    hashes = {}
    records = []
    max_queue = np.empty(cfg.frames)
    drift_mark = None
    drift_frame = int(0.9 * cfg.frames)
    mp_iters = []
    mp_reasons = collections.Counter()
    for t in range(cfg.frames):
        lam = congestion_control(q, topo, cc)
        a = sample_arrivals(lam, cfg.arrival_mode, rng)
        Q, _ = backpressure(q, topo)
        sch = sched(q, Q)
        if cfg.audit:
            audit_schedule(sch, topo)
        if cfg.scheduler in MP_KINDS:
            mp_iters.append(sch.info["iterations"])
            mp_reasons[sch.info["reason"]] += 1
        ra = assign_flow_rates(q, sch.p, topo)
        q, got = update_queues(q, ra, a, topo)
        delivered += got
        injected += float(a.sum())
        key = schedule_key(sch)
        hist[key] += 1
        max_queue[t] = q.max(initial=0.0)
        if t + 1 == drift_frame:
            drift_mark = delivered.copy()
        if (t + 1) % cfg.record_interval == 0 or t + 1 == cfg.frames:
            h = hashes.get(key)
            if h is None:
                h = hashes[key] = key_hash(key)
            records.append((t + 1, float(q.sum()), delivered.copy(), h))
        if on_frame is not None:
            on_frame(t, sch)
    rates = delivered / cfg.frames
    u, violation = utility(rates)
    if drift_mark is not None and drift_frame > 0:
        early = drift_mark / drift_frame
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(rates > 0, np.abs(rates - early) / rates, 0.0)
        drift = float(rel.max(initial=0.0))
    else:
        drift = 0.0
    mp = {}
    if mp_iters:
        mp = {"mean_iterations": float(np.mean(mp_iters)), "max_iterations": int(max(mp_iters)),
              "reasons": dict(mp_reasons)}
    summary = SummaryMetrics(
        scheduler=cfg.scheduler.value, frames=cfg.frames, rates=[float(x) for x in rates],
        sum_rate=float(rates.sum()), utility=u, fairness_violation=violation,
        schedule_histogram=dict(hist.most_common()), coverage95=coverage95(hist.values()),
        final_max_queue=float(q.max(initial=0.0)), injected=injected, delivered=float(delivered.sum()),
        final_queue_total=float(q.sum()), rate_drift=drift, mp=mp,
        meta={"seed": cfg.seed, "V": cc.V, "c_max": cc.c_max, "drop": dict(topo.meta or {})})
    return SimResult(summary, records, max_queue, q)


# -- output files -------------------------------------------------------------

def atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_outputs(res: SimResult, out_dir, *, summary_name="summary.json", frames_name="frames.csv",
                  histogram_name="histogram.csv") -> dict:
    s = res.summary
    n_flows = len(s.rates)
    paths = {k: os.path.join(out_dir, v) for k, v in
             (("summary", summary_name), ("frames", frames_name), ("histogram", histogram_name))}
    atomic_write(paths["summary"], json.dumps(s.to_dict(), indent=2) + "\n")
    header = ["frame", "sum_queue", *[f"delivered_f{k}" for k in range(n_flows)], "schedule_hash"]
    rows = ([t, repr(sq), *[repr(float(x)) for x in d], h] for t, sq, d, h in res.records)
    atomic_write(paths["frames"], _csv_text(header, rows))
    hist_rows = ((key, count, rank) for rank, (key, count) in enumerate(s.schedule_histogram.items(), 1))
    atomic_write(paths["histogram"], _csv_text(["key", "count", "rank"], hist_rows))
    return paths
