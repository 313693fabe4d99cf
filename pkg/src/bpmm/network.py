"""Picocell drops: node placement, connectivity graph and traffic flows."""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .channel import (
    ArrayGeometry,
    LinkChannel,
    LinkState,
    RadioParams,
    beamform,
    fading_from_list,
    fading_to_list,
    sample_fading,
    sample_link_state,
    sample_pathloss,
    snr_slope,
)

DROP_FORMAT = "bpmm-drop/1"
RN_DISTANCE = 115.0
KINDS = ("BS", "RN", "UE")


@dataclass(frozen=True)
class Node:
    id: int
    kind: str
    position: tuple
    tx_power_dbm: float
    noise_figure_db: float
    array: ArrayGeometry

    @property
    def tx_power_mw(self) -> float:
        return 10.0 ** (self.tx_power_dbm / 10.0)


@dataclass(frozen=True)
class Flow:
    id: int
    sources: frozenset
    destinations: frozenset

    def __post_init__(self):
        if not self.sources or not self.destinations:
            raise ValueError("a flow needs at least one source and one destination")
        if self.sources & self.destinations:
            raise ValueError("sources and destinations of a flow must be disjoint")


def pair_allowed(kind_a: str, kind_b: str) -> bool:
    """UE-UE and BS-BS pairs never form wireless links."""
    return not (kind_a == kind_b and kind_a in ("UE", "BS"))


class Topology:
    """Immutable network world: nodes, symmetric neighbor sets, channels and flows.

    Dense matrices used by the schedulers (``snr``, ``cap_full``, ``cap_split``,
    ``adj``) are derived once on first access.
    """

    def __init__(self, nodes, channels: dict, flows, params: RadioParams | None = None, meta: dict | None = None):
        self.nodes = list(nodes)
        self.channels = dict(channels)
        self.flows = list(flows)
        self.params = params or RadioParams()
        self.meta = dict(meta or {})
        n = len(self.nodes)
        nbrs = [set() for _ in range(n)]
        for (a, b) in self.channels:
            nbrs[a].add(b)
        for a in range(n):
            for b in nbrs[a]:
                if a not in nbrs[b]:
                    raise ValueError(f"link ({a},{b}) has no reverse direction")
        self.neighbors = [tuple(sorted(s)) for s in nbrs]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_flows(self) -> int:
        return len(self.flows)

    @property
    def omega_max(self) -> int:
        return max((len(s) for s in self.neighbors), default=0)

    @property
    def rate_scale(self) -> float:
        return self.params.rate_scale

    @cached_property
    def adj(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes), dtype=np.bool_)
        for (n, m) in self.channels:
            a[n, m] = True
        return a

    @cached_property
    def degree(self) -> np.ndarray:
        return np.array([len(s) for s in self.neighbors], dtype=np.int64)

    @cached_property
    def snr(self) -> np.ndarray:
        s = np.zeros((self.n_nodes, self.n_nodes))
        for (n, m), ch in self.channels.items():
            s[n, m] = ch.snr_full
        return s

    @cached_property
    def cap_full(self) -> np.ndarray:
        return self.rate_scale * np.log2(1.0 + self.snr)

    @cached_property
    def cap_split(self) -> np.ndarray:
        deg = np.maximum(self.degree, 1)[:, None]
        return self.rate_scale * np.log2(1.0 + self.snr / deg)

    @cached_property
    def src_mask(self) -> np.ndarray:
        m = np.zeros((self.n_nodes, self.n_flows), dtype=np.bool_)
        for f, flow in enumerate(self.flows):
            m[list(flow.sources), f] = True
        return m

    @cached_property
    def dst_mask(self) -> np.ndarray:
        m = np.zeros((self.n_nodes, self.n_flows), dtype=np.bool_)
        for f, flow in enumerate(self.flows):
            m[list(flow.destinations), f] = True
        return m

    @cached_property
    def c_max(self) -> float:
        """Largest full-power link capacity (bits/frame)."""
        return float(self.cap_full.max()) if self.channels else 0.0

    @cached_property
    def csr(self):
        """Neighbor lists as ``(indptr, indices)`` int64 arrays."""
        indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(self.degree)
        indices = np.array([m for s in self.neighbors for m in s], dtype=np.int64)
        return indptr, indices

    @classmethod
    def from_snr(cls, snr: dict, flows, kinds=None, params: RadioParams | None = None) -> "Topology":
        """Build a synthetic topology from full-power SNR slopes per directed link.

        Missing reverse directions get the same SNR.  Flows may be given as
        ``Flow`` objects or ``(sources, destinations)`` pairs.
        """
        snr = dict(snr)
        for (a, b), v in list(snr.items()):
            snr.setdefault((b, a), v)
        n = 1 + max(max(k) for k in snr) if snr else 0
        flow_objs = []
        for f, fl in enumerate(flows):
            if isinstance(fl, Flow):
                flow_objs.append(fl)
            else:
                src, dst = fl
                flow_objs.append(Flow(f, frozenset(np.atleast_1d(src).tolist()), frozenset(np.atleast_1d(dst).tolist())))
                n = max(n, 1 + max(flow_objs[-1].sources | flow_objs[-1].destinations))
        kinds = list(kinds) if kinds is not None else ["RN"] * n
        params = params or RadioParams()
        nodes = [
            Node(i, kinds[i], (0.0, 0.0), params.tx_power_dbm[kinds[i]], params.noise_figure_db[kinds[i]],
                 ArrayGeometry(params.array_elements[kinds[i]]))
            for i in range(n)
        ]
        deg = [0] * n
        for (a, _b) in snr:
            deg[a] += 1
        channels = {}
        for (a, b), g in snr.items():
            full = params.rate_scale * math.log2(1.0 + g)
            split = params.rate_scale * math.log2(1.0 + g / deg[a])
            channels[(a, b)] = LinkChannel(LinkState.LOS, 0.0, 1.0, float(g), full, split)
        return cls(nodes, channels, flow_objs, params)


def _node_for(i: int, kind: str, pos, params: RadioParams) -> Node:
    return Node(i, kind, (float(pos[0]), float(pos[1])), params.tx_power_dbm[kind],
                params.noise_figure_db[kind], ArrayGeometry(params.array_elements[kind]))


def _make_channels(nodes, pair_samples: dict, params: RadioParams) -> dict:
    """Directed LinkChannels from per-pair ``(state, pathloss, H)`` with ``H`` for ``a -> b``, a < b."""
    deg = [0] * len(nodes)
    for (a, b) in pair_samples:
        deg[a] += 1
        deg[b] += 1
    channels = {}
    for (a, b), (state, pl, h) in pair_samples.items():
        for tx, rx, mat in ((a, b, h), (b, a, h.T)):
            w_r, w_t, gain = beamform(mat)
            ntx, nrx = nodes[tx], nodes[rx]
            g = snr_slope(ntx.tx_power_dbm, nrx.noise_figure_db, gain, pl, params)
            full = params.rate_scale * math.log2(1.0 + g)
            split = params.rate_scale * math.log2(1.0 + g / deg[tx])
            channels[(tx, rx)] = LinkChannel(state, pl, gain, g, full, split, mat, w_t, w_r)
    return channels


def generate_drop(seed: int, n_ue: int = 10, radius: float = 200.0, params: RadioParams | None = None) -> Topology:
    """Random picocell: BS at the origin, four RNs on a 115 m ring, ``n_ue`` UEs on a disk.

    Every UE gets an uplink flow (UE -> BS) followed by a downlink flow
    (BS -> UE).
    """
    if n_ue < 1:
        raise ValueError("n_ue must be >= 1")
    params = params or RadioParams()
    rng = np.random.default_rng(seed)
    positions = [(0.0, 0.0)]
    kinds = ["BS"]
    for k in range(4):
        ang = k * math.pi / 2
        positions.append((RN_DISTANCE * math.cos(ang), RN_DISTANCE * math.sin(ang)))
        kinds.append("RN")
    r = radius * np.sqrt(rng.random(n_ue))
    phi = rng.uniform(0.0, 2 * math.pi, n_ue)
    for k in range(n_ue):
        positions.append((float(r[k] * math.cos(phi[k])), float(r[k] * math.sin(phi[k]))))
        kinds.append("UE")
    nodes = [_node_for(i, kinds[i], positions[i], params) for i in range(len(kinds))]

    samples = {}
    for a in range(len(nodes)):
        for b in range(a + 1, len(nodes)):
            if not pair_allowed(kinds[a], kinds[b]):
                continue
            d = math.dist(positions[a], positions[b])
            if d <= 0.0:
                continue
            state = sample_link_state(d, rng)
            if state is LinkState.OUT:
                continue
            pl = sample_pathloss(d, state, rng)
            if pl > params.max_pathloss_db:
                continue
            samples[(a, b)] = (state, pl, sample_fading(nodes[a].array, nodes[b].array, rng))
    channels = _make_channels(nodes, samples, params)

    flows = []
    for k, ue in enumerate(range(5, 5 + n_ue)):
        flows.append(Flow(2 * k, frozenset({ue}), frozenset({0})))
        flows.append(Flow(2 * k + 1, frozenset({0}), frozenset({ue})))
    meta = {"seed": int(seed), "n_ue": int(n_ue), "radius": float(radius)}
    return Topology(nodes, channels, flows, params, meta)


@dataclass
class Diagnostics:
    omega_max: int
    isolated_nodes: list = field(default_factory=list)
    infeasible_flows: list = field(default_factory=list)

    @property
    def flags(self) -> list:
        out = [f"isolated node {n}" for n in self.isolated_nodes]
        out += [f"infeasible flow {f}" for f in self.infeasible_flows]
        return out

    @property
    def ok(self) -> bool:
        return not self.isolated_nodes and not self.infeasible_flows


def _reachable(topo: Topology, starts) -> set:
    seen = set(starts)
    todo = deque(starts)
    while todo:
        n = todo.popleft()
        for m in topo.neighbors[n]:
            if m not in seen:
                seen.add(m)
                todo.append(m)
    return seen


def validate(topo: Topology) -> Diagnostics:
    """Connectivity diagnostics; never raises."""
    diag = Diagnostics(topo.omega_max)
    diag.isolated_nodes = [n for n in range(topo.n_nodes) if not topo.neighbors[n]]
    for flow in topo.flows:
        if not (_reachable(topo, sorted(flow.sources)) & flow.destinations):
            diag.infeasible_flows.append(flow.id)
    return diag


def topology_to_dict(topo: Topology, include_fading: bool = True) -> dict:
    links = []
    for (a, b) in sorted(topo.channels):
        ch = topo.channels[(a, b)]
        rec = {
            "tx": a, "rx": b, "state": ch.state.value, "pathloss_db": ch.pathloss_db,
            "bf_gain": ch.bf_gain, "snr_full": ch.snr_full,
            "cap_full_power": ch.cap_full_power, "cap_split_power": ch.cap_split_power,
        }
        # reverse direction uses the transpose, so only a < b stores the matrix
        if include_fading and ch.fading is not None and a < b:
            rec["fading"] = fading_to_list(ch.fading)
        links.append(rec)
    return {
        "format": DROP_FORMAT,
        "meta": topo.meta,
        "params": topo.params.to_dict(),
        "nodes": [
            {"id": nd.id, "kind": nd.kind, "x": nd.position[0], "y": nd.position[1],
             "tx_power_dbm": nd.tx_power_dbm, "noise_figure_db": nd.noise_figure_db,
             "elements": nd.array.element_count}
            for nd in topo.nodes
        ],
        "links": links,
        "flows": [
            {"id": fl.id, "sources": sorted(fl.sources), "destinations": sorted(fl.destinations)}
            for fl in topo.flows
        ],
    }


def topology_from_dict(d: dict) -> Topology:
    if d.get("format") != DROP_FORMAT:
        raise ValueError(f"unsupported drop format {d.get('format')!r}")
    params = RadioParams.from_dict(d["params"])
    nodes = [
        Node(r["id"], r["kind"], (r["x"], r["y"]), r["tx_power_dbm"], r["noise_figure_db"], ArrayGeometry(r["elements"]))
        for r in d["nodes"]
    ]
    recs = {(r["tx"], r["rx"]): r for r in d["links"]}
    channels = {}
    for (a, b), r in recs.items():
        h = None
        if "fading" in r:
            h = fading_from_list(r["fading"])
        elif a > b and "fading" in recs.get((b, a), {}):
            h = fading_from_list(recs[(b, a)]["fading"]).T
        w_r = w_t = None
        if h is not None:
            w_r, w_t, _ = beamform(h)
        channels[(a, b)] = LinkChannel(
            LinkState(r["state"]), float(r["pathloss_db"]), float(r["bf_gain"]), float(r["snr_full"]),
            float(r["cap_full_power"]), float(r["cap_split_power"]), h, w_t, w_r,
        )
    flows = [Flow(r["id"], frozenset(r["sources"]), frozenset(r["destinations"])) for r in d["flows"]]
    return Topology(nodes, channels, flows, params, d.get("meta"))


def dumps(topo: Topology, include_fading: bool = True) -> str:
    return json.dumps(topology_to_dict(topo, include_fading), separators=(",", ":"))


def loads(text: str) -> Topology:
    return topology_from_dict(json.loads(text))
