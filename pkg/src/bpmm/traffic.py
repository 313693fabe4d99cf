"""Queues, elastic arrivals under NUM congestion control, and the per-frame queue update."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True)
class CcParams:
    """Congestion control tuning.  ``utility`` is fixed to ``U(r) = 0.5 ln r``."""

    V: float
    c_max: float
    utility: str = "log-half"

    def __post_init__(self):
        if not self.V > 0:
            raise ValueError("V must be positive")
        if self.utility != "log-half":
            raise ValueError(f"unsupported utility {self.utility!r}")

    @classmethod
    def for_topology(cls, topo, v_factor: float = 10.0) -> "CcParams":
        c_max = topo.c_max
        return cls(V=v_factor * c_max ** 2, c_max=c_max)


@dataclass
class RateAssignment:
    """Per-link flow choice (-1 when idle) and the bits it carries this frame."""

    flow: np.ndarray
    rate: np.ndarray

    def as_dict(self) -> dict:
        return {(int(n), int(m), int(self.flow[n, m])): float(self.rate[n, m])
                for n, m in zip(*np.nonzero(self.rate > 0))}


def backpressure(q: np.ndarray, topo):
    """``Q[n, m] = max_f (q[n, f] - q[m, f])`` on links, with the maximizing flow.

    Ties go to the lowest flow index; non-links get ``Q = 0`` and flow ``-1``.
    """
    diff = q[:, None, :] - q[None, :, :]
    best = np.argmax(diff, axis=2)
    Q = np.take_along_axis(diff, best[..., None], axis=2)[..., 0]
    adj = topo.adj
    return np.where(adj, Q, 0.0), np.where(adj, best, -1)


def congestion_control(q: np.ndarray, topo, cc: CcParams) -> np.ndarray:
    """Source rates ``clamp(V / (2 q), 0, C_max)``; zero away from sources."""
    with np.errstate(divide="ignore", over="ignore"):
        lam = np.where(q > 0, cc.V / (2.0 * q), np.inf)
    lam = np.clip(lam, 0.0, cc.c_max)
    return np.where(topo.src_mask, lam, 0.0)


def sample_arrivals(lam: np.ndarray, mode: str = "fluid", rng: np.random.Generator | None = None) -> np.ndarray:
    if np.any(lam < 0):
        raise ValueError("arrival rates must be nonnegative")
    if mode == "fluid":
        return np.array(lam, dtype=float)
    if mode == "poisson":
        return rng.poisson(lam).astype(float)
    raise ValueError(f"unknown arrival mode {mode!r}")


def inject_arrivals(q: np.ndarray, lam: np.ndarray, topo, mode: str = "fluid",
                    rng: np.random.Generator | None = None) -> np.ndarray:
    a = sample_arrivals(lam, mode, rng)
    out = q + a
    out[topo.dst_mask] = 0.0
    return out


@njit(cache=True)
def _assign(q, p, snr, rate_scale, indptr, indices):
    n_nodes, n_flows = q.shape
    flow = -np.ones((n_nodes, n_nodes), dtype=np.int64)
    cap = np.zeros((n_nodes, n_nodes))
    rate = np.zeros((n_nodes, n_nodes))
    share = np.zeros(n_flows)
    for n in range(n_nodes):
        for f in range(n_flows):
            share[f] = 0.0
        for e in range(indptr[n], indptr[n + 1]):
            m = indices[e]
            if p[n, m] <= 0.0:
                continue
            c = rate_scale * math.log2(1.0 + snr[n, m] * p[n, m])
            best = 0.0
            fb = -1
            for f in range(n_flows):
                d = q[n, f] - q[m, f]
                if d > best:
                    best = d
                    fb = f
            if fb < 0 or c <= 0.0:
                continue
            flow[n, m] = fb
            cap[n, m] = c
            share[fb] += c
        for e in range(indptr[n], indptr[n + 1]):
            m = indices[e]
            fb = flow[n, m]
            if fb < 0:
                continue
            r = q[n, fb] * cap[n, m] / share[fb]
            rate[n, m] = r if r < cap[n, m] else cap[n, m]
    return flow, rate


@njit(cache=True)
def _update(q, flow, rate, arrivals, dst):
    n_nodes, n_flows = q.shape
    out = q + arrivals
    delivered = np.zeros(n_flows)
    for n in range(n_nodes):
        for m in range(n_nodes):
            f = flow[n, m]
            if f < 0:
                continue
            r = rate[n, m]
            out[n, f] -= r
            if dst[m, f]:
                delivered[f] += r
            else:
                out[m, f] += r
    for n in range(n_nodes):
        for f in range(n_flows):
            if dst[n, f]:
                out[n, f] = 0.0
    return out, delivered


def link_capacities(p: np.ndarray, topo) -> np.ndarray:
    return np.where(p > 0, topo.rate_scale * np.log2(1.0 + topo.snr * p), 0.0)


def assign_flow_rates(q: np.ndarray, p: np.ndarray, topo) -> RateAssignment:
    """Give each scheduled link to its max-backlog-difference flow.

    Links of one transmitter that serve the same flow split that queue in
    proportion to their capacities.  Links whose best backlog difference is
    not positive stay idle.
    """
    indptr, indices = topo.csr
    flow, rate = _assign(np.ascontiguousarray(q, dtype=float), np.ascontiguousarray(p, dtype=float),
                         topo.snr, topo.rate_scale, indptr, indices)
    return RateAssignment(flow, rate)


def update_queues(q: np.ndarray, ra: RateAssignment, arrivals: np.ndarray, topo):
    """Advance one frame.  Returns ``(q_next, delivered_per_flow)``."""
    out, delivered = _update(np.ascontiguousarray(q, dtype=float), ra.flow, ra.rate,
                             np.ascontiguousarray(arrivals, dtype=float), topo.dst_mask)
    tol = 1e-9 * max(1.0, float(np.max(q, initial=0.0)))
    assert np.all(out >= -tol), "negative queue after update"
    # rounding residue of queues drained exactly to zero
    np.maximum(out, 0.0, out=out)
    return out, delivered
