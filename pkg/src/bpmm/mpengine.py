"""Min-sum message passing over the node-role factor graph.

Variables are the node roles ``s_n``; factor ``n`` holds minus the weight node
``n`` collects as a transmitter.  Its scope is ``n`` plus the neighbors with
positive pressure from ``n`` (other neighbors cannot change its value), and
factors with an empty receiver set are dropped.

Factor-to-variable messages need ``min_S [-val(S) + sum_{r in S} delta_r]``
over receiver subsets ``S``.  This is closed form for the modular policies
and for a single destination; waterfilling enumerates the receivers that
prefer transmitting (all others are always worth keeping, as the value is
monotone in ``S``) and falls back to greedy insertion past ``local_cap``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .power import PowerPolicy, positive_pressure, roles_alloc, roles_weight, wf_solve, wf_solve_buf
from .traffic import backpressure

CONVERGED, STABLE, OSCILLATION, MAX_ITERS = 0, 1, 2, 3
REASONS = ("converged", "stable", "oscillation", "max_iters")


@dataclass(frozen=True)
class MpConfig:
    max_iters: int = 100
    tol: float = 1e-9
    local_cap: int = 20  # log2 of the enumerated local assignments
    trace: bool = False  # keep every decoded role vector in Schedule.info["trace"]


@dataclass
class FactorGraph:
    """Edges grouped by factor: ``fac_ptr[k]:fac_ptr[k+1]`` are the edges of factor
    ``fac_node[k]``; the first one connects the transmitter itself."""

    fac_node: np.ndarray
    fac_ptr: np.ndarray
    edge_var: np.ndarray
    n_vars: int

    @property
    def n_edges(self) -> int:
        return int(self.edge_var.size)

    def scope(self, k: int) -> list:
        return [int(v) for v in self.edge_var[self.fac_ptr[k]:self.fac_ptr[k + 1]]]


def build_factor_graph(qpos: np.ndarray, topo) -> FactorGraph:
    fac_node, fac_ptr, edge_var = [], [0], []
    for n in range(topo.n_nodes):
        rx = [m for m in topo.neighbors[n] if qpos[n, m] > 0]
        if not rx:
            continue
        fac_node.append(n)
        edge_var.extend([n, *rx])
        fac_ptr.append(len(edge_var))
    return FactorGraph(np.array(fac_node, dtype=np.int64), np.array(fac_ptr, dtype=np.int64),
                       np.array(edge_var, dtype=np.int64), topo.n_nodes)


def factor_value(n: int, roles, policy: PowerPolicy, Q: np.ndarray, topo) -> float:
    """Minus the weight transmitter ``n`` collects given the roles of its neighbors (0 if ``s_n = 0``)."""
    roles = np.asarray(roles)
    if roles[n] != 1:
        return 0.0
    qpos = positive_pressure(Q, topo)
    rx = [m for m in topo.neighbors[n] if roles[m] == 0 and qpos[n, m] > 0]
    if not rx:
        return 0.0
    w = np.array([qpos[n, m] for m in rx])
    if policy == PowerPolicy.SINGLE_DEST:
        return -float(max(topo.cap_full[n, m] * qpos[n, m] for m in rx))
    if policy == PowerPolicy.OVER_POWER:
        return -float(sum(topo.cap_full[n, m] * qpos[n, m] for m in rx))
    if policy == PowerPolicy.SPLIT_POWER:
        return -float(sum(topo.cap_split[n, m] * qpos[n, m] for m in rx))
    g = np.array([topo.snr[n, m] for m in rx])
    p = np.zeros(len(rx))
    return -float(wf_solve(w, g, len(rx), p) * topo.rate_scale / np.log(2.0))


@njit(cache=True)
def _subset_min(policy, w, g, delta, allowed, forced, k, local_cap, wbuf, gbuf, pbuf, idx, order):
    """``min_S [-val(S) + sum_{S minus forced} delta]`` over ``S`` within ``allowed``, containing ``forced``."""
    if policy == 1 or policy == 2:
        tot = 0.0
        for i in range(k):
            if not allowed[i]:
                continue
            if i == forced:
                tot -= w[i]
            else:
                d = delta[i] - w[i]
                if d < 0.0:
                    tot += d
        return tot
    if policy == 0:
        neg = 0.0
        for i in range(k):
            if allowed[i] and i != forced and delta[i] < 0.0:
                neg += delta[i]
        best = 0.0 if forced < 0 else np.inf
        for i in range(k):
            if not allowed[i]:
                continue
            if i == forced:
                v = -w[i] + neg
            else:
                di = delta[i]
                v = -w[i] + neg + (di if di > 0.0 else 0.0)
            if v < best:
                best = v
        return best
    # waterfilling: always keep members with delta <= 0, search the rest
    base = 0.0
    n0 = 0
    n_pos = 0
    for i in range(k):
        if not allowed[i]:
            continue
        if i == forced:
            wbuf[n0] = w[i]
            gbuf[n0] = g[i]
            n0 += 1
        elif delta[i] <= 0.0:
            wbuf[n0] = w[i]
            gbuf[n0] = g[i]
            base += delta[i]
            n0 += 1
        elif delta[i] < w[i] * math.log(1.0 + g[i]):
            # the value is subadditive, so a member costing more than its
            # standalone value never lowers the minimum
            idx[n_pos] = i
            n_pos += 1
    best = base - wf_solve_buf(wbuf, gbuf, n0, pbuf, order)
    if n_pos == 0:
        return best
    if n_pos <= local_cap:
        for mask in range(1, 1 << n_pos):
            m = n0
            extra = 0.0
            for b in range(n_pos):
                if (mask >> b) & 1:
                    i = idx[b]
                    wbuf[m] = w[i]
                    gbuf[m] = g[i]
                    extra += delta[i]
                    m += 1
            v = base + extra - wf_solve_buf(wbuf, gbuf, m, pbuf, order)
            if v < best:
                best = v
        return best
    # greedy insertion
    used = np.zeros(n_pos, dtype=np.bool_)
    m = n0
    cur = best
    charged = base
    while True:
        arg = -1
        arg_v = cur
        for b in range(n_pos):
            if used[b]:
                continue
            i = idx[b]
            wbuf[m] = w[i]
            gbuf[m] = g[i]
            v = charged + delta[i] - wf_solve_buf(wbuf, gbuf, m + 1, pbuf, order)
            if v < arg_v:
                arg_v = v
                arg = b
        if arg < 0:
            return cur
        i = idx[arg]
        used[arg] = True
        charged += delta[i]
        wbuf[m] = w[i]
        gbuf[m] = g[i]
        m += 1
        cur = arg_v


@njit(cache=True)
def _factor_messages(policy, k, w, g, a0, a1, out0, out1, local_cap, scratch_w, scratch_g, scratch_p, idx,
                     delta, allowed, order):
    """Messages from one factor.  Entry 0 is the transmitter, entries 1..k its receivers."""
    sum_min = 0.0
    sum_one = 0.0
    for i in range(k):
        lo = a0[i + 1] if a0[i + 1] < a1[i + 1] else a1[i + 1]
        sum_min += lo
        sum_one += a1[i + 1]
        delta[i] = a0[i + 1] - a1[i + 1]
        allowed[i] = True
    # to the transmitter
    out0[0] = sum_min
    out1[0] = sum_one + _subset_min(policy, w, g, delta, allowed, -1, k, local_cap, scratch_w, scratch_g,
                                    scratch_p, idx, order)
    # to receiver j
    for j in range(k):
        lo = a0[j + 1] if a0[j + 1] < a1[j + 1] else a1[j + 1]
        off = a0[0] + sum_min - lo
        one = a1[0] + sum_one - a1[j + 1]
        allowed[j] = False
        m_busy = _subset_min(policy, w, g, delta, allowed, -1, k, local_cap, scratch_w, scratch_g, scratch_p,
                             idx, order)
        allowed[j] = True
        m_free = _subset_min(policy, w, g, delta, allowed, j, k, local_cap, scratch_w, scratch_g, scratch_p, idx, order)
        v0 = one + m_free
        v1 = one + m_busy
        out0[j + 1] = off if off < v0 else v0
        out1[j + 1] = off if off < v1 else v1


@njit(cache=True)
def _run(policy, fac_ptr, edge_var, fw, fg, n_vars, max_iters, tol, local_cap,
         indptr, indices, qpos, capf, caps, snr, rate_scale):
    n_fac = fac_ptr.shape[0] - 1
    n_edges = edge_var.shape[0]
    m0 = np.zeros(n_edges)
    m1 = np.zeros(n_edges)
    n0 = np.zeros(n_edges)
    n1 = np.zeros(n_edges)
    v0 = np.zeros(n_edges)
    v1 = np.zeros(n_edges)
    b0 = np.zeros(n_vars)
    b1 = np.zeros(n_vars)
    size = 1
    for k in range(n_fac):
        d = fac_ptr[k + 1] - fac_ptr[k]
        if d > size:
            size = d
    sw = np.empty(size)
    sg = np.empty(size)
    sp = np.empty(size)
    idx = np.empty(size, dtype=np.int64)
    delta = np.empty(size)
    allowed = np.empty(size, dtype=np.bool_)
    order = np.empty(size, dtype=np.int64)
    hist = np.zeros((4, n_vars), dtype=np.int8)
    trace = np.zeros((max_iters, n_vars), dtype=np.int8)
    best_s = np.zeros(n_vars, dtype=np.int8)
    best_w = 0.0
    s = np.zeros(n_vars, dtype=np.int8)
    reason = MAX_ITERS
    it = 0
    while it < max_iters:
        it += 1
        # variable -> factor
        for v in range(n_vars):
            b0[v] = 0.0
            b1[v] = 0.0
        for e in range(n_edges):
            b0[edge_var[e]] += m0[e]
            b1[edge_var[e]] += m1[e]
        for e in range(n_edges):
            x0 = b0[edge_var[e]] - m0[e]
            x1 = b1[edge_var[e]] - m1[e]
            lo = x0 if x0 < x1 else x1
            v0[e] = x0 - lo
            v1[e] = x1 - lo
        # factor -> variable
        for k in range(n_fac):
            a = fac_ptr[k]
            b = fac_ptr[k + 1]
            _factor_messages(policy, b - a - 1, fw[a + 1:b], fg[a + 1:b], v0[a:b], v1[a:b], n0[a:b], n1[a:b],
                             local_cap, sw, sg, sp, idx, delta, allowed, order)
        change = 0.0
        scale = 0.0
        for e in range(n_edges):
            lo = n0[e] if n0[e] < n1[e] else n1[e]
            n0[e] -= lo
            n1[e] -= lo
            d = abs(n0[e] - m0[e]) + abs(n1[e] - m1[e])
            if d > change:
                change = d
            mag = n0[e] + n1[e]
            if mag > scale:
                scale = mag
            m0[e] = n0[e]
            m1[e] = n1[e]
        # decode
        for v in range(n_vars):
            b0[v] = 0.0
            b1[v] = 0.0
        for e in range(n_edges):
            b0[edge_var[e]] += m0[e]
            b1[edge_var[e]] += m1[e]
        for v in range(n_vars):
            s[v] = 1 if b1[v] < b0[v] else 0
        for h in range(3):
            hist[h] = hist[h + 1]
        hist[3] = s
        trace[it - 1] = s
        w = roles_weight(policy, s, indptr, indices, qpos, capf, caps, snr, rate_scale)
        if w > best_w:
            best_w = w
            best_s[:] = s
        if change <= tol * (1.0 + scale):
            reason = CONVERGED
            break
        if it >= 3 and np.all(hist[3] == hist[2]) and np.all(hist[2] == hist[1]):
            reason = STABLE
            break
        if it >= 4 and np.all(hist[3] == hist[1]) and np.all(hist[2] == hist[0]) and not np.all(hist[3] == hist[2]):
            reason = OSCILLATION
            w_prev = roles_weight(policy, hist[2], indptr, indices, qpos, capf, caps, snr, rate_scale)
            if w_prev > w:
                s[:] = hist[2]
            break
    if reason == MAX_ITERS:
        s[:] = best_s
    return s, it, reason, trace[:it]


def _factor_weights(fg: FactorGraph, policy: PowerPolicy, qpos, topo):
    """Per-edge receiver weights and slopes, normalized so the largest weight is about 1."""
    tx = np.repeat(fg.fac_node, np.diff(fg.fac_ptr))
    rx = fg.edge_var
    if policy == PowerPolicy.WATERFILLING:
        scale = float(qpos.max(initial=0.0)) or 1.0
        w = qpos[tx, rx] / scale
        g = topo.snr[tx, rx].astype(float)
    else:
        cap = topo.cap_split if policy == PowerPolicy.SPLIT_POWER else topo.cap_full
        w = cap[tx, rx] * qpos[tx, rx]
        w = w / (float(w.max(initial=0.0)) or 1.0)
        g = np.zeros_like(w)
    return np.ascontiguousarray(w), np.ascontiguousarray(g)


def run_mp(q, topo, policy: PowerPolicy = PowerPolicy.WATERFILLING, cfg: MpConfig | None = None, *, Q=None):
    """Min-sum scheduling heuristic; returns a :class:`bpmm.schedulers.Schedule`."""
    from .schedulers import Schedule

    cfg = cfg or MpConfig()
    policy = PowerPolicy(policy)
    if Q is None:
        Q, _ = backpressure(q, topo)
    qpos = positive_pressure(Q, topo)
    fg = build_factor_graph(qpos, topo)
    indptr, indices = topo.csr
    n = topo.n_nodes
    if fg.fac_node.size == 0:
        sch = Schedule.idle(n, policy)
        sch.info = {"iterations": 0, "reason": "converged"}
        return sch
    fw, fgain = _factor_weights(fg, policy, qpos, topo)
    s, it, reason, trace = _run(int(policy), fg.fac_ptr, fg.edge_var, fw, fgain, n, cfg.max_iters, cfg.tol,
                         cfg.local_cap, indptr, indices, qpos, topo.cap_full, topo.cap_split, topo.snr,
                         topo.rate_scale)
    p = roles_alloc(int(policy), s, indptr, indices, qpos, topo.cap_full, topo.snr, topo.degree)
    w = roles_weight(int(policy), s, indptr, indices, qpos, topo.cap_full, topo.cap_split, topo.snr,
                     topo.rate_scale)
    info = {"iterations": int(it), "reason": REASONS[reason]}
    if cfg.trace:
        info["trace"] = trace.copy()
    return Schedule(s.copy(), p, float(w), policy, info)
