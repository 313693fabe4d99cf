"""Per-transmitter power allocation conditioned on node roles.

Roles are encoded as int8 arrays: 1 transmitter, 0 receiver, -1 undecided
(used by the search routines; an undecided node counts both as a possible
transmitter and as an available receiver).
"""
from __future__ import annotations

import enum
import math

import numpy as np
from numba import njit

LN2 = math.log(2.0)


class PowerPolicy(enum.IntEnum):
    SINGLE_DEST = 0
    OVER_POWER = 1
    SPLIT_POWER = 2
    WATERFILLING = 3


@njit(cache=True)
def wf_solve_buf(w, g, k, p, order):
    """Weighted waterfilling over the first ``k`` entries.

    Maximizes ``sum w_i ln(1 + g_i p_i)`` subject to ``sum p_i <= 1``; writes
    the allocation into ``p`` and returns the optimum.  All ``w``, ``g`` > 0.
    ``order`` is scratch space of length ``>= k``.
    """
    if k == 0:
        return 0.0
    # insertion sort by w * g, descending; stable so ties keep input order
    for i in range(k):
        p[i] = 0.0
        key = w[i] * g[i]
        j = i
        while j > 0 and w[order[j - 1]] * g[order[j - 1]] < key:
            order[j] = order[j - 1]
            j -= 1
        order[j] = i
    sw = 0.0
    sinv = 0.0
    nu = 0.0
    n_act = 0
    for j in range(k):
        i = order[j]
        sw2 = sw + w[i]
        sinv2 = sinv + 1.0 / g[i]
        nu2 = sw2 / (1.0 + sinv2)
        if w[i] * g[i] <= nu2:
            break
        sw = sw2
        sinv = sinv2
        nu = nu2
        n_act = j + 1
    total = 0.0
    for j in range(n_act):
        i = order[j]
        pi = w[i] / nu - 1.0 / g[i]
        p[i] = pi if pi > 0.0 else 0.0
        total += p[i]
    # the active set uses the whole budget; renormalizing removes the
    # cancellation error of w/nu - 1/g when some g is tiny
    val = 0.0
    for j in range(n_act):
        i = order[j]
        p[i] = p[i] / total
        val += w[i] * math.log(1.0 + g[i] * p[i])
    return val


@njit(cache=True)
def wf_solve(w, g, k, p):
    """Allocating wrapper of :func:`wf_solve_buf`."""
    return wf_solve_buf(w, g, k, p, np.empty(max(k, 1), dtype=np.int64))


@njit(cache=True)
def node_value(policy, n, roles, indptr, indices, qpos, capf, caps, snr, rate_scale, wbuf, gbuf, pbuf):
    """Back-pressure weight node ``n`` collects as a transmitter given the roles of its neighbors."""
    best = 0.0
    total = 0.0
    k = 0
    for e in range(indptr[n], indptr[n + 1]):
        m = indices[e]
        if roles[m] == 1 or qpos[n, m] <= 0.0:
            continue
        if policy == 0:
            v = capf[n, m] * qpos[n, m]
            if v > best:
                best = v
        elif policy == 1:
            total += capf[n, m] * qpos[n, m]
        elif policy == 2:
            total += caps[n, m] * qpos[n, m]
        else:
            if snr[n, m] > 0.0:
                wbuf[k] = qpos[n, m]
                gbuf[k] = snr[n, m]
                k += 1
    if policy == 0:
        return best
    if policy == 3:
        return wf_solve(wbuf, gbuf, k, pbuf) * rate_scale / 0.6931471805599453
    return total


@njit(cache=True)
def node_alloc(policy, n, roles, indptr, indices, qpos, capf, snr, degree, p_row, wbuf, gbuf, pbuf, ibuf):
    """Fill ``p_row`` with the power fractions of transmitter ``n``."""
    deg = indptr[n + 1] - indptr[n]
    best = 0.0
    arg = -1
    k = 0
    for e in range(indptr[n], indptr[n + 1]):
        m = indices[e]
        if roles[m] == 1 or qpos[n, m] <= 0.0:
            continue
        if policy == 0:
            v = capf[n, m] * qpos[n, m]
            if v > best:
                best = v
                arg = m
        elif policy == 1:
            p_row[m] = 1.0
        elif policy == 2:
            p_row[m] = 1.0 / deg
        else:
            if snr[n, m] > 0.0:
                wbuf[k] = qpos[n, m]
                gbuf[k] = snr[n, m]
                ibuf[k] = m
                k += 1
    if policy == 0 and arg >= 0:
        p_row[arg] = 1.0
    if policy == 3 and k > 0:
        wf_solve(wbuf, gbuf, k, pbuf)
        for j in range(k):
            p_row[ibuf[j]] = pbuf[j]


@njit(cache=True)
def roles_weight(policy, roles, indptr, indices, qpos, capf, caps, snr, rate_scale):
    n_nodes = roles.shape[0]
    wbuf = np.empty(n_nodes)
    gbuf = np.empty(n_nodes)
    pbuf = np.empty(n_nodes)
    total = 0.0
    for n in range(n_nodes):
        if roles[n] == 1:
            total += node_value(policy, n, roles, indptr, indices, qpos, capf, caps, snr, rate_scale, wbuf, gbuf, pbuf)
    return total


@njit(cache=True)
def roles_alloc(policy, roles, indptr, indices, qpos, capf, snr, degree):
    n_nodes = roles.shape[0]
    p = np.zeros((n_nodes, n_nodes))
    wbuf = np.empty(n_nodes)
    gbuf = np.empty(n_nodes)
    pbuf = np.empty(n_nodes)
    ibuf = np.empty(n_nodes, dtype=np.int64)
    for n in range(n_nodes):
        if roles[n] == 1:
            node_alloc(policy, n, roles, indptr, indices, qpos, capf, snr, degree, p[n], wbuf, gbuf, pbuf, ibuf)
    return p


def positive_pressure(Q: np.ndarray, topo) -> np.ndarray:
    """``max(Q, 0)`` restricted to existing links."""
    return np.where(topo.adj & (Q > 0), Q, 0.0)


def waterfill(weights, slopes):
    """Power fractions maximizing ``sum w_m log2(1 + slope_m p_m)`` with ``sum p <= 1``.

    Entries with non-positive weight or slope get zero power.
    """
    weights = np.asarray(weights, dtype=float)
    slopes = np.asarray(slopes, dtype=float)
    p = np.zeros(weights.size)
    keep = np.nonzero((weights > 0) & (slopes > 0))[0]
    if keep.size:
        out = np.zeros(keep.size)
        wf_solve(weights[keep], slopes[keep], keep.size, out)
        p[keep] = out
    return p


def waterfill_node(topo, n: int, available_rx, Q: np.ndarray) -> dict:
    """Waterfilling allocation of transmitter ``n`` over ``available_rx`` (receiver -> fraction)."""
    rx = [m for m in available_rx if topo.adj[n, m]]
    if not rx:
        return {}
    p = waterfill([Q[n, m] for m in rx], [topo.snr[n, m] for m in rx])
    return {m: float(pm) for m, pm in zip(rx, p) if pm > 0}


def allocation_weight(p: np.ndarray, Q: np.ndarray, topo) -> float:
    """``sum c(p) * Q`` over links with positive power."""
    active = p > 0
    c = topo.rate_scale * np.log2(1.0 + topo.snr * p)
    return float(np.sum(np.where(active, c * Q, 0.0)))


def conditional_weight(s, policy: PowerPolicy, Q: np.ndarray, topo):
    """Best weight and allocation for fixed roles ``s`` under ``policy``.

    ``Q`` is the back-pressure matrix (see ``traffic.backpressure``).
    Returns ``(weight, p)`` with ``p`` an N x N matrix of power fractions.
    """
    roles = np.asarray(s, dtype=np.int8)
    qpos = positive_pressure(Q, topo)
    indptr, indices = topo.csr
    p = roles_alloc(int(policy), roles, indptr, indices, qpos, topo.cap_full, topo.snr, topo.degree)
    weight = roles_weight(int(policy), roles, indptr, indices, qpos, topo.cap_full, topo.cap_split,
                          topo.snr, topo.rate_scale)
    return float(weight), p
