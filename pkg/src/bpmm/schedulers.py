"""Per-frame schedule selection.

Every scheduler maximizes (exactly or heuristically) the back-pressure weight
``sum_n sum_m c_nm(p) Q_nm`` over its own feasible set.  Role-vector searches
share the conditional-weight kernels of :mod:`bpmm.power`.
"""
from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import linprog

from .power import PowerPolicy, conditional_weight, node_value, positive_pressure, roles_alloc, roles_weight
from .traffic import backpressure

DEFAULT_EXHAUSTIVE_MAX_N = 20
WARM_START_SLACK = 1e-9


class SchedulerKind(str, enum.Enum):
    MWM = "mwm"
    SFWBF = "sfwbf"
    SFWMP = "sfwmp"
    EXACT_MBP = "exactmbp"
    MFWMP = "mfwmp"
    MFWMPSP = "mfwmpsp"
    MFWMPOP = "mfwmpop"
    MFWLINOP = "mfwlinop"
    MFWLINSP = "mfwlinsp"
    MFWPAC = "mfwpac"

    @property
    def policy(self) -> PowerPolicy:
        return _KIND_POLICY[self]


_KIND_POLICY = {
    SchedulerKind.MWM: PowerPolicy.SINGLE_DEST,
    SchedulerKind.SFWBF: PowerPolicy.SINGLE_DEST,
    SchedulerKind.SFWMP: PowerPolicy.SINGLE_DEST,
    SchedulerKind.EXACT_MBP: PowerPolicy.WATERFILLING,
    SchedulerKind.MFWMP: PowerPolicy.WATERFILLING,
    SchedulerKind.MFWMPSP: PowerPolicy.SPLIT_POWER,
    SchedulerKind.MFWMPOP: PowerPolicy.OVER_POWER,
    SchedulerKind.MFWLINOP: PowerPolicy.OVER_POWER,
    SchedulerKind.MFWLINSP: PowerPolicy.SPLIT_POWER,
    SchedulerKind.MFWPAC: PowerPolicy.WATERFILLING,
}

MP_KINDS = (SchedulerKind.SFWMP, SchedulerKind.MFWMP, SchedulerKind.MFWMPSP, SchedulerKind.MFWMPOP)
# exact for their own model, hence throughput optimal for it
THROUGHPUT_OPTIMAL = (SchedulerKind.MWM, SchedulerKind.SFWBF, SchedulerKind.EXACT_MBP,
                      SchedulerKind.MFWLINOP, SchedulerKind.MFWLINSP, SchedulerKind.MFWPAC)


@dataclass
class Schedule:
    """Node roles ``s`` (0/1), power fractions ``p`` (N x N) and achieved weight."""

    s: np.ndarray
    p: np.ndarray
    weight: float
    policy: PowerPolicy = PowerPolicy.WATERFILLING
    info: dict = field(default_factory=dict)

    @classmethod
    def idle(cls, n: int, policy: PowerPolicy = PowerPolicy.WATERFILLING) -> "Schedule":
        return cls(np.zeros(n, dtype=np.int8), np.zeros((n, n)), 0.0, policy)

    @property
    def active_links(self) -> list:
        return [(int(a), int(b)) for a, b in zip(*np.nonzero(self.p > 1e-9))]


class InfeasibleSchedule(RuntimeError):
    pass


def audit_schedule(sch: Schedule, topo, tol: float = 1e-9) -> None:
    """Raise :class:`InfeasibleSchedule` if ``sch`` breaks half-duplex or power limits."""
    p, s = sch.p, np.asarray(sch.s)
    problems = []
    if np.any(p < -tol) or np.any(p > 1 + tol):
        problems.append("power fraction outside [0, 1]")
    act = p > tol
    if np.any(act & ~topo.adj):
        problems.append("power on a non-existent link")
    n_idx, m_idx = np.nonzero(act)
    if np.any(s[n_idx] != 1) or np.any(s[m_idx] != 0):
        problems.append("half-duplex violated")
    if sch.policy != PowerPolicy.OVER_POWER and np.any(p.sum(axis=1) > 1 + tol):
        problems.append("sum-power constraint violated")
    if problems:
        raise InfeasibleSchedule("; ".join(problems))


# -- role-space search ------------------------------------------------------

@njit(cache=True)
def _role_bnb(policy, indptr, indices, qpos, capf, caps, snr, rate_scale, cand, best, best_s):
    """Depth-first branch and bound over role vectors in lexicographic order.

    The bound lets undecided nodes act both as transmitter and as receiver.
    Incumbent ``(best, best_s)`` must be a lower bound; returns the
    lexicographically smallest maximizer when one beats it.
    """
    n_nodes = cand.shape[0]
    roles = -np.ones(n_nodes, dtype=np.int8)
    wbuf = np.empty(n_nodes)
    gbuf = np.empty(n_nodes)
    pbuf = np.empty(n_nodes)
    vals = np.zeros((n_nodes + 1, n_nodes))
    for n in range(n_nodes):
        if cand[n]:
            vals[0, n] = node_value(policy, n, roles, indptr, indices, qpos, capf, caps, snr, rate_scale,
                                    wbuf, gbuf, pbuf)
    state = np.zeros(n_nodes + 1, dtype=np.int64)
    visited = 0
    d = 0
    while d >= 0:
        if state[d] == 2 or (state[d] == 1 and not cand[d]):
            roles[d] = -1
            state[d] = 0
            d -= 1
            continue
        v = state[d]
        state[d] += 1
        roles[d] = v
        visited += 1
        for j in range(n_nodes):
            vals[d + 1, j] = vals[d, j]
        if v == 0:
            vals[d + 1, d] = 0.0
        else:
            for e in range(indptr[d], indptr[d + 1]):
                j = indices[e]
                if roles[j] != 0 and cand[j] and qpos[j, d] > 0.0:
                    vals[d + 1, j] = node_value(policy, j, roles, indptr, indices, qpos, capf, caps, snr,
                                                rate_scale, wbuf, gbuf, pbuf)
        ub = 0.0
        for j in range(n_nodes):
            ub += vals[d + 1, j]
        if ub <= best:
            continue
        if d == n_nodes - 1:
            best = ub
            for j in range(n_nodes):
                best_s[j] = roles[j]
            continue
        d += 1
    return best, visited


@njit(cache=True)
def _role_exhaustive(policy, indptr, indices, qpos, capf, caps, snr, rate_scale, n_nodes):
    roles = np.zeros(n_nodes, dtype=np.int8)
    best_s = np.zeros(n_nodes, dtype=np.int8)
    wbuf = np.empty(n_nodes)
    gbuf = np.empty(n_nodes)
    pbuf = np.empty(n_nodes)
    best = 0.0
    for code in range(1 << n_nodes):
        for i in range(n_nodes):
            roles[i] = (code >> (n_nodes - 1 - i)) & 1
        total = 0.0
        for n in range(n_nodes):
            if roles[n] == 1:
                total += node_value(policy, n, roles, indptr, indices, qpos, capf, caps, snr, rate_scale,
                                    wbuf, gbuf, pbuf)
        if total > best:
            best = total
            best_s[:] = roles
    return best, best_s


def _pressure(q, topo, Q=None):
    if Q is None:
        Q, _ = backpressure(q, topo)
    return Q, positive_pressure(Q, topo)


def _make_schedule(roles, policy: PowerPolicy, qpos, topo, **info) -> Schedule:
    indptr, indices = topo.csr
    roles = np.ascontiguousarray(roles, dtype=np.int8)
    p = roles_alloc(int(policy), roles, indptr, indices, qpos, topo.cap_full, topo.snr, topo.degree)
    w = roles_weight(int(policy), roles, indptr, indices, qpos, topo.cap_full, topo.cap_split, topo.snr,
                     topo.rate_scale)
    return Schedule(roles, p, float(w), policy, dict(info))


def role_search(q, topo, policy: PowerPolicy, *, Q=None, method: str = "bnb", warm_start=None,
                max_n: int = DEFAULT_EXHAUSTIVE_MAX_N) -> Schedule:
    """Exact ``argmax_s conditional_weight(s, policy)``; ties go to the lexicographically smallest ``s``.

    ``method='exhaustive'`` enumerates all ``2^N`` role vectors; ``'bnb'``
    prunes the same enumeration with an optimistic bound and returns the
    same maximizer.
    """
    n = topo.n_nodes
    if n > max_n:
        raise ValueError(f"{n} nodes exceeds the exhaustive limit {max_n}; use a message-passing scheduler")
    Q, qpos = _pressure(q, topo, Q)
    indptr, indices = topo.csr
    args = (int(policy), indptr, indices, qpos, topo.cap_full, topo.cap_split, topo.snr, topo.rate_scale)
    if method == "exhaustive":
        _, roles = _role_exhaustive(*args, n)
        return _make_schedule(roles, policy, qpos, topo, method=method)
    if method != "bnb":
        raise ValueError(f"unknown method {method!r}")
    cand = qpos.max(axis=1, initial=0.0) > 0
    best_s = np.zeros(n, dtype=np.int8)
    best = 0.0
    if warm_start is not None:
        ws = np.ascontiguousarray(warm_start, dtype=np.int8) & cand.astype(np.int8)
        v0 = roles_weight(*args[:1], ws, *args[1:])
        if v0 > 0:
            best = v0 * (1.0 - WARM_START_SLACK)
            best_s = ws.copy()
    if cand.any():
        _, visited = _role_bnb(*args, cand, best, best_s)
    else:
        visited = 0
    return _make_schedule(best_s, policy, qpos, topo, method=method, visited=int(visited))


def sfw_bruteforce(q, topo, **kw) -> Schedule:
    """Single destination per transmitter, SDMA at receivers."""
    return role_search(q, topo, PowerPolicy.SINGLE_DEST, **kw)


def exact_mbp(q, topo, policy: PowerPolicy = PowerPolicy.WATERFILLING, **kw) -> Schedule:
    """Exact maximum back-pressure schedule under ``policy``."""
    if policy == PowerPolicy.SINGLE_DEST:
        raise ValueError("use sfw_bruteforce for single-destination scheduling")
    return role_search(q, topo, policy, **kw)


# -- maximum weight matching -------------------------------------------------

@njit(cache=True)
def _mwm_dp(wu, n_nodes):
    size = 1 << n_nodes
    f = np.zeros(size)
    choice = -np.ones(size, dtype=np.int64)
    for mask in range(1, size):
        i = 0
        while not (mask >> i) & 1:
            i += 1
        rest = mask & ~(1 << i)
        best = f[rest]
        ch = -1
        for j in range(i + 1, n_nodes):
            if (rest >> j) & 1 and wu[i, j] > 0.0:
                v = wu[i, j] + f[rest & ~(1 << j)]
                if v > best:
                    best = v
                    ch = j
        f[mask] = best
        choice[mask] = ch
    pairs = -np.ones(n_nodes, dtype=np.int64)
    mask = size - 1
    while mask:
        i = 0
        while not (mask >> i) & 1:
            i += 1
        j = choice[mask]
        mask &= ~(1 << i)
        if j >= 0:
            pairs[i] = j
            pairs[j] = i
            mask &= ~(1 << j)
    return f[size - 1], pairs


@njit(cache=True)
def _mwm_cover(wu, cover, rest):
    """Exact maximum weight matching when every edge touches ``cover``.

    Vertices outside the cover are added one at a time; the state is the set
    of cover vertices already matched.  Returns the partner array.
    """
    c = cover.shape[0]
    size = 1 << c
    inner = np.zeros((c, c))
    for a in range(c):
        for b in range(c):
            inner[a, b] = wu[cover[a], cover[b]]
    # best matching inside the cover for every subset
    gin = np.zeros(size)
    gch = -np.ones(size, dtype=np.int64)
    for mask in range(1, size):
        i = 0
        while not (mask >> i) & 1:
            i += 1
        r = mask & ~(1 << i)
        best = gin[r]
        ch = -1
        for j in range(i + 1, c):
            if (r >> j) & 1 and inner[i, j] > 0.0:
                v = inner[i, j] + gin[r & ~(1 << j)]
                if v > best:
                    best = v
                    ch = j
        gin[mask] = best
        gch[mask] = ch
    n_rest = rest.shape[0]
    f = np.full(size, -np.inf)
    f[0] = 0.0
    pick = -np.ones((n_rest, size), dtype=np.int64)
    prev = np.zeros((n_rest, size), dtype=np.int64)
    for k in range(n_rest):
        u = rest[k]
        nf = f.copy()
        for mask in range(size):
            prev[k, mask] = mask
        for mask in range(size):
            if f[mask] == -np.inf:
                continue
            for b in range(c):
                if (mask >> b) & 1:
                    continue
                w = wu[u, cover[b]]
                if w <= 0.0:
                    continue
                nm = mask | (1 << b)
                v = f[mask] + w
                if v > nf[nm]:
                    nf[nm] = v
                    pick[k, nm] = b
                    prev[k, nm] = mask
        f = nf
    full = size - 1
    best = -np.inf
    arg = 0
    for mask in range(size):
        if f[mask] == -np.inf:
            continue
        v = f[mask] + gin[full ^ mask]
        if v > best:
            best = v
            arg = mask
    pairs = -np.ones(wu.shape[0], dtype=np.int64)
    mask = arg
    for k in range(n_rest - 1, -1, -1):
        b = pick[k, mask]
        if b >= 0 and prev[k, mask] != mask:
            pairs[rest[k]] = cover[b]
            pairs[cover[b]] = rest[k]
        mask = prev[k, mask]
    free = full ^ arg
    while free:
        i = 0
        while not (free >> i) & 1:
            i += 1
        j = gch[free]
        free &= ~(1 << i)
        if j >= 0:
            pairs[cover[i]] = cover[j]
            pairs[cover[j]] = cover[i]
            free &= ~(1 << j)
    return best, pairs


def _greedy_cover(wu) -> list:
    adj = wu > 0
    deg = adj.sum(axis=1)
    cover = []
    while deg.max(initial=0) > 0:
        v = int(np.argmax(deg))
        cover.append(v)
        adj[v, :] = False
        adj[:, v] = False
        deg = adj.sum(axis=1)
    return sorted(cover)


def matching_pairs(wu: np.ndarray, max_cover: int = 20) -> list:
    """Exact maximum weight matching of the symmetric nonnegative weights ``wu``.

    Uses a vertex-cover dynamic program when a cover of at most
    ``max_cover`` vertices exists (always the case when one node kind cannot
    link to itself), otherwise the blossom algorithm from networkx.
    """
    n = wu.shape[0]
    cover = _greedy_cover(wu)
    if len(cover) <= max_cover:
        rest = np.array([v for v in range(n) if v not in set(cover)], dtype=np.int64)
        _, pairs = _mwm_cover(np.ascontiguousarray(wu, dtype=float), np.array(cover, dtype=np.int64), rest)
        return [(i, int(pairs[i])) for i in range(n) if pairs[i] > i]
    import networkx as nx

    g = nx.Graph()
    g.add_weighted_edges_from((int(i), int(j), wu[i, j]) for i, j in zip(*np.nonzero(np.triu(wu) > 0)))
    return [tuple(sorted(e)) for e in nx.max_weight_matching(g)]


def mwm(q, topo, *, Q=None) -> Schedule:
    """One-to-one schedule: exact maximum weight matching on full-power directed weights.

    The undirected weight of a pair is its better direction, which is the
    direction scheduled.
    """
    n = topo.n_nodes
    Q, qpos = _pressure(q, topo, Q)
    wd = topo.cap_full * qpos
    wu = np.maximum(wd, wd.T)
    s = np.zeros(n, dtype=np.int8)
    p = np.zeros((n, n))
    weight = 0.0
    for i, j in matching_pairs(wu):
        a, b = (i, j) if wd[i, j] >= wd[j, i] else (j, i)
        s[a] = 1
        p[a, b] = 1.0
        weight += wd[a, b]
    return Schedule(s, p, float(weight), PowerPolicy.SINGLE_DEST)


# -- MILP with fixed power ---------------------------------------------------

@dataclass
class MilpResult:
    x: dict
    objective: float
    bound: float
    nodes: int


def milp_problem(q, topo, variant: str, Q=None):
    """Variables, weights and half-duplex rows of the fixed-power MILP.

    Links with non-positive weight are fixed to zero: the constraint
    coefficients are nonnegative, so clearing them never breaks feasibility
    and never lowers the objective.
    """
    Q, qpos = _pressure(q, topo, Q)
    cap = topo.cap_full if variant == "OP" else topo.cap_split
    w = cap * qpos
    links = [(int(a), int(b)) for a, b in zip(*np.nonzero(w > 0))]
    index = {e: k for k, e in enumerate(links)}
    weights = np.array([w[e] for e in links])
    rows = np.zeros((len(links), len(links)))
    for k, (n, m) in enumerate(links):
        rows[k, k] += 1.0
        for mp in topo.neighbors[n]:
            j = index.get((mp, n))
            if j is not None:
                rows[k, j] += 1.0 / topo.degree[n]
    return links, weights, rows


def milp_feasible(x: np.ndarray, rows: np.ndarray, tol: float = 1e-9) -> bool:
    return bool(np.all(rows @ x <= 1.0 + tol))


def branch_and_bound(weights, rows, links, incumbent=None, int_tol: float = 1e-6) -> MilpResult:
    """Maximize ``weights @ x`` over binary ``x`` with ``rows @ x <= 1``.

    Best-bound node selection, branching on the most fractional variable,
    LP relaxations by HiGHS.  Fixing a link on also fixes to zero every link
    into its transmitter and out of its receiver.
    """
    k = len(links)
    if k == 0:
        return MilpResult({}, 0.0, 0.0, 0)
    scale = float(weights.max())
    c = -weights / scale
    into = [[j for j, (a, b) in enumerate(links) if b == n] for n, _ in links]
    out_of = [[j for j, (a, b) in enumerate(links) if a == m] for _, m in links]
    best_x = np.zeros(k)
    best = 0.0
    if incumbent is not None and milp_feasible(incumbent, rows):
        best_x = np.asarray(incumbent, dtype=float).copy()
        best = float(weights @ best_x) / scale
    counter = itertools.count()
    heap = []
    explored = 0

    def solve(lo, hi):
        res = linprog(c, A_ub=rows, b_ub=np.ones(k), bounds=np.column_stack([lo, hi]), method="highs")
        if res.status != 0:
            return None, None
        return -res.fun, res.x

    lo0, hi0 = np.zeros(k), np.ones(k)
    bound, x = solve(lo0, hi0)
    root_bound = bound
    heapq.heappush(heap, (-bound, next(counter), lo0, hi0, x))
    eps = 1e-12
    while heap:
        neg_bound, _, lo, hi, x = heapq.heappop(heap)
        if -neg_bound <= best * (1 + eps) + eps:
            break
        explored += 1
        frac = np.abs(x - np.round(x))
        if frac.max() <= int_tol:
            xr = np.round(x)
            if milp_feasible(xr, rows):
                val = float(weights @ xr) / scale
                if val > best:
                    best, best_x = val, xr
                continue
        j = int(np.argmax(np.minimum(x, 1 - x)))
        # child x_j = 0
        lo_a, hi_a = lo.copy(), hi.copy()
        hi_a[j] = 0.0
        # child x_j = 1 with propagation
        lo_b, hi_b = lo.copy(), hi.copy()
        lo_b[j] = 1.0
        conflict = [i for i in into[j] + out_of[j] if i != j]
        ok = not any(lo_b[i] > 0 for i in conflict)
        hi_b[conflict] = 0.0
        for child_lo, child_hi, feasible in ((lo_a, hi_a, True), (lo_b, hi_b, ok)):
            if not feasible:
                continue
            b, xc = solve(child_lo, child_hi)
            if b is None or b <= best * (1 + eps) + eps:
                continue
            heapq.heappush(heap, (-b, next(counter), child_lo, child_hi, xc))
    final_bound = max(best, -heap[0][0]) if heap else best
    x_map = {links[i]: 1 for i in range(k) if best_x[i] > 0.5}
    return MilpResult(x_map, best * scale, min(final_bound, root_bound) * scale, explored)


def milp_schedule(q, topo, variant: str = "OP", *, Q=None, method: str = "bnb", warm_start=None) -> Schedule:
    """Fixed-power MILP scheduler (``variant`` 'OP' over power, 'SP' split power).

    ``method='bnb'`` runs LP-based branch and bound on link indicators;
    ``method='roles'`` solves the same problem by exact role-space search
    (an active transmitter serves every non-transmitting neighbor with
    positive pressure, which is what the binary program selects).
    """
    variant = variant.upper()
    if variant not in ("OP", "SP"):
        raise ValueError("variant must be 'OP' or 'SP'")
    policy = PowerPolicy.OVER_POWER if variant == "OP" else PowerPolicy.SPLIT_POWER
    Q, qpos = _pressure(q, topo, Q)
    if method == "roles":
        sch = role_search(q, topo, policy, Q=Q, warm_start=warm_start, max_n=max(topo.n_nodes, 1))
        return sch
    links, weights, rows = milp_problem(q, topo, variant, Q=Q)
    incumbent = None
    if warm_start is not None and links:
        ws = np.asarray(warm_start)
        incumbent = np.array([1.0 if ws[a] == 1 and ws[b] == 0 else 0.0 for a, b in links])
    res = branch_and_bound(weights, rows, links, incumbent)
    n = topo.n_nodes
    s = np.zeros(n, dtype=np.int8)
    p = np.zeros((n, n))
    for (a, b) in res.x:
        s[a] = 1
        p[a, b] = 1.0 if variant == "OP" else 1.0 / topo.degree[a]
    return Schedule(s, p, res.objective, policy, {"method": "bnb", "nodes": res.nodes, "bound": res.bound})


# -- Pick and Compare --------------------------------------------------------

def pick_and_compare(prev: Schedule, q, topo, rng: np.random.Generator, *,
                     policy: PowerPolicy = PowerPolicy.WATERFILLING, Q=None) -> Schedule:
    """Keep the better of the previous roles and uniformly random roles (ties keep the previous)."""
    Q, qpos = _pressure(q, topo, Q)
    s_new = rng.integers(0, 2, topo.n_nodes).astype(np.int8)
    old = _make_schedule(np.asarray(prev.s, dtype=np.int8), policy, qpos, topo, picked="previous")
    new = _make_schedule(s_new, policy, qpos, topo, picked="random")
    return new if new.weight > old.weight else old


# -- per-frame dispatch ------------------------------------------------------

class FrameScheduler:
    """Stateful scheduler used by the frame loop.

    Keeps the previous schedule, which seeds the exact searches and is the
    incumbent of Pick and Compare.
    """

    def __init__(self, kind: SchedulerKind, topo, rng: np.random.Generator | None = None, *,
                 exhaustive_max_n: int = DEFAULT_EXHAUSTIVE_MAX_N, mp_cfg=None, mp_policy=None,
                 milp_method: str = "roles"):
        from .mpengine import MpConfig

        self.kind = SchedulerKind(kind)
        self.topo = topo
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.max_n = exhaustive_max_n
        self.mp_cfg = mp_cfg or MpConfig()
        self.policy = self.kind.policy
        if mp_policy is not None:
            if self.kind not in MP_KINDS:
                raise ValueError("a power policy override applies to message-passing schedulers only")
            self.policy = PowerPolicy(mp_policy)
        self.milp_method = milp_method
        self.prev = Schedule.idle(topo.n_nodes, self.policy)
        needs_exact = self.kind in (SchedulerKind.SFWBF, SchedulerKind.EXACT_MBP) or (
            self.kind in (SchedulerKind.MFWLINOP, SchedulerKind.MFWLINSP) and milp_method == "roles")
        if needs_exact and topo.n_nodes > exhaustive_max_n:
            raise ValueError(f"{self.kind.value} is exact and limited to {exhaustive_max_n} nodes "
                             f"(drop has {topo.n_nodes})")

    def __call__(self, q, Q=None) -> Schedule:
        from .mpengine import run_mp

        topo, kind = self.topo, self.kind
        if Q is None:
            Q, _ = backpressure(q, topo)
        if kind == SchedulerKind.MWM:
            sch = mwm(q, topo, Q=Q)
        elif kind in (SchedulerKind.SFWBF, SchedulerKind.EXACT_MBP):
            sch = role_search(q, topo, self.policy, Q=Q, warm_start=self.prev.s, max_n=self.max_n)
        elif kind in MP_KINDS:
            sch = run_mp(q, topo, self.policy, self.mp_cfg, Q=Q)
        elif kind in (SchedulerKind.MFWLINOP, SchedulerKind.MFWLINSP):
            variant = "OP" if kind == SchedulerKind.MFWLINOP else "SP"
            sch = milp_schedule(q, topo, variant, Q=Q, method=self.milp_method, warm_start=self.prev.s)
        elif kind == SchedulerKind.MFWPAC:
            sch = pick_and_compare(self.prev, q, topo, self.rng, policy=self.policy, Q=Q)
        else:  # pragma: no cover
            raise ValueError(kind)
        self.prev = sch
        return sch
