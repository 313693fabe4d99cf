"""mmWave propagation: link states, pathloss, clustered fading and beamforming.

All sampling functions take an explicit ``numpy.random.Generator`` so that a
drop is reproducible from its seed alone.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

THERMAL_NOISE_DBM_HZ = -174.0
N_PATHS = 20
MEAN_CLUSTERS = 1.9
MEAN_ANGULAR_SPREAD = math.radians(10.0)


class LinkState(enum.Enum):
    OUT = "OUT"
    LOS = "LOS"
    NLOS = "NLOS"


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array with half-wavelength spacing."""

    element_count: int

    def __post_init__(self):
        if self.element_count < 1:
            raise ValueError("element_count must be >= 1")


@dataclass(frozen=True)
class RadioParams:
    carrier_hz: float = 28e9
    bandwidth_hz: float = 1e9
    tx_power_dbm: dict = field(default_factory=lambda: {"BS": 30.0, "RN": 25.0, "UE": 20.0})
    noise_figure_db: dict = field(default_factory=lambda: {"BS": 5.0, "RN": 6.0, "UE": 7.0})
    array_elements: dict = field(default_factory=lambda: {"BS": 64, "RN": 36, "UE": 16})
    alpha1: float = 1.0
    alpha2: float = 0.5
    frame_duration: float = 1.0
    thermal_noise_density_dbm_hz: float = THERMAL_NOISE_DBM_HZ
    max_pathloss_db: float = 200.0

    def __post_init__(self):
        if not (0.0 < self.alpha1 <= 1.0 and 0.0 < self.alpha2 <= 1.0):
            raise ValueError("alpha1 and alpha2 must lie in (0, 1]")
        for table in (self.tx_power_dbm, self.noise_figure_db):
            if not all(math.isfinite(v) for v in table.values()):
                raise ValueError("radio powers must be finite")

    @property
    def rate_scale(self) -> float:
        """Bits per frame for one bit/s/Hz of spectral efficiency."""
        return self.alpha1 * self.frame_duration * self.bandwidth_hz

    def noise_mw(self, noise_figure_db: float) -> float:
        """Receiver noise power over the whole band, in mW."""
        dbm = self.thermal_noise_density_dbm_hz + noise_figure_db + 10.0 * math.log10(self.bandwidth_hz)
        return 10.0 ** (dbm / 10.0)

    def to_dict(self) -> dict:
        return {
            "carrier_hz": self.carrier_hz,
            "bandwidth_hz": self.bandwidth_hz,
            "tx_power_dbm": dict(self.tx_power_dbm),
            "noise_figure_db": dict(self.noise_figure_db),
            "array_elements": dict(self.array_elements),
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "frame_duration": self.frame_duration,
            "thermal_noise_density_dbm_hz": self.thermal_noise_density_dbm_hz,
            "max_pathloss_db": self.max_pathloss_db,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RadioParams":
        return cls(**d)


@dataclass
class LinkChannel:
    """Frozen channel realization of one directed link ``tx -> rx``.

    ``snr_full`` is the effective SNR slope ``alpha2 * P * G * g / (W N0)`` at
    full transmit power, so that ``c(p) = rate_scale * log2(1 + snr_full * p)``.
    """

    state: LinkState
    pathloss_db: float
    bf_gain: float
    snr_full: float
    cap_full_power: float
    cap_split_power: float
    fading: np.ndarray | None = None
    w_t: np.ndarray | None = None
    w_r: np.ndarray | None = None

    def rate(self, p_fraction: float, rate_scale: float) -> float:
        if self.state is LinkState.OUT or p_fraction <= 0.0:
            return 0.0
        return rate_scale * math.log2(1.0 + self.snr_full * p_fraction)


def outage_probability(d: float) -> float:
    return 1.0 - min(1.0, math.exp(-0.0334 * d + 5.2))


def los_probability(d: float) -> float:
    return (1.0 - outage_probability(d)) * math.exp(-0.0149 * d)


def sample_link_state(d: float, rng: np.random.Generator) -> LinkState:
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    p_out = outage_probability(d)
    p_los = los_probability(d)
    u = rng.random()
    if u < p_out:
        return LinkState.OUT
    if u < p_out + p_los:
        return LinkState.LOS
    return LinkState.NLOS


def sample_pathloss(d: float, state: LinkState, rng: np.random.Generator | None = None,
                    shadowing: float | None = None) -> float:
    """Pathloss in dB including log-normal shadowing.

    ``shadowing`` overrides the random shadowing term (in dB); when it is
    ``None`` the term is drawn from ``rng``.
    """
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    if state is LinkState.OUT:
        return math.inf
    if state is LinkState.LOS:
        intercept, slope, sigma = 61.4, 20.0, 5.8
    else:
        intercept, slope, sigma = 72.0, 29.2, 8.7
    if shadowing is None:
        shadowing = rng.normal(0.0, sigma)
    return intercept + slope * math.log10(d) + shadowing


def array_response(geom: ArrayGeometry, theta) -> np.ndarray:
    """Spatial signature of a half-wavelength ULA.

    A scalar angle gives a vector of length ``element_count``; an array of
    angles gives one signature per row.
    """
    n = geom.element_count
    theta = np.asarray(theta, dtype=float)
    idx = np.arange(n)
    phase = -np.pi * np.sin(theta)[..., None] * idx
    return np.exp(1j * phase) / math.sqrt(n)


def cluster_channel(tx: ArrayGeometry, rx: ArrayGeometry, gains, aod, aoa) -> np.ndarray:
    """Sum of rank-one rays ``g * a_r(aoa) a_t(aod)^T`` scaled by ``1/sqrt(#rays)``."""
    gains = np.ravel(np.asarray(gains, dtype=complex))
    a_t = array_response(tx, np.ravel(aod))
    a_r = array_response(rx, np.ravel(aoa))
    h = np.einsum("k,ki,kj->ij", gains, a_r, a_t)
    return h / math.sqrt(gains.size)


def sample_fading(tx: ArrayGeometry, rx: ArrayGeometry, rng: np.random.Generator,
                  n_clusters: int | None = None, n_paths: int = N_PATHS) -> np.ndarray:
    """Draw an ``rx.element_count x tx.element_count`` clustered fading matrix."""
    if n_clusters is None:
        n_clusters = max(1, int(rng.poisson(MEAN_CLUSTERS)))
    aod_mean = rng.uniform(0.0, 2 * np.pi, n_clusters)
    aoa_mean = rng.uniform(0.0, 2 * np.pi, n_clusters)
    spread_t = rng.exponential(MEAN_ANGULAR_SPREAD, n_clusters)
    spread_r = rng.exponential(MEAN_ANGULAR_SPREAD, n_clusters)
    off_t = np.mod(rng.normal(0.0, 1.0, (n_clusters, n_paths)) * spread_t[:, None], 2 * np.pi)
    off_r = np.mod(rng.normal(0.0, 1.0, (n_clusters, n_paths)) * spread_r[:, None], 2 * np.pi)
    g = (rng.normal(size=(n_clusters, n_paths)) + 1j * rng.normal(size=(n_clusters, n_paths))) / math.sqrt(2)
    aod = aod_mean[:, None] + off_t
    aoa = aoa_mean[:, None] + off_r
    return cluster_channel(tx, rx, g, aod, aoa)


def beamform(h: np.ndarray):
    """Dominant singular pair of ``h``.

    Returns ``(w_r, w_t, gain)`` with ``w_r`` applied as a row vector, so that
    ``|w_r @ h @ w_t|**2 == gain == sigma_max(h)**2``.
    """
    h = np.asarray(h, dtype=complex)
    if not np.all(np.isfinite(h)):
        raise ValueError("channel matrix must be finite")
    n_r, n_t = h.shape
    if not np.any(h):
        w_r = np.zeros(n_r, complex)
        w_r[0] = 1.0
        w_t = np.zeros(n_t, complex)
        w_t[0] = 1.0
        return w_r, w_t, 0.0
    u, s, vh = np.linalg.svd(h)
    return u[:, 0].conj(), vh[0].conj(), float(s[0] ** 2)


def snr_slope(tx_power_dbm: float, noise_figure_db: float, bf_gain: float, pathloss_db: float,
              params: RadioParams) -> float:
    if not math.isfinite(pathloss_db):
        return 0.0
    p_mw = 10.0 ** (tx_power_dbm / 10.0)
    g = 10.0 ** (-pathloss_db / 10.0)
    return params.alpha2 * p_mw * bf_gain * g / params.noise_mw(noise_figure_db)


def link_rate(p_fraction: float, chan: LinkChannel, tx_power_dbm: float, params: RadioParams,
              noise_figure_db: float) -> float:
    """Capacity in bits/frame of ``chan`` when the transmitter spends ``p_fraction`` of its power."""
    if not 0.0 <= p_fraction <= 1.0:
        raise ValueError("p_fraction must lie in [0, 1]")
    if chan.state is LinkState.OUT or p_fraction == 0.0:
        return 0.0
    gamma = snr_slope(tx_power_dbm, noise_figure_db, chan.bf_gain, chan.pathloss_db, params)
    return params.rate_scale * math.log2(1.0 + gamma * p_fraction)


@dataclass
class InterferenceReport:
    """Per active link powers (mW) of the residual interference terms."""

    links: list
    desired: np.ndarray
    auto: np.ndarray
    same_port: np.ndarray
    cross: np.ndarray
    noise: np.ndarray
    if_rate: np.ndarray
    sinr_rate: np.ndarray

    @property
    def inr(self) -> np.ndarray:
        return (self.auto + self.same_port + self.cross) / self.noise

    @property
    def rate_gap(self) -> np.ndarray:
        """Relative rate loss ``(IF - SINR) / IF`` per link."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.if_rate > 0, (self.if_rate - self.sinr_rate) / self.if_rate, 0.0)


def _port_gain(w_r, h, w_t) -> float:
    return float(abs(w_r @ h @ w_t) ** 2)


def evaluate_interference(schedule, topo) -> InterferenceReport:
    """Compare interference-free and SINR rates of every active link in ``schedule``.

    Interferers are the scheduled transmitters adjacent to the receiver; the
    three residual terms are combined in power.
    """
    params = topo.params
    p = schedule.p
    active = [(n, m) for n, m in zip(*np.nonzero(p > 1e-12))]
    tx_of = {m: [i for i in topo.neighbors[m] if np.any(p[i] > 1e-12)] for m in range(topo.n_nodes)}
    k = len(active)
    desired, auto, same, cross, noise, if_rate, sinr_rate = (np.zeros(k) for _ in range(7))
    for idx, (n, m) in enumerate(active):
        ch = topo.channels[(n, m)]
        if ch.fading is None:
            raise ValueError("interference evaluation needs fading matrices in the drop")
        w_r = ch.w_r
        gl = 10.0 ** (-ch.pathloss_db / 10.0)
        pn = topo.nodes[n].tx_power_mw
        desired[idx] = p[n, m] * pn * gl * _port_gain(w_r, ch.fading, ch.w_t)
        for j in np.nonzero(p[n] > 1e-12)[0]:
            if j != m:
                auto[idx] += p[n, j] * pn * gl * _port_gain(w_r, ch.fading, topo.channels[(n, j)].w_t)
        for i in tx_of[m]:
            if i == n:
                continue
            ci = topo.channels[(i, m)]
            gi = 10.0 ** (-ci.pathloss_db / 10.0)
            pi = topo.nodes[i].tx_power_mw
            for j in np.nonzero(p[i] > 1e-12)[0]:
                term = p[i, j] * pi * gi * _port_gain(w_r, ci.fading, topo.channels[(i, j)].w_t)
                if j == m:
                    same[idx] += term
                elif j != n:
                    cross[idx] += term
        noise[idx] = params.noise_mw(topo.nodes[m].noise_figure_db)
        snr = params.alpha2 * desired[idx] / noise[idx]
        sinr = params.alpha2 * desired[idx] / (noise[idx] + auto[idx] + same[idx] + cross[idx])
        if_rate[idx] = params.rate_scale * math.log2(1.0 + snr)
        sinr_rate[idx] = params.rate_scale * math.log2(1.0 + sinr)
    return InterferenceReport(active, desired, auto, same, cross, noise, if_rate, sinr_rate)


def fading_to_list(h: np.ndarray) -> dict:
    flat = np.empty(2 * h.size)
    flat[0::2] = h.real.ravel()
    flat[1::2] = h.imag.ravel()
    return {"rows": h.shape[0], "cols": h.shape[1], "data": flat.tolist()}


def fading_from_list(d: dict) -> np.ndarray:
    flat = np.asarray(d["data"], dtype=float)
    return (flat[0::2] + 1j * flat[1::2]).reshape(d["rows"], d["cols"])
