"""Aerial cell-free uplink with sub-THz backhaul to a high-altitude processor.

One trial: ground users uplink to drone base stations at 2 GHz in a first
time slot (match filtering with multiuser interference); the drones forward
over orthogonal sub-THz resource blocks to the platform, which combines the
relay branches per user. Per-drone transmit powers are allocated max-min.
A terrestrial cell-free baseline replaces the drones with ground access
points behind NLoS links and an ideal fiber-backhauled combiner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import channels as ch
from .beamforming import UpaGeometry, upa_shape
from .geometry import Position3D, Square, dbm_to_watt, distance_and_angles, sample_positions
from .maxmin import TwoHopLink, af_endtoend_sinr, hop1_mf_sinr, maxmin_allocate
from .stats import derive_trial_seed

_SINGLE = UpaGeometry(1, 1)


@dataclass(frozen=True)
class Cs2Config:
    """Aerial cell-free scenario parameters (defaults follow the studied setup)."""

    n_users: int = 16
    n_uxnbs: int = 16
    uxnb_rx_elements: int = 4
    uxnb_tx_elements: int = 1
    f_hop1_hz: float = 2e9
    f_hop2_hz: float = 120e9
    bandwidth_hz: float = 1e6
    noise_psd_dbm_hz: float = -174.0
    p_user_dbm: float = 23.0
    p_uxnb_dbm: float = 25.0
    k_abs_db_per_km: float = 0.5
    uxnb_height_m: float = 120.0
    haps_altitude_m: float = 20e3
    region_side_m: float = 1000.0
    haps_element_sweep: tuple = (4, 16, 64, 256, 1024, 4096)
    access_rician_k_db: float = 10.0
    ap_height_m: float = 10.0
    ap_elements: int = 1
    user_height_m: float = 1.5
    maxmin_tol: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "haps_element_sweep", tuple(int(n) for n in self.haps_element_sweep))
        positives = {
            "n_users": self.n_users, "n_uxnbs": self.n_uxnbs,
            "uxnb_rx_elements": self.uxnb_rx_elements,
            "uxnb_tx_elements": self.uxnb_tx_elements,
            "f_hop1_hz": self.f_hop1_hz, "f_hop2_hz": self.f_hop2_hz,
            "bandwidth_hz": self.bandwidth_hz, "uxnb_height_m": self.uxnb_height_m,
            "haps_altitude_m": self.haps_altitude_m, "region_side_m": self.region_side_m,
            "ap_height_m": self.ap_height_m, "ap_elements": self.ap_elements,
            "user_height_m": self.user_height_m, "maxmin_tol": self.maxmin_tol,
        }
        for name, v in positives.items():
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        for name in ("noise_psd_dbm_hz", "p_user_dbm", "p_uxnb_dbm"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.k_abs_db_per_km < 0:
            raise ValueError(f"k_abs_db_per_km must be >= 0, got {self.k_abs_db_per_km}")
        sweep = self.haps_element_sweep
        if len(sweep) == 0 or any(b <= a for a, b in zip(sweep, sweep[1:])) or sweep[0] < 1:
            raise ValueError("haps_element_sweep must be non-empty and strictly increasing")

    @property
    def noise_psd_w_per_hz(self) -> float:
        return dbm_to_watt(self.noise_psd_dbm_hz)


@dataclass(frozen=True)
class Cs2TrialResult:
    """Per-trial outcome: the scheme's minimum and per-user rates in bit/s."""

    scheme: str
    min_rate: float
    per_user_rates: np.ndarray
    haps_elements: int | None = None

    def __post_init__(self):
        rates = np.asarray(self.per_user_rates, dtype=float)
        object.__setattr__(self, "per_user_rates", rates)
        if not np.all(np.isfinite(rates)) or np.any(rates < 0):
            raise ValueError("per-user rates must be finite and >= 0")
        if abs(self.min_rate - rates.min()) > 1e-9 * max(abs(self.min_rate), 1.0):
            raise ValueError("min_rate must equal min(per_user_rates)")


def grid_positions(n: int, side: float, height: float) -> list[Position3D]:
    """Uniform g x g grid of node positions over the square (n must be square)."""
    g = math.isqrt(n)
    if g * g != n:
        raise ValueError(f"grid layout needs a perfect-square node count, got {n}")
    step = side / g
    return [Position3D((i + 0.5) * step, (j + 0.5) * step, height)
            for i in range(g) for j in range(g)]


def _access_channels(cfg: Cs2Config, nodes: list[Position3D], users: list[Position3D],
                     elements: int, fading: ch.FadingSpec, loss_fn, rng) -> list[np.ndarray]:
    """Per-node (elements x users) uplink channel matrices."""
    geom = upa_shape(elements)
    out = []
    for node in nodes:
        h = np.zeros((elements, len(users)), dtype=complex)
        for k, user in enumerate(users):
            d, direction = distance_and_angles(node, user)
            loss = loss_fn(d)
            small = ch.draw_small_scale(fading, geom, _SINGLE, direction, direction, rng)
            h[:, k] = ch.assemble_channel(
                ch.LargeScaleGain(loss, cfg.f_hop1_hz, d), small).entries[:, 0]
        out.append(h)
    return out


def run_cs2_trial(cfg: Cs2Config, haps_elements: int, rng: np.random.Generator) -> Cs2TrialResult:
    """One aerial trial at a given platform array size.

    Users drop uniformly in the square; drones sit on a uniform grid at their
    flight height with the platform above the region centre. Second-hop gains
    are deterministic (pure LoS with analytic steering gains), so a fixed
    seed pairs the fading across different platform array sizes.
    """
    if haps_elements < 1:
        raise ValueError(f"need >= 1 platform elements, got {haps_elements}")
    users = sample_positions(Square(cfg.region_side_m), cfg.n_users, rng)
    uxnbs = grid_positions(cfg.n_uxnbs, cfg.region_side_m, cfg.uxnb_height_m)
    haps = Position3D(cfg.region_side_m / 2, cfg.region_side_m / 2, cfg.haps_altitude_m)

    fading = ch.FadingSpec.rician(cfg.access_rician_k_db)
    h_per_uxnb = _access_channels(
        cfg, uxnbs, users, cfg.uxnb_rx_elements, fading,
        lambda d: ch.fspl_db(d, cfg.f_hop1_hz), rng)

    p_user = dbm_to_watt(cfg.p_user_dbm)
    noise_access = cfg.noise_psd_w_per_hz * cfg.bandwidth_hz
    m, k = cfg.n_uxnbs, cfg.n_users
    hop1 = np.array([[hop1_mf_sinr(h_per_uxnb[mm], kk, p_user, noise_access)
                      for kk in range(k)] for mm in range(m)])

    # orthogonal backhaul resource blocks: bandwidth split M*K ways
    noise_rb = cfg.noise_psd_w_per_hz * cfg.bandwidth_hz / (m * k)
    g2 = np.empty(m)
    for mm, node in enumerate(uxnbs):
        d, _ = distance_and_angles(node, haps)
        loss = ch.subthz_pathloss_db(d, cfg.f_hop2_hz, cfg.k_abs_db_per_km)
        g2[mm] = cfg.uxnb_tx_elements * haps_elements * 10.0 ** (-loss / 10.0) / noise_rb

    links = [[TwoHopLink(hop1[mm, kk], g2[mm]) for kk in range(k)] for mm in range(m)]
    result = maxmin_allocate(links, dbm_to_watt(cfg.p_uxnb_dbm), cfg.maxmin_tol)
    q = result.allocation.q
    sinrs = np.array([af_endtoend_sinr([links[mm][kk] for mm in range(m)], q[:, kk])
                      for kk in range(k)])
    rates = 0.5 * cfg.bandwidth_hz * np.log2(1.0 + sinrs)  # two-slot relaying prelog
    return Cs2TrialResult(scheme="aerial", min_rate=float(rates.min()),
                          per_user_rates=rates, haps_elements=int(haps_elements))


def terrestrial_baseline_trial(cfg: Cs2Config, rng: np.random.Generator) -> Cs2TrialResult:
    """Terrestrial cell-free baseline: NLoS ground APs, ideal fiber backhaul.

    Same user-drop stream as the aerial trial, so a shared seed gives a
    controlled comparison. The central processor adds per-AP match-filter
    SINR contributions; rates carry no relaying prelog.
    """
    users = sample_positions(Square(cfg.region_side_m), cfg.n_users, rng)
    aps = grid_positions(cfg.n_uxnbs, cfg.region_side_m, cfg.ap_height_m)

    h_per_ap = _access_channels(
        cfg, aps, users, cfg.ap_elements, ch.FadingSpec.rayleigh(),
        lambda d: ch.uma_nlos_db(d, cfg.f_hop1_hz, cfg.user_height_m), rng)

    p_user = dbm_to_watt(cfg.p_user_dbm)
    noise = cfg.noise_psd_w_per_hz * cfg.bandwidth_hz
    k = cfg.n_users
    sinrs = np.zeros(k)
    for h in h_per_ap:
        sinrs += np.array([hop1_mf_sinr(h, kk, p_user, noise) for kk in range(k)])
    rates = cfg.bandwidth_hz * np.log2(1.0 + sinrs)
    return Cs2TrialResult(scheme="terrestrial", min_rate=float(rates.min()),
                          per_user_rates=rates)


@dataclass(frozen=True)
class SweepPoint:
    haps_elements: int
    aerial_mean_min_rate: float
    terrestrial_mean_min_rate: float


def sweep_haps_elements(cfg: Cs2Config, trials: int, master_seed: int) -> list[SweepPoint]:
    """Mean minimum rate versus platform array size, with paired trial seeds.

    Every sweep point replays the same per-trial seeds, so the aerial curves
    differ only through the platform array gain; the baseline column is the
    same number at every sweep point.
    """
    if trials < 1:
        raise ValueError(f"need trials >= 1, got {trials}")
    aerial = np.zeros((len(cfg.haps_element_sweep), trials))
    baseline = np.zeros(trials)
    for t in range(trials):
        seed = derive_trial_seed(master_seed, t, 0)
        for i, n_elem in enumerate(cfg.haps_element_sweep):
            rng = np.random.default_rng(seed)
            aerial[i, t] = run_cs2_trial(cfg, n_elem, rng).min_rate
        baseline[t] = terrestrial_baseline_trial(cfg, np.random.default_rng(seed)).min_rate
    base_mean = float(baseline.mean())
    return [SweepPoint(int(n), float(aerial[i].mean()), base_mean)
            for i, n in enumerate(cfg.haps_element_sweep)]
