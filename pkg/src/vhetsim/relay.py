"""Two-cell mmWave downlink assisted by a full-duplex decode-and-forward relay.

Each base station beamforms a near-user stream plus its edge user's stream
aimed at the high-altitude relay on the same resource; the relay decodes the
two edge streams through per-cell analog combiners and simultaneously
retransmits them to the edge users (decode-and-forward, both hops active at
once). Three designs are compared on identical channels: network-wide WMMSE
(joint), direct service without the relay, and per-cell selfish WMMSE that
ignores the other cell while the evaluation keeps full interference physics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import channels as ch
from .beamforming import (UpaGeometry, analog_steer, hybrid_factorize, upa_shape,
                          wmmse_network)
from .geometry import Disk, Position3D, dbm_to_watt, distance_and_angles, sample_positions

_SINGLE = UpaGeometry(1, 1)

SCHEME_KINDS = ("joint_haps", "no_haps", "selfish")


@dataclass(frozen=True)
class Cs1Config:
    """Two-cell relay scenario parameters.

    Transmit powers and bandwidth are not part of the studied parameter
    table; the defaults below were chosen so the direct edge links sit in the
    capacity-starved regime the scenario is about, and are config-overridable.
    """

    cell_radius_m: float = 300.0
    bs_elements: int = 64
    haps_elements: int = 100
    rf_chains: int = 2
    f_hz: float = 28e9
    users_per_cell: int = 2
    haps_altitude_m: float = 20e3
    bs_height_m: float = 25.0
    bs_power_dbm: float = 33.0
    haps_power_dbm: float = 43.0
    noise_psd_dbm_hz: float = -174.0
    bandwidth_hz: float = 100e6
    n_paths: int = 5
    haps_spacing_wl: float = 8.0
    near_fraction: float = 0.3
    edge_fraction: float = 0.9
    residual_si_db: float | None = None
    user_height_m: float = 1.5
    wmmse_max_iters: int = 50
    wmmse_tol_bits: float = 1e-4

    def __post_init__(self):
        for name in ("cell_radius_m", "f_hz", "haps_altitude_m", "bs_height_m",
                     "bandwidth_hz", "user_height_m", "wmmse_tol_bits"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        for name in ("bs_elements", "haps_elements", "rf_chains", "n_paths",
                     "wmmse_max_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (self.haps_spacing_wl > 0 and math.isfinite(self.haps_spacing_wl)):
            raise ValueError("haps_spacing_wl must be positive and finite")
        if self.users_per_cell != 2:
            raise ValueError("scenario is defined for exactly 2 users per cell (near, edge)")
        if self.rf_chains > min(self.bs_elements, self.haps_elements):
            raise ValueError("rf_chains cannot exceed the element counts")
        if not (0 < self.near_fraction < self.edge_fraction < 1.0):
            raise ValueError("need 0 < near_fraction < edge_fraction < 1")
        if self.residual_si_db is not None and not math.isfinite(self.residual_si_db):
            raise ValueError("residual_si_db must be finite or None")

    @property
    def noise_w(self) -> float:
        return dbm_to_watt(self.noise_psd_dbm_hz) * self.bandwidth_hz

    @property
    def si_lin(self) -> float:
        # residual self-interference expressed relative to the per-chain
        # noise floor after cancellation; None means perfectly cancelled
        return 0.0 if self.residual_si_db is None else 10.0 ** (self.residual_si_db / 10.0)


@dataclass(frozen=True)
class Cs1Topology:
    """Node positions: 2 base stations, 4 users (near0, edge0, near1, edge1), relay."""

    bs: tuple
    users: tuple
    haps: Position3D


def build_two_cell_topology(cfg: Cs1Config, rng: np.random.Generator) -> Cs1Topology:
    """Two adjacent cells with a near and an edge user each, relay above the midpoint.

    Near users fall uniformly in the inner disk (r <= near_fraction * R), edge
    users in the outer annulus [edge_fraction * R, R] of their own cell.
    """
    r = cfg.cell_radius_m
    bs = (Position3D(-r, 0.0, cfg.bs_height_m), Position3D(r, 0.0, cfg.bs_height_m))
    users = []
    for b in bs:
        near = sample_positions(Disk(cfg.near_fraction * r, cx=b.x, cy=b.y), 1, rng)[0]
        edge = sample_positions(Disk(r, inner_radius=cfg.edge_fraction * r, cx=b.x, cy=b.y),
                                1, rng)[0]
        users.extend([near, edge])
    haps = Position3D(0.0, 0.0, cfg.haps_altitude_m)
    return Cs1Topology(bs=bs, users=tuple(users), haps=haps)


@dataclass(frozen=True)
class Cs1Channels:
    """One realization of every link in the two-cell network.

    h_bu[i][j]: row channel (bs_elements,) from BS i to user j.
    h_bh[i]: (haps_elements x bs_elements) relay uplink matrix from BS i.
    h_hu[j]: row channel (haps_elements,) from the relay to user j.
    bs_aoa[i]: arrival direction of BS i as seen from the relay.
    """

    h_bu: tuple
    h_bh: tuple
    h_hu: tuple
    bs_aoa: tuple
    haps_geom: UpaGeometry


def draw_cs1_channels(cfg: Cs1Config, topo: Cs1Topology,
                      rng: np.random.Generator) -> Cs1Channels:
    """Draw all fading realizations: multipath ground links, pure-LoS relay links.

    The relay's array uses a wide element spacing so its narrow beams can
    resolve the two cells' edge users, which sit less than two degrees apart
    at stratospheric range.
    """
    bs_geom = upa_shape(cfg.bs_elements)
    haps_geom = upa_shape(cfg.haps_elements, spacing=cfg.haps_spacing_wl)
    ground_fading = ch.FadingSpec.multipath(cfg.n_paths)

    h_bu = []
    for b in topo.bs:
        rows = []
        for user in topo.users:
            d, aod = distance_and_angles(b, user)
            loss = ch.uma_nlos_db(d, cfg.f_hz, cfg.user_height_m)
            _, aoa = distance_and_angles(user, b)
            small = ch.draw_small_scale(ground_fading, _SINGLE, bs_geom, aoa, aod, rng)
            rows.append(ch.assemble_channel(
                ch.LargeScaleGain(loss, cfg.f_hz, d), small).entries[0])
        h_bu.append(tuple(rows))

    h_bh = []
    bs_aoa = []
    for b in topo.bs:
        d, aod = distance_and_angles(b, topo.haps)
        _, aoa = distance_and_angles(topo.haps, b)
        loss = ch.fspl_db(d, cfg.f_hz)
        small = ch.draw_small_scale(ch.FadingSpec.pure_los(), haps_geom, bs_geom,
                                    aoa, aod, rng)
        h_bh.append(ch.assemble_channel(ch.LargeScaleGain(loss, cfg.f_hz, d), small).entries)
        bs_aoa.append(aoa)

    h_hu = []
    for user in topo.users:
        d, aod = distance_and_angles(topo.haps, user)
        _, aoa = distance_and_angles(user, topo.haps)
        loss = ch.fspl_db(d, cfg.f_hz)
        small = ch.draw_small_scale(ch.FadingSpec.pure_los(), _SINGLE, haps_geom,
                                    aoa, aod, rng)
        h_hu.append(ch.assemble_channel(ch.LargeScaleGain(loss, cfg.f_hz, d), small).entries[0])

    return Cs1Channels(h_bu=tuple(h_bu), h_bh=tuple(h_bh), h_hu=tuple(h_hu),
                       bs_aoa=tuple(bs_aoa), haps_geom=haps_geom)


@dataclass
class Cs1Beamformers:
    """Designed transmit stages for one scheme, digital and hybrid-factorized."""

    scheme: str
    f_bs: list            # per BS: (bs_elements x 2) digital columns
    f_haps: np.ndarray | None
    combiners: list | None          # per BS: relay analog receive weights
    f_bs_hybrid: list
    f_haps_hybrid: np.ndarray | None
    converged: bool
    factorization_ok: bool


# stream order for the relayed schemes:
# 0: BS0 -> near0, 1: BS0 -> relay chain 0, 2: BS1 -> near1,
# 3: BS1 -> relay chain 1, 4: relay -> edge0, 5: relay -> edge1
_NEAR = (0, 2)
_CHAIN = (1, 3)
_EDGE = (4, 5)


def _chain_rows(channels: Cs1Channels, combiners) -> list:
    """Effective row channel of each relay chain from each BS array."""
    return [[combiners[i].conj() @ channels.h_bh[t] for t in range(2)] for i in range(2)]


def _relayed_gains(cfg: Cs1Config, channels: Cs1Channels, combiners):
    """Per-transmitter (6 x N_t) effective channels and per-stream noise."""
    n_bs, n_haps = cfg.bs_elements, cfg.haps_elements
    chain = _chain_rows(channels, combiners)
    noise_user = cfg.noise_w
    noise_chain = cfg.noise_w * n_haps * (1.0 + cfg.si_lin)

    gains = []
    for t in range(2):  # the two base stations
        g = np.zeros((6, n_bs), dtype=complex)
        g[0] = channels.h_bu[t][0]
        g[2] = channels.h_bu[t][2]
        g[1] = chain[0][t]
        g[3] = chain[1][t]
        g[4] = channels.h_bu[t][1]
        g[5] = channels.h_bu[t][3]
        gains.append(g)
    gh = np.zeros((6, n_haps), dtype=complex)
    gh[0] = channels.h_hu[0]
    gh[2] = channels.h_hu[2]
    # relay self-interference is folded into the chain noise floor
    gh[4] = channels.h_hu[1]
    gh[5] = channels.h_hu[3]
    gains.append(gh)

    noise = np.array([noise_user, noise_chain, noise_user, noise_chain,
                      noise_user, noise_user])
    return gains, noise


def _factorized(cfg: Cs1Config, scheme: str, f_bs, f_haps, combiners,
                converged: bool) -> Cs1Beamformers:
    """Attach hybrid-factorized stages to a digital design."""
    factorization_ok = True
    f_bs_hybrid = []
    for mat in f_bs:
        fac = hybrid_factorize(mat, cfg.rf_chains,
                               tol=1e-6 * max(1.0, float(np.linalg.norm(mat))))
        factorization_ok &= fac.converged
        f_bs_hybrid.append(fac.matrix)
    f_haps_hybrid = None
    if f_haps is not None:
        fac = hybrid_factorize(f_haps, cfg.rf_chains,
                               tol=1e-6 * max(1.0, float(np.linalg.norm(f_haps))))
        factorization_ok &= fac.converged
        f_haps_hybrid = fac.matrix
    return Cs1Beamformers(scheme=scheme, f_bs=list(f_bs), f_haps=f_haps,
                          combiners=combiners, f_bs_hybrid=f_bs_hybrid,
                          f_haps_hybrid=f_haps_hybrid, converged=converged,
                          factorization_ok=factorization_ok)


def design_beamformers(scheme: str, channels: Cs1Channels, cfg: Cs1Config,
                       selfish_warm: Cs1Beamformers | None = None) -> Cs1Beamformers:
    """Design every node's precoders for one scheme.

    joint_haps runs one network-wide WMMSE across both BSs and the relay;
    no_haps serves all four users directly with a two-BS WMMSE; selfish runs
    per-node WMMSE designs that ignore the other cell's interference. Every
    transmit stage is factorized into the hybrid architecture. A precomputed
    selfish design may be passed to seed the joint search.
    """
    if scheme not in SCHEME_KINDS:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {SCHEME_KINDS}")
    p_bs = dbm_to_watt(cfg.bs_power_dbm)
    p_haps = dbm_to_watt(cfg.haps_power_dbm)
    kw = dict(max_iters=cfg.wmmse_max_iters, tol_bits=cfg.wmmse_tol_bits)

    if scheme == "no_haps":
        gains = []
        for t in range(2):
            g = np.zeros((4, cfg.bs_elements), dtype=complex)
            for j in range(4):
                g[j] = channels.h_bu[t][j]
            gains.append(g)
        owners = [0, 0, 1, 1]  # BS0 serves users 0,1; BS1 serves users 2,3
        noise = np.full(4, cfg.noise_w)
        mats, info = wmmse_network(gains, owners, [p_bs, p_bs], noise, **kw)
        return _factorized(cfg, scheme, [mats[0], mats[1]], None, None, info.converged)

    # one analog receive chain steered toward each BS as seen from the relay
    combiners = [analog_steer(channels.haps_geom, aoa).weights
                 for aoa in channels.bs_aoa]
    gains, noise = _relayed_gains(cfg, channels, combiners)
    owners = [0, 0, 1, 1, 2, 2]
    if scheme == "selfish":
        f_bs, f_haps, converged = _selfish_design(cfg, gains, noise, p_bs, p_haps, kw)
        return _factorized(cfg, scheme, f_bs, f_haps, combiners, converged)
    return _joint_design(cfg, channels, combiners, gains, noise, owners,
                         p_bs, p_haps, kw, selfish_warm)


_JOINT_ROUNDS = 4
_SELFISH_ROUNDS = 3
_MIN_STREAM_WEIGHT = 0.02


def _joint_design(cfg, channels, combiners, gains, noise, owners, p_bs, p_haps,
                  kw, selfish_warm=None) -> "Cs1Beamformers":
    """Network-wide WMMSE with an outer decode-and-forward rate-matching loop.

    A plain sum-rate design overfeeds the relay chains, whose surplus the
    edge users' min(hop1, hop2) then discards. The outer loop reweights each
    chain stream against its relay downlink stream until the two hop rates
    match. The uncoordinated per-node design is also a candidate (and the
    warm start), and the winner is picked on the hybrid-factorized evaluated
    sum rate, so coordination never returns less than no coordination.
    """

    def full_rate(f_bs, f_haps):
        cand = Cs1Beamformers(scheme="joint_haps", f_bs=f_bs, f_haps=f_haps,
                              combiners=combiners, f_bs_hybrid=None,
                              f_haps_hybrid=None, converged=True,
                              factorization_ok=True)
        return evaluate_sum_rate("joint_haps", cand, channels, cfg, use_hybrid=False)

    if selfish_warm is not None:
        selfish_bs, selfish_haps = selfish_warm.f_bs, selfish_warm.f_haps
    else:
        selfish_bs, selfish_haps, _ = _selfish_design(cfg, gains, noise, p_bs,
                                                      p_haps, kw)

    best = None
    weights = np.ones(6)
    init = [selfish_bs[0], selfish_bs[1], selfish_haps]
    for rnd in range(_JOINT_ROUNDS):
        mats, info = wmmse_network(gains, owners, [p_bs, p_bs, p_haps], noise,
                                   rate_weights=weights,
                                   init=init if rnd == 0 else None, **kw)
        res = full_rate([mats[0], mats[1]], mats[2])
        if best is None or res.sum_rate > best[0]:
            best = (res.sum_rate, ([mats[0], mats[1]], mats[2]), info.converged)
        bw = cfg.bandwidth_hz
        for i in range(2):
            r1, r2 = res.edge_hop1_rates[i], res.edge_hop2_rates[i]
            if max(r1, r2) <= 1e-9 * bw:
                continue
            ratio = (r2 + 1e-9 * bw) / (r1 + 1e-9 * bw)
            weights[_CHAIN[i]] = float(np.clip(weights[_CHAIN[i]] * ratio,
                                               _MIN_STREAM_WEIGHT, 1.0))
            weights[_EDGE[i]] = float(np.clip(weights[_EDGE[i]] / ratio,
                                              _MIN_STREAM_WEIGHT, 1.0))

    _, (f_bs, f_haps), converged = best
    coordinated = _factorized(cfg, "joint_haps", f_bs, f_haps, combiners, converged)
    if selfish_warm is not None:
        fallback = Cs1Beamformers(scheme="joint_haps", f_bs=selfish_warm.f_bs,
                                  f_haps=selfish_warm.f_haps, combiners=combiners,
                                  f_bs_hybrid=selfish_warm.f_bs_hybrid,
                                  f_haps_hybrid=selfish_warm.f_haps_hybrid,
                                  converged=selfish_warm.converged,
                                  factorization_ok=selfish_warm.factorization_ok)
    else:
        fallback = _factorized(cfg, "joint_haps", list(selfish_bs), selfish_haps,
                               combiners, True)
    rate_coord = evaluate_sum_rate("joint_haps", coordinated, channels, cfg).sum_rate
    rate_fall = evaluate_sum_rate("joint_haps", fallback, channels, cfg).sum_rate
    return coordinated if rate_coord >= rate_fall else fallback


def _selfish_design(cfg, gains, noise, p_bs, p_haps, kw):
    """Per-node designs that ignore the other cell's channels entirely.

    The relay designs its edge downlink alone; each BS then rate-matches its
    own relay chain to the advertised downlink rate using only local links.
    Evaluation elsewhere still applies full interference physics.
    """
    g_haps = gains[2][list(_EDGE)]
    mats, info = wmmse_network([g_haps], [0, 0], [p_haps], noise[list(_EDGE)], **kw)
    f_haps = mats[0]
    converged = info.converged
    # local downlink rates: relay streams interfere only with each other here
    amps = g_haps @ f_haps
    sig = np.abs(np.diagonal(amps)) ** 2
    tot = np.sum(np.abs(amps) ** 2, axis=1) + noise[list(_EDGE)]
    r2_local = cfg.bandwidth_hz * np.log2(1.0 + sig / (tot - sig))

    f_bs = []
    for t in range(2):
        own = [_NEAR[t], _CHAIN[t]]
        g = gains[t][own]
        weights = np.ones(2)
        best = None
        for _ in range(_SELFISH_ROUNDS):
            mats, info = wmmse_network([g], [0, 0], [p_bs], noise[own],
                                       rate_weights=weights, **kw)
            a = g @ mats[0]
            sig = np.abs(np.diagonal(a)) ** 2
            tot = np.sum(np.abs(a) ** 2, axis=1) + noise[own]
            local = cfg.bandwidth_hz * np.log2(1.0 + sig / (tot - sig))
            r1 = local[1]
            value = local[0] + min(r1, r2_local[t])
            if best is None or value > best[0]:
                best = (value, mats[0], info.converged)
            ratio = (r2_local[t] + 1e-9 * cfg.bandwidth_hz) / (r1 + 1e-9 * cfg.bandwidth_hz)
            weights[1] = float(np.clip(weights[1] * ratio, _MIN_STREAM_WEIGHT, 1.0))
        _, mat, ok = best
        f_bs.append(mat)
        converged &= ok
    return f_bs, f_haps, converged


@dataclass(frozen=True)
class Cs1TrialResult:
    """Per-realization rates for one scheme, in bit/s."""

    scheme: str
    sum_rate: float
    per_user_rates: np.ndarray
    edge_hop1_rates: np.ndarray | None = None
    edge_hop2_rates: np.ndarray | None = None

    def __post_init__(self):
        rates = np.asarray(self.per_user_rates, dtype=float)
        object.__setattr__(self, "per_user_rates", rates)
        if not np.all(np.isfinite(rates)) or np.any(rates < 0):
            raise ValueError("per-user rates must be finite and >= 0")
        if abs(self.sum_rate - rates.sum()) > 1e-6 * max(abs(self.sum_rate), 1.0):
            raise ValueError("sum_rate must equal the sum of per-user rates")


def evaluate_sum_rate(scheme: str, bf: Cs1Beamformers, channels: Cs1Channels,
                      cfg: Cs1Config, use_hybrid: bool = True) -> Cs1TrialResult:
    """Evaluate per-user rates under full interference physics.

    Near users decode their stream against everything else; edge users in the
    relayed schemes are bottlenecked by min(first hop, second hop) with both
    hops running simultaneously (full duplex).
    """
    if scheme not in SCHEME_KINDS:
        raise ValueError(f"unknown scheme {scheme!r}")
    f_bs = bf.f_bs_hybrid if use_hybrid else bf.f_bs
    b = cfg.bandwidth_hz

    if scheme == "no_haps":
        rates = np.zeros(4)
        recv = [np.stack([channels.h_bu[t][j] for t in range(2)]) for j in range(4)]
        amps = np.zeros((4, 4), dtype=complex)  # receiver j x stream s
        for j in range(4):
            for t in range(2):
                cols = recv[j][t] @ f_bs[t]              # streams of BS t at user j
                amps[j, 2 * t:2 * t + 2] = cols
        stream_of_user = [0, 1, 2, 3]
        for j in range(4):
            s = stream_of_user[j]
            sig = np.abs(amps[j, s]) ** 2
            interf = float(np.sum(np.abs(amps[j]) ** 2) - sig)
            rates[j] = b * math.log2(1.0 + sig / (interf + cfg.noise_w))
        return Cs1TrialResult(scheme=scheme, sum_rate=float(rates.sum()),
                              per_user_rates=rates)

    f_haps = bf.f_haps_hybrid if use_hybrid else bf.f_haps
    chain = _chain_rows(channels, bf.combiners)
    noise_chain = cfg.noise_w * cfg.haps_elements * (1.0 + cfg.si_lin)

    # amplitude of every stream at every receiver (6 x 6): receivers in the
    # stream order's receiver list [near0, chain0, near1, chain1, edge0, edge1]
    amps = np.zeros((6, 6), dtype=complex)
    for r_idx, user_j in ((0, 0), (2, 2), (4, 1), (5, 3)):
        for t in range(2):
            amps[r_idx, 2 * t:2 * t + 2] = channels.h_bu[t][user_j] @ f_bs[t]
        amps[r_idx, 4:6] = channels.h_hu[user_j] @ f_haps
    for i in range(2):
        r_idx = 1 if i == 0 else 3
        for t in range(2):
            amps[r_idx, 2 * t:2 * t + 2] = chain[i][t] @ f_bs[t]
        # relay self-interference is accounted for in the chain noise floor

    def sinr(r_idx, s_idx, noise):
        sig = np.abs(amps[r_idx, s_idx]) ** 2
        interf = float(np.sum(np.abs(amps[r_idx]) ** 2) - sig)
        return sig / (interf + noise)

    near_rates = [b * math.log2(1.0 + sinr(0, 0, cfg.noise_w)),
                  b * math.log2(1.0 + sinr(2, 2, cfg.noise_w))]
    hop1 = [b * math.log2(1.0 + sinr(1, 1, noise_chain)),
            b * math.log2(1.0 + sinr(3, 3, noise_chain))]
    hop2 = [b * math.log2(1.0 + sinr(4, 4, cfg.noise_w)),
            b * math.log2(1.0 + sinr(5, 5, cfg.noise_w))]
    edge_rates = [min(h1, h2) for h1, h2 in zip(hop1, hop2)]

    rates = np.array([near_rates[0], edge_rates[0], near_rates[1], edge_rates[1]])
    return Cs1TrialResult(scheme=scheme, sum_rate=float(rates.sum()),
                          per_user_rates=rates,
                          edge_hop1_rates=np.asarray(hop1),
                          edge_hop2_rates=np.asarray(hop2))


def run_cs1_realization(cfg: Cs1Config, channels: Cs1Channels,
                        schemes=SCHEME_KINDS) -> dict:
    """Design and evaluate every requested scheme on one shared realization."""
    out = {}
    for scheme in schemes:
        bf = design_beamformers(scheme, channels, cfg)
        out[scheme] = evaluate_sum_rate(scheme, bf, channels, cfg)
    return out
