"""Large-scale path loss models and small-scale fading synthesis.

Covers every link class used by the two scenario engines: free space,
sub-THz free space with atmospheric absorption, and an urban-macro NLoS
power law, plus pure-LoS / Rician / Rayleigh / multipath fading draws.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .beamforming import UpaGeometry, upa_steering
from .geometry import AzEl

SPEED_OF_LIGHT = 299792458.0  # m/s

_FADING_KINDS = ("pure_los", "rician", "rayleigh", "multipath")


@dataclass(frozen=True)
class LargeScaleGain:
    """Distance/frequency-dependent loss of one link, in dB (>= 0 physically)."""

    loss_db: float
    frequency_hz: float
    distance_m: float

    def __post_init__(self):
        for name, v in (("loss_db", self.loss_db), ("frequency_hz", self.frequency_hz),
                        ("distance_m", self.distance_m)):
            if not math.isfinite(v):
                raise ValueError(f"LargeScaleGain.{name} must be finite, got {v!r}")

    @property
    def amplitude(self) -> float:
        return 10.0 ** (-self.loss_db / 20.0)


@dataclass(frozen=True)
class ChannelMatrix:
    """Complex MIMO channel (rx x tx) carrying its large-scale gain."""

    entries: np.ndarray
    large_scale: LargeScaleGain

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=complex)
        if e.ndim != 2:
            raise ValueError(f"channel entries must be 2D, got shape {e.shape}")
        if not np.all(np.isfinite(e)):
            raise ValueError("channel entries must be finite")
        object.__setattr__(self, "entries", e)


@dataclass(frozen=True)
class FadingSpec:
    """Small-scale fading law for one link class.

    ``shadow_sigma_db`` is an optional log-normal shadowing hook applied as a
    common scalar on top of the fading draw (off by default).
    """

    kind: str
    k_db: float | None = None
    n_paths: int | None = None
    shadow_sigma_db: float = 0.0

    def __post_init__(self):
        if self.kind not in _FADING_KINDS:
            raise ValueError(f"unknown fading kind {self.kind!r}, expected one of {_FADING_KINDS}")
        if self.kind == "rician" and (self.k_db is None or not math.isfinite(self.k_db)):
            raise ValueError("rician fading needs a finite k_db")
        if self.kind == "multipath" and (self.n_paths is None or self.n_paths < 1):
            raise ValueError("multipath fading needs n_paths >= 1")
        if self.shadow_sigma_db < 0:
            raise ValueError("shadow_sigma_db must be >= 0")

    @classmethod
    def pure_los(cls) -> "FadingSpec":
        return cls("pure_los")

    @classmethod
    def rician(cls, k_db: float) -> "FadingSpec":
        return cls("rician", k_db=k_db)

    @classmethod
    def rayleigh(cls) -> "FadingSpec":
        return cls("rayleigh")

    @classmethod
    def multipath(cls, n_paths: int) -> "FadingSpec":
        return cls("multipath", n_paths=n_paths)


def fspl_db(d_m: float, f_hz: float) -> float:
    """Free-space path loss 20*log10(4*pi*d*f/c)."""
    if not (d_m > 0 and f_hz > 0 and math.isfinite(d_m) and math.isfinite(f_hz)):
        raise ValueError(f"distance and frequency must be finite and > 0, got {d_m}, {f_hz}")
    return 20.0 * math.log10(4.0 * math.pi * d_m * f_hz / SPEED_OF_LIGHT)


def subthz_pathloss_db(d_m: float, f_hz: float, k_abs_db_per_km: float) -> float:
    """Free-space loss plus molecular absorption, linear in distance."""
    if not (math.isfinite(k_abs_db_per_km) and k_abs_db_per_km >= 0):
        raise ValueError(f"absorption coefficient must be >= 0 dB/km, got {k_abs_db_per_km!r}")
    return fspl_db(d_m, f_hz) + k_abs_db_per_km * (d_m / 1000.0)


def uma_nlos_db(d3d_m: float, f_hz: float, h_ut_m: float = 1.5) -> float:
    """Urban-macro NLoS power law; valid for 10 m <= d3d <= 5 km (clamped outside)."""
    if not (d3d_m > 0 and f_hz > 0):
        raise ValueError(f"distance and frequency must be > 0, got {d3d_m}, {f_hz}")
    d = d3d_m
    if d < 10.0 or d > 5000.0:
        warnings.warn(f"urban-macro loss clamped: d3d={d3d_m:.1f} m outside [10, 5000] m",
                      stacklevel=2)
        d = min(max(d, 10.0), 5000.0)
    f_ghz = f_hz / 1e9
    return 13.54 + 39.08 * math.log10(d) + 20.0 * math.log10(f_ghz) - 0.6 * (h_ut_m - 1.5)


def noise_power_dbm(noise_psd_dbm_hz: float, bandwidth_hz: float) -> float:
    """Thermal noise power over a bandwidth, in dBm."""
    if bandwidth_hz <= 0:
        raise ValueError(f"bandwidth must be > 0 Hz, got {bandwidth_hz}")
    return noise_psd_dbm_hz + 10.0 * math.log10(bandwidth_hz)


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric complex normal with unit element variance."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _los_outer(rx_geom: UpaGeometry, tx_geom: UpaGeometry, aoa: AzEl, aod: AzEl) -> np.ndarray:
    return np.outer(upa_steering(rx_geom, aoa), upa_steering(tx_geom, aod).conj())


def draw_small_scale(spec: FadingSpec, rx_geom: UpaGeometry, tx_geom: UpaGeometry,
                     aoa: AzEl, aod: AzEl, rng: np.random.Generator) -> np.ndarray:
    """Draw one (rx x tx) small-scale fading matrix with unit average element power.

    pure_los is the deterministic steering outer product at (aoa, aod); rician
    mixes it with a Rayleigh part at the given K-factor; multipath sums
    n_paths planar waves at independently drawn angles with complex Gaussian
    gains, normalized so E[||H||_F^2] = rx*tx.
    """
    nr, nt = rx_geom.n_elements, tx_geom.n_elements
    if spec.kind == "pure_los":
        h = _los_outer(rx_geom, tx_geom, aoa, aod)
    elif spec.kind == "rayleigh":
        h = _cn(rng, (nr, nt))
    elif spec.kind == "rician":
        k_lin = 10.0 ** (spec.k_db / 10.0)
        los = _los_outer(rx_geom, tx_geom, aoa, aod)
        h = math.sqrt(k_lin / (k_lin + 1.0)) * los + math.sqrt(1.0 / (k_lin + 1.0)) * _cn(rng, (nr, nt))
    else:  # multipath
        n_paths = spec.n_paths
        gains = _cn(rng, n_paths)
        az_rx = rng.uniform(-math.pi, math.pi, n_paths)
        el_rx = rng.uniform(-math.pi / 2, math.pi / 2, n_paths)
        az_tx = rng.uniform(-math.pi, math.pi, n_paths)
        el_tx = rng.uniform(-math.pi / 2, math.pi / 2, n_paths)
        h = np.zeros((nr, nt), dtype=complex)
        for g, a_r, e_r, a_t, e_t in zip(gains, az_rx, el_rx, az_tx, el_tx):
            ar = upa_steering(rx_geom, AzEl(a_r, e_r)) / math.sqrt(nr)
            at = upa_steering(tx_geom, AzEl(a_t, e_t)) / math.sqrt(nt)
            h += g * np.outer(ar, at.conj())
        h *= math.sqrt(nr * nt / n_paths)
    if spec.shadow_sigma_db > 0.0:
        h = h * 10.0 ** (spec.shadow_sigma_db * rng.standard_normal() / 20.0)
    return h


def assemble_channel(large: LargeScaleGain, small: np.ndarray) -> ChannelMatrix:
    """Scale a small-scale matrix by the large-scale amplitude 10^(-loss/20)."""
    small = np.asarray(small, dtype=complex)
    if small.ndim != 2:
        raise ValueError(f"small-scale matrix must be 2D, got shape {small.shape}")
    return ChannelMatrix(entries=large.amplitude * small, large_scale=large)
