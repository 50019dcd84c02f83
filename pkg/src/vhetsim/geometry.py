"""Unit conversions, 3D geometry, and uniform topology sampling.

All angles are radians internally; degrees are only accepted at the config
boundary. RNG streams are always explicit parameters, never shared state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DegenerateGeometryError(ValueError):
    """Two points coincide, so no direction between them is defined."""


def _require_finite(name, *values):
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class PowerDbm:
    """A power level in decibel-milliwatts."""

    value: float

    def __post_init__(self):
        _require_finite("PowerDbm.value", self.value)

    @property
    def watts(self) -> float:
        return dbm_to_watt(self.value)


@dataclass(frozen=True)
class Position3D:
    """Point in metres; x/y span the ground plane, z is altitude (>= 0)."""

    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        _require_finite("Position3D coordinates", self.x, self.y, self.z)
        if self.z < 0.0:
            raise ValueError(f"altitude must be >= 0, got z={self.z}")


@dataclass(frozen=True)
class AzEl:
    """Propagation direction: azimuth in (-pi, pi], elevation in [-pi/2, pi/2]."""

    azimuth: float
    elevation: float

    def __post_init__(self):
        _require_finite("AzEl angles", self.azimuth, self.elevation)
        if not (-math.pi < self.azimuth <= math.pi):
            raise ValueError(f"azimuth must lie in (-pi, pi], got {self.azimuth}")
        if not (-math.pi / 2 <= self.elevation <= math.pi / 2):
            raise ValueError(f"elevation must lie in [-pi/2, pi/2], got {self.elevation}")


def db_to_linear(x_db: float) -> float:
    """10^(x/10); rejects non-finite input."""
    _require_finite("x_db", x_db)
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    """Inverse of db_to_linear; requires a strictly positive finite ratio."""
    if not (math.isfinite(x) and x > 0.0):
        raise ValueError(f"linear ratio must be finite and > 0, got {x!r}")
    return 10.0 * math.log10(x)


def dbm_to_watt(p_dbm: float | PowerDbm) -> float:
    """Convert dBm to watts: 10^((p - 30)/10)."""
    if isinstance(p_dbm, PowerDbm):
        p_dbm = p_dbm.value
    _require_finite("p_dbm", p_dbm)
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watt_to_dbm(p_w: float) -> float:
    if not (math.isfinite(p_w) and p_w > 0.0):
        raise ValueError(f"power must be finite and > 0 W, got {p_w!r}")
    return 30.0 + 10.0 * math.log10(p_w)


def distance_and_angles(a: Position3D, b: Position3D) -> tuple[float, AzEl]:
    """Euclidean 3D distance and the direction of b as seen from a.

    Azimuth is measured in the ground plane from the +x axis; elevation is
    measured from the horizontal, positive towards zenith.
    """
    dx, dy, dz = b.x - a.x, b.y - a.y, b.z - a.z
    d3d = math.sqrt(dx * dx + dy * dy + dz * dz)
    if d3d == 0.0:
        raise DegenerateGeometryError(f"coincident points: {a} and {b}")
    azimuth = math.atan2(dy, dx)
    if azimuth <= -math.pi:  # atan2 may return -pi; fold onto (-pi, pi]
        azimuth = math.pi
    elevation = math.atan2(dz, math.hypot(dx, dy))
    return d3d, AzEl(azimuth, elevation)


@dataclass(frozen=True)
class Square:
    """Axis-aligned square [0, side] x [0, side] on the ground plane."""

    side: float

    def __post_init__(self):
        if not (math.isfinite(self.side) and self.side > 0.0):
            raise ValueError(f"square side must be finite and > 0, got {self.side!r}")


@dataclass(frozen=True)
class Disk:
    """Disk (or annulus, if inner_radius > 0) centred at (cx, cy) on the ground."""

    radius: float
    inner_radius: float = 0.0
    cx: float = 0.0
    cy: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0.0):
            raise ValueError(f"disk radius must be finite and > 0, got {self.radius!r}")
        if not (0.0 <= self.inner_radius < self.radius):
            raise ValueError(
                f"inner radius must satisfy 0 <= r < {self.radius}, got {self.inner_radius!r}"
            )
        _require_finite("Disk centre", self.cx, self.cy)


def sample_positions(region: Square | Disk, n: int, rng: np.random.Generator) -> list[Position3D]:
    """Draw n i.i.d. uniform ground positions (z = 0) inside the region.

    Deterministic given the generator state; annulus/disk sampling uses the
    area-uniform radial transform.
    """
    if n < 1:
        raise ValueError(f"need n >= 1 positions, got {n}")
    if isinstance(region, Square):
        xy = rng.uniform(0.0, region.side, size=(n, 2))
        return [Position3D(float(x), float(y), 0.0) for x, y in xy]
    if isinstance(region, Disk):
        u = rng.uniform(size=n)
        theta = rng.uniform(-math.pi, math.pi, size=n)
        r = np.sqrt(u * (region.radius**2 - region.inner_radius**2) + region.inner_radius**2)
        xs = region.cx + r * np.cos(theta)
        ys = region.cy + r * np.sin(theta)
        return [Position3D(float(x), float(y), 0.0) for x, y in zip(xs, ys)]
    raise TypeError(f"unsupported region type {type(region).__name__}")
