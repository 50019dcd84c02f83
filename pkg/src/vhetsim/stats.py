"""Deterministic seed derivation and empirical-distribution statistics.

Trial seeds are derived statelessly from (master seed, topology id,
realization id) with an avalanche mixer, so any execution order or degree of
parallelism reproduces the same per-trial random streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_TOPO_MULT = 0xD1B54A32D192ED03
_REAL_MULT = 0x8CB92BA72F3D8DD7


def _mix64(x: int) -> int:
    # splitmix64 finalizer: two multiply-xorshift rounds plus a closing shift
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_trial_seed(master_seed: int, topology_id: int, realization_id: int) -> int:
    """Counter-based 64-bit seed for one (topology, realization) trial.

    Stateless and platform independent: the same triple always yields the
    same seed regardless of evaluation order or thread count.
    """
    for name, v in (("master_seed", master_seed), ("topology_id", topology_id),
                    ("realization_id", realization_id)):
        if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
            raise TypeError(f"{name} must be an integer, got {type(v).__name__}")
        if v < 0:
            raise ValueError(f"{name} must be >= 0, got {v}")
    if master_seed > _MASK64:
        raise ValueError(f"master_seed must fit in 64 bits, got {master_seed}")
    x = _mix64((int(master_seed) + _GOLDEN) & _MASK64)
    x = _mix64(x ^ (((int(topology_id) + 1) * _TOPO_MULT) & _MASK64))
    x = _mix64(x ^ (((int(realization_id) + 1) * _REAL_MULT) & _MASK64))
    return x


@dataclass(frozen=True)
class TrialPlan:
    """Monte Carlo execution plan: master seed and trial grid dimensions."""

    master_seed: int
    topologies: int
    realizations: int

    def __post_init__(self):
        if not (0 <= self.master_seed <= _MASK64):
            raise ValueError(f"master_seed must be a 64-bit unsigned int, got {self.master_seed}")
        if self.topologies < 1 or self.realizations < 1:
            raise ValueError(
                f"topologies and realizations must be >= 1, got "
                f"{self.topologies} x {self.realizations}"
            )


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Sorted per-trial metric samples supporting CDF and percentile queries."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size < 1:
            raise ValueError("samples must be a non-empty 1D array")
        if np.any(np.diff(s) < 0):
            raise ValueError("samples must be sorted in non-decreasing order")
        object.__setattr__(self, "samples", s)

    @classmethod
    def from_samples(cls, values) -> "EmpiricalDistribution":
        return cls(np.sort(np.asarray(values, dtype=float)))

    def __len__(self) -> int:
        return int(self.samples.size)


def empirical_cdf(dist: EmpiricalDistribution, x: float) -> float:
    """Fraction of samples <= x (right-continuous step function)."""
    return float(np.searchsorted(dist.samples, x, side="right")) / len(dist)


def percentile(dist: EmpiricalDistribution, p: float) -> float:
    """Nearest-rank percentile: the sample at 1-based index ceil(p*n/100)."""
    if not (0.0 < p < 100.0):
        raise ValueError(f"percentile p must lie in (0, 100), got {p}")
    n = len(dist)
    idx = math.ceil(p * n / 100.0)
    return float(dist.samples[idx - 1])
