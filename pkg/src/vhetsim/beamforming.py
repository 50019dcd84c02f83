"""UPA steering, match filtering, digital precoding, and hybrid factorization.

Array convention: elements lie in a horizontal plane on a rows x cols grid,
broadside pointing vertically. For a direction with elevation ``el`` the polar
angle from broadside is pi/2 - |el|, so the pattern is symmetric about the
array plane; every node here only ever looks into one hemisphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import AzEl


class SingularChannelError(ValueError):
    """Stacked channel is rank deficient, so the zero-forcing inverse fails."""


@dataclass(frozen=True)
class UpaGeometry:
    """Uniform planar array: rows x cols elements, spacing in wavelengths."""

    rows: int
    cols: int
    spacing: float = 0.5

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"array needs rows, cols >= 1, got {self.rows}x{self.cols}")
        if not (math.isfinite(self.spacing) and self.spacing > 0.0):
            raise ValueError(f"element spacing must be > 0 wavelengths, got {self.spacing!r}")

    @property
    def n_elements(self) -> int:
        return self.rows * self.cols


def upa_shape(n_elements: int, spacing: float = 0.5) -> UpaGeometry:
    """Nearest-square factorization of a total element count into rows x cols."""
    if n_elements < 1:
        raise ValueError(f"need >= 1 elements, got {n_elements}")
    r = math.isqrt(n_elements)
    while n_elements % r:
        r -= 1
    return UpaGeometry(r, n_elements // r, spacing)


def upa_steering(geom: UpaGeometry, direction: AzEl) -> np.ndarray:
    """Unit-modulus steering vector of length rows*cols (row-major element order).

    Element (m, n) carries phase 2*pi*spacing*(m*sin(theta)*cos(phi) +
    n*sin(theta)*sin(phi)) with theta the polar angle from broadside and phi
    the azimuth.
    """
    polar = math.pi / 2.0 - abs(direction.elevation)
    u = math.sin(polar) * math.cos(direction.azimuth)
    v = math.sin(polar) * math.sin(direction.azimuth)
    m = np.arange(geom.rows)[:, None]
    n = np.arange(geom.cols)[None, :]
    phase = 2.0 * math.pi * geom.spacing * (m * u + n * v)
    return np.exp(1j * phase).ravel()


def match_filter(h: np.ndarray) -> np.ndarray:
    """Unit-norm matched-filter combiner h/||h||; combining h yields ||h||."""
    h = np.asarray(h, dtype=complex).ravel()
    norm = np.linalg.norm(h)
    if norm == 0.0:
        raise ValueError("cannot match-filter an all-zero channel")
    return h / norm


@dataclass(frozen=True)
class AnalogCombiner:
    """Per-element phase-only receive weights (entrywise unit modulus)."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=complex).ravel()
        if w.size < 1 or not np.all(np.isfinite(w)):
            raise ValueError("combiner weights must be a non-empty finite vector")
        if np.max(np.abs(np.abs(w) - 1.0)) > 1e-9:
            raise ValueError("combiner weights must be unit modulus")
        object.__setattr__(self, "weights", w)

    def combine(self, y: np.ndarray) -> complex:
        return complex(self.weights.conj() @ np.asarray(y, dtype=complex).ravel())


def analog_steer(geom: UpaGeometry, direction: AzEl) -> AnalogCombiner:
    """Phase-conjugate steering combiner; gain toward `direction` equals N."""
    return AnalogCombiner(upa_steering(geom, direction))


@dataclass(frozen=True)
class HybridPrecoder:
    """Unit-modulus analog stage (elements x rf_chains) times a digital stage."""

    analog: np.ndarray
    digital: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.analog, dtype=complex)
        d = np.asarray(self.digital, dtype=complex)
        if a.ndim != 2 or d.ndim != 2 or a.shape[1] != d.shape[0]:
            raise ValueError(f"inconsistent hybrid stages {a.shape} x {d.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(d))):
            raise ValueError("hybrid precoder stages must be finite")
        if np.max(np.abs(np.abs(a) - 1.0)) > 1e-9:
            raise ValueError("analog stage entries must be unit modulus")
        object.__setattr__(self, "analog", a)
        object.__setattr__(self, "digital", d)

    @property
    def matrix(self) -> np.ndarray:
        return self.analog @ self.digital


@dataclass
class PrecoderResult:
    """Designed precoder columns plus solver diagnostics."""

    matrix: np.ndarray
    converged: bool = True
    iterations: int = 0
    objective_bits: float = math.nan
    objective_trace: np.ndarray = field(default_factory=lambda: np.empty(0))


def _as_rows(h_rows) -> np.ndarray:
    h = np.asarray(h_rows, dtype=complex)
    if h.ndim == 1:
        h = h[None, :]
    if h.ndim != 2 or h.size == 0:
        raise ValueError("expected a (streams x elements) channel stack")
    return h


def zf_precoder(h_rows, budget_w: float) -> np.ndarray:
    """Pseudo-inverse precoder scaled to the total power budget."""
    h = _as_rows(h_rows)
    gram = h @ h.conj().T
    if np.linalg.cond(gram) > 1e12:
        raise SingularChannelError("stacked channel is not full row rank")
    w = h.conj().T @ np.linalg.inv(gram)
    return w * math.sqrt(budget_w) / np.linalg.norm(w)


def digital_precoder(h_rows, mode: str, noise_w: float, budget_w: float,
                     init=None, max_iters: int = 100, tol_bits: float = 1e-4) -> PrecoderResult:
    """Design one transmitter's digital precoder for single-antenna receivers.

    mode "zf" returns the budget-scaled pseudo-inverse; mode "wmmse" runs the
    weighted-MMSE alternating update until the sum-rate change drops below
    tol_bits (or max_iters), starting from `init` when given.
    """
    h = _as_rows(h_rows)
    if noise_w <= 0 or budget_w <= 0:
        raise ValueError("noise and budget must be > 0 W")
    if mode == "zf":
        return PrecoderResult(matrix=zf_precoder(h, budget_w))
    if mode != "wmmse":
        raise ValueError(f"unknown precoder mode {mode!r}")
    k = h.shape[0]
    mats, info = wmmse_network(
        gains=[h], owners=[0] * k, budgets=[budget_w], noise_w=[noise_w] * k,
        max_iters=max_iters, tol_bits=tol_bits,
        init=None if init is None else [np.asarray(init, dtype=complex)],
    )
    return PrecoderResult(matrix=mats[0], converged=info.converged,
                          iterations=info.iterations,
                          objective_bits=info.objective_bits,
                          objective_trace=info.objective_trace)


@dataclass
class WmmseInfo:
    converged: bool
    iterations: int
    objective_bits: float
    objective_trace: np.ndarray


def _precoder_update(gram: np.ndarray, c: np.ndarray, coef: np.ndarray, own_idx,
                     budget: float) -> np.ndarray:
    """Budget-constrained weighted-MMSE precoder update in channel-span coordinates.

    The regularized solve (diag(c) @ gram + mu I)^-1 is diagonalized through
    the Hermitian similarity sqrt(c) gram sqrt(c), making the power a cheap
    scalar function of the multiplier mu, found by bisection.
    """
    croot = np.sqrt(np.maximum(c, 1e-300))
    d, u = np.linalg.eigh(croot[:, None] * gram * croot[None, :])
    d = np.maximum(d, 0.0)
    w_own = np.where(c[own_idx] > 0, np.abs(coef) ** 2 / np.maximum(c[own_idx], 1e-300), 0.0)
    u_abs2 = np.abs(u[own_idx, :]) ** 2  # (n_own, s)

    # per-eigenvalue weights make the transmit power a scalar rational
    # function of mu; it is convex and decreasing, so Newton from the left
    # converges monotonically to the budget-tight multiplier
    thresh = float(d.max()) * 1e-14  # drop machine-noise eigenvalues
    terms = [(da, wa) for da, wa in zip(d.tolist(), (w_own @ u_abs2).tolist())
             if da > thresh and wa > 0]

    def power_slope(mu: float):
        p = dp = 0.0
        for da, wa in terms:
            r = da + mu
            p += wa * da / (r * r)
            dp -= 2.0 * wa * da / (r * r * r)
        return p, dp

    mu = 0.0
    p0, _ = power_slope(0.0)
    if p0 > budget:
        for _ in range(200):
            p, dp = power_slope(mu)
            if p <= budget * (1.0 + 1e-13):
                break
            step = (p - budget) / (-dp)
            mu += step
            if step <= 1e-16 * mu:
                break
    pos = d > thresh
    diag = np.full_like(d, 0.0 if mu == 0.0 else 1.0 / mu)
    diag[pos] = 1.0 / (d[pos] + mu)
    y = u.conj().T[:, own_idx] / croot[own_idx][None, :]
    x = (croot[:, None] * u) @ (diag[:, None] * y)
    return x * coef[None, :]


def wmmse_network(gains, owners, budgets, noise_w, max_iters: int = 100,
                  tol_bits: float = 1e-4, init=None, rate_weights=None):
    """Weighted-MMSE sum-rate precoding over multiple transmitters.

    Args:
        gains: per-transmitter (S x N_t) arrays; row s is the channel from
            transmitter t's array to the receiver of stream s (all-zero row
            means no link). Every receiver has a single effective antenna.
        owners: length-S list, owners[s] = index of the transmitter that
            carries stream s.
        budgets: per-transmitter total power in watts.
        noise_w: per-stream receiver noise power in watts.
        init: optional per-transmitter initial precoders (N_t x owned count).
        rate_weights: optional per-stream weights on log2(1 + SINR).

    Returns:
        (precoders, info): per-transmitter (N_t x owned) column stacks in the
        owners' stream order, and solver diagnostics whose objective trace is
        non-decreasing.
    """
    gains = [np.asarray(g, dtype=complex) for g in gains]
    owners = np.asarray(owners, dtype=int)
    budgets = np.asarray(budgets, dtype=float)
    noise = np.asarray(noise_w, dtype=float)
    n_tx, n_s = len(gains), owners.size
    beta = np.ones(n_s) if rate_weights is None else np.asarray(rate_weights, dtype=float)
    if beta.shape != (n_s,) or np.any(beta < 0):
        raise ValueError("rate_weights must be non-negative, one per stream")
    if any(g.shape[0] != n_s for g in gains):
        raise ValueError("every gains[t] needs one row per stream")
    if np.any(budgets <= 0) or np.any(noise <= 0):
        raise ValueError("budgets and noise powers must be > 0 W")
    owned = [np.flatnonzero(owners == t) for t in range(n_tx)]

    # Everything runs in the span of each transmitter's channel rows:
    # f_s = gains[t]^H alpha_s, so only the S x S Grams are ever factored.
    grams = [g @ g.conj().T for g in gains]

    alphas = []
    for t in range(n_tx):
        a = np.zeros((n_s, owned[t].size), dtype=complex)
        if init is not None and init[t] is not None:
            # project the supplied full-dimension precoder onto the row span
            f0 = np.asarray(init[t], dtype=complex)
            a = np.linalg.lstsq(gains[t].conj().T, f0, rcond=None)[0]
        else:
            for j, s in enumerate(owned[t]):
                g_ss = grams[t][s, s].real
                if g_ss > 0 and owned[t].size > 0:
                    a[s, j] = math.sqrt(budgets[t] / (owned[t].size * g_ss))
        alphas.append(a)

    def received_amplitudes():
        # V[s, r]: amplitude at stream-s receiver from stream r
        v = np.zeros((n_s, n_s), dtype=complex)
        for t in range(n_tx):
            if owned[t].size:
                v[:, owned[t]] = grams[t] @ alphas[t]
        return v

    def signal_and_interference(v):
        ab2 = np.abs(v) ** 2
        sig = np.diagonal(ab2).copy()
        off = ab2.copy()
        np.fill_diagonal(off, 0.0)
        return sig, off.sum(axis=1) + noise

    def objective(v):
        sig, inter = signal_and_interference(v)
        return float(np.sum(beta * np.log2(1.0 + sig / inter)))

    v = received_amplitudes()
    trace = [objective(v)]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        sig, inter = signal_and_interference(v)
        tot = sig + inter
        u = np.diagonal(v) / tot
        err = np.maximum(inter / tot, 1e-14)  # exact MSE error, no cancellation
        w = beta / err
        c = w * np.abs(u) ** 2

        for t in range(n_tx):
            if owned[t].size == 0:
                continue
            alphas[t] = _precoder_update(grams[t], c, (w * u)[owned[t]],
                                         owned[t], budgets[t])
        v = received_amplitudes()
        trace.append(objective(v))
        if abs(trace[-1] - trace[-2]) < tol_bits:
            converged = True
            break

    precoders = [gains[t].conj().T @ alphas[t] for t in range(n_tx)]
    info = WmmseInfo(converged=converged, iterations=it,
                     objective_bits=trace[-1], objective_trace=np.asarray(trace))
    return precoders, info


@dataclass
class HybridFactorization:
    """Hybrid factorization result with its per-iteration residual history."""

    precoder: HybridPrecoder
    residuals: np.ndarray
    converged: bool

    @property
    def matrix(self) -> np.ndarray:
        return self.precoder.matrix


def _phase_sweep(analog: np.ndarray, digital: np.ndarray, target: np.ndarray) -> np.ndarray:
    # Column-wise coordinate descent on the analog phases: rows of the
    # residual decouple, so each column updates all its rows at once. Never
    # increases the residual, unlike the simultaneous extraction it backs up.
    analog = analog.copy()
    resid = target - analog @ digital
    for j in range(analog.shape[1]):
        rows = resid + np.outer(analog[:, j], digital[j])
        z = rows @ digital[j].conj()
        nz = np.abs(z) > 0.0
        analog[nz, j] = z[nz] / np.abs(z[nz])
        resid = rows - np.outer(analog[:, j], digital[j])
    return analog


def hybrid_factorize(f_target, rf_chains: int, analog_init=None,
                     tol: float = 1e-6, max_iters: int = 200) -> HybridFactorization:
    """Factor a precoder into unit-modulus analog times digital stages.

    Alternating minimization: the digital stage is the least-squares solution
    for the current analog stage; the analog stage takes the entrywise phase
    of target @ digital^H (with a coordinate-descent fallback so the residual
    never increases). The result is rescaled to ||f_target||_F.
    """
    f = np.asarray(f_target, dtype=complex)
    if f.ndim != 2 or f.size == 0:
        raise ValueError("target must be a 2D (elements x streams) matrix")
    n, s = f.shape
    if rf_chains < s:
        raise ValueError(f"need rf_chains >= streams, got {rf_chains} < {s}")
    if analog_init is not None:
        a = np.asarray(analog_init, dtype=complex)
        if a.shape != (n, rf_chains):
            raise ValueError(f"analog_init must be {(n, rf_chains)}, got {a.shape}")
        a = np.exp(1j * np.angle(a))
    else:
        a = np.ones((n, rf_chains), dtype=complex)
        a[:, :s] = np.exp(1j * np.angle(f[:, :s]))

    residuals = []
    converged = False
    d = np.linalg.pinv(a) @ f
    for _ in range(max_iters):
        r = float(np.linalg.norm(a @ d - f))
        residuals.append(r)
        if len(residuals) >= 2 and residuals[-2] - r < tol:
            converged = True
            break
        cand = np.exp(1j * np.angle(f @ d.conj().T))
        if np.linalg.norm(cand @ d - f) <= r:
            a = cand
        else:
            a = _phase_sweep(a, d, f)
        d = np.linalg.pinv(a) @ f

    norm_ad = np.linalg.norm(a @ d)
    if norm_ad > 0.0:
        d = d * (np.linalg.norm(f) / norm_ad)
    return HybridFactorization(precoder=HybridPrecoder(analog=a, digital=d),
                               residuals=np.asarray(residuals), converged=converged)
