"""Spectral heat kernel p_mu(t, x, y), sup-ratio exponent fits and ground-state ratios."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .spectral import SpectralError, Spectrum


class ResolutionError(SpectralError):
    """The spectrum or grid cannot resolve the requested time."""


@dataclass(frozen=True, eq=False)
class KernelSlice:
    t: float
    values: np.ndarray  # p_mu(t, x_i, x_j)
    n_modes: int


def _active_modes(spec: Spectrum, t: float, cut: float) -> int:
    rel = np.exp(-(spec.lambdas - spec.lambdas[0]) * t)
    if not spec.complete and rel[-1] > 1e-12:
        raise ResolutionError(
            f"{spec.k} modes do not resolve t={t:g}: exp(-(lambda_k - lambda_1) t) = {rel[-1]:.2e} > 1e-12")
    return int(np.count_nonzero(rel > cut))


def kernel_eval(spec: Spectrum, t: float, cut: float = 1e-16) -> KernelSlice:
    """sum_n exp(-lambda_n t) phi_n(x) phi_n(y), dropping modes below ``cut`` relative to the first."""
    if not t > 0:
        raise ValueError("t must be positive")
    if spec.phis is None:
        raise ValueError("spectrum carries no eigenvectors")
    m = _active_modes(spec, t, cut)
    P = spec.phis[:, :m]
    A = P * np.exp(-spec.lambdas[:m] * t)[None, :]
    values = A @ P.T
    values = 0.5 * (values + values.T)
    return KernelSlice(t=float(t), values=values, n_modes=m)


def kernel_diagonal(spec: Spectrum, t: float, cut: float = 1e-16) -> np.ndarray:
    m = _active_modes(spec, t, cut)
    P = spec.phis[:, :m]
    return (P ** 2) @ np.exp(-spec.lambdas[:m] * t)


def diagonal_trace(spec: Spectrum, t: float) -> float:
    """sum_i p_mu(t, x_i, x_i) mu_i."""
    return float(kernel_diagonal(spec, t) @ spec.mu)


def sup_ratio(slc: KernelSlice, V) -> float:
    V = np.asarray(V, dtype=float)
    if np.any(V <= 0):
        raise ValueError("envelope must be strictly positive")
    return float(np.max(slc.values / np.outer(V, V)))


def sup_ratio_curve(spec: Spectrum, ts, V) -> np.ndarray:
    """m(t) = max_ij p(t, x_i, x_j) / (V_i V_j) without keeping the slices."""
    return np.array([sup_ratio(kernel_eval(spec, t), V) for t in ts])


def ground_state_envelope(phi, alpha: float, beta: float) -> np.ndarray:
    """phi^(min(beta/(2 alpha), 1))."""
    return np.asarray(phi, dtype=float) ** min(beta / (2.0 * alpha), 1.0)


def resolution_floor(h: float, alpha: float, factor: float = 20.0) -> float:
    return factor * h ** alpha


@dataclass(frozen=True)
class SupRatioFit:
    slope: float
    stderr: float
    ts: np.ndarray
    m: np.ndarray


def fit_log_slope(ts, ms) -> SupRatioFit:
    ts = np.asarray(ts, dtype=float)
    ms = np.asarray(ms, dtype=float)
    if np.any(ms <= 0):
        raise SpectralError("nonpositive sup ratio; spectral truncation suspected")
    if ts.size < 3:
        raise ValueError("need at least 3 time points")
    fit = stats.linregress(np.log(ts), np.log(ms))
    return SupRatioFit(float(fit.slope), float(fit.stderr), ts, ms)


def sup_ratio_fit(slices, V, t_range, h: float | None = None, alpha: float | None = None,
                  floor_factor: float = 20.0) -> SupRatioFit:
    """Log-log slope of m(t) over the slices whose times lie in ``t_range``.

    With ``h`` and ``alpha`` given, windows starting below floor_factor h^alpha
    or ending above 1 are refused.
    """
    t_lo, t_hi = map(float, t_range)
    if h is not None and alpha is not None:
        floor = resolution_floor(h, alpha, floor_factor)
        if t_lo < floor or t_hi > 1.0 or floor > t_hi:
            raise ResolutionError(
                f"t_range [{t_lo:g}, {t_hi:g}] is outside [{floor:g}, 1] (floor {floor_factor:g} h^alpha)")
    chosen = [s for s in slices if t_lo - 1e-12 <= s.t <= t_hi + 1e-12]
    if len(chosen) < 3:
        raise ValueError(f"only {len(chosen)} slices fall inside [{t_lo:g}, {t_hi:g}]")
    ts = np.array([s.t for s in chosen])
    ms = np.array([sup_ratio(s, V) for s in chosen])
    return fit_log_slope(ts, ms)


def iu_min_ratio(slc: KernelSlice, phi) -> float:
    """min_ij p(t, x_i, x_j) / (phi_i phi_j)."""
    phi = np.asarray(phi, dtype=float)
    return float(np.min(slc.values / np.outer(phi, phi)))


def iu_max_ratio(slc: KernelSlice, phi) -> float:
    phi = np.asarray(phi, dtype=float)
    return float(np.max(slc.values / np.outer(phi, phi)))


def mass_profile(slc: KernelSlice, mu) -> np.ndarray:
    """sum_j p(t, x_i, x_j) mu_j, the survival probability from each node."""
    return slc.values @ np.asarray(mu, dtype=float)
