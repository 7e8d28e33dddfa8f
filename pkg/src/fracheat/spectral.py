"""Generalized eigenproblem Q phi = lambda M phi, heat traces and growth-exponent fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .operator import DiscreteOperator


class SpectralError(RuntimeError):
    """Numerical failure of an eigen solve or a fit."""


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ascending eigenvalues and M-orthonormal eigenvectors (columns of ``phis``).

    ``phis`` may be None for synthetic spectra used only in fits.
    """

    lambdas: np.ndarray
    phis: np.ndarray | None
    mu: np.ndarray | None
    n_nodes: int
    alpha: float | None = None
    d: int | None = None

    @property
    def k(self) -> int:
        return self.lambdas.size

    @property
    def complete(self) -> bool:
        return self.k == self.n_nodes

    @classmethod
    def from_values(cls, lambdas, n_nodes=None, alpha=None, d=None) -> "Spectrum":
        lam = np.sort(np.asarray(lambdas, dtype=float))
        return cls(lambdas=lam, phis=None, mu=None,
                   n_nodes=lam.size if n_nodes is None else int(n_nodes), alpha=alpha, d=d)

    def orthonormality_residual(self, m: int | None = None) -> float:
        """max |Phi^T M Phi - I| over the first ``m`` modes."""
        m = self.k if m is None else min(m, self.k)
        P = self.phis[:, :m]
        G = P.T @ (self.mu[:, None] * P)
        return float(np.max(np.abs(G - np.eye(m))))


def _check_pairs(op: DiscreteOperator, lam, phis, tol):
    r = op.Q @ phis - (op.mu[:, None] * phis) * lam[None, :]
    res = np.linalg.norm(r, axis=0)
    bound = tol * np.abs(lam) * np.linalg.norm(phis, axis=0)
    bad = np.flatnonzero(res > bound)
    if bad.size:
        j = bad[0]
        raise SpectralError(f"eigenpair {j + 1} residual {res[j]:.3e} exceeds {bound[j]:.3e}")


def solve_spectrum(op: DiscreteOperator, k: int | None = None, backend: str = "dense",
                   tol: float = 1e-8, maxiter: int = 5000, check: bool = True) -> Spectrum:
    """The ``k`` smallest eigenpairs of S = M^{-1/2} Q M^{-1/2}, mapped back to Q phi = lambda M phi.

    Parameters
    ----------
    op : DiscreteOperator
    k : int, optional
        Number of pairs; all ``n`` when omitted.
    backend : {"dense", "arpack"}
        LAPACK symmetric solver (the reference) or shift-invert Lanczos.
    tol : float
        Per-pair residual tolerance relative to ``lambda_n ||phi_n||``.
    maxiter : int
        Iteration cap for the Lanczos backend.

    Returns
    -------
    Spectrum
        Eigenvectors normalized so sum_i phi_m(i) phi_n(i) mu_i = delta_mn and
        phi_1 has positive sum.
    """
    n = op.n
    k = n if k is None else int(k)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    S = op.S
    if backend == "dense":
        if k == n:
            lam, V = linalg.eigh(S, check_finite=False)
        else:
            lam, V = linalg.eigh(S, subset_by_index=[0, k - 1], check_finite=False)
    elif backend == "arpack":
        if k >= n - 1:
            raise ValueError("arpack backend needs k < n - 1; use the dense backend")
        try:
            lam, V = eigsh(S, k=k, sigma=0.0, which="LM", maxiter=maxiter, tol=0.0)
        except ArpackNoConvergence as exc:
            raise SpectralError(f"Lanczos did not converge within {maxiter} iterations") from exc
        order = np.argsort(lam)
        lam, V = lam[order], V[:, order]
    else:
        raise ValueError(f"unknown backend {backend!r}")
    phis = V / np.sqrt(op.mu)[:, None]
    if phis[:, 0].sum() < 0:
        phis[:, 0] *= -1.0
    if check:
        if lam[0] <= 0:
            raise SpectralError(f"lambda_1 = {lam[0]:.3e} is not positive")
        _check_pairs(op, lam, phis, tol)
    alpha = op.frac.alpha if op.frac is not None else None
    d = op.frac.d if op.frac is not None else None
    lam.setflags(write=False)
    phis.setflags(write=False)
    return Spectrum(lambdas=lam, phis=phis, mu=op.mu, n_nodes=n, alpha=alpha, d=d)


def rayleigh_quotients(op: DiscreteOperator, spec: Spectrum) -> np.ndarray:
    P = spec.phis
    num = np.einsum("ij,ij->j", P, op.Q @ P)
    den = np.einsum("ij,ij->j", P, op.mu[:, None] * P)
    return num / den


# --------------------------------------------------------------------------- growth


@dataclass(frozen=True)
class GrowthFit:
    slope: float
    stderr: float
    ci_low: float
    ci_high: float
    ratio_min: float
    ratio_max: float
    exponent: float
    n_lo: int
    n_hi: int

    @property
    def ratio_spread(self) -> float:
        return self.ratio_max / self.ratio_min


def default_growth_window(n_nodes: int) -> tuple[int, int]:
    return 10, int(min(100, n_nodes // 4))


def fit_eigen_growth(spec: Spectrum, n_lo: int | None = None, n_hi: int | None = None,
                     exponent: float | None = None, level: float = 0.95) -> GrowthFit:
    """Least-squares slope of log lambda_n against log n on [n_lo, n_hi].

    ``exponent`` sets the normalization for the ratio band lambda_n / n^exponent;
    it defaults to alpha/d when the spectrum carries them.
    """
    lo_d, hi_d = default_growth_window(spec.n_nodes)
    n_lo = lo_d if n_lo is None else int(n_lo)
    n_hi = hi_d if n_hi is None else int(n_hi)
    if n_lo < 5:
        raise ValueError("n_lo must be at least 5")
    if n_hi < 2 * n_lo:
        raise ValueError(f"window too small: need n_hi >= 2 n_lo, got [{n_lo}, {n_hi}]")
    if n_hi > 0.25 * spec.n_nodes:
        raise ValueError(f"n_hi = {n_hi} exceeds a quarter of the {spec.n_nodes} modes")
    if n_hi > spec.k:
        raise ValueError(f"spectrum holds only {spec.k} eigenvalues")
    if exponent is None:
        if spec.alpha is None:
            raise ValueError("exponent required for a spectrum without alpha/d")
        exponent = spec.alpha / spec.d
    ns = np.arange(n_lo, n_hi + 1)
    lam = spec.lambdas[n_lo - 1:n_hi]
    fit = stats.linregress(np.log(ns), np.log(lam))
    q = stats.t.ppf(0.5 + 0.5 * level, ns.size - 2)
    ratio = lam / ns ** exponent
    return GrowthFit(slope=float(fit.slope), stderr=float(fit.stderr),
                     ci_low=float(fit.slope - q * fit.stderr), ci_high=float(fit.slope + q * fit.stderr),
                     ratio_min=float(ratio.min()), ratio_max=float(ratio.max()),
                     exponent=float(exponent), n_lo=n_lo, n_hi=n_hi)


# --------------------------------------------------------------------------- traces


def heat_trace(spec: Spectrum, t) -> np.ndarray | float:
    """sum_{n <= k} exp(-lambda_n t); vectorized over ``t``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ValueError("t must be positive")
    out = np.exp(-np.multiply.outer(t_arr, spec.lambdas)).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def heat_trace_tail_bound(spec: Spectrum, t: float) -> float:
    """Upper bound on the omitted modes: (n - k) exp(-lambda_k t)."""
    if t <= 0:
        raise ValueError("t must be positive")
    return float((spec.n_nodes - spec.k) * np.exp(-spec.lambdas[-1] * t))


def fit_trace_exponent(ts, traces) -> tuple[float, float]:
    """theta and its standard error from trace ~ t^(-theta)."""
    ts = np.asarray(ts, dtype=float)
    traces = np.asarray(traces, dtype=float)
    if ts.size < 3 or np.any(ts <= 0) or np.any(traces <= 0):
        raise ValueError("need at least 3 positive samples")
    fit = stats.linregress(np.log(ts), np.log(traces))
    return float(-fit.slope), float(fit.stderr)


@dataclass(frozen=True)
class TraceGrowthVerdict:
    verdict: str  # "consistent", "inconsistent" or "inconclusive"
    theta: float
    growth_slope: float
    relative_gap: float
    n_lo: int
    n_hi: int


def trace_to_growth(spec: Spectrum, ts, traces=None, n_lo: int | None = None,
                    n_hi: int | None = None, gap_tol: float = 0.10) -> TraceGrowthVerdict:
    """Cross-check trace ~ t^(-theta) against lambda_n ~ n^(1/theta) on one spectrum.

    Without an explicit window, the eigen fit uses the modes whose eigenvalues
    fall in [1/t_max, 1/t_min], the band that dominates the traces.
    """
    ts = np.asarray(ts, dtype=float)
    traces = heat_trace(spec, ts) if traces is None else np.asarray(traces, dtype=float)
    lam = spec.lambdas
    spread = (lam[-1] - lam[0]) / lam[-1] if lam[-1] > 0 else 0.0
    if spread < 1e-12:
        return TraceGrowthVerdict("inconclusive", float("nan"), 0.0, float("nan"), 0, 0)
    try:
        theta, _ = fit_trace_exponent(ts, traces)
    except ValueError:
        return TraceGrowthVerdict("inconclusive", float("nan"), float("nan"), float("nan"), 0, 0)
    if n_lo is None or n_hi is None:
        band = np.flatnonzero((lam >= 1.0 / ts.max()) & (lam <= 1.0 / ts.min())) + 1
        n_lo = max(int(band[0]) if band.size else 1, 2) if n_lo is None else n_lo
        n_hi = int(band[-1]) if (n_hi is None and band.size) else (n_hi or spec.k)
    ns = np.arange(n_lo, n_hi + 1)
    if ns.size < 3 or not np.isfinite(theta) or theta <= 1e-8:
        return TraceGrowthVerdict("inconclusive", theta, float("nan"), float("nan"), n_lo, n_hi)
    g = stats.linregress(np.log(ns), np.log(lam[n_lo - 1:n_hi])).slope
    if not g > 1e-8:
        return TraceGrowthVerdict("inconclusive", theta, float(g), float("nan"), n_lo, n_hi)
    gap = abs(g - 1.0 / theta) / (1.0 / theta)
    verdict = "consistent" if gap <= gap_tol else "inconsistent"
    return TraceGrowthVerdict(verdict, theta, float(g), float(gap), n_lo, n_hi)
