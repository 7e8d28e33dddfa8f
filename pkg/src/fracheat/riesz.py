"""Ground-state oracles: inverse iteration, the Riesz fixed-point identity and decay fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate, linalg, special, stats

from .core import ConfigError, Grid, riesz_constant
from .operator import DiscreteOperator
from .spectral import SpectralError


@dataclass(frozen=True, eq=False)
class RieszKernel:
    """K with (K f)_i ~ int G |x_i - y|^(alpha-d) f(y) / W(y) dy on the grid."""

    K: np.ndarray
    grid: Grid | None = None


def _self_cell_integral(h: float, alpha: float, d: int) -> float:
    """int over the node cell of |u|^(alpha-d) du (disc of equal area in 2D)."""
    if d == 1:
        return 2.0 * (0.5 * h) ** alpha / alpha
    rho = h / math.sqrt(math.pi)
    return 2.0 * math.pi * rho ** alpha / alpha


def riesz_kernel(op: DiscreteOperator) -> RieszKernel:
    """Quadrature of the Green function of (-Delta)^(alpha/2) against dy / W(y).

    Off-diagonal K_ij = G h^d |x_i - x_j|^(alpha-d) / W_j, diagonal
    G (cell integral of |u|^(alpha-d)) / W_i, with G the Riesz constant.
    """
    if op.grid is None or op.frac is None:
        raise ConfigError("Riesz kernel needs an operator with grid and stability data")
    g, a = op.grid, op.frac.alpha
    d = g.d
    G = riesz_constant(a, d)
    diff2 = np.zeros((g.n, g.n))
    for k in range(d):
        col = g.x[:, k]
        diff2 += (col[:, None] - col[None, :]) ** 2
    np.fill_diagonal(diff2, 1.0)
    K = diff2 ** (0.5 * (a - d))
    del diff2
    K *= G * g.cell_volume
    np.fill_diagonal(K, G * _self_cell_integral(g.h, a, d))
    K /= op.W[None, :]
    return RieszKernel(K=K, grid=g)


def discrete_green_kernel(op: DiscreteOperator) -> RieszKernel:
    """Exact inverse of the discrete -L, i.e. Q^{-1} M."""
    K = linalg.cho_solve(linalg.cho_factor(op.Q), np.diag(op.mu))
    return RieszKernel(K=K, grid=op.grid)


def ground_state_inverse_iteration(op: DiscreteOperator, tol: float = 1e-12,
                                   maxiter: int = 1000, v0=None) -> tuple[float, np.ndarray]:
    """Inverse power iteration v <- Q^{-1} M v for the smallest pair of Q phi = lambda M phi.

    Stops when ||Q v - lambda M v|| <= tol lambda ||M v||. The returned phi is
    M-normalized with positive sum.
    """
    try:
        cf = linalg.cho_factor(op.Q)
    except linalg.LinAlgError as exc:
        raise SpectralError("form matrix is not positive definite") from exc
    mu = op.mu
    v = np.ones(op.n) if v0 is None else np.asarray(v0, dtype=float).copy()
    lam = float("nan")
    for _ in range(maxiter):
        v = linalg.cho_solve(cf, mu * v)
        v /= math.sqrt(float(v @ (mu * v)))
        Qv = op.Q @ v
        lam = float(v @ Qv)
        if np.linalg.norm(Qv - lam * mu * v) <= tol * lam * np.linalg.norm(mu * v):
            break
    else:
        raise SpectralError(f"inverse iteration did not converge in {maxiter} steps")
    if v.sum() < 0:
        v = -v
    return lam, v


@dataclass(frozen=True)
class RieszResidual:
    profile: np.ndarray
    interior_max: float
    interior_radius: float


def riesz_residual(phi, lambda_1: float, kernel: RieszKernel,
                   interior_radius: float | None = None) -> RieszResidual:
    """Per-node |phi - lambda_1 K phi| / phi and its maximum on |x| <= interior_radius."""
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0):
        raise ValueError("phi must be positive")
    prof = np.abs(phi - lambda_1 * (kernel.K @ phi)) / phi
    if interior_radius is None:
        interior_radius = 0.5 * kernel.grid.R if kernel.grid is not None else np.inf
    if kernel.grid is not None:
        inside = kernel.grid.radii <= interior_radius + 1e-12
    else:
        inside = np.ones(phi.size, dtype=bool)
    return RieszResidual(profile=prof, interior_max=float(prof[inside].max()),
                         interior_radius=float(interior_radius))


def annulus_means(values, radii, edges) -> np.ndarray:
    """Mean of ``values`` over each annulus [edges[k], edges[k+1])."""
    edges = np.asarray(edges, dtype=float)
    out = np.full(edges.size - 1, np.nan)
    for k in range(out.size):
        sel = (radii >= edges[k]) & (radii < edges[k + 1])
        if sel.any():
            out[k] = float(np.mean(values[sel]))
    return out


@dataclass(frozen=True)
class DecayFit:
    slope: float
    stderr: float
    n_points: int
    r_lo: float
    r_hi: float


def fit_decay(phi, grid: Grid, annulus, min_points: int = 20) -> DecayFit:
    """Slope of log phi against log(1 + |x|) over r_lo <= |x| <= r_hi."""
    r_lo, r_hi = map(float, annulus)
    if r_hi > 0.5 * grid.R + 1e-12:
        raise ValueError(f"r_hi = {r_hi} exceeds R/2 = {0.5 * grid.R}")
    phi = np.asarray(phi, dtype=float)
    sel = (grid.radii >= r_lo) & (grid.radii <= r_hi)
    if sel.sum() < min_points:
        raise ValueError(f"annulus [{r_lo}, {r_hi}] holds {int(sel.sum())} nodes, need {min_points}")
    if np.any(phi[sel] <= 0):
        raise ValueError("phi must be positive on the annulus")
    fit = stats.linregress(np.log1p(grid.radii[sel]), np.log(phi[sel]))
    return DecayFit(float(fit.slope), float(fit.stderr), int(sel.sum()), r_lo, r_hi)


def ground_state_sandwich(phi, grid: Grid, alpha: float, r_max: float | None = None):
    """(max phi/env, max env/phi, product) over |x| <= r_max with env = (1+|x|)^(alpha-d)."""
    r_max = 0.5 * grid.R if r_max is None else r_max
    sel = grid.radii <= r_max + 1e-12
    q = np.asarray(phi)[sel] / (1.0 + grid.radii[sel]) ** (alpha - grid.d)
    upper, lower = float(q.max()), float(1.0 / q.min())
    return upper, lower, upper * lower


# --------------------------------------------------------------------------- J(x) bounds


def j_integral(x: float, gamma: float, beta: float) -> float:
    """J(x) = int_R |x - y|^(-gamma) (1 + |y|)^(-beta) dy in one dimension."""
    x = abs(float(x))
    opts = dict(epsabs=0.0, epsrel=1e-11, limit=400)
    g = lambda y: (1.0 + abs(y)) ** (-beta)
    # right of x: algebraic endpoint weight (y - x)^(-gamma)
    A, _ = integrate.quad(g, x, 2 * x + 1, weight="alg", wvar=(-gamma, 0.0), **opts)
    B, _ = integrate.quad(lambda y: (y - x) ** (-gamma) * g(y), 2 * x + 1, np.inf, **opts)
    C = 0.0
    if x > 0:
        C, _ = integrate.quad(g, 0.0, x, weight="alg", wvar=(0.0, -gamma), **opts)
    # y < 0, written with u = -y
    if x > 0:
        D, _ = integrate.quad(lambda u: (x + u) ** (-gamma) * (1 + u) ** (-beta), 0, np.inf, **opts)
    else:
        D1, _ = integrate.quad(lambda u: (1 + u) ** (-beta), 0, 1, weight="alg", wvar=(-gamma, 0.0), **opts)
        D2, _ = integrate.quad(lambda u: u ** (-gamma) * (1 + u) ** (-beta), 1, np.inf, **opts)
        D = D1 + D2
    return A + B + C + D


def j_at_origin(gamma: float, beta: float) -> float:
    """Closed form J(0) = 2 B(1 - gamma, gamma + beta - 1)."""
    return 2.0 * float(special.beta(1.0 - gamma, gamma + beta - 1.0))


def j_envelope(r, gamma: float, beta: float, d: int = 1):
    r = np.asarray(r, dtype=float)
    if beta < d:
        return (1.0 + r) ** (d - gamma - beta)
    if beta == d:
        return (1.0 + r) ** (-gamma) * np.log(2.0 + r)
    return (1.0 + r) ** (-gamma)


@dataclass(frozen=True)
class JBoundResult:
    regime: str
    radii: np.ndarray
    ratios: np.ndarray
    sup_ratio: float
    variation: float


def j_bound_check(gamma: float, beta: float, samples=None, d: int = 1) -> JBoundResult:
    """J(x) / envelope(x) at sample radii, with sup and max/min over |x| in [1, 100]."""
    if d != 1:
        raise NotImplementedError("J bounds are evaluated in one dimension")
    if not gamma < d:
        raise ValueError("need gamma < d")
    if not gamma + beta > d:
        raise ValueError("need gamma + beta > d")
    samples = np.geomspace(1.0, 100.0, 15) if samples is None else np.asarray(samples, dtype=float)
    regime = "beta<d" if beta < d else ("beta=d" if beta == d else "beta>d")
    J = np.array([j_integral(r, gamma, beta) for r in samples])
    ratios = J / j_envelope(np.abs(samples), gamma, beta, d)
    window = (np.abs(samples) >= 1.0) & (np.abs(samples) <= 100.0)
    var = float(ratios[window].max() / ratios[window].min()) if window.any() else float("nan")
    return JBoundResult(regime, samples, ratios, float(ratios.max()), var)


def bootstrap_steps(alpha, beta, d, tol: float = 1e-12) -> tuple[int, bool]:
    """Smallest k >= 0 with beta + k (beta - alpha) >= d, and whether (d-beta)/(beta-alpha) is in {0,1,2,...}."""
    if not beta > alpha:
        raise ValueError("need beta > alpha")
    if all(isinstance(v, (int, Fraction)) for v in (alpha, beta, d)):
        q = Fraction(d - beta) / Fraction(beta - alpha)
        k = max(0, math.ceil(q))
        return k, bool(q >= 0 and q.denominator == 1)
    q = (d - beta) / (beta - alpha)
    k = max(0, math.ceil(q - tol))
    return k, bool(q >= -tol and abs(q - round(q)) <= tol)
