"""Discrete nonlocal Dirichlet form with exterior killing on a truncated box.

The form matrix Q approximates

    D(f, f) = 1/2 iint (f(x) - f(y))^2 c_{d,alpha} |x - y|^(-d-alpha) dx dy

for node functions that vanish outside the box; the generator of the
time-changed process is L = -M^{-1} Q with M = diag(mu).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.linalg import toeplitz

from .core import (ConfigError, ConstantWeight, FracParams, Grid, GridSpec, PowerWeight, StretchedExpWeight,
                   TableWeight, WeightSpec, build_grid, build_measure)

DUMP_MAGIC = b"FRACHEAT"
DUMP_VERSION = 1


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    Q: np.ndarray
    kill: np.ndarray
    mu: np.ndarray
    cell_volume: float
    grid: Grid | None = None
    frac: FracParams | None = None
    weight: WeightSpec | None = None

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @cached_property
    def W(self) -> np.ndarray:
        return self.cell_volume / self.mu

    @cached_property
    def S(self) -> np.ndarray:
        """Symmetrized matrix M^{-1/2} Q M^{-1/2}."""
        s = 1.0 / np.sqrt(self.mu)
        S = self.Q * s[:, None]
        S *= s[None, :]
        return S

    def graph_part(self) -> np.ndarray:
        G = self.Q.copy()
        G[np.diag_indices_from(G)] -= self.cell_volume * self.kill
        return G

    def generator(self) -> np.ndarray:
        """Dense matrix of L = -M^{-1} Q acting on node values."""
        return -self.Q / self.mu[:, None]


def exterior_killing_1d(x: np.ndarray, b: float, c: float, alpha: float) -> np.ndarray:
    """int_{|y| > b} c |x - y|^(-1-alpha) dy for |x| < b (closed form)."""
    x = np.asarray(x, dtype=float)
    return (c / alpha) * ((b - x) ** (-alpha) + (b + x) ** (-alpha))


def _angular_killing(x1: float, x2: float, b: float, alpha: float, epsrel: float) -> float:
    """int_0^{2pi} rho_exit(theta)^(-alpha) dtheta for the square [-b, b]^2."""
    a = (b - x1, b + x1, b - x2, b + x2)

    def f(theta):
        c, s = np.cos(theta), np.sin(theta)
        return max(max(c, 0.0) / a[0], max(-c, 0.0) / a[1],
                   max(s, 0.0) / a[2], max(-s, 0.0) / a[3]) ** alpha

    corners = np.sort(np.mod([np.arctan2(a[2], a[0]), np.arctan2(a[2], -a[1]),
                              np.arctan2(-a[3], -a[1]), np.arctan2(-a[3], a[0])], 2 * np.pi))
    pts = np.concatenate([corners, [corners[0] + 2 * np.pi]])
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=epsrel, limit=200)
        total += val
    return total


def exterior_killing_2d(x: np.ndarray, b: float, c: float, alpha: float,
                        epsrel: float = 1e-8) -> np.ndarray:
    """int over R^2 minus [-b, b]^2 of c |x - y|^(-2-alpha) dy, per row of ``x``.

    Radial integration is exact, int_rho^inf r^(-1-alpha) dr = rho^(-alpha)/alpha;
    the angular part is integrated adaptively between corner directions.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    # kill depends only on the unordered pair (|x1|, |x2|)
    key = np.sort(np.abs(x), axis=1)
    uniq, inverse = np.unique(np.round(key, 12), axis=0, return_inverse=True)
    vals = np.array([_angular_killing(u[0], u[1], b, alpha, epsrel) for u in uniq])
    return (c / alpha) * vals[np.ravel(inverse)]


def _pair_distances(x: np.ndarray) -> np.ndarray:
    diff2 = np.zeros((x.shape[0], x.shape[0]))
    for k in range(x.shape[1]):
        col = x[:, k]
        diff2 += (col[:, None] - col[None, :]) ** 2
    return np.sqrt(diff2)


def assemble_form(grid: Grid, frac: FracParams, w: WeightSpec,
                  quad_epsrel: float = 1e-8) -> DiscreteOperator:
    """Assemble Q, the exterior killing rates and the measure.

    Off-diagonal Q_ij = -c h^{2d} |x_i - x_j|^(-d-alpha); the diagonal holds the
    absolute row sum plus h^d kill_i. The self-pair is excluded without a
    local correction.
    """
    if frac.d != grid.d:
        raise ConfigError("FracParams and grid disagree on the dimension")
    if not frac.alpha < grid.d:
        raise ConfigError("assembly requires alpha < d")
    if grid.n < 3:
        raise ConfigError("grid must have at least 3 nodes")
    d, h, c, a = grid.d, grid.h, frac.c_norm, frac.alpha
    measure = build_measure(grid, w)
    b = grid.box_half_width
    if d == 1:
        k = np.arange(grid.n, dtype=float)
        col = np.zeros(grid.n)
        col[1:] = -c * h ** 2 * (k[1:] * h) ** (-1.0 - a)
        Q = toeplitz(col)
        kill = exterior_killing_1d(grid.x[:, 0], b, c, a)
    else:
        r = _pair_distances(grid.x)
        np.fill_diagonal(r, 1.0)
        Q = -c * h ** (2 * d) * r ** (-d - a)
        del r
        np.fill_diagonal(Q, 0.0)
        kill = exterior_killing_2d(grid.x, b, c, a, epsrel=quad_epsrel)
    Q[np.diag_indices_from(Q)] = -Q.sum(axis=1) + grid.cell_volume * kill
    Q.setflags(write=False)
    kill.setflags(write=False)
    return DiscreteOperator(Q=Q, kill=kill, mu=measure.mu, cell_volume=grid.cell_volume,
                            grid=grid, frac=frac, weight=w)


def dirichlet_energy(op: DiscreteOperator, f) -> float:
    f = np.asarray(f, dtype=float)
    if f.shape != (op.n,):
        raise ValueError(f"expected a vector of length {op.n}, got shape {f.shape}")
    return max(float(f @ (op.Q @ f)), 0.0)


def heat_apply(op: DiscreteOperator, f, t: float, spectrum=None) -> np.ndarray:
    """P_t f = sum_n e^{-lambda_n t} phi_n <f, phi_n>_mu."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    f = np.asarray(f, dtype=float)
    if f.shape[0] != op.n:
        raise ValueError(f"expected leading dimension {op.n}, got {f.shape}")
    if t == 0:
        return f.copy()
    if spectrum is None:
        from .spectral import solve_spectrum
        spectrum = solve_spectrum(op)
    coef = spectrum.phis.T @ (op.mu[:, None] * f.reshape(op.n, -1))
    coef *= np.exp(-spectrum.lambdas * t)[:, None]
    return (spectrum.phis @ coef).reshape(f.shape)


# --------------------------------------------------------------------------- binary dump


def _weight_from_params(params: dict | None, W: np.ndarray, grid: Grid | None):
    if not params:
        return None
    variant = params.get("variant")
    if variant == "power":
        return PowerWeight(beta=params["beta"])
    if variant == "stretched_exp":
        return StretchedExpWeight(beta=params["beta"], delta=params["delta"], alpha=params["alpha"],
                                  c1=params["c1"], c2=params["c2"], c3=params["c3"])
    if variant == "constant":
        return ConstantWeight(value=params["value"])
    if variant == "table" and grid is not None:
        return TableWeight(grid=grid, values=W)
    return None


def save_operator(op: DiscreteOperator, path) -> None:
    """Write Q, kill and mu with a version-tagged header (layout in README)."""
    header = {
        "n": op.n,
        "cell_volume": op.cell_volume,
        "dtype": "<f8",
        "grid": None if op.grid is None else {"d": op.grid.d, "R": op.grid.R,
                                              "n_per_axis": op.grid.spec.n_per_axis},
        "frac": None if op.frac is None else {"alpha": op.frac.alpha, "d": op.frac.d,
                                              "c_norm": op.frac.c_norm},
        "weight": None if op.weight is None else op.weight.params(),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC)
        fh.write(struct.pack("<II", DUMP_VERSION, len(blob)))
        fh.write(blob)
        for arr in (op.Q, op.kill, op.mu):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_operator(path) -> DiscreteOperator:
    raw = Path(path).read_bytes()
    if raw[:8] != DUMP_MAGIC:
        raise ValueError("not an operator dump (bad magic)")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != DUMP_VERSION:
        raise ValueError(f"unsupported dump version {version}")
    header = json.loads(raw[16:16 + hlen])
    n = header["n"]
    body = np.frombuffer(raw, dtype="<f8", offset=16 + hlen)
    if body.size != n * n + 2 * n:
        raise ValueError("truncated operator dump")
    Q = body[: n * n].reshape(n, n).copy()
    kill = body[n * n: n * n + n].copy()
    mu = body[n * n + n:].copy()
    grid = None
    if header["grid"] is not None:
        grid = build_grid(GridSpec(**header["grid"]))
    frac = None if header["frac"] is None else FracParams(**header["frac"])
    weight = _weight_from_params(header["weight"], header["cell_volume"] / mu, grid)
    return DiscreteOperator(Q=Q, kill=kill, mu=mu, cell_volume=header["cell_volume"],
                            grid=grid, frac=frac, weight=weight)
