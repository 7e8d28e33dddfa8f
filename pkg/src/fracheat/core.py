"""Grid geometry, weight functions and the reference measure mu(dx) = dx / W(x)."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import gammaln


class ConfigError(ValueError):
    """Raised when grid, weight or stability parameters are inconsistent."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform lattice on the box [-R, R]^d with an odd node count per axis."""

    d: int
    R: float
    n_per_axis: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ConfigError(f"dimension must be 1 or 2, got {self.d}")
        if not self.R > 0:
            raise ConfigError(f"half-width R must be positive, got {self.R}")
        if self.n_per_axis < 3:
            raise ConfigError(f"need at least 3 nodes per axis, got {self.n_per_axis}")
        if self.n_per_axis % 2 == 0:
            raise ConfigError(f"n_per_axis must be odd so the origin is a node, got {self.n_per_axis}")

    @property
    def h(self) -> float:
        return 2.0 * self.R / (self.n_per_axis - 1)

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @property
    def n_nodes(self) -> int:
        return self.n_per_axis ** self.d


@dataclass(frozen=True, eq=False)
class Grid:
    """Node coordinates in lexicographic order; node 0 sits at (-R, ..., -R)."""

    spec: GridSpec
    x: np.ndarray  # (n, d)

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def h(self) -> float:
        return self.spec.h

    @property
    def R(self) -> float:
        return self.spec.R

    @property
    def cell_volume(self) -> float:
        return self.spec.cell_volume

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def box_half_width(self) -> float:
        """Half-width of the union of node cells, R + h/2.

        This is the region the discrete model represents; everything outside
        it is the killing exterior.
        """
        return self.R + 0.5 * self.h

    @cached_property
    def radii(self) -> np.ndarray:
        return np.sqrt(np.sum(self.x ** 2, axis=1))

    @property
    def origin_index(self) -> int:
        m = self.spec.n_per_axis // 2
        return int(sum(m * self.spec.n_per_axis ** k for k in range(self.d)))

    def axis(self) -> np.ndarray:
        m = self.spec.n_per_axis // 2
        return (np.arange(self.spec.n_per_axis) - m) * self.h

    def locate(self, point, atol=None) -> int:
        """Index of the node at ``point``; raises if ``point`` is off the grid."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        if p.shape != (self.d,):
            raise ValueError(f"point must have {self.d} coordinates")
        atol = 1e-9 * self.h if atol is None else atol
        idx = np.rint((p + self.R) / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= self.spec.n_per_axis):
            raise ValueError(f"point {p} lies outside the grid")
        flat = 0
        for k in range(self.d):
            flat = flat * self.spec.n_per_axis + idx[k]
        if np.max(np.abs(self.x[flat] - p)) > atol:
            raise ValueError(f"point {p} is not a grid node")
        return int(flat)


def build_grid(spec: GridSpec) -> Grid:
    m = spec.n_per_axis // 2
    axis = (np.arange(spec.n_per_axis) - m) * spec.h
    if spec.d == 1:
        x = axis[:, None]
    else:
        X1, X2 = np.meshgrid(axis, axis, indexing="ij")
        x = np.column_stack([X1.ravel(), X2.ravel()])
    x.setflags(write=False)
    return Grid(spec=spec, x=x)


def normalization_constant(alpha: float, d: int) -> float:
    """Jump-kernel constant c_{d,alpha} making the form's Fourier symbol |xi|^alpha.

    c = alpha 2^(alpha-1) Gamma((d+alpha)/2) / (pi^(d/2) Gamma(1-alpha/2)).
    """
    if not 0.0 < alpha < 2.0:
        raise ConfigError(f"alpha must lie in (0, 2), got {alpha}")
    if d < 1:
        raise ConfigError(f"dimension must be >= 1, got {d}")
    logc = (np.log(alpha) + (alpha - 1.0) * np.log(2.0) + gammaln(0.5 * (d + alpha))
            - 0.5 * d * np.log(np.pi) - gammaln(1.0 - 0.5 * alpha))
    return float(np.exp(logc))


def riesz_constant(alpha: float, d: int) -> float:
    """Constant of the Green function |x|^(alpha-d) of (-Delta)^(alpha/2), d > alpha.

    G(x) = Gamma((d-alpha)/2) / (2^alpha pi^(d/2) Gamma(alpha/2)) |x|^(alpha-d).
    """
    if not 0.0 < alpha < min(2.0, d):
        raise ConfigError(f"Riesz kernel needs 0 < alpha < min(2, d), got alpha={alpha}, d={d}")
    logc = (gammaln(0.5 * (d - alpha)) - alpha * np.log(2.0) - 0.5 * d * np.log(np.pi)
            - gammaln(0.5 * alpha))
    return float(np.exp(logc))


@dataclass(frozen=True)
class FracParams:
    alpha: float
    d: int
    c_norm: float = field(default=None)

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ConfigError(f"alpha must lie in (0, 2), got {self.alpha}")
        if not self.d > self.alpha:
            raise ConfigError(f"need d > alpha (transient case), got d={self.d}, alpha={self.alpha}")
        if self.c_norm is None:
            object.__setattr__(self, "c_norm", normalization_constant(self.alpha, self.d))
        if not self.c_norm > 0:
            raise ConfigError("c_norm must be positive")


# --------------------------------------------------------------------------- weights


def _log1p_radius(y):
    """log(1 + e^y), stable for any y."""
    return np.logaddexp(0.0, y)


class WeightSpec:
    """Base class for weight functions W >= 1."""

    kind = "abstract"
    radial = True

    def profile(self, r):
        """W as a function of the Euclidean radius."""
        raise NotImplementedError

    def log_profile_logr(self, y):
        """log W at radius e^y; valid for arbitrarily large y."""
        raise NotImplementedError

    def log_lower_logr(self, y):
        """log of a radial lower envelope of W at radius e^y."""
        return self.log_profile_logr(y)

    def log_upper_logr(self, y):
        """log of a radial, nondecreasing upper envelope of W at radius e^y."""
        return self.log_profile_logr(y)

    def on_grid(self, grid: Grid) -> np.ndarray:
        return np.asarray(self.profile(grid.radii), dtype=float)

    def params(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PowerWeight(WeightSpec):
    """W(x) = (1 + |x|)^beta."""

    beta: float
    kind = "power"

    def __post_init__(self):
        if not self.beta >= 0:
            raise ConfigError(f"power weight needs beta >= 0, got {self.beta}")

    def profile(self, r):
        return (1.0 + np.asarray(r, dtype=float)) ** self.beta

    def log_profile_logr(self, y):
        return self.beta * _log1p_radius(np.asarray(y, dtype=float))

    def params(self):
        return {"variant": "power", "beta": self.beta}


@dataclass(frozen=True)
class ConstantWeight(WeightSpec):
    """W(x) = value >= 1, a uniform slowdown of the clock."""

    value: float
    kind = "constant"

    def __post_init__(self):
        if not (np.isfinite(self.value) and self.value >= 1.0):
            raise ConfigError(f"constant weight must be finite and >= 1, got {self.value}")

    def profile(self, r):
        return np.full(np.shape(r), float(self.value))

    def log_profile_logr(self, y):
        return np.full(np.shape(y), np.log(self.value))

    def params(self):
        return {"variant": "constant", "value": self.value}


@dataclass(frozen=True)
class StretchedExpWeight(WeightSpec):
    """W(x) = c1 (1+|x|)^beta exp[c3 (1+|x|)^((beta-alpha)/delta)].

    A concrete member of the class c1(1+|x|)^beta <= W <= c2 exp[c3'(1+|x|)^p].
    ``c2`` is only used by :meth:`envelope`; when omitted the smallest constant
    valid up to a given radius is used.
    """

    beta: float
    delta: float
    alpha: float
    c1: float = 1.0
    c3: float = 1.0
    c2: float | None = None
    kind = "stretched_exp"

    def __post_init__(self):
        if not self.beta > self.alpha:
            raise ConfigError("stretched-exponential weight needs beta > alpha")
        if not self.delta > 1:
            raise ConfigError(f"delta must exceed 1, got {self.delta}")
        if not (self.c1 > 0 and self.c3 > 0) or (self.c2 is not None and not self.c2 > 0):
            raise ConfigError("envelope constants must be positive")
        if self.c1 * np.exp(self.c3) < 1.0:
            raise ConfigError("c1 * exp(c3) < 1 would give W(0) < 1")

    @property
    def p(self) -> float:
        return (self.beta - self.alpha) / self.delta

    def profile(self, r):
        s = 1.0 + np.asarray(r, dtype=float)
        return self.c1 * s ** self.beta * np.exp(self.c3 * s ** self.p)

    def log_profile_logr(self, y):
        ls = _log1p_radius(np.asarray(y, dtype=float))
        with np.errstate(over="ignore"):
            return np.log(self.c1) + self.beta * ls + self.c3 * np.exp(self.p * ls)

    def global_upper_constants(self) -> tuple[float, float]:
        """(C2, C3) with W(x) <= C2 exp[C3 (1+|x|)^p] on all of R^d.

        With C3 = 2 c3 the factor (1+|x|)^beta exp(-c3 (1+|x|)^p) is bounded;
        C2 is its exact supremum over 1+|x| >= 1 times c1.
        """
        s_star = max((self.beta / (self.c3 * self.p)) ** (1.0 / self.p), 1.0)
        log_sup = self.beta * np.log(s_star) - self.c3 * s_star ** self.p
        return float(self.c1 * np.exp(log_sup)), 2.0 * self.c3

    def log_lower_logr(self, y):
        return np.log(self.c1) + self.beta * _log1p_radius(np.asarray(y, dtype=float))

    def log_upper_logr(self, y):
        C2, C3 = self.global_upper_constants()
        ls = _log1p_radius(np.asarray(y, dtype=float))
        with np.errstate(over="ignore"):
            return np.log(C2) + C3 * np.exp(self.p * ls)

    def envelope(self, r, r_max=None):
        """Lower and upper envelope values at radii ``r``."""
        s = 1.0 + np.asarray(r, dtype=float)
        c2 = self.c2
        if c2 is None:
            r_max = float(np.max(r)) if r_max is None else r_max
            c2 = self.c1 * (1.0 + r_max) ** self.beta
        with np.errstate(over="ignore"):
            upper = c2 * np.exp(self.c3 * s ** self.p)
        return self.c1 * s ** self.beta, upper

    def params(self):
        return {"variant": "stretched_exp", "beta": self.beta, "delta": self.delta,
                "alpha": self.alpha, "c1": self.c1, "c2": self.c2, "c3": self.c3}


@dataclass(frozen=True, eq=False)
class TableWeight(WeightSpec):
    """Weight tabulated on the nodes of a grid; undefined off the grid."""

    grid: Grid
    values: np.ndarray
    kind = "table"
    radial = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ConfigError(f"table needs {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 1.0):
            raise ConfigError("tabulated weight must be finite and >= 1")
        object.__setattr__(self, "values", v)

    def lookup(self, point) -> float:
        return float(self.values[self.grid.locate(point)])

    def profile(self, r):
        raise TypeError("tabulated weights have no radial profile")

    def on_grid(self, grid):
        if grid is not self.grid and not np.array_equal(grid.x, self.grid.x):
            raise ConfigError("tabulated weight belongs to a different grid")
        return self.values.copy()

    def params(self):
        return {"variant": "table", "n": int(self.values.size)}


def weight_eval(w: WeightSpec, x) -> float:
    """W at a single point ``x`` (scalar or length-d vector)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    if isinstance(w, TableWeight):
        return w.lookup(x)
    return float(w.profile(np.sqrt(np.sum(x ** 2))))


@dataclass(frozen=True, eq=False)
class Measure:
    """Discrete reference measure mu_i = h^d / W(x_i)."""

    mu: np.ndarray
    cell_volume: float

    def __post_init__(self):
        if np.any(~np.isfinite(self.mu)) or np.any(self.mu <= 0):
            raise ConfigError("measure entries must be positive and finite")
        if np.any(self.mu > self.cell_volume * (1 + 1e-12)):
            raise ConfigError("measure exceeds cell volume; weight below 1 somewhere")

    def integrate(self, f) -> float:
        return float(np.dot(self.mu, f))

    def inner(self, f, g) -> float:
        return float(np.dot(self.mu * f, g))


def build_measure(grid: Grid, w: WeightSpec) -> Measure:
    W = w.on_grid(grid)
    if np.any(W < 1.0):
        raise ConfigError("weight must satisfy W >= 1 on every node")
    mu = grid.cell_volume / W
    mu.setflags(write=False)
    return Measure(mu=mu, cell_volume=grid.cell_volume)
