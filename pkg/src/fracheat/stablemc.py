"""Monte Carlo for the time-changed rotationally symmetric alpha-stable process.

Increments over parent time ds are sqrt(2 S) Z with S positive (alpha/2)-stable,
E exp(-u S) = exp(-ds u^(alpha/2)), and Z standard Gaussian, so the increment
has characteristic function exp(-ds |xi|^alpha), the same normalization as the
jump constant c_{d,alpha}. The clock A_t = int_0^t ds / W(X_s) advances by the
left-endpoint rule and X^mu_t = X_k for A_k <= t < A_{k+1}.

Random streams: paths are grouped in blocks of ``block_size`` and block b
draws from PCG64(SeedSequence(seed).spawn(n_blocks)[b]), one path after
another; results do not depend on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .core import ConstantWeight, FracParams, PowerWeight, StretchedExpWeight, TableWeight, WeightSpec

CLOCK_SLACK = 1e-9  # relative to ds; absorbs rounding in accumulated clocks
BLOCK_SIZE = 256


class InsufficientSamples(ValueError):
    """Too few surviving paths for a histogram comparison."""


# --------------------------------------------------------------------------- kernels


@numba.njit(nogil=True, cache=True)
def _positive_stable(gen, a):
    """Kanter's representation of a standard positive a-stable variable, 0 < a < 1."""
    v = math.pi * (1.0 - gen.random())  # in (0, pi]
    e = gen.standard_exponential()
    return math.sin(a * v) / math.sin(v) ** (1.0 / a) * (math.sin((1.0 - a) * v) / e) ** ((1.0 - a) / a)


@numba.njit(nogil=True, cache=True)
def _draw_increment(gen, a, scale, out):
    """Fill ``out`` with sqrt(2 scale S) Z; scale = ds^(1/a)."""
    amp = math.sqrt(2.0 * scale * _positive_stable(gen, a))
    for i in range(out.size):
        out[i] = amp * gen.standard_normal()


@numba.njit(nogil=True, cache=True)
def _weight(x, wkind, wpar):
    r = 0.0
    for i in range(x.size):
        r += x[i] * x[i]
    s = 1.0 + math.sqrt(r)
    if wkind == 0:
        return s ** wpar[0]
    return wpar[1] * s ** wpar[0] * math.exp(wpar[2] * s ** wpar[3])


@numba.njit(nogil=True, cache=True)
def _outside(x, b):
    for i in range(x.size):
        if abs(x[i]) > b:
            return True
    return False


@numba.njit(nogil=True, cache=True)
def _increment_block(gen, a, scale, n, d):
    out = np.empty((n, d))
    for k in range(n):
        _draw_increment(gen, a, scale, out[k])
    return out


@numba.njit(nogil=True, cache=True)
def _ensemble_block(gen, x0, a, ds, wkind, wpar, b, t_points, n, max_steps,
                    pos, alive, killed, steps, horizon):
    d = x0.size
    nt = t_points.size
    scale = ds ** (1.0 / a)
    slack = CLOCK_SLACK * ds
    x = np.empty(d)
    dx = np.empty(d)
    for p in range(n):
        x[:] = x0
        A = 0.0
        j = 0
        k = 0
        while True:
            inv = ds / _weight(x, wkind, wpar)
            while j < nt and t_points[j] < A + inv - slack:
                pos[p, j, :] = x
                alive[p, j] = True
                j += 1
            if j == nt:
                break
            if k >= max_steps:
                horizon[p] = False
                break
            A += inv
            _draw_increment(gen, a, scale, dx)
            x += dx
            k += 1
            if _outside(x, b):
                killed[p] = True
                break
        steps[p] = k


@numba.njit(nogil=True, cache=True)
def _coupled_block(gen, x0, a, ds, wkind, wpar, b, t_points, n, max_steps,
                   pos_f, alive_f, pos_c, alive_c):
    """Step ds/2 and step ds driven by the same increments (coarse = sum of two fine)."""
    d = x0.size
    nt = t_points.size
    h = 0.5 * ds
    scale = h ** (1.0 / a)
    slack_f = CLOCK_SLACK * h
    slack_c = CLOCK_SLACK * ds
    xf = np.empty(d)
    xc = np.empty(d)
    d1 = np.empty(d)
    d2 = np.empty(d)
    for p in range(n):
        xf[:] = x0
        xc[:] = x0
        Af = 0.0
        Ac = 0.0
        jf = 0
        jc = 0
        done_f = False
        done_c = False
        k = 0
        while not (done_f and done_c) and k < max_steps:
            _draw_increment(gen, a, scale, d1)
            _draw_increment(gen, a, scale, d2)
            k += 1
            if not done_c:
                inv = ds / _weight(xc, wkind, wpar)
                while jc < nt and t_points[jc] < Ac + inv - slack_c:
                    pos_c[p, jc, :] = xc
                    alive_c[p, jc] = True
                    jc += 1
                if jc == nt:
                    done_c = True
                else:
                    Ac += inv
                    xc += d1
                    xc += d2
                    if _outside(xc, b):
                        done_c = True
            for sub in range(2):
                if done_f:
                    break
                inv = h / _weight(xf, wkind, wpar)
                while jf < nt and t_points[jf] < Af + inv - slack_f:
                    pos_f[p, jf, :] = xf
                    alive_f[p, jf] = True
                    jf += 1
                if jf == nt:
                    done_f = True
                    break
                Af += inv
                if sub == 0:
                    xf += d1
                else:
                    xf += d2
                if _outside(xf, b):
                    done_f = True


# --------------------------------------------------------------------------- helpers


def _weight_code(w: WeightSpec):
    if isinstance(w, PowerWeight):
        return 0, np.array([w.beta, 1.0, 0.0, 0.0])
    if isinstance(w, StretchedExpWeight):
        return 1, np.array([w.beta, w.c1, w.c3, w.p])
    if isinstance(w, ConstantWeight):
        return 1, np.array([0.0, w.value, 0.0, 0.0])
    raise TypeError("Monte Carlo supports power, stretched-exponential and constant weights")


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")


def block_generators(seed: int, n_paths: int, block_size: int = BLOCK_SIZE):
    n_blocks = -(-n_paths // block_size)
    return [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(seed).spawn(n_blocks)]


def stable_increments(n: int, ds: float, frac: FracParams, rng) -> np.ndarray:
    """``n`` increments over parent time ``ds``, shape (n, d)."""
    _check_alpha(frac.alpha)
    if not ds > 0:
        raise ValueError("ds must be positive")
    a = 0.5 * frac.alpha
    return _increment_block(rng, a, ds ** (1.0 / a), int(n), frac.d)


@dataclass(frozen=True, eq=False)
class StablePath:
    s: np.ndarray  # parent times k ds
    X: np.ndarray  # (m+1, d)
    ds: float


def sample_stable_path(x0, s_end: float, ds: float, frac: FracParams, seed=None, rng=None) -> StablePath:
    """Unkilled stable path on the parent-time grid 0, ds, ..., s_end."""
    _check_alpha(frac.alpha)
    if not ds > 0:
        raise ValueError("ds must be positive")
    rng = np.random.Generator(np.random.PCG64(seed)) if rng is None else rng
    m = int(math.ceil(s_end / ds - 1e-12))
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (frac.d,))
    inc = stable_increments(m, ds, frac, rng)
    X = np.vstack([x0[None, :], x0[None, :] + np.cumsum(inc, axis=0)])
    return StablePath(s=np.arange(m + 1) * ds, X=X, ds=ds)


@dataclass(frozen=True)
class TimeChanged:
    t: np.ndarray
    positions: np.ndarray  # (n_t, d), NaN where the horizon was too short
    index: np.ndarray  # parent step k with A_k <= t < A_{k+1}
    clock: np.ndarray  # A_0 .. A_{m+1}
    horizon_ok: np.ndarray


def time_change(path: StablePath, w: WeightSpec, t_points) -> TimeChanged:
    """Positions X^mu_t = X_k with A_k <= t < A_{k+1}, A_{k+1} = A_k + ds / W(X_k)."""
    t = np.asarray(t_points, dtype=float)
    if isinstance(w, TableWeight):
        raise TypeError("time change needs a weight defined off the grid")
    W = w.profile(np.sqrt(np.sum(path.X ** 2, axis=1)))
    A = np.concatenate([[0.0], np.cumsum(path.ds / W)])
    k = np.searchsorted(A, t + CLOCK_SLACK * path.ds, side="right") - 1
    ok = k < path.X.shape[0]
    pos = np.full((t.size, path.X.shape[1]), np.nan)
    pos[ok] = path.X[k[ok]]
    return TimeChanged(t=t, positions=pos, index=k, clock=A, horizon_ok=ok)


# --------------------------------------------------------------------------- ensembles


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    n_paths: int
    ds: float
    t_points: np.ndarray
    positions: np.ndarray  # (n_paths, n_t, d), NaN once killed
    alive: np.ndarray  # (n_paths, n_t)
    killed: np.ndarray  # (n_paths,)
    steps: np.ndarray
    horizon_ok: np.ndarray
    seed: int
    x0: np.ndarray
    box_half_width: float

    def column(self, t: float) -> int:
        j = np.flatnonzero(np.isclose(self.t_points, t, rtol=0, atol=1e-12))
        if j.size == 0:
            raise KeyError(f"t={t} was not recorded")
        return int(j[0])


def _run_blocks(fn, n_paths, seed, workers, block_size):
    gens = block_generators(seed, n_paths, block_size)
    starts = list(range(0, n_paths, block_size))
    jobs = [(g, s, min(block_size, n_paths - s)) for g, s in zip(gens, starts)]
    if workers is None or workers <= 1:
        for job in jobs:
            fn(*job)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(lambda job: fn(*job), jobs))


def simulate_ensemble(x0, frac: FracParams, w: WeightSpec, box_half_width: float, t_points,
                      n_paths: int, ds: float, seed: int, workers: int = 1,
                      max_steps: int | None = None, block_size: int = BLOCK_SIZE) -> PathEnsemble:
    """Kill-on-exit ensemble of X^mu recorded at ``t_points`` (sorted ascending)."""
    _check_alpha(frac.alpha)
    t = np.asarray(t_points, dtype=float)
    if np.any(np.diff(t) < 0) or np.any(t < 0):
        raise ValueError("t_points must be nonnegative and ascending")
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (frac.d,)).copy()
    if np.any(np.abs(x0) > box_half_width):
        raise ValueError("x0 outside the box")
    wkind, wpar = _weight_code(w)
    # W >= 1 so the clock needs at most t_max / ds steps per unit of max W; cap generously
    max_steps = int(1e9) if max_steps is None else int(max_steps)
    nt, d = t.size, frac.d
    pos = np.full((n_paths, nt, d), np.nan)
    alive = np.zeros((n_paths, nt), dtype=bool)
    killed = np.zeros(n_paths, dtype=bool)
    steps = np.zeros(n_paths, dtype=np.int64)
    horizon = np.ones(n_paths, dtype=bool)
    a = 0.5 * frac.alpha

    def block(gen, s, m):
        sl = slice(s, s + m)
        _ensemble_block(gen, x0, a, ds, wkind, wpar, box_half_width, t, m, max_steps,
                        pos[sl], alive[sl], killed[sl], steps[sl], horizon[sl])

    _run_blocks(block, n_paths, seed, workers, block_size)
    return PathEnsemble(n_paths, ds, t, pos, alive, killed, steps, horizon, seed, x0, box_half_width)


def simulate_coupled(x0, frac: FracParams, w: WeightSpec, box_half_width: float, t_points,
                     n_paths: int, ds: float, seed: int, workers: int = 1,
                     max_steps: int | None = None, block_size: int = BLOCK_SIZE):
    """Ensembles with steps ds/2 and ds built from common increments; returns (fine, coarse)."""
    _check_alpha(frac.alpha)
    t = np.asarray(t_points, dtype=float)
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (frac.d,)).copy()
    wkind, wpar = _weight_code(w)
    max_steps = int(1e9) if max_steps is None else int(max_steps)
    nt, d = t.size, frac.d
    pf = np.full((n_paths, nt, d), np.nan)
    pc = np.full((n_paths, nt, d), np.nan)
    af = np.zeros((n_paths, nt), dtype=bool)
    ac = np.zeros((n_paths, nt), dtype=bool)
    a = 0.5 * frac.alpha

    def block(gen, s, m):
        sl = slice(s, s + m)
        _coupled_block(gen, x0, a, ds, wkind, wpar, box_half_width, t, m, max_steps,
                       pf[sl], af[sl], pc[sl], ac[sl])

    _run_blocks(block, n_paths, seed, workers, block_size)
    none = np.zeros(n_paths, dtype=np.int64)
    ok = np.ones(n_paths, dtype=bool)
    fine = PathEnsemble(n_paths, 0.5 * ds, t, pf, af, ~af[:, -1], none, ok, seed, x0, box_half_width)
    coarse = PathEnsemble(n_paths, ds, t, pc, ac, ~ac[:, -1], none, ok, seed, x0, box_half_width)
    return fine, coarse


# --------------------------------------------------------------------------- histograms


def default_cell_edges(R: float, box_half_width: float, inner: float = 0.25) -> np.ndarray:
    """Symmetric edges 0, +-inner, +-2 inner, ... doubling below R, closed at the box."""
    pos = [inner]
    while 2 * pos[-1] < R:
        pos.append(2 * pos[-1])
    pos = np.array(pos + [box_half_width])
    return np.concatenate([-pos[::-1], pos])


def snap_edges(edges, grid) -> np.ndarray:
    """Move interior edges to the nearest node midpoint so every node cell lies in one bin."""
    e = np.asarray(edges, dtype=float).copy()
    h, b = grid.h, grid.box_half_width
    inner = np.round((e[1:-1] - 0.5 * h) / h) * h + 0.5 * h
    out = np.concatenate([[-b], inner, [b]])
    return np.unique(out)


def _bin_index(points, edges):
    """Flat cell index of each point (row), product cells over axes; -1 if outside."""
    nc = edges.size - 1
    idx = np.zeros(points.shape[0], dtype=np.int64)
    bad = np.zeros(points.shape[0], dtype=bool)
    for k in range(points.shape[1]):
        c = np.searchsorted(edges, points[:, k], side="right") - 1
        bad |= (c < 0) | (c >= nc)
        idx = idx * nc + np.clip(c, 0, nc - 1)
    idx[bad] = -1
    return idx


def empirical_histogram(ens: PathEnsemble, t: float, edges) -> tuple[np.ndarray, np.ndarray]:
    """(cell masses, per-path cell index with -1 for dead paths)."""
    j = ens.column(t)
    d = ens.positions.shape[2]
    n_cells = (edges.size - 1) ** d
    idx = np.full(ens.n_paths, -1, dtype=np.int64)
    live = ens.alive[:, j]
    idx[live] = _bin_index(ens.positions[live, j, :], edges)
    counts = np.bincount(idx[idx >= 0], minlength=n_cells)
    return counts / ens.n_paths, idx


def spectral_row(spectrum, i0: int, t: float) -> np.ndarray:
    """p_mu(t, x_{i0}, .) from the eigen expansion."""
    e = np.exp(-spectrum.lambdas * t)
    return spectrum.phis @ (e * spectrum.phis[i0])


@dataclass(frozen=True)
class Comparison:
    tv: float
    tv_stderr: float
    edges: np.ndarray
    empirical: np.ndarray
    spectral: np.ndarray
    stderr: np.ndarray
    survival_emp: float
    survival_spec: float
    survival_stderr: float
    n_paths: int
    n_survived: int


def empirical_compare(ens: PathEnsemble, spectrum, grid, mu, x0_index: int, t: float,
                      edges=None, min_survivors: int = 1000) -> Comparison:
    """Total variation between the MC sub-probability histogram and the spectral one.

    The killed mass is an extra cell, so TV = 1/2 (sum_c |e_c - s_c| + |e_dead - s_dead|).
    """
    if not np.allclose(grid.x[x0_index], ens.x0):
        raise ValueError("ensemble start does not match x0_index")
    edges = default_cell_edges(grid.R, grid.box_half_width) if edges is None else edges
    edges = snap_edges(edges, grid)
    emp, idx = empirical_histogram(ens, t, edges)
    n_surv = int(np.count_nonzero(idx >= 0))
    if n_surv < min_survivors:
        raise InsufficientSamples(f"only {n_surv} of {ens.n_paths} paths survive to t={t}")
    p = spectral_row(spectrum, x0_index, t) * mu
    node_cells = _bin_index(grid.x, edges)
    spec = np.bincount(node_cells, weights=p, minlength=emp.size)
    N = ens.n_paths
    se = np.sqrt(emp * (1 - emp) / N)
    surv_e, surv_s = float(emp.sum()), float(spec.sum())
    full_e = np.append(emp, 1.0 - surv_e)
    full_s = np.append(spec, 1.0 - surv_s)
    diff = full_e - full_s
    tv = 0.5 * float(np.abs(diff).sum())
    sg = np.sign(diff)
    var = 0.25 * (float(sg ** 2 @ full_e) - float(sg @ full_e) ** 2) / N
    return Comparison(tv=tv, tv_stderr=math.sqrt(max(var, 0.0)), edges=edges, empirical=emp,
                      spectral=spec, stderr=se, survival_emp=surv_e, survival_spec=surv_s,
                      survival_stderr=math.sqrt(surv_e * (1 - surv_e) / N), n_paths=N,
                      n_survived=n_surv)


@dataclass(frozen=True)
class HalvingCheck:
    edges: np.ndarray
    fine: np.ndarray
    coarse: np.ndarray
    stderr: np.ndarray
    z: np.ndarray  # |fine - coarse| / stderr per cell

    @property
    def max_z(self) -> float:
        return float(np.max(self.z))


def step_halving_check(fine: PathEnsemble, coarse: PathEnsemble, t: float, edges) -> HalvingCheck:
    """Change of each cell mass between step ds and ds/2, in units of the histogram standard error."""
    ef, _ = empirical_histogram(fine, t, edges)
    ec, _ = empirical_histogram(coarse, t, edges)
    pooled = 0.5 * (ef + ec)
    se = np.sqrt(pooled * (1 - pooled) / fine.n_paths)
    diff = np.abs(ef - ec)
    z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff > 0, np.inf, 0.0))
    return HalvingCheck(edges=np.asarray(edges), fine=ef, coarse=ec, stderr=se, z=z)
