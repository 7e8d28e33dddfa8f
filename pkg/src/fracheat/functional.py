"""Inequality checkers and the compactness decision procedure.

The classifier works with radial weights in logarithmic variables, y = log r
and l(y) = log W(e^y), so profiles can be followed to radii far beyond any grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate, optimize, stats

from .core import ConfigError, FracParams, Grid, PowerWeight, TableWeight, WeightSpec
from .operator import DiscreteOperator, dirichlet_energy, heat_apply

Y_MIN, Y_MAX = -40.0, 1e9  # log-radius range explored by the classifier


# --------------------------------------------------------------------------- classifier


@dataclass(frozen=True)
class CompactnessVerdict:
    verdict: str  # "Compact", "NotCompact" or "Inconclusive"
    evidence: dict = field(default_factory=dict)


def _sup_ratio_power(w: WeightSpec, alpha: float):
    """sup_x W(x) / (1+|x|)^alpha, or inf when the log-ratio keeps growing."""
    ys = np.linspace(Y_MIN, 700.0, 7001)
    g = w.log_profile_logr(ys) - alpha * np.logaddexp(0.0, ys)
    tail = (g[-1] - g[-101]) / (ys[-1] - ys[-101])
    if not np.all(np.isfinite(g)) or tail > 1e-10:
        return math.inf
    return float(np.exp(g.max()))


class _RadialCalculus:
    """Psi_1, Psi_2, beta_0 and its inverse for a radially nondecreasing weight.

    Psi_1 uses the weight's lower envelope and Psi_2 its upper envelope, so
    beta_0 only depends on the envelope class (both coincide for power weights).
    """

    def __init__(self, w: WeightSpec, frac: FracParams):
        self.w, self.a, self.d = w, frac.alpha, frac.d
        ys = np.linspace(Y_MIN, 50.0, 9001)
        hv = self.h(ys)
        k = int(np.argmax(hv))
        if k == ys.size - 1:
            raise ValueError("|x|^alpha / W(x) does not peak; Psi_1 has no finite maximizer")
        lo, hi = ys[max(k - 1, 0)], ys[min(k + 1, ys.size - 1)]
        res = optimize.minimize_scalar(lambda y: -self.h(y), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        self.y_star = float(res.x)
        self.log_psi1_max = float(self.h(self.y_star))
        # monotone decrease past the peak is required for the inverse
        yt = np.linspace(self.y_star, 60.0, 4001)
        if np.any(np.diff(self.h(yt)) > 1e-12):
            raise ValueError("|x|^alpha / W(x) is not monotone past its peak")
        self.log_beta0_inf = self.log_beta0(50.0)

    def h(self, y):
        # lower envelope of W gives an upper bound on Psi_1
        return self.a * np.asarray(y, dtype=float) - self.w.log_lower_logr(y)

    def log_psi1_inv(self, log_s: float) -> float:
        """log of inf{r : Psi_1(r) <= s}; -inf when s >= sup Psi_1."""
        if log_s >= self.log_psi1_max:
            return -math.inf
        f = lambda y: float(self.h(y)) - log_s
        hi = self.y_star + 1.0
        while f(hi) > 0:
            hi = self.y_star + 2.0 * (hi - self.y_star)
            if hi > Y_MAX:
                raise ValueError("Psi_1 inverse beyond the explored radius range")
        return optimize.brentq(f, self.y_star, hi, xtol=1e-13, rtol=1e-15)

    def log_psi2(self, y: float) -> float:
        """log sup_{|x| <= e^y} W(x)^2, bounded through the nondecreasing upper envelope."""
        if y == -math.inf:
            return 2.0 * float(self.w.log_upper_logr(-745.0))
        return 2.0 * float(self.w.log_upper_logr(y))

    def log_beta0(self, log_s: float) -> float:
        """beta_0(s) = (1 + s^(-d/alpha)) Psi_2(Psi_1^{-1}(s ^ 1)), constants set to 1."""
        first = float(np.logaddexp(0.0, -(self.d / self.a) * log_s))
        return first + self.log_psi2(self.log_psi1_inv(min(log_s, 0.0)))

    def log_beta0_inv(self, log_r: float) -> float:
        """log inf{s > 0 : beta_0(s) <= r}, by bisection in log s."""
        if log_r <= self.log_beta0_inf:
            raise ValueError("r below the infimum of beta_0")
        f = lambda v: self.log_beta0(v) - log_r
        lo, hi = -1.0, 1.0
        while f(lo) < 0:
            lo *= 2.0
        while f(hi) > 0:
            hi *= 2.0
            if hi > 1e6:
                raise ValueError("beta_0 inverse not bracketed")
        return optimize.brentq(f, lo, hi, xtol=1e-12, rtol=1e-14)


def beta0_curve(w: WeightSpec, frac: FracParams, s) -> np.ndarray:
    """beta_0(s) with unit constants (requires a compact-type radial weight)."""
    calc = _RadialCalculus(w, frac)
    return np.exp([calc.log_beta0(math.log(v)) for v in np.atleast_1d(s)])


def _integral_test(calc: _RadialCalculus, head_hi: float = 1e6, n_tail: int = 400):
    """int_{r0}^inf beta_0^{-1}(r) / r dr with r0 = 2 beta_0(1).

    With r = e^u the integrand is exp(G(u)), G = log beta_0^{-1}(e^u). The head
    u in [log r0, log head_hi] goes to quad; beyond it u = e^v and
    F(v) = G(e^v) + v is sampled, integrated, and closed with the exponential
    fitted to its last samples.
    """
    log_r0 = max(calc.log_beta0(0.0) + math.log(2.0), calc.log_beta0_inf + math.log(2.0))
    u_hi = max(math.log(head_hi), log_r0 + 1.0)
    head, _ = integrate.quad(lambda u: math.exp(calc.log_beta0_inv(u)), log_r0, u_hi,
                             epsabs=0.0, epsrel=1e-8, limit=200)
    vs = np.linspace(math.log(u_hi), math.log(1e4 * u_hi), n_tail)
    F = np.array([calc.log_beta0_inv(math.exp(v)) + v for v in vs])
    body = integrate.simpson(np.exp(F), x=vs)
    slope = float(stats.linregress(vs[-20:], F[-20:]).slope)
    if slope >= -1e-3:
        return math.inf, slope
    return head + body + math.exp(F[-1]) / (-slope), slope


def classify_compactness(w: WeightSpec, frac: FracParams) -> CompactnessVerdict:
    """Decide compactness of the semigroup from the weight alone.

    A finite sup W/(1+|x|)^alpha means NotCompact. Otherwise Psi_1 must vanish
    at infinity and the beta_0 integral test must converge for Compact;
    anything else is Inconclusive.
    """
    if isinstance(w, TableWeight) or not w.radial:
        return CompactnessVerdict("Inconclusive", {"reason": "weight not defined beyond the grid"})
    a = frac.alpha
    sup = _sup_ratio_power(w, a)
    ev = {"sup_ratio_W_over_power": sup, "psi1_limit": None, "integral_test_value": None}
    if math.isfinite(sup):
        return CompactnessVerdict("NotCompact", ev)
    try:
        calc = _RadialCalculus(w, frac)
    except ValueError as exc:
        ev["reason"] = str(exc)
        return CompactnessVerdict("Inconclusive", ev)
    ys = np.linspace(100.0, 700.0, 61)
    hv = calc.h(ys)
    psi1_limit = 0.0 if (hv[-1] < -30.0 and np.all(np.diff(hv) < 0)) else float(np.exp(hv[-1]))
    ev["psi1_limit"] = psi1_limit
    if psi1_limit > 0:
        ev["reason"] = "Psi_1 does not vanish at infinity"
        return CompactnessVerdict("Inconclusive", ev)
    try:
        value, slope = _integral_test(calc)
    except ValueError as exc:
        ev["reason"] = str(exc)
        return CompactnessVerdict("Inconclusive", ev)
    ev["integral_test_value"] = float(value)
    ev["integral_tail_slope"] = slope
    if math.isfinite(value):
        return CompactnessVerdict("Compact", ev)
    ev["reason"] = "beta_0 integral test diverges"
    return CompactnessVerdict("Inconclusive", ev)


def beta0_power_exponents(alpha: float, beta: float, d: int) -> dict:
    """Small-s exponents of beta_0 for W = (1+|x|)^beta, beta > alpha.

    beta_0(s) ~ s^(-d/alpha) (1 + s^(-1/(beta-alpha)))^(2 beta), so the true
    log-log exponent is the sum d/alpha + 2 beta/(beta-alpha); ``bound`` is the
    max of the two terms.
    """
    a2 = 2.0 * beta / (beta - alpha)
    return {"sum": d / alpha + a2, "bound": max(d / alpha, a2)}


# --------------------------------------------------------------------------- test families


@dataclass(frozen=True, eq=False)
class TestFamily:
    __test__ = False  # not a pytest class

    vectors: list
    labels: list
    grid: Grid

    def __post_init__(self):
        b = self.grid.R
        for v, lab in zip(self.vectors, self.labels):
            if not np.any(v != 0):
                raise ValueError(f"family member {lab!r} is identically zero")
            if np.any(v[np.max(np.abs(self.grid.x), axis=1) >= b - 1e-12] != 0):
                raise ValueError(f"family member {lab!r} touches the box boundary")

    def __len__(self):
        return len(self.vectors)

    def __iter__(self):
        return iter(zip(self.labels, self.vectors))

    def subset(self, prefix: str) -> "TestFamily":
        keep = [(l, v) for l, v in self if l.startswith(prefix)]
        return TestFamily([v for _, v in keep], [l for l, _ in keep], self.grid)

    def __add__(self, other: "TestFamily") -> "TestFamily":
        return TestFamily(self.vectors + other.vectors, self.labels + other.labels, self.grid)


def gaussian_family(grid: Grid, n: int = 5, seed: int = 0) -> TestFamily:
    """Gaussians with seeded centers in |x| <= R/4 and widths in [2h, R/20], cut at 8 widths."""
    rng = np.random.default_rng(seed)
    vecs, labels = [], []
    for k in range(n):
        c = rng.uniform(-0.25 * grid.R, 0.25 * grid.R, size=grid.d)
        if k == 0:
            c[:] = 0.0
        s = float(np.exp(rng.uniform(np.log(2 * grid.h), np.log(max(2.5 * grid.h, grid.R / 20)))))
        s = min(s, 0.09 * grid.R)
        r = np.sqrt(np.sum((grid.x - c) ** 2, axis=1))
        v = np.where(r <= 8 * s, np.exp(-0.5 * (r / s) ** 2), 0.0)
        if not np.any(v):
            v[grid.locate(np.rint(c / grid.h) * grid.h)] = 1.0
        vecs.append(v)
        labels.append(f"gauss:c={np.round(c, 4).tolist()},s={s:.4g}")
    return TestFamily(vecs, labels, grid)


def plateau(grid: Grid, l: float) -> np.ndarray:
    """f_l = 1 on |x| <= l, linear to 0 at |x| = 2l."""
    return np.clip(2.0 - grid.radii / l, 0.0, 1.0)


def plateau_family(grid: Grid, ls=None) -> TestFamily:
    ls = np.geomspace(2 * grid.h, grid.R / 4, 6) if ls is None else ls
    return TestFamily([plateau(grid, l) for l in ls], [f"plateau:l={l:.4g}" for l in ls], grid)


def spike_family(grid: Grid, radii=None) -> TestFamily:
    radii = np.linspace(grid.h, 0.5 * grid.R, 5) if radii is None else radii
    vecs, labels = [], []
    for r in radii:
        i = int(np.argmin(np.abs(grid.radii - r) + 1e-9 * grid.x[:, 0]))
        v = np.zeros(grid.n)
        v[i] = 1.0
        vecs.append(v)
        labels.append(f"spike:r={grid.radii[i]:.4g}")
    return TestFamily(vecs, labels, grid)


def bump_profile(r, rho):
    return np.clip(1.0 - (np.asarray(r) / rho) ** 2, 0.0, None) ** 2


def scaling_family(grid: Grid, lams=(0.25, 0.5, 1.0, 2.0, 4.0), rho: float | None = None) -> TestFamily:
    """u(lam x) for a smooth bump of radius rho, so supports have radius rho/lam."""
    rho = min(32 * grid.h, grid.R / 8) if rho is None else rho
    return TestFamily([bump_profile(lam * grid.radii, rho) for lam in lams],
                      [f"scale:lam={lam:g}" for lam in lams], grid)


def standard_family(grid: Grid, seed: int = 0) -> TestFamily:
    return gaussian_family(grid, seed=seed) + plateau_family(grid) + spike_family(grid) + scaling_family(grid)


# --------------------------------------------------------------------------- falsifier


@dataclass(frozen=True)
class FalsifierSlopes:
    mass_slope: float
    energy_slope: float
    psi_slope: float
    ls: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    psi_mass: np.ndarray


def falsifier_scalings(op: DiscreteOperator, l_list) -> FalsifierSlopes:
    """Slopes in l of mu(f_l^2), D(f_l, f_l) and mu(f_l psi)^2 with psi = e^{-|x|}."""
    g = op.grid
    ls = np.asarray(l_list, dtype=float)
    if ls.max() > g.R / 4 + 1e-12:
        raise ValueError(f"max l = {ls.max()} exceeds R/4 = {g.R / 4}")
    if isinstance(op.weight, PowerWeight) and op.weight.beta > op.frac.alpha:
        raise ConfigError("falsifier needs a weight with beta <= alpha")
    psi = np.exp(-g.radii)
    mass, energy, pm = [], [], []
    for l in ls:
        f = plateau(g, l)
        mass.append(float(op.mu @ f ** 2))
        energy.append(dirichlet_energy(op, f))
        pm.append(float(op.mu @ (f * psi)) ** 2)
    mass, energy, pm = map(np.array, (mass, energy, pm))
    sl = lambda y: float(stats.linregress(np.log(ls), np.log(y)).slope)
    return FalsifierSlopes(sl(mass), sl(energy), sl(pm), ls, mass, energy, pm)


# --------------------------------------------------------------------------- super Poincare


@dataclass(frozen=True)
class BetaEmpCurve:
    s: np.ndarray
    beta: np.ndarray
    crossings: np.ndarray  # mu(f^2) / D(f,f) per member


def _moments(op: DiscreteOperator, family: TestFamily):
    m2, m1, D = [], [], []
    for label, f in family:
        if not np.any(f):
            raise ValueError(f"family member {label!r} is zero")
        m2.append(float(op.mu @ f ** 2))
        m1.append(float(op.mu @ np.abs(f)))
        D.append(dirichlet_energy(op, f))
    return np.array(m2), np.array(m1), np.array(D)


def super_poincare_empirical(op: DiscreteOperator, family: TestFamily, s_list) -> BetaEmpCurve:
    """beta_emp(s) = max_f (mu(f^2) - s D(f,f))_+ / mu(|f|)^2."""
    s = np.asarray(s_list, dtype=float)
    if np.any(s <= 0):
        raise ValueError("s must be positive")
    m2, m1, D = _moments(op, family)
    vals = np.clip(m2[None, :] - s[:, None] * D[None, :], 0.0, None) / m1[None, :] ** 2
    return BetaEmpCurve(s=s, beta=vals.max(axis=1), crossings=m2 / D)


def beta_emp_slope(curve: BetaEmpCurve) -> float:
    """Slope of log beta_emp against log(1/s) over the points with beta_emp > 0."""
    sel = curve.beta > 0
    if sel.sum() < 3:
        raise ValueError("fewer than 3 positive beta_emp values")
    return float(stats.linregress(np.log(1.0 / curve.s[sel]), np.log(curve.beta[sel])).slope)


def default_s_list(op: DiscreteOperator, family: TestFamily, n: int = 20, decades: float = 3.0):
    """Log-spaced s below half the largest crossing mu(f^2)/D(f,f)."""
    m2, _, D = _moments(op, family)
    top = 0.5 * float(np.max(m2 / D))
    return np.geomspace(top * 10 ** (-decades), top, n)


# --------------------------------------------------------------------------- ratio checkers


@dataclass(frozen=True)
class RatioReport:
    name: str
    max_ratio: float
    ratios: dict  # label -> ratio

    def spread(self, prefix: str = "") -> float:
        v = np.array([r for l, r in self.ratios.items() if l.startswith(prefix)])
        return float(v.max() / v.min())


def _clamped_radii(grid: Grid) -> np.ndarray:
    return np.maximum(grid.radii, 0.5 * grid.h)


def hardy_ratio(op: DiscreteOperator, family: TestFamily) -> RatioReport:
    """max_f int f^2 |x|^(-alpha) dx / D(f,f) with |x| clamped below at h/2."""
    g, a = op.grid, op.frac.alpha
    wgt = g.cell_volume * _clamped_radii(g) ** (-a)
    ratios = {l: float(wgt @ f ** 2) / dirichlet_energy(op, f) for l, f in family}
    return RatioReport("hardy", max(ratios.values()), ratios)


def nash_exponents(alpha: float, beta: float, d: int) -> tuple[float, float, str]:
    """(p, q, regime) for mu(u^2)^p <= C D(u,u) mu(|u| V)^q."""
    if beta >= 2 * alpha:
        return (d + alpha) / d, 2 * alpha / d, "high"
    if beta > alpha:
        theta = alpha * (d + beta - 2 * alpha) / (beta - alpha)
        return (theta + alpha) / theta, 2 * alpha / theta, "low"
    raise ValueError("weighted Nash inequality needs beta > alpha")


def nash_ratio(op: DiscreteOperator, family: TestFamily, regime: str | None = None,
               beta: float | None = None) -> RatioReport:
    """max_u mu(u^2)^p / (D(u,u) mu(|u| V)^q) with V = (1+|x|)^(alpha-d)."""
    g, a, d = op.grid, op.frac.alpha, op.grid.d
    if beta is None:
        if not isinstance(op.weight, PowerWeight):
            raise ValueError("pass beta for non-power weights")
        beta = op.weight.beta
    p, q, auto = nash_exponents(a, beta, d)
    if regime is not None and regime != auto:
        raise ValueError(f"beta={beta} lies in regime {auto!r}, not {regime!r}")
    V = (1.0 + g.radii) ** (a - d)
    ratios = {}
    for l, u in family:
        m2 = float(op.mu @ u ** 2)
        m1 = float(op.mu @ (np.abs(u) * V))
        if m2 == 0:
            raise ValueError(f"family member {l!r} is zero")
        ratios[l] = m2 ** p / (dirichlet_energy(op, u) * m1 ** q)
    return RatioReport(f"nash:{auto}", max(ratios.values()), ratios)


def ckn_ratio(op: DiscreteOperator, family: TestFamily, tau: float, gamma: float) -> RatioReport:
    """max_u || |x|^gamma u ||_{L^tau(dx)}^2 / D(u,u) under 1/tau + gamma/d = 1/2 - alpha/(2d)."""
    g, a, d = op.grid, op.frac.alpha, op.grid.d
    if not tau > 0:
        raise ValueError("tau must be positive")
    gap = 1.0 / tau + gamma / d - (0.5 - a / (2 * d))
    if abs(gap) > 1e-12:
        raise ValueError(f"(tau, gamma) violate the scaling constraint by {gap:.3e}")
    wgt = g.cell_volume * _clamped_radii(g) ** (gamma * tau)
    ratios = {l: float(wgt @ np.abs(u) ** tau) ** (2.0 / tau) / dirichlet_energy(op, u) for l, u in family}
    return RatioReport("ckn", max(ratios.values()), ratios)


def ckn_parameters(alpha: float, beta: float, d: int) -> tuple[float, float]:
    """(tau, gamma) used for the low regime: tau = 2(d+beta-2alpha)/(d-alpha), gamma tau = beta - 2alpha."""
    tau = 2.0 * (d + beta - 2 * alpha) / (d - alpha)
    return tau, (beta - 2 * alpha) / tau


def lyapunov_check(op: DiscreteOperator, spectrum, V, t_list, c: float = 0.0) -> float:
    """max over t and nodes of (P_t V)_i / (e^{ct} V_i) - 1."""
    V = np.asarray(V, dtype=float)
    if np.any(V <= 0):
        raise ValueError("V must be positive")
    worst = -math.inf
    for t in t_list:
        PV = heat_apply(op, V, t, spectrum=spectrum)
        worst = max(worst, float(np.max(PV / (math.exp(c * t) * V))) - 1.0)
    return worst


# --------------------------------------------------------------------------- exponent identities


@dataclass(frozen=True)
class ConverseNash:
    r: np.ndarray
    psi: np.ndarray
    closed_form: np.ndarray
    max_rel_err: float
    psi_over_r_increasing: bool


def _psi_one(r: float, gamma: float, C: float) -> float:
    L = math.log(r / C)
    f = lambda u: -(r * math.exp(-u) * (L + gamma * u))
    us = np.linspace(-60.0, 60.0, 2401)
    vals = np.array([f(u) for u in us])
    k = int(np.argmin(vals))
    if k in (0, us.size - 1):
        return max(-float(vals[k]), 0.0)
    res = optimize.minimize_scalar(f, bracket=(us[k - 1], us[k], us[k + 1]), method="golden",
                                   tol=1e-12)
    return max(-float(res.fun), 0.0)


def converse_nash_rate(gamma: float, C: float, r_list) -> ConverseNash:
    """psi(r) = sup_t (r/t) log(r / Psi(t)) for Psi(t) = C t^(-gamma), maximized over log t.

    The closed form is (gamma/e) r (r/C)^(1/gamma); values are clamped at 0.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if not C > 0:
        raise ValueError("C must be positive")
    r = np.asarray(r_list, dtype=float)
    psi = np.array([_psi_one(v, gamma, C) for v in r])
    closed = np.maximum(gamma / math.e * r * (r / C) ** (1.0 / gamma), 0.0)
    err = float(np.max(np.abs(psi - closed) / np.maximum(closed, 1e-300)))
    order = np.argsort(r)
    inc = bool(np.all(np.diff(psi[order] / r[order]) > 0))
    return ConverseNash(r, psi, closed, err, inc)


def _exact(v):
    if isinstance(v, (int, Fraction)):
        return Fraction(v)
    return Fraction(repr(float(v)))


@dataclass(frozen=True)
class ExponentComparison:
    hkc_exponent: Fraction
    stable_exponent: Fraction
    larger: str  # "first", "second" or "equal"
    equivalence_holds: bool


def exponent_check(alpha, beta, d) -> ExponentComparison:
    """Compare (d+beta-2alpha)/(beta-alpha) with d/alpha in exact rational arithmetic."""
    a, b, dd = _exact(alpha), _exact(beta), _exact(d)
    if not b > a:
        raise ValueError("need beta > alpha")
    if not dd > a:
        raise ValueError("need d > alpha")
    first = (dd + b - 2 * a) / (b - a)
    second = dd / a
    larger = "first" if first > second else ("second" if first < second else "equal")
    return ExponentComparison(first, second, larger, (first > second) == (2 * a > b))
