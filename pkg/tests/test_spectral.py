import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg

from fracheat.core import FracParams, GridSpec, PowerWeight, build_grid
from fracheat.heatkernel import diagonal_trace
from fracheat.operator import DiscreteOperator, assemble_form
from fracheat.spectral import (SpectralError, Spectrum, fit_eigen_growth, fit_trace_exponent,
                               heat_trace, heat_trace_tail_bound, rayleigh_quotients,
                               solve_spectrum, trace_to_growth)


def _op(R=20.0, n=201, beta=1.5, alpha=0.5, d=1):
    g = build_grid(GridSpec(d, R, n))
    return assemble_form(g, FracParams(alpha, d), PowerWeight(beta))


@pytest.fixture(scope="module")
def op():
    return _op()


@pytest.fixture(scope="module")
def spec(op):
    return solve_spectrum(op)


def test_scalar_model():
    h, kill, W = 0.5, 3.0, 4.0
    mu = np.array([h / W])
    op1 = DiscreteOperator(Q=np.array([[h * kill]]), kill=np.array([kill]), mu=mu, cell_volume=h)
    s = solve_spectrum(op1)
    assert s.lambdas[0] == pytest.approx(W * kill, rel=1e-14)
    assert abs(s.phis[0, 0]) == pytest.approx(mu[0] ** -0.5, rel=1e-14)


def test_three_node_dense_oracle():
    op3 = _op(R=1.0, n=3)
    ref = linalg.eigvals(op3.Q, np.diag(op3.mu)).real
    np.testing.assert_allclose(solve_spectrum(op3).lambdas, np.sort(ref), rtol=1e-10)


def test_spectrum_invariants(op, spec):
    assert spec.complete
    assert 0 < spec.lambdas[0] < spec.lambdas[1]
    assert np.all(np.diff(spec.lambdas) >= 0)
    assert spec.orthonormality_residual() <= 1e-8
    assert np.all(spec.phis[:, 0] > 0)
    np.testing.assert_allclose(rayleigh_quotients(op, spec), spec.lambdas, rtol=1e-8)


def test_partial_spectrum_matches_full(op, spec):
    part = solve_spectrum(op, k=12)
    np.testing.assert_allclose(part.lambdas, spec.lambdas[:12], rtol=1e-12)


def test_arpack_matches_dense(op, spec):
    arp = solve_spectrum(op, k=20, backend="arpack")
    np.testing.assert_allclose(arp.lambdas, spec.lambdas[:20], rtol=1e-8)
    overlap = np.abs(np.sum(arp.phis * spec.phis[:, :20] * op.mu[:, None], axis=0))
    np.testing.assert_allclose(overlap, 1.0, atol=1e-6)


def test_solver_rejects_bad_k(op):
    with pytest.raises(ValueError):
        solve_spectrum(op, k=0)
    with pytest.raises(ValueError):
        solve_spectrum(op, k=op.n + 1)
    with pytest.raises(ValueError):
        solve_spectrum(op, backend="lobpcg")


def test_residual_check_raises():
    # a non-symmetric perturbation breaks the residual bound for the symmetric solve
    base = _op(R=1.0, n=3)
    Q = base.Q.copy()
    Q[0, 2] += 0.3
    bad = DiscreteOperator(Q=Q, kill=base.kill, mu=base.mu, cell_volume=base.cell_volume)
    with pytest.raises(SpectralError):
        solve_spectrum(bad)


def test_domain_monotonicity():
    lam = [solve_spectrum(_op(R=R, n=int(2 * R / 0.2) + 1), k=1).lambdas[0] for R in (10, 20, 40)]
    assert lam[1] <= lam[0] * (1 + 1e-8) and lam[2] <= lam[1] * (1 + 1e-8)


# ---------------------------------------------------------------- growth fits


def test_growth_fit_synthetic():
    s = Spectrum.from_values(np.arange(1, 1001) ** 0.5, alpha=0.5, d=1)
    fit = fit_eigen_growth(s, 10, 100)
    assert fit.slope == pytest.approx(0.5, abs=1e-12)
    assert fit.ratio_spread == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("lo,hi", [(4, 40), (10, 19), (10, 300)])
def test_growth_window_rules(lo, hi):
    s = Spectrum.from_values(np.arange(1, 1001) ** 0.5, alpha=0.5, d=1)
    with pytest.raises(ValueError):
        fit_eigen_growth(s, lo, hi)


@settings(max_examples=30)
@given(st.floats(0.1, 3.0), st.floats(0.1, 10.0))
def test_growth_fit_recovers_power(p, scale):
    s = Spectrum.from_values(scale * np.arange(1, 801) ** p)
    fit = fit_eigen_growth(s, 10, 200, exponent=p)
    assert fit.slope == pytest.approx(p, rel=1e-10)
    assert fit.ci_low <= fit.slope <= fit.ci_high


def test_trace_ground_state_dominates(spec):
    t = 50.0 / spec.lambdas[0]
    assert heat_trace(spec, t) == pytest.approx(np.exp(-spec.lambdas[0] * t), rel=1e-9)


def test_trace_identity_with_kernel_diagonal(spec):
    for t in (0.05, 0.5, 3.0):
        assert diagonal_trace(spec, t) == pytest.approx(heat_trace(spec, t), rel=1e-8)


def test_trace_decreasing_and_tail(spec):
    ts = np.logspace(-2, 1, 20)
    assert np.all(np.diff(heat_trace(spec, ts)) < 0)
    part = Spectrum(spec.lambdas[:50], None, None, spec.n_nodes)
    full, head = heat_trace(spec, 1.0), heat_trace(part, 1.0)
    assert 0 <= full - head <= heat_trace_tail_bound(part, 1.0)


def test_trace_exponent_synthetic():
    ts = np.logspace(-3, -1, 10)
    theta, se = fit_trace_exponent(ts, 3.0 * ts ** -2.0)
    assert theta == pytest.approx(2.0, abs=1e-12)
    assert se < 1e-10


def test_trace_to_growth_quadratic_spectrum():
    s = Spectrum.from_values(np.arange(1, 10001, dtype=float) ** 2)
    ts = np.logspace(-6, -4, 12)
    v = trace_to_growth(s, ts)
    assert v.theta == pytest.approx(0.5, rel=0.02)
    assert 1.0 / v.growth_slope == pytest.approx(0.5, rel=0.02)
    assert v.verdict == "consistent"


def test_trace_to_growth_constant_spectrum():
    v = trace_to_growth(Spectrum.from_values(np.full(50, 3.0)), np.logspace(-2, 0, 6))
    assert v.verdict == "inconclusive"


@pytest.mark.slow
def test_resolved_config_growth_and_trace():
    # h = 0.01 resolves the window that the reference h = 0.1 does not (see scripts/)
    s = solve_spectrum(_op(R=20.0, n=4001))
    fit = fit_eigen_growth(s, 10, 100)
    assert abs(fit.slope - 0.5) <= 0.075
    ts = np.logspace(np.log10(0.05), 0, 12)
    theta, _ = fit_trace_exponent(ts, heat_trace(s, ts))
    assert abs(-theta + 2.0) <= 0.3
