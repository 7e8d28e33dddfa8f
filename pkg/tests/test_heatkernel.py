import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracheat.core import FracParams, GridSpec, PowerWeight, build_grid
from fracheat.heatkernel import (KernelSlice, ResolutionError, diagonal_trace, fit_log_slope,
                                 ground_state_envelope, iu_max_ratio, iu_min_ratio, kernel_eval,
                                 mass_profile, resolution_floor, sup_ratio, sup_ratio_fit)
from fracheat.operator import assemble_form
from fracheat.spectral import Spectrum, heat_trace, solve_spectrum


@pytest.fixture(scope="module")
def setup():
    g = build_grid(GridSpec(1, 20.0, 201))
    op = assemble_form(g, FracParams(0.5, 1), PowerWeight(1.5))
    return op, solve_spectrum(op)


def test_chapman_kolmogorov(setup):
    op, spec = setup
    P = lambda t: kernel_eval(spec, t).values  # noqa: E731
    lhs = P(0.7)
    rhs = P(0.3) @ np.diag(op.mu) @ P(0.4)
    assert np.max(np.abs(lhs - rhs)) <= 1e-8 * np.max(np.abs(lhs))


@pytest.mark.parametrize("t", [0.05, 0.5, 2.0])
def test_trace_identity(setup, t):
    _, spec = setup
    assert diagonal_trace(spec, t) == pytest.approx(heat_trace(spec, t), rel=1e-8)


def test_large_time_rank_one(setup):
    _, spec = setup
    lam, phi = spec.lambdas, spec.phis[:, 0]
    t = 50.0 / lam[1] * np.log(lam[1] / (lam[1] - lam[0]) + 1.0) + 50.0 / (lam[1] - lam[0])
    ref = np.exp(-lam[0] * t) * np.outer(phi, phi)
    assert np.max(np.abs(kernel_eval(spec, t).values - ref)) <= 1e-9 * np.max(ref)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 30.0))
def test_slice_symmetric_positive_sub_markov(setup, t):
    op, spec = setup
    slc = kernel_eval(spec, t)
    assert np.array_equal(slc.values, slc.values.T)
    assert slc.values.min() >= -1e-10
    assert np.all(mass_profile(slc, op.mu) <= 1 + 1e-10)


def test_trace_strictly_decreasing(setup):
    _, spec = setup
    tr = [diagonal_trace(spec, t) for t in np.logspace(-2, 1, 15)]
    assert np.all(np.diff(tr) < 0)


def test_diagonal_localizes_near_origin():
    # reference spacing h = 0.1; the argmax is insensitive to R (R = 200 gives the same nodes)
    radii = {}
    for n in (401, 801):
        g = build_grid(GridSpec(1, 20.0, n))
        spec = solve_spectrum(assemble_form(g, FracParams(0.5, 1), PowerWeight(1.5)))
        radii[n] = [g.radii[np.argmax(kernel_eval(spec, t).values.diagonal())] for t in (0.05, 0.1, 0.2)]
    assert max(radii[401][1:]) <= 2.0
    # below the resolution floor (t = 0.05) the peak still moves toward the origin as h shrinks
    assert radii[801][0] < radii[401][0]


def test_truncated_spectrum_refused(setup):
    op, _ = setup
    part = solve_spectrum(op, k=5)
    with pytest.raises(ResolutionError):
        kernel_eval(part, 0.01)
    kernel_eval(part, 1e4)  # fully resolved at large t


def test_sup_ratio_synthetic_slope():
    slices = [KernelSlice(t, np.full((3, 3), t ** -2.0), 1) for t in np.logspace(-1, 0, 6)]
    fit = sup_ratio_fit(slices, np.ones(3), (0.1, 1.0))
    assert fit.slope == pytest.approx(-2.0, abs=1e-10)


def test_sup_ratio_fit_floor_refusal():
    slices = [KernelSlice(t, np.full((2, 2), 1.0 / t), 1) for t in np.logspace(-2, 0, 6)]
    assert resolution_floor(0.1, 0.5) == pytest.approx(20 * 0.1 ** 0.5)
    with pytest.raises(ResolutionError):
        sup_ratio_fit(slices, np.ones(2), (0.05, 1.0), h=0.1, alpha=0.5)
    with pytest.raises(ResolutionError):
        sup_ratio_fit(slices, np.ones(2), (0.05, 2.0), h=1e-8, alpha=0.5)
    fit = sup_ratio_fit(slices, np.ones(2), (0.05, 1.0), h=1e-8, alpha=0.5)
    assert fit.slope == pytest.approx(-1.0, abs=1e-10)


def test_log_slope_rejects_nonpositive():
    with pytest.raises(Exception):
        fit_log_slope([0.1, 0.2, 0.3], [1.0, 0.0, 1.0])


def test_sup_ratio_requires_positive_envelope(setup):
    _, spec = setup
    slc = kernel_eval(spec, 1.0)
    V = np.ones(spec.n_nodes)
    V[3] = 0.0
    with pytest.raises(ValueError):
        sup_ratio(slc, V)


def test_ground_state_envelope_exponent():
    phi = np.array([0.25, 1.0, 4.0])
    np.testing.assert_allclose(ground_state_envelope(phi, 0.5, 0.8), phi ** 0.8)
    np.testing.assert_allclose(ground_state_envelope(phi, 0.5, 1.5), phi)


def test_intrinsic_ultracontractivity_limits(setup):
    _, spec = setup
    lam, phi = spec.lambdas, spec.phis[:, 0]
    t = 100.0 / (lam[1] - lam[0])
    slc = kernel_eval(spec, t)
    lo, hi = iu_min_ratio(slc, phi), iu_max_ratio(slc, phi)
    scale = np.exp(-lam[0] * t)
    assert lo / scale == pytest.approx(1.0, abs=1e-6)
    assert hi / scale == pytest.approx(1.0, abs=1e-6)
    mid = kernel_eval(spec, 0.5)
    assert iu_min_ratio(mid, phi) > 0
    assert np.isfinite(iu_max_ratio(mid, phi))


def test_kernel_rejects_bad_input(setup):
    _, spec = setup
    with pytest.raises(ValueError):
        kernel_eval(spec, 0.0)
    with pytest.raises(ValueError):
        kernel_eval(Spectrum.from_values([1.0, 2.0]), 1.0)
