import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from fracheat.core import (ConstantWeight, FracParams, GridSpec, PowerWeight, StretchedExpWeight,
                           TableWeight, build_grid, normalization_constant)
from fracheat.operator import assemble_form
from fracheat.spectral import solve_spectrum
from fracheat.stablemc import (CLOCK_SLACK, InsufficientSamples, StablePath, block_generators,
                               default_cell_edges, empirical_compare, empirical_histogram,
                               sample_stable_path, simulate_coupled, simulate_ensemble, snap_edges,
                               stable_increments, step_halving_check, time_change)

FP = FracParams(0.5, 1)


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def test_increments_symmetric():
    x = stable_increments(100_000, 1e-3, FP, _rng(11))[:, 0]
    # infinite variance at alpha = 0.5, so test symmetry through signs and quantiles
    frac_pos = np.mean(x > 0)
    assert abs(frac_pos - 0.5) <= 3 * np.sqrt(0.25 / x.size)
    q = np.quantile(x, [0.1, 0.25, 0.75, 0.9])
    assert q[0] == pytest.approx(-q[3], rel=0.05)
    assert q[1] == pytest.approx(-q[2], rel=0.05)


def test_increment_tail_matches_jump_kernel():
    ds = 1e-3
    x = np.abs(stable_increments(1_000_000, ds, FP, _rng(12))[:, 0])
    r = np.geomspace(5, 50, 8)
    tail = np.array([np.mean(x > v) for v in r])
    slope = np.polyfit(np.log(r), np.log(tail), 1)[0]
    assert abs(-slope - 0.5) <= 0.05
    # small-time tail equals ds times the Levy measure of {|y| > r}
    levy = ds * 2 * normalization_constant(0.5, 1) / 0.5 * r ** -0.5
    np.testing.assert_allclose(tail, levy, rtol=0.2)


def test_self_similarity():
    a = stable_increments(100_000, 2e-3, FP, _rng(13))[:, 0]
    b = 2.0 ** (1 / 0.5) * stable_increments(100_000, 1e-3, FP, _rng(14))[:, 0]
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_two_dimensional_increments_rotation_invariant():
    x = stable_increments(100_000, 1e-3, FracParams(1.0, 2), _rng(15))
    ang = np.arctan2(x[:, 1], x[:, 0])
    assert stats.kstest((ang + np.pi) / (2 * np.pi), "uniform").pvalue > 0.01


def test_block_generators_deterministic():
    a = [g.random(3) for g in block_generators(5, 1000)]
    b = [g.random(3) for g in block_generators(5, 1000)]
    assert len(a) == 4
    assert all(np.array_equal(u, v) for u, v in zip(a, b))


# ---------------------------------------------------------------- clock


def test_identity_clock():
    p = sample_stable_path(0.0, 1.0, 1e-3, FP, seed=1)
    tc = time_change(p, PowerWeight(0.0), [0.1, 0.37, 0.8])
    np.testing.assert_allclose(tc.clock, np.arange(tc.clock.size) * 1e-3, rtol=1e-12, atol=1e-15)
    np.testing.assert_array_equal(tc.index, [100, 370, 800])
    np.testing.assert_array_equal(tc.positions, p.X[[100, 370, 800]])


def test_constant_weight_doubles_parent_time():
    p = sample_stable_path(0.0, 2.0, 1e-3, FP, seed=2)
    tc = time_change(p, ConstantWeight(2.0), [0.25, 0.5, 0.75])
    np.testing.assert_allclose(tc.clock[1:4], [5e-4, 1e-3, 1.5e-3], rtol=1e-12)
    np.testing.assert_array_equal(tc.index, [500, 1000, 1500])


def test_hand_computed_clock():
    # path sits at 0 for two steps, then at 3 (W = 4 with beta = 1)
    ds = 0.1
    X = np.array([[0.0], [0.0], [3.0], [3.0], [3.0]])
    p = StablePath(s=np.arange(5) * ds, X=X, ds=ds)
    tc = time_change(p, PowerWeight(1.0), [0.05, 0.15, 0.2, 0.26, 0.31])
    # A = 0, .1, .2, .225, .25, .275
    np.testing.assert_allclose(tc.clock, [0, 0.1, 0.2, 0.225, 0.25, 0.275], atol=1e-15)
    np.testing.assert_array_equal(tc.index, [0, 1, 2, 4, 5])
    assert not tc.horizon_ok[-1]
    assert np.isnan(tc.positions[-1, 0])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.0, 3.0))
def test_clock_monotone(seed, beta):
    p = sample_stable_path(0.5, 1.0, 1e-2, FP, seed=seed)
    ts = np.linspace(0, 0.5, 30)
    tc = time_change(p, PowerWeight(beta), ts)
    assert np.all(np.diff(tc.clock) >= 0)
    assert np.all(np.diff(tc.index) >= 0)
    assert CLOCK_SLACK < 1e-6


def test_time_change_rejects_table_weight():
    g = build_grid(GridSpec(1, 1.0, 3))
    p = sample_stable_path(0.0, 0.1, 1e-2, FP, seed=0)
    with pytest.raises(TypeError):
        time_change(p, TableWeight(g, np.ones(3)), [0.05])


# ---------------------------------------------------------------- ensembles


@pytest.mark.parametrize("w", [PowerWeight(1.5), StretchedExpWeight(beta=1.5, delta=2.0, alpha=0.5)])
def test_kernel_matches_reference_path(w):
    """First path of block 0 equals sample_stable_path + time_change on the same stream."""
    ts = np.array([0.02, 0.05, 0.1])
    ens = simulate_ensemble(0.0, FP, w, 1e12, ts, 1, 1e-3, seed=21)
    gen = block_generators(21, 1)[0]
    ref = time_change(sample_stable_path(0.0, 60.0, 1e-3, FP, rng=gen), w, ts)
    assert np.all(ref.horizon_ok)
    np.testing.assert_array_equal(ens.positions[0], ref.positions)


def test_ensemble_deterministic_and_worker_independent():
    kw = dict(x0=0.0, frac=FP, w=PowerWeight(1.5), box_half_width=10.05, t_points=[0.2, 0.5],
              n_paths=700, ds=1e-3, seed=99)
    a = simulate_ensemble(**kw)
    b = simulate_ensemble(**kw)
    c = simulate_ensemble(**kw, workers=3)
    for other in (b, c):
        np.testing.assert_array_equal(a.positions, other.positions)
        np.testing.assert_array_equal(a.alive, other.alive)


def test_kill_consistency():
    b = 2.05
    ens = simulate_ensemble(0.0, FP, PowerWeight(1.5), b, [0.1, 0.5, 1.0], 2000, 1e-3, seed=3)
    live = ens.alive
    assert np.all(np.abs(ens.positions[live]) <= b)
    assert np.all(np.isnan(ens.positions[~live]))
    # once dead, a path stays dead
    assert np.all(live[:, 1:] <= live[:, :-1])
    assert 0 < live[:, -1].mean() < 1
    np.testing.assert_array_equal(ens.killed, ~live[:, -1])


def test_ensemble_rejects_bad_input():
    with pytest.raises(ValueError):
        simulate_ensemble(5.0, FP, PowerWeight(1.0), 1.0, [0.1], 10, 1e-3, seed=0)
    with pytest.raises(ValueError):
        simulate_ensemble(0.0, FP, PowerWeight(1.0), 1.0, [0.2, 0.1], 10, 1e-3, seed=0)


# ---------------------------------------------------------------- histograms vs spectrum


@pytest.fixture(scope="module")
def small_model():
    g = build_grid(GridSpec(1, 20.0, 401))
    op = assemble_form(g, FP, PowerWeight(1.5))
    return g, op, solve_spectrum(op)


def test_cell_edges(small_model):
    g, _, _ = small_model
    e = default_cell_edges(g.R, g.box_half_width)
    assert e[0] == -g.box_half_width and e[-1] == g.box_half_width
    assert np.all(np.diff(e) > 0)
    s = snap_edges(e, g)
    k = (s[1:-1] - 0.5 * g.h) / g.h  # interior edges sit on node midpoints
    np.testing.assert_allclose(k, np.rint(k), atol=1e-9)


def test_short_time_mass_in_start_cell(small_model):
    g, *_ = small_model
    ens = simulate_ensemble(0.0, FP, PowerWeight(1.5), g.box_half_width, [1e-3], 5000, 1e-4, seed=4)
    edges = snap_edges(default_cell_edges(g.R, g.box_half_width), g)
    hist, _ = empirical_histogram(ens, 1e-3, edges)
    start = np.searchsorted(edges, 0.0, side="right") - 1
    assert np.argmax(hist) == start


def test_monte_carlo_matches_spectral_kernel(small_model):
    g, op, spec = small_model
    ens = simulate_ensemble(0.0, FP, PowerWeight(1.5), g.box_half_width, [0.5], 20_000, 1e-3, seed=7)
    cmp = empirical_compare(ens, spec, g, op.mu, g.origin_index, 0.5)
    assert cmp.tv <= 0.05
    assert cmp.survival_emp <= 1.0
    assert abs(cmp.survival_emp - cmp.survival_spec) <= 3 * cmp.survival_stderr
    assert cmp.survival_spec == pytest.approx(cmp.spectral.sum())


def test_compare_refuses_few_survivors(small_model):
    g, op, spec = small_model
    ens = simulate_ensemble(0.0, FP, PowerWeight(1.5), g.box_half_width, [0.5], 100, 1e-3, seed=8)
    with pytest.raises(InsufficientSamples):
        empirical_compare(ens, spec, g, op.mu, g.origin_index, 0.5)
    with pytest.raises(ValueError):
        empirical_compare(ens, spec, g, op.mu, g.origin_index + 1, 0.5, min_survivors=1)


def test_step_halving(small_model):
    g, *_ = small_model
    fine, coarse = simulate_coupled(0.0, FP, PowerWeight(1.5), g.box_half_width, [0.5], 20_000,
                                    2e-3, seed=9)
    assert fine.ds == pytest.approx(1e-3)
    edges = snap_edges(default_cell_edges(g.R, g.box_half_width), g)
    chk = step_halving_check(fine, coarse, 0.5, edges)
    assert chk.max_z <= 2.0
    assert abs(fine.alive[:, 0].mean() - coarse.alive[:, 0].mean()) < 0.01
