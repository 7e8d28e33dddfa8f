import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.linalg import expm
from scipy.special import gamma

from fracheat.core import (ConfigError, FracParams, GridSpec, PowerWeight, StretchedExpWeight,
                           TableWeight, build_grid, normalization_constant)
from fracheat.operator import (DUMP_MAGIC, assemble_form, dirichlet_energy, exterior_killing_1d,
                               exterior_killing_2d, heat_apply, load_operator, save_operator)
from fracheat.spectral import solve_spectrum

ALPHA = 0.5


def _op(d=1, R=20.0, n=201, beta=1.5, alpha=ALPHA):
    g = build_grid(GridSpec(d, R, n))
    return assemble_form(g, FracParams(alpha, d), PowerWeight(beta))


@pytest.fixture(scope="module")
def small_op():
    return _op()


@pytest.fixture(scope="module")
def small_spec(small_op):
    return solve_spectrum(small_op)


def test_three_node_hand_matrix():
    op = _op(R=1.0, n=3)
    c = normalization_constant(ALPHA, 1)
    b = 1.5  # R + h/2
    x = np.array([-1.0, 0.0, 1.0])
    kill = (c / ALPHA) * ((b - x) ** -ALPHA + (b + x) ** -ALPHA)
    off = {1: -c, 2: -c * 2.0 ** -1.5}
    Q = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            if i != j:
                Q[i, j] = off[abs(i - j)]
        Q[i, i] = -sum(Q[i, j] for j in range(3) if j != i) + kill[i]
    np.testing.assert_allclose(op.Q, Q, rtol=0, atol=1e-12)
    np.testing.assert_allclose(op.kill, kill, rtol=1e-14)


def test_kill_1d_closed_form_vs_quadrature():
    c, b = normalization_constant(ALPHA, 1), 3.0
    for x in (-2.5, 0.0, 1.2):
        ref = sum(integrate.quad(lambda y: c * abs(x - y) ** (-1 - ALPHA), lo, hi)[0]
                  for lo, hi in ((b, np.inf), (-np.inf, -b)))
        assert exterior_killing_1d(np.array([x]), b, c, ALPHA)[0] == pytest.approx(ref, rel=1e-9)


def _kill_2d_cartesian(x1, x2, b, c, alpha):
    """Exterior integral split into two full strips and two finite strips."""
    # full strip {y1 > b} integrated in y2 analytically: int_R (u^2+v^2)^{-1-a/2} dv
    k = math.sqrt(math.pi) * gamma((1 + alpha) / 2) / gamma(1 + alpha / 2)
    full = k * ((b - x1) ** -alpha + (b + x1) ** -alpha) / alpha
    f = lambda v, u: (u * u + v * v) ** (-1 - alpha / 2)  # noqa: E731
    caps = 0.0
    for lo in (b - x2, b + x2):
        caps += integrate.dblquad(f, -b - x1, b - x1, lo, np.inf, epsabs=0, epsrel=1e-10)[0]
    return c * (full + caps)


@pytest.mark.parametrize("pt", [(0.0, 0.0), (0.7, -0.2), (-1.5, 1.1), (1.8, 1.8)])
def test_kill_2d_cartesian_oracle(pt):
    c, b, a = normalization_constant(1.0, 2), 2.0, 1.0
    got = exterior_killing_2d(np.array([pt]), b, c, a, epsrel=1e-10)[0]
    assert got == pytest.approx(_kill_2d_cartesian(*pt, b, c, a), rel=1e-7)


def test_kill_2d_symmetry_dedup():
    g = build_grid(GridSpec(2, 2.0, 5))
    op = assemble_form(g, FracParams(1.0, 2), PowerWeight(2.0))
    key = {}
    for i, (a, b) in enumerate(np.abs(g.x)):
        key.setdefault(tuple(sorted((a, b))), []).append(op.kill[i])
    for vals in key.values():
        np.testing.assert_allclose(vals, vals[0], rtol=1e-14)


@pytest.mark.parametrize("d,R,n", [(1, 20.0, 201), (2, 3.0, 7)])
def test_structural_invariants(d, R, n):
    op = _op(d=d, R=R, n=n, alpha=0.5 if d == 1 else 1.0)
    assert np.array_equal(op.Q, op.Q.T)
    off = op.Q[~np.eye(op.n, dtype=bool)]
    assert np.all(off <= 0)
    np.testing.assert_allclose(op.graph_part().sum(axis=1), 0.0, atol=1e-12 * np.abs(op.Q).max())
    assert np.all(op.kill > 0)
    assert np.linalg.eigvalsh(op.S)[0] > 0


def test_constant_has_only_killing_energy(small_op):
    f = np.full(small_op.n, 1.7)
    G = small_op.graph_part()
    assert abs(f @ G @ f) <= 1e-10 * (f @ small_op.Q @ f)
    ref = np.sum(f ** 2 * small_op.cell_volume * small_op.kill)
    assert dirichlet_energy(small_op, f) == pytest.approx(ref, rel=1e-10)


def test_energy_basics(small_op):
    assert dirichlet_energy(small_op, np.zeros(small_op.n)) == 0.0
    e = np.zeros(small_op.n)
    e[37] = 1.0
    assert dirichlet_energy(small_op, e) == small_op.Q[37, 37]
    with pytest.raises(ValueError):
        dirichlet_energy(small_op, np.zeros(small_op.n + 1))


def test_energy_double_sum_oracle(small_op):
    x = small_op.grid.x[:, 0]
    h, c = small_op.grid.h, small_op.frac.c_norm
    f = np.exp(-x ** 2 / 8.0)
    graph = 0.0
    for i in range(x.size):
        dx = np.abs(x[i] - x)
        dx[i] = np.inf
        graph += 0.5 * np.sum(c * h * h * (f[i] - f) ** 2 * dx ** (-1 - ALPHA))
    ref = graph + np.sum(h * small_op.kill * f ** 2)
    assert dirichlet_energy(small_op, f) == pytest.approx(ref, rel=1e-10)


def test_energy_refinement_cauchy():
    energies = []
    for n in (161, 321, 641):
        op = _op(R=8.0, n=n)
        x = op.grid.x[:, 0]
        energies.append(dirichlet_energy(op, np.exp(-x ** 2)))
    rel = abs(energies[-1] - energies[-2]) / energies[-1]
    assert rel <= 0.02
    assert abs(energies[-1] - energies[-2]) < abs(energies[-2] - energies[-3])


def test_assemble_rejects_bad_input():
    g = build_grid(GridSpec(1, 1.0, 3))
    with pytest.raises(ConfigError):
        assemble_form(g, FracParams(0.5, 2), PowerWeight(1.0))


def test_heat_identity_and_eigen_relation(small_op, small_spec):
    f = np.linspace(-1, 1, small_op.n)
    np.testing.assert_array_equal(heat_apply(small_op, f, 0.0, small_spec), f)
    phi1, lam1 = small_spec.phis[:, 0], small_spec.lambdas[0]
    np.testing.assert_allclose(heat_apply(small_op, phi1, 0.7, small_spec),
                               np.exp(-lam1 * 0.7) * phi1, atol=1e-10 * np.abs(phi1).max())
    with pytest.raises(ValueError):
        heat_apply(small_op, f, -1.0, small_spec)


def test_heat_matches_matrix_exponential(small_op, small_spec):
    f = np.ones(small_op.n)
    ref = expm(0.5 * small_op.generator()) @ f
    got = heat_apply(small_op, f, 0.5, small_spec)
    assert np.max(np.abs(got - ref)) <= 1e-8


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 20.0))
def test_semigroup_mu_symmetric(small_op, small_spec, seed, t):
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal((2, small_op.n))
    mu = small_op.mu
    lhs = np.dot(heat_apply(small_op, f, t, small_spec) * mu, g)
    rhs = np.dot(f * mu, heat_apply(small_op, g, t, small_spec))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, np.sqrt(np.dot(f * f, mu) * np.dot(g * g, mu)))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 100.0))
def test_semigroup_sub_markov(small_op, small_spec, t):
    p = heat_apply(small_op, np.ones(small_op.n), t, small_spec)
    assert np.all(p >= -1e-10) and np.all(p <= 1 + 1e-10)


@pytest.mark.parametrize("w", [PowerWeight(1.5), StretchedExpWeight(beta=1.5, delta=2.0, alpha=0.5)])
def test_dump_round_trip(tmp_path, w):
    g = build_grid(GridSpec(1, 5.0, 21))
    op = assemble_form(g, FracParams(0.5, 1), w)
    path = tmp_path / "op.bin"
    save_operator(op, path)
    assert path.read_bytes()[:8] == DUMP_MAGIC
    back = load_operator(path)
    np.testing.assert_array_equal(back.Q, op.Q)
    np.testing.assert_array_equal(back.kill, op.kill)
    np.testing.assert_array_equal(back.mu, op.mu)
    assert back.weight == w
    np.testing.assert_array_equal(back.grid.x, g.x)


def test_dump_round_trip_table_weight(tmp_path):
    g = build_grid(GridSpec(1, 2.0, 5))
    op = assemble_form(g, FracParams(0.5, 1), TableWeight(g, np.array([3.0, 1.0, 1.0, 2.0, 5.0])))
    save_operator(op, tmp_path / "t.bin")
    back = load_operator(tmp_path / "t.bin")
    np.testing.assert_allclose(back.weight.values, [3.0, 1.0, 1.0, 2.0, 5.0], rtol=1e-15)


def test_dump_rejects_corruption(tmp_path):
    op = _op(R=1.0, n=3)
    path = tmp_path / "op.bin"
    save_operator(op, path)
    raw = path.read_bytes()
    (tmp_path / "bad.bin").write_bytes(b"NOTMAGIC" + raw[8:])
    with pytest.raises(ValueError):
        load_operator(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        load_operator(tmp_path / "short.bin")
