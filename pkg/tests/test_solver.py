import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xsde.errors import ConfigError, DivergenceError, InfeasibleShiftError, InsufficientHistoryError
from xsde.grid import TimeGrid
from xsde.kernels import DelayKernel, HistoryFunction
from xsde.presets import HeatPreset, ou_problem
from xsde.solver import (
    ExpansionConfig,
    Problem,
    assemble_forcing,
    euler_maruyama,
    expand,
    residual,
    sample_brownian,
)
from xsde.spectral import contraction_ratio, dft_frequencies

DIRAC = DelayKernel.dirac()
A22 = np.array([[-3.0, 0.1], [0.1, -3.0]])


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


# problem and noise


def test_problem_validation():
    grid = TimeGrid(0.1, 10)
    with pytest.raises(ConfigError):
        Problem(np.eye(2), DIRAC, grid, sigma=np.eye(3))
    with pytest.raises(ConfigError):
        Problem(np.eye(2), DIRAC, grid, input=np.ones(3))
    with pytest.raises(ConfigError):
        Problem(np.eye(2), DIRAC, grid, input=[np.nan, 0.0])
    with pytest.raises(ConfigError):
        Problem(np.eye(2), DIRAC, grid, history=HistoryFunction.zeros(3, 0.1))
    with pytest.raises(InsufficientHistoryError):
        Problem(np.eye(1), DelayKernel.single_delay(0.3, 1.0), grid, history=HistoryFunction.zeros(1, 0.1, 3))


def test_problem_scalar_sigma_and_default_history():
    p = Problem(np.eye(3), DelayKernel.single_delay(0.3, 0.5), TimeGrid(0.1, 10), sigma=0.2)
    np.testing.assert_array_equal(p.sigma, 0.2 * np.eye(3))
    assert p.history.length == 5


def test_callable_input_sampled_at_midpoints():
    grid = TimeGrid(0.1, 4)
    p = Problem(np.eye(1), DIRAC, grid, input=lambda t: t[None, :])
    np.testing.assert_allclose(p.input_samples(offset=0.5)[0], [0.05, 0.15, 0.25, 0.35])


def test_brownian_reproducible():
    grid = TimeGrid(0.01, 100)
    a, b = sample_brownian(3, grid, 2), sample_brownian(3, grid, 2)
    np.testing.assert_array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, sample_brownian(4, grid, 2).increments)


def test_brownian_moments():
    dt, T = 1e-3, 100_000
    inc = sample_brownian(0, TimeGrid(dt, T), 1).increments[0]
    assert abs(inc.mean()) <= 5 * np.sqrt(dt / T)
    assert abs(inc.var() - dt) <= 5 * dt * np.sqrt(2 / T)


def test_brownian_coarsen():
    path = sample_brownian(1, TimeGrid(0.01, 100), 2)
    c = path.coarsen(4)
    assert c.dt == pytest.approx(0.04)
    np.testing.assert_allclose(c.increments.sum(axis=1), path.increments.sum(axis=1))
    with pytest.raises(ConfigError):
        path.coarsen(3)


# forcing


def test_forcing_zero():
    p = Problem(np.eye(2), DIRAC, TimeGrid(0.1, 10))
    f = assemble_forcing(p)
    assert not f.atomic.any() and not f.density.any() and not f.increments.any()


def test_forcing_dirac():
    grid = TimeGrid(0.1, 10)
    path = sample_brownian(0, grid, 2)
    hist = HistoryFunction(np.zeros((2, 0)), [1.0, 2.0], 0.1)
    p = Problem(A22, DIRAC, grid, sigma=0.5, input=[1.0, -1.0], history=hist)
    f = assemble_forcing(p, path)
    np.testing.assert_array_equal(f.atomic, [1.0, 2.0])
    np.testing.assert_array_equal(f.density, np.array([[1.0], [-1.0]]).repeat(10, axis=1))
    np.testing.assert_allclose(f.increments, 0.5 * path.increments)


def test_forcing_delay_history_window():
    grid = TimeGrid(0.1, 30)
    c = np.array([1.0, -2.0])
    p = Problem(A22, DelayKernel(atoms=((1.0, 1.0),)), grid, history=HistoryFunction.constant(c, 0.1, 10))
    f = assemble_forcing(p)
    np.testing.assert_allclose(f.density[:, :10], (A22 @ c)[:, None].repeat(10, axis=1))
    np.testing.assert_array_equal(f.density[:, 10:], 0.0)


# expansion


def test_ou_exact_and_higher_terms_vanish():
    p = ou_problem(a=2.0, x0=1.5, dt=1e-3, tau=2.0)
    sol = expand(p, ExpansionConfig(l=2.0))
    np.testing.assert_allclose(sol.samples[0], 1.5 * np.exp(-2.0 * p.grid.times), rtol=1e-12)
    assert all(n == 0 for n in sol.term_norms[1:])
    assert len(sol.term_norms) == sol.k_used + 1


def test_zero_forcing():
    p = Problem(A22, DIRAC, TimeGrid(0.01, 50))
    sol = expand(p, ExpansionConfig(l=3.0))
    assert sol.k_used == 0 and not sol.samples.any()


def test_two_by_two_against_fine_euler():
    tau = 2.0
    coarse = Problem(A22, DIRAC, TimeGrid.from_tau(tau, 1e-3), input=[1.0, 0.0])
    fine = Problem(A22, DIRAC, TimeGrid.from_tau(tau, 1e-5), input=[1.0, 0.0])
    sol = expand(coarse, ExpansionConfig(l=3.0))
    ref = euler_maruyama(fine).samples[:, ::100]
    assert rel(sol.samples, ref) <= 1e-2


def test_infeasible_shift_rejected():
    p = Problem(A22, DIRAC, TimeGrid(0.01, 50), input=[1.0, 0.0])
    with pytest.raises(InfeasibleShiftError) as err:
        expand(p, ExpansionConfig(l=0.5))
    assert err.value.report.lam >= 1


def test_divergence_detected():
    p = Problem(np.array([[3.0]]), DIRAC, TimeGrid(0.01, 200), input=[1.0])
    with pytest.raises(DivergenceError) as err:
        expand(p, ExpansionConfig(l=1.0, allow_infeasible=True, k_max=100))
    assert err.value.ratio > 1


def test_expansion_config_validation():
    with pytest.raises(ConfigError):
        ExpansionConfig(l=0.0)
    with pytest.raises(ConfigError):
        ExpansionConfig(l=1.0, k_max=-1)
    with pytest.raises(ConfigError):
        ExpansionConfig(l=1.0, v_rule="simpson")


def test_delay_problem_matches_euler():
    dt = 0.005
    g = DelayKernel(atoms=((1.0, 0.0), (0.3, 0.5)), exp_terms=((0.5, 2.0),))
    hist = HistoryFunction.constant([0.5, -0.2], dt, 200)
    inp = lambda t: np.vstack([np.cos(t), np.ones_like(t)])  # noqa: E731
    coarse = Problem(A22, g, TimeGrid.from_tau(2.0, dt), input=inp, history=hist)
    fine_dt = dt / 20
    fine = Problem(A22, g, TimeGrid.from_tau(2.0, fine_dt), input=inp,
                   history=HistoryFunction.constant([0.5, -0.2], fine_dt, 4000))
    sol = expand(coarse, ExpansionConfig(l=2.0, k_max=200, allow_infeasible=True))
    ref = euler_maruyama(fine).samples[:, ::20]
    assert np.abs(sol.samples - ref).max() <= 2 * dt


def test_trapezoid_rule_runs_and_agrees():
    p = Problem(A22, DelayKernel.single_delay(0.3, 0.2), TimeGrid(0.01, 200), input=[1.0, 0.5])
    a = expand(p, ExpansionConfig(l=3.0, allow_infeasible=True))
    b = expand(p, ExpansionConfig(l=3.0, allow_infeasible=True, v_rule="trapezoid"))
    assert rel(a.samples, b.samples) < 2e-2


def test_shift_invariance_up_to_discretization():
    p = Problem(A22, DIRAC, TimeGrid(1e-3, 2000), input=[1.0, 0.0])
    a = expand(p, ExpansionConfig(l=3.0)).samples
    b = expand(p, ExpansionConfig(l=2.5)).samples
    assert rel(a, b) < 5e-3


@given(st.integers(0, 10_000), st.floats(-2, 2))
def test_linear_in_forcing(seed, s):
    r = np.random.default_rng(seed)
    grid = TimeGrid(0.02, 64)
    g = DelayKernel(atoms=((1.0, 0.0), (0.2, 0.1)))
    i1, i2 = r.standard_normal((2, 2, grid.steps))
    h1, h2 = r.standard_normal((2, 2, 5))
    x1, x2 = r.standard_normal((2, 2))
    cfg = ExpansionConfig(l=3.0, allow_infeasible=True, term_tol=0, k_max=40)

    def solve(i, h, x):
        return expand(Problem(A22, g, grid, input=i, history=HistoryFunction(h, x, grid.dt)), cfg).samples

    lhs = solve(i1 + s * i2, h1 + s * h2, x1 + s * x2)
    rhs = solve(i1, h1, x1) + s * solve(i2, h2, x2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(rhs).max()))


@given(st.integers(0, 10_000))
def test_term_norms_decay_geometrically(seed):
    r = np.random.default_rng(seed)
    q, _ = np.linalg.qr(r.standard_normal((3, 3)))
    a = q @ np.diag(-r.uniform(1, 6, 3)) @ q.T
    grid = TimeGrid(0.01, 200)
    p = Problem(a, DIRAC, grid, input=r.standard_normal(3), sigma=0.3)
    l = 3.5
    lam = contraction_ratio(a, DIRAC, l, dft_frequencies(grid)).lam
    sol = expand(p, ExpansionConfig(l=l, term_tol=1e-12, k_max=200), sample_brownian(seed, grid, 3))
    n = np.array(sol.term_norms)
    ratios = n[2:] / n[1:-1]
    assert np.all(ratios <= lam + 0.1)
    # truncation tail bound
    full = sol.samples
    for K in (1, 3):
        part = expand(p, ExpansionConfig(l=l, term_tol=0, k_max=K), sample_brownian(seed, grid, 3)).samples
        err = np.sqrt(grid.dt) * np.linalg.norm(full - part)
        assert err <= n[K] * lam / (1 - lam) + 1e-12


def test_heat_large_step_bounded():
    heat = HeatPreset(n=20, dx=1.0)
    grid = TimeGrid(1.0, 100)
    p = heat.problem(grid)
    sol = expand(p, heat.expansion_config(), sample_brownian(0, grid, heat.n))
    assert np.all(np.isfinite(sol.samples)) and np.abs(sol.samples).max() < 50


# Euler-Maruyama and residual


def test_euler_ou():
    p = ou_problem(a=1.0, x0=1.0, dt=1e-5, tau=1.0 + 1e-5)
    x = euler_maruyama(p).samples[0]
    assert x[-1] == pytest.approx(np.exp(-1.0), abs=1e-4)


def test_euler_zero():
    p = Problem(A22, DelayKernel.single_delay(0.3, 0.1), TimeGrid(0.01, 100))
    assert not euler_maruyama(p).samples.any()


def test_euler_heat_cfl_divergence():
    heat = HeatPreset(n=100)
    grid = TimeGrid(1.0, 50)
    with pytest.raises(DivergenceError):
        euler_maruyama(heat.problem(grid), sample_brownian(0, grid, 100))


def test_residual_of_euler_is_zero():
    grid = TimeGrid(0.01, 300)
    g = DelayKernel(atoms=((1.0, 0.0), (0.3, 0.5)), exp_terms=((0.5, 2.0),))
    p = Problem(A22, g, grid, sigma=0.3, input=[1.0, 0.0], history=HistoryFunction.constant([1.0, 1.0], 0.01, 60))
    path = sample_brownian(2, grid, 2)
    assert residual(p, euler_maruyama(p, path), path) <= 1e-12


def test_residual_zero_problem():
    p = Problem(A22, DIRAC, TimeGrid(0.01, 10))
    assert residual(p, expand(p, ExpansionConfig(l=3.0))) == 0.0


def test_residual_exact_ou_is_taylor_remainder():
    # one-step defect exp(-dt) - 1 + dt = dt^2 / 2 + O(dt^3), i.e. O(dt) per unit time
    for dt in (1e-2, 5e-3, 1e-3):
        p = ou_problem(a=1.0, x0=1.0, dt=dt, tau=2.0)
        assert residual(p, expand(p, ExpansionConfig(l=1.0))) == pytest.approx(dt**2 / 2, rel=0.02)
