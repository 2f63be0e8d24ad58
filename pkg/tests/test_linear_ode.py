import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from horizon_pmp.errors import NonSummableSystemError
from horizon_pmp.linear_ode import (
    LinearSystem,
    fundamental_matrices,
    integrate_ivp,
    picard_solve,
    summability_certificate,
)
from horizon_pmp.problem import ConvergentFunction, make_grid

from conftest import const_fn


def test_ivp_trivial_and_exponential():
    g = make_grid("log", 32)
    flat = integrate_ivp(lambda t, x: 0 * x, [1.0], g)
    assert np.allclose(flat.values, 1.0)
    e = integrate_ivp(lambda t, x: x, [1.0], [0.0, 1.0])
    assert e(1.0)[0] == pytest.approx(math.e, abs=1e-8)


def test_ivp_bang_bang_switch():
    tau = 2 * math.log(1.25)
    u = lambda t: 1.0 if t < tau else 0.0
    path = integrate_ivp(lambda t, x: u(t) * x, [1.0], [0.0, 5.0], breakpoints=[tau], rtol=1e-12, atol=1e-14)
    assert path(5.0)[0] == pytest.approx(math.exp(tau), rel=1e-9)


def test_picard_identity_shift(grid64):
    sys = LinearSystem(lambda t: np.zeros((2, 2)), lambda t: np.zeros(2), 2)
    v = np.array([1.5, -2.0])
    for tau in (0.0, math.inf):
        res = picard_solve(sys, const_fn(grid64, v), tau, grid64)
        assert np.allclose(res.solution.values, v)
        assert np.allclose(res.solution.limit, v)


def test_picard_scalar_closed_form(grid64):
    sys = LinearSystem(lambda t: np.array([[math.exp(-t)]]), lambda t: np.zeros(1), 1)
    res = picard_solve(sys, const_fn(grid64, 1.0), 0.0, grid64)
    exact = np.exp(1 - np.exp(-grid64.nodes))
    assert np.max(np.abs(res.solution.values[:, 0] - exact)) < 1e-9
    assert res.solution.limit[0] == pytest.approx(math.e, abs=1e-9)


def test_picard_zero_at_infinity(grid64):
    sys = LinearSystem(lambda t: np.array([[math.exp(-t)]]), lambda t: np.zeros(1), 1)
    res = picard_solve(sys, const_fn(grid64, 0.0), math.inf, grid64)
    assert np.max(np.abs(res.solution.values)) < 1e-14


def _random_system(rng, n):
    M = rng.normal(scale=0.6, size=(n, n))
    b = rng.normal(size=n)
    c, d = rng.uniform(0.5, 2.0, size=2)
    return LinearSystem(lambda t: M * math.exp(-c * t), lambda t: b * math.exp(-d * t), n)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 3))
def test_picard_matches_integrator(seed, n):
    rng = np.random.default_rng(seed)
    sys = _random_system(rng, n)
    v = rng.normal(size=n)
    grid = make_grid("log", 32)
    res = picard_solve(sys, const_fn(grid, v), 0.0, grid)
    ref = integrate_ivp(sys.rhs, v, grid, t_end=res.horizon, rtol=1e-11, atol=1e-13)
    assert np.max(np.abs(res.solution.values - ref.values)) < 1e-7
    assert np.max(np.abs(res.solution.limit - ref(res.horizon))) < 1e-7
    # Weissinger: differences are dominated by c0^m/m! times the first one
    for d, bound in zip(res.diffs, res.bounds):
        assert d <= bound * (1 + 1e-9) + 1e-13


def test_picard_rejects_non_summable(grid64):
    sys = LinearSystem(lambda t: np.array([[1.0 / (1.0 + t)]]), lambda t: np.zeros(1), 1)
    with pytest.raises(NonSummableSystemError):
        picard_solve(sys, const_fn(grid64, 1.0), 0.0, grid64)


@pytest.mark.parametrize("rule", ["adaptive", "gauss"])
def test_certificates(rule):
    ok = summability_certificate(lambda t: math.exp(-t), rule=rule)
    assert ok.summable and ok.integral == pytest.approx(1.0, abs=1e-9)
    slow = summability_certificate(lambda t: 1.0 / (1.0 + t) ** 2, rule=rule)
    assert slow.summable and slow.integral + slow.tail_estimate == pytest.approx(1.0, abs=2e-3)
    bad = summability_certificate(lambda t: 1.0 / (1.0 + t), rule=rule)
    assert not bad.summable and math.isinf(bad.tail_estimate)


def test_fundamental_identity(grid64):
    fm = fundamental_matrices(lambda t: np.zeros((2, 2)), grid64)
    for t in (0.0, 1.0, 4.0, math.inf):
        assert np.allclose(fm.Y(t), np.eye(2)) and np.allclose(fm.Z(t), np.eye(2))


def test_fundamental_scalar_closed_form(grid64):
    fm = fundamental_matrices(lambda t: np.array([[-math.exp(-t)]]), grid64)
    for t in grid64.nodes[::7]:
        assert fm.Y(t)[0, 0] == pytest.approx(math.exp(math.exp(-t) - 1), abs=1e-10)
        assert fm.Z(t)[0, 0] == pytest.approx(math.exp(1 - math.exp(-t)), abs=1e-10)
    assert fm.Y(math.inf)[0, 0] == pytest.approx(math.exp(-1), abs=1e-9)
    assert fm.duality_error(grid64.nodes) < 1e-8


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_fundamental_duality_random(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(3, 3))
    grid = make_grid("log", 32)
    fm = fundamental_matrices(lambda t: M * math.exp(-2 * t), grid)
    assert fm.duality_error(grid.nodes) < 1e-8


def test_fundamental_rejects_non_summable(grid64):
    with pytest.raises(NonSummableSystemError):
        fundamental_matrices(lambda t: np.array([[1.0]]), grid64)
    fm = fundamental_matrices(lambda t: np.array([[1.0]]), grid64, require_summable=False)
    assert fm.Y_limit is None
