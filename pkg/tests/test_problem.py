import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from horizon_pmp.errors import InvalidInputError
from horizon_pmp.problem import (
    BoxControlSet,
    ControlProblem,
    ConvergentFunction,
    SemiInfiniteGrid,
    StateConstraint,
    clim_norms,
    jacobian_check,
    make_grid,
)


def test_log_grid_nodes():
    g = make_grid("log", 10)
    assert g.nodes[0] == 0.0
    assert g.nodes[5] == pytest.approx(math.log(2.0), abs=1e-15)
    assert g.size == 10 and g.includes_infinity
    assert np.isinf(g.times()[-1])


def test_rational_grid_nodes():
    assert make_grid("rational", 10).nodes[5] == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("N", [0, 7, 7.5])
def test_grid_rejects_small_N(N):
    with pytest.raises(InvalidInputError):
        make_grid("log", N)


def test_grid_rejects_unknown_map_and_bad_nodes():
    with pytest.raises(InvalidInputError):
        make_grid("cubic", 16)
    with pytest.raises(InvalidInputError):
        SemiInfiniteGrid(np.array([0.0, 1.0, 1.0]))
    with pytest.raises(InvalidInputError):
        SemiInfiniteGrid(np.array([0.5, 1.0]))


@given(st.integers(8, 400), st.sampled_from(["log", "rational"]))
def test_grid_monotone(N, name):
    g = make_grid(name, N)
    assert np.all(np.diff(g.nodes) > 0)
    # generator inverse lands back on the uniform s-grid
    s = g.time_map.inverse(g.nodes)
    assert np.allclose(s, np.arange(N) / N, atol=1e-12)


def test_with_nodes_inserts_breakpoints():
    g = make_grid("log", 16).with_nodes([0.3, 0.3, -1.0])
    assert g.index_of(0.3) is not None
    assert np.all(np.diff(g.nodes) > 0)


def test_norms_constant_and_decaying():
    g = make_grid("log", 64)
    one = ConvergentFunction.from_callable(g, lambda t: [1.0], [1.0])
    assert clim_norms(one) == pytest.approx((1.0, 1.0))
    dec = ConvergentFunction.from_callable(g, lambda t: [math.exp(-t)], [0.0])
    assert clim_norms(dec) == pytest.approx((1.0, 1.0))


def test_norm_ratio_three_witness():
    g = make_grid("log", 256)
    x = ConvergentFunction.from_callable(g, lambda t: [math.exp(-t) - 0.5], [-0.5])
    sup, split = clim_norms(x)
    assert sup == 0.5
    assert split == 1.5
    assert split / sup == 3.0


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1, 3),
    st.integers(0, 2**31 - 1),
    st.floats(0.05, 5.0),
)
def test_norm_equivalence(n, seed, rate):
    rng = np.random.default_rng(seed)
    g = make_grid("log", 32)
    a = rng.normal(size=n) * rng.choice([0.0, 1.0, 10.0])
    c = rng.normal(size=n) * rng.choice([0.1, 1.0, 10.0])
    w = rng.normal(size=n)
    x = ConvergentFunction.from_callable(g, lambda t: a + c * np.exp(-rate * t) * np.cos(w * t), a)
    sup, split = clim_norms(x)
    assert sup <= split * (1 + 1e-12)
    assert split <= 3 * sup * (1 + 1e-12)


def test_linear_interpolation_and_tail():
    g = make_grid("log", 16)
    x = ConvergentFunction(g, np.arange(16.0), [20.0])
    assert x(0.5 * (g.nodes[3] + g.nodes[4]))[0] == pytest.approx(3.5)
    assert x(math.inf)[0] == 20.0
    far = x(g.t_last + 40.0)[0]
    assert abs(far - 20.0) < 1e-12


@given(st.floats(0.05, 3.0), st.floats(-5, 5), st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3))
def test_exponential_interpolation_exact_for_exponentials(rate, a, c):
    g = make_grid("log", 24)
    vals = (a + c * np.exp(-rate * g.nodes))[:, None]
    x = ConvergentFunction(g, vals, [a], interpolation="exponential")
    for t in (0.13, 0.77, 1.9, g.t_last + 3.0, g.t_last + 30.0):
        assert x(t)[0] == pytest.approx(a + c * math.exp(-rate * t), abs=1e-9 * (1 + abs(c)))


def test_tail_tolerance_enforced():
    g = make_grid("log", 16)
    with pytest.raises(InvalidInputError):
        ConvergentFunction(g, np.ones(16), [0.0], tail_tol=1e-3)
    with pytest.raises(InvalidInputError):
        ConvergentFunction(g, np.ones(15), [1.0])


def _toy_problem(wrong=False):
    def f(t, x, u):
        return math.exp(-t) * (x[0] ** 2 + math.sin(x[1]) + u[0] ** 2)

    def f_x(t, x, u):
        d = np.array([2 * x[0], math.cos(x[1])]) * math.exp(-t)
        return d * (1.5 if wrong else 1.0)

    def phi(t, x, u):
        return np.array([x[1] * u[0], -x[0] + math.exp(-t) * x[1] ** 3])

    def phi_x(t, x, u):
        return np.array([[0.0, u[0]], [-1.0, 3 * math.exp(-t) * x[1] ** 2]])

    g = StateConstraint(lambda t, x: x[0] * x[1] - 1.0, lambda t, x: np.array([x[1], x[0]]), "g")
    return ControlProblem(
        state_dim=2, control_dim=1, f=f, f_x=f_x, phi=phi, phi_x=phi_x,
        omega=lambda t: math.exp(-t), omega_l1=1.0,
        control_set=BoxControlSet([-1.0], [1.0]), constraints=(g,),
    )


def test_jacobian_check_passes_and_catches_error():
    ok = jacobian_check(_toy_problem(), n_points=100)
    assert ok.passed, ok.worst
    bad = jacobian_check(_toy_problem(wrong=True), n_points=20)
    assert not bad.passed
    assert bad.worst.startswith("f_x")
