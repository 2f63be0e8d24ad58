from fractions import Fraction

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from horizon_pmp.errors import InvalidInputError, UnsupportedInputError
from horizon_pmp.intervals import IntervalUnion, StepFunction, step_approximation
from horizon_pmp.needle import build_variation_sets, needle_control

F = Fraction


def test_interval_union_algebra():
    a = IntervalUnion([(0, 1), (F(1, 2), 2), (3, 4)])
    assert a.parts == ((0, 2), (3, 4))
    assert a.measure() == 3
    b = IntervalUnion([(1, F(7, 2))])
    assert a.intersection(b).measure() == F(3, 2)
    assert a.difference(b).measure() == F(3, 2)
    assert a.union(b).measure() == 4
    assert a.point_at_measure(F(5, 2)) == F(7, 2)
    assert a.leading(F(5, 2)) == IntervalUnion([(0, 2), (3, F(7, 2))])


@st.composite
def step_functions(draw, d=1):
    n = draw(st.integers(1, 6))
    cuts = sorted(set(draw(st.lists(st.integers(0, 32), min_size=n + 1, max_size=n + 1, unique=True))))
    pieces = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if draw(st.booleans()) or not pieces:
            vals = [F(draw(st.integers(-8, 8)), draw(st.integers(2, 4))) for _ in range(d)]
            if all(v == 0 for v in vals):
                vals[0] = F(1)
            pieces.append((F(a, 8), F(b, 8), vals))
    return StepFunction(pieces)


@settings(max_examples=50, deadline=None)
@given(step_functions(), st.fractions(F(1, 5), F(1)), st.data())
def test_needle_identities_randomized(y, delta, data):
    d = data.draw(st.integers(1, 3))
    ys = [y] + [data.draw(step_functions()) for _ in range(d - 1)]
    alphas = sorted({F(k, 4 * d) for k in range(5)} | {data.draw(st.fractions(0, F(1, d)))})
    fam = build_variation_sets(ys, delta, alphas, K=ys[0].support)
    K = fam.K
    for i in range(d):
        for a in alphas:
            Mi = fam.M(i, a)
            assert Mi.measure() == a * K.measure()
            assert Mi.issubset(K)
            for b in alphas:
                if b <= a:
                    assert fam.M(i, b).issubset(Mi)
                    assert fam.sup_deviation_squared(i, a, b) <= (delta * (a - b)) ** 2
            for j in range(i + 1, d):
                assert Mi.isdisjoint(fam.M(j, F(1, d)))
    # subdivision never coarser than delta / (2C)
    assert all(p.measure() <= delta / (2 * fam.C) for p in fam.partition)


def test_unit_step_quarter():
    y = StepFunction([(0, 1, 1)])
    fam = build_variation_sets(y, F(1, 10), [F(1, 4)])
    M = fam.M(0, F(1, 4))
    assert M.measure() == F(1, 4)
    for piece in fam.partition:
        assert M.intersection(piece).measure() == piece.measure() / 4
        assert M.intersection(piece).inf == piece.inf
    assert fam.M(0, 0).is_empty()


def test_sign_change_bound():
    y = StepFunction([(0, F(1, 2), 1), (F(1, 2), 1, -1)])
    fam = build_variation_sets(y, F(1, 10), [F(1, 5), F(1, 10)])
    dev = fam.sup_deviation_squared(0, F(1, 5), F(1, 10))
    assert dev <= F(1, 100) ** 2


def test_bad_inputs():
    y = StepFunction([(0, 1, 1)])
    with pytest.raises(InvalidInputError):
        build_variation_sets(y, F(1, 10), [F(3, 2)])
    with pytest.raises(InvalidInputError):
        build_variation_sets([y, y], F(1, 10), [F(2, 3)])
    with pytest.raises(UnsupportedInputError):
        build_variation_sets(lambda t: 1.0, 0.1)
    with pytest.raises(InvalidInputError):
        build_variation_sets(y, F(1, 10), r=1)


def test_step_approximation():
    s = step_approximation(lambda t: t, 0, 1, 4)
    assert s.support.measure() == 1
    assert float(s.value(F(1, 3))[0]) == pytest.approx(0.375)


def test_needle_control_limits():
    y = StepFunction([(0, 2, 1)])
    fam = build_variation_sets(y, F(1, 2), [])
    u_star = lambda t: np.array([1.0])
    u1 = lambda t: np.array([-1.0])
    u0 = needle_control(u_star, [u1], fam, [0])
    full = needle_control(u_star, [u1], fam, [1])
    for t in np.linspace(0, 3, 31):
        assert u0(t)[0] == 1.0
        assert full(t)[0] == (-1.0 if t < 2 else 1.0)
    with pytest.raises(InvalidInputError):
        needle_control(u_star, [u1, u1], fam, [0])
    part = needle_control(u_star, [u1], fam, [F(1, 10)])
    ts = np.linspace(0, 2, 20001)[:-1]
    frac = np.mean([part(t)[0] < 0 for t in ts])
    assert frac == pytest.approx(0.1, abs=1e-3)
