"""Generalized needle variations built from step functions.

For step functions y_1, ..., y_d on a compact K (a finite union of
intervals) the support is cut into r pieces Delta_i of equal measure at
most delta / (2C), C = max_i sup |y_i|.  Every cell of the common
refinement of the Delta_i and the pieces of the y_i is split into d
consecutive subcells, and M_i(alpha) collects the leading part of the
i-th subcell of measure alpha |cell|.  All sets are exact interval unions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidInputError, RadiusExceededError, UnsupportedInputError
from .intervals import IntervalUnion, StepFunction, as_fraction
from .problem import ControlPath


def _sqrt_upper(q: Fraction) -> Fraction:
    """A rational C with C^2 >= q (tight to float precision)."""
    if q <= 0:
        return Fraction(0)
    c = Fraction(math.sqrt(q))
    while c * c < q:
        c = c * (1 + Fraction(1, 2**40)) + Fraction(1, 2**60)
    return c


@dataclass
class NeedleFamily:
    K: IntervalUnion
    partition: list
    cells: list
    d: int
    delta: Fraction
    C: Fraction
    steps: tuple
    alphas: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def r(self) -> int:
        return len(self.partition)

    @property
    def Delta(self) -> Fraction:
        return Fraction(1, self.d)

    def M(self, i: int, alpha) -> IntervalUnion:
        """M_i(alpha) for direction i (0-based)."""
        if not 0 <= i < self.d:
            raise InvalidInputError(f"direction index {i} outside 0..{self.d - 1}")
        alpha = as_fraction(alpha)
        if alpha < 0 or alpha > Fraction(1, self.d):
            raise InvalidInputError(f"alpha={alpha} outside [0, 1/d]")
        key = (i, alpha)
        if key not in self._cache:
            parts = []
            for cell in self.cells:
                m = cell.measure()
                sub_start = cell.point_at_measure(m * i / self.d) if i else cell.inf
                sub = cell.difference(cell.clip(sub_start))
                parts.extend(sub.leading(alpha * m).parts)
            self._cache[key] = IntervalUnion(parts)
        return self._cache[key]

    def sup_deviation_squared(self, i: int, alpha, alpha_prime) -> Fraction:
        """max_t |int_[0,t] (chi_M(a) - chi_M(a')) y_i - (a - a') int_[0,t] y_i|^2, exactly.

        The integrand is piecewise constant, so the vector function is
        piecewise linear and its norm peaks at a breakpoint.
        """
        alpha, alpha_prime = as_fraction(alpha), as_fraction(alpha_prime)
        y = self.steps[i]
        M_a, M_b = self.M(i, alpha), self.M(i, alpha_prime)
        diff_plus = M_a.difference(M_b)
        diff_minus = M_b.difference(M_a)
        knots = sorted(set(self.K.endpoints()) | set(diff_plus.endpoints()) | set(diff_minus.endpoints())
                       | set(y.breakpoints()))
        worst = Fraction(0)
        acc = [Fraction(0)] * y.dim
        prev = knots[0] if knots else Fraction(0)
        for t in knots:
            if t > prev:
                mid = (prev + t) / 2
                v = y.value(mid)
                w = (1 if diff_plus.contains(mid) else 0) - (1 if diff_minus.contains(mid) else 0)
                in_K = 1 if self.K.contains(mid) else 0
                coef = (w - (alpha - alpha_prime) * in_K) * (t - prev)
                acc = [a + coef * c for a, c in zip(acc, v)]
                prev = t
            worst = max(worst, sum(a * a for a in acc))
        return worst

    def to_dict(self) -> dict:
        out = {"K": self.K.to_list(), "r": self.r, "d": self.d, "delta": str(self.delta), "sets": []}
        for i in range(self.d):
            for a in self.alphas:
                out["sets"].append({"i": i, "alpha": str(a), "intervals": self.M(i, a).to_list()})
        return out


def build_variation_sets(
    y,
    delta,
    alphas: Sequence = (),
    K: Optional[IntervalUnion] = None,
    r: Optional[int] = None,
    check: bool = True,
) -> NeedleFamily:
    """Needle sets for one step function ``y`` or a list of them (one per direction).

    ``r`` may refine the subdivision but never coarsen it below the size
    the construction requires.  With ``check`` the sup bound is verified
    exactly for every pair alpha >= alpha' in ``alphas``.
    """
    steps = list(y) if isinstance(y, (list, tuple)) else [y]
    for s in steps:
        if not isinstance(s, StepFunction):
            raise UnsupportedInputError(
                "only step functions are supported; use step_approximation for other inputs"
            )
    d = len(steps)
    delta = as_fraction(delta)
    if delta <= 0:
        raise InvalidInputError("delta must be positive")
    if K is None:
        K = steps[0].support
        for s in steps[1:]:
            K = K.union(s.support)
    if K.is_empty():
        raise InvalidInputError("K must have positive measure")
    alphas = tuple(as_fraction(a) for a in alphas)
    for a in alphas:
        if a < 0 or a > Fraction(1, d):
            raise InvalidInputError(f"alpha={a} outside [0, 1/d]")

    C = _sqrt_upper(max(s.sup_norm_squared() for s in steps))
    size = K.measure()
    r_min = max(1, math.ceil(2 * C * size / delta)) if C > 0 else 1
    if r is None:
        r = r_min
    elif r < r_min:
        raise InvalidInputError(f"r={r} is coarser than the required {r_min}")

    cuts = [K.inf] + [K.point_at_measure(size * k / r) for k in range(1, r)] + [K.sup]
    partition = [K.intersection(IntervalUnion([(a, b)])) for a, b in zip(cuts[:-1], cuts[1:])]
    knots = sorted({e for s in steps for e in s.breakpoints()})
    cells = []
    for piece in partition:
        inner = [k for k in knots if piece.inf < k < piece.sup]
        edges = [piece.inf, *inner, piece.sup]
        for a, b in zip(edges[:-1], edges[1:]):
            cell = piece.intersection(IntervalUnion([(a, b)]))
            if not cell.is_empty():
                cells.append(cell)
    family = NeedleFamily(K, partition, cells, d, delta, C, tuple(steps), alphas)
    if check:
        for i in range(d):
            for a in alphas:
                for b in alphas:
                    if b <= a:
                        bound = (delta * (a - b)) ** 2
                        if family.sup_deviation_squared(i, a, b) > bound:
                            raise AssertionError(f"sup bound violated for direction {i}, alpha {a} vs {b}")
    return family


def needle_control(u_star, directions: Sequence, family: NeedleFamily, alpha) -> Callable:
    """u_alpha = u* + sum_i chi_{M_i(alpha_i)} (u_i - u*).

    Returns a :class:`ControlPath` when ``u_star`` is one, otherwise a callable.
    """
    if not isinstance(alpha, (list, tuple)):
        alpha = list(np.atleast_1d(alpha))
    alpha = [as_fraction(a) for a in alpha]
    if len(alpha) != family.d or len(directions) != family.d:
        raise InvalidInputError("alpha, directions and the family must share the dimension d")
    sets = [family.M(i, a) for i, a in enumerate(alpha)]
    # float copies for fast membership tests
    fsets = [s.to_float_list() for s in sets]

    def member(k, t):
        return any(a <= t < b for a, b in fsets[k])

    def u_alpha(t):
        for k in range(family.d):
            if member(k, t):
                return np.atleast_1d(np.asarray(directions[k](t), dtype=float))
        return np.atleast_1d(np.asarray(u_star(t), dtype=float))

    if isinstance(u_star, ControlPath):
        switches = set(u_star.switch_times)
        for s in sets:
            switches |= {float(e) for e in s.endpoints()}
        return ControlPath.from_callable(u_star.grid, u_alpha, u_star.limit, sorted(switches))
    return u_alpha


def _mesh(family, t_end, extra=()):
    pts = {0.0, float(t_end)}
    for i in range(family.d):
        pts |= {float(e) for e in family.K.endpoints()}
    pts |= {float(e) for e in extra}
    return np.array(sorted(p for p in pts if 0 <= p <= t_end))


def variation_gap_check(
    problem,
    process,
    family: NeedleFamily,
    directions: Sequence,
    alpha,
    alpha_prime,
    x=None,
    x_prime=None,
    gamma: Optional[float] = None,
    order: int = 8,
    refine: int = 4,
) -> dict:
    """Empirical constants in the linearisation bounds of the needle variation.

    ``x`` and ``x_prime`` default to the reference state.  Returns the
    trajectory gap (sup over t of the mismatch Phi_1 - Lambda_1 between
    the two points) and the cost gap Phi_2 - Lambda_2 at ``alpha``, each
    with the constant obtained by dividing through the bound's scale.
    """
    gamma = problem.gamma if gamma is None else gamma
    x_star = process.x
    x = x_star if x is None else x
    x_prime = x_star if x_prime is None else x_prime
    a = np.array([float(as_fraction(v)) for v in alpha])
    b = np.array([float(as_fraction(v)) for v in alpha_prime])
    u_star = process.u
    u_a = needle_control(u_star, directions, family, list(alpha))
    u_b = needle_control(u_star, directions, family, list(alpha_prime))

    t_end = max(float(family.K.sup), process.grid.t_last)
    knots = set(_mesh(family, t_end))
    for i in range(family.d):
        for s in (family.M(i, alpha[i]), family.M(i, alpha_prime[i])):
            knots |= {float(e) for e in s.endpoints()}
    knots |= {float(t) for t in process.breakpoints if t <= t_end}
    knots = np.array(sorted(knots))
    # subdivide long stretches so smooth parts are resolved
    fine = [knots[0]]
    for lo, hi in zip(knots[:-1], knots[1:]):
        k = max(1, int(math.ceil((hi - lo) / 0.05)))
        fine.extend(np.linspace(lo, hi, k + 1)[1:])
    knots = np.array(fine)

    for t in process.grid.nodes:
        for name, z in (("x", x), ("x'", x_prime)):
            if np.linalg.norm(z(t) - x_star(t)) > gamma:
                raise RadiusExceededError(f"{name} leaves the gamma-tube at t={t:.4g}")

    xi, w = np.polynomial.legendre.leggauss(order)
    n = problem.n

    def traj_integrand(t):
        xs, us = x_star(t), u_star(t)
        xa, xb = x(t), x_prime(t)
        g = problem.phi_val(t, xa, u_a(t)) - problem.phi_val(t, xb, u_b(t))
        g = g - problem.phix_val(t, xs, us) @ (xa - xb)
        base = problem.phi_val(t, xs, us)
        for i, ui in enumerate(directions):
            g = g - (a[i] - b[i]) * (problem.phi_val(t, xs, np.atleast_1d(ui(t))) - base)
        return g

    def cost_integrand(t):
        us = u_star(t)
        xa = x(t)
        fa = problem.f_val(t, xa, u_a(t)) - problem.f_val(t, xa, us)
        lin = sum(a[i] * (problem.f_val(t, xa, np.atleast_1d(ui(t))) - problem.f_val(t, xa, us))
                  for i, ui in enumerate(directions))
        return problem.omega(t) * (fa - lin)

    acc = np.zeros(n)
    worst = 0.0
    cost = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        half = 0.5 * (hi - lo)
        ts = lo + half * (xi + 1.0)
        acc = acc + half * sum(wk * traj_integrand(t) for t, wk in zip(ts, w))
        cost += half * sum(wk * cost_integrand(t) for t, wk in zip(ts, w))
        worst = max(worst, float(np.linalg.norm(acc)))
    dx = max(float(np.linalg.norm(x(t) - x_prime(t))) for t in process.grid.nodes)
    scale1 = dx + float(np.sum(np.abs(a - b)))
    scale2 = float(np.sum(a))
    return {
        "trajectory_gap": worst,
        "trajectory_constant": worst / scale1 if scale1 > 0 else 0.0,
        "cost_gap": cost,
        "cost_constant": cost / scale2 if scale2 > 0 else 0.0,
        "delta": float(family.delta),
        "r": family.r,
    }
