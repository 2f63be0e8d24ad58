"""Linear ODEs x' = A(t) x + a(t) on [0, inf] and the adaptive integrator.

Everything on the half-line is integrated in t.  Infinity is reached by
extending the horizon dyadically until the quantity of interest has
settled, and the horizon actually used is recorded alongside the result.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy import integrate

from .errors import (
    InvalidInputError,
    NoConvergenceError,
    NonSummableSystemError,
    StiffnessError,
)
from .problem import ConvergentFunction, ControlPath, Process, SemiInfiniteGrid

DECAY_FACTOR = 0.9
MAX_PICARD_ITER = 60


# ---------------------------------------------------------------------------
# adaptive integration
# ---------------------------------------------------------------------------


@dataclass
class IVPPath:
    """Dense solution assembled from segments split at breakpoints."""

    edges: np.ndarray
    segments: list
    times: np.ndarray
    values: np.ndarray

    @property
    def t_end(self) -> float:
        return float(self.edges[-1])

    def __call__(self, t: float) -> np.ndarray:
        if t < self.edges[0] or t > self.edges[-1] * (1 + 1e-14) + 1e-14:
            raise InvalidInputError(f"t={t} outside the integrated span")
        # right-continuous selection: a breakpoint belongs to the next segment
        k = int(np.searchsorted(self.edges, t, side="right")) - 1
        k = min(max(k, 0), len(self.segments) - 1)
        return self.segments[k](min(t, self.edges[-1]))

    def left(self, t: float) -> np.ndarray:
        """Left limit at t (differs from the value only at a breakpoint)."""
        k = int(np.searchsorted(self.edges, t, side="left")) - 1
        k = min(max(k, 0), len(self.segments) - 1)
        return self.segments[k](t)


def _segment_edges(t0, t1, breakpoints):
    inner = sorted(b for b in set(float(b) for b in breakpoints) if t0 < b < t1)
    return np.array([t0, *inner, t1], dtype=float)


def integrate_ivp(
    rhs: Callable,
    x0,
    grid,
    t_end: Optional[float] = None,
    breakpoints: Sequence[float] = (),
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> IVPPath:
    """Integrate x' = rhs(t, x) from t = 0 with an embedded Runge-Kutta pair.

    ``grid`` is a :class:`SemiInfiniteGrid` or an array of output times;
    the integration runs to ``t_end`` (default: the last output time) and
    restarts at every breakpoint so that switches are resolved exactly.
    """
    times = grid.nodes if isinstance(grid, SemiInfiniteGrid) else np.asarray(grid, dtype=float)
    times = np.asarray(times, dtype=float)
    if t_end is None:
        t_end = float(times[-1])
    y = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    edges = _segment_edges(float(times[0]), float(t_end), breakpoints)
    segments = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        sol = integrate.solve_ivp(
            rhs, (a, b), y, method="DOP853", rtol=rtol, atol=atol, dense_output=True
        )
        if sol.status != 0:
            if "step size" in sol.message.lower():
                raise StiffnessError(f"step size underflow on [{a:.6g}, {b:.6g}]: {sol.message}")
            raise StiffnessError(sol.message)
        if not np.all(np.isfinite(sol.y)):
            raise StiffnessError(f"solution blew up on [{a:.6g}, {b:.6g}]")
        segments.append(sol.sol)
        y = sol.y[:, -1].copy()
    path = IVPPath(edges, segments, times, np.empty((0, y.size)))
    inside = times[times <= edges[-1]]
    path.values = np.array([path(t) for t in inside])
    return path


def integrate_until_settled(
    rhs: Callable,
    y0,
    T0: float,
    settled: Callable[[np.ndarray, np.ndarray], bool],
    breakpoints: Sequence[float] = (),
    rtol: float = 1e-12,
    atol: float = 1e-14,
    max_horizon: float = 2e3,
) -> IVPPath:
    """Integrate on [0, T0], then extend the horizon by half until ``settled``.

    ``settled(y(T), y(1.5 T))`` decides when the tail is negligible; each
    extension only integrates the new block.
    """
    path = integrate_ivp(rhs, y0, [0.0], t_end=T0, breakpoints=breakpoints, rtol=rtol, atol=atol)
    T = T0
    while T < max_horizon:
        y_T = path(T)
        T_new = 1.5 * T
        ext = integrate_ivp(rhs, y_T, [T], t_end=T_new, breakpoints=breakpoints, rtol=rtol, atol=atol)
        path = IVPPath(
            np.concatenate([path.edges, ext.edges[1:]]), path.segments + ext.segments, path.times, path.values
        )
        T = T_new
        if settled(y_T, path(T)):
            break
    return path


# ---------------------------------------------------------------------------
# summability certificates
# ---------------------------------------------------------------------------


@dataclass
class SummabilityCertificate:
    """Dyadic tail test for int_0^inf g(t) dt with g >= 0.

    ``blocks[k]`` is the integral over [T_{k-1}, T_k] with T_k = T0 2^k;
    the integral is declared finite when the last ``window`` successive
    block ratios are all below ``decay``.
    """

    integral: float
    blocks: list
    ratios: list
    summable: bool
    horizon: float
    decay: float = DECAY_FACTOR

    @property
    def tail_estimate(self) -> float:
        if not self.summable or not self.blocks:
            return math.inf
        r = max(self.ratios[-1:] or [0.0])
        return self.blocks[-1] * r / (1 - r) if r < 1 else math.inf


def _quad(fun, a, b, points=()):
    pts = [p for p in points if a < p < b]
    with warnings.catch_warnings():
        # divergent integrands are expected here; the ratio test reports them
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(fun, a, b, points=pts or None, limit=400, epsabs=1e-15, epsrel=1e-11)
    return val


def _gauss_block(fun, a, b, points=(), pieces=4, order=10):
    """Composite Gauss-Legendre rule split at breakpoints (smooth integrands)."""
    xi, w = npleg.leggauss(order)
    cuts = np.unique([a, b, *[p for p in points if a < p < b]])
    # dense breakpoints already give the panels
    per_cell = pieces if len(cuts) - 1 < pieces else 1
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        sub = np.linspace(lo, hi, per_cell + 1)
        for c, d in zip(sub[:-1], sub[1:]):
            half = 0.5 * (d - c)
            total += half * sum(wk * fun(c + half * (xk + 1.0)) for xk, wk in zip(xi, w))
    return float(total)


def summability_certificate(
    norm_fn: Callable[[float], float],
    T0: float = 1.0,
    doublings: int = 12,
    decay: float = DECAY_FACTOR,
    breakpoints: Sequence[float] = (),
    window: int = 3,
    negligible: float = 1e-15,
    rule: str = "adaptive",
) -> SummabilityCertificate:
    """Dyadic blocks [T0 2^(k-1), T0 2^k] of int g; ``rule`` is adaptive or gauss."""
    edges = [0.0] + [T0 * 2.0**k for k in range(doublings + 1)]
    block = _quad if rule == "adaptive" else _gauss_block
    blocks = [block(norm_fn, a, b, breakpoints) for a, b in zip(edges[:-1], edges[1:])]
    total = float(sum(blocks))
    ratios = []
    for prev, cur in zip(blocks[:-1], blocks[1:]):
        if cur <= negligible * max(1.0, total):
            ratios.append(0.0)
        elif prev <= negligible * max(1.0, total):
            ratios.append(math.inf)
        else:
            ratios.append(cur / prev)
    summable = all(r < decay for r in ratios[-window:])
    return SummabilityCertificate(total, blocks, ratios, summable, edges[-1], decay)


# ---------------------------------------------------------------------------
# Picard iteration on Gauss-Legendre panels
# ---------------------------------------------------------------------------


@dataclass
class LinearSystem:
    """x' = A(t) x + a(t) with summable coefficients."""

    A: Callable
    a: Callable
    n: int
    breakpoints: tuple = ()
    _certs: Optional[tuple] = field(default=None, repr=False)

    def certificates(self) -> tuple:
        if self._certs is None:
            self._certs = (
                summability_certificate(lambda t: float(np.linalg.norm(self.A(t), 2)), breakpoints=self.breakpoints),
                summability_certificate(lambda t: float(np.linalg.norm(self.a(t))), breakpoints=self.breakpoints),
            )
        return self._certs

    def rhs(self, t, x):
        return np.asarray(self.A(t), dtype=float) @ x + np.asarray(self.a(t), dtype=float)


class _PanelRule:
    """Gauss-Legendre nodes with the cumulative integration matrix on [-1, 1]."""

    def __init__(self, order: int = 12):
        xi, w = npleg.leggauss(order)
        V = npleg.legvander(xi, order - 1)
        W = np.empty_like(V)
        for k in range(order):
            c = np.zeros(order)
            c[k] = 1.0
            W[:, k] = npleg.legval(xi, npleg.legint(c, lbnd=-1))
        self.xi, self.w = xi, w
        self.S = W @ np.linalg.inv(V)
        # barycentric weights for interpolation through the nodes
        diff = xi[:, None] - xi[None, :]
        np.fill_diagonal(diff, 1.0)
        self.bary = 1.0 / np.prod(diff, axis=1)

    def interpolate(self, values, xi_eval):
        d = xi_eval - self.xi
        hit = np.isclose(d, 0.0, atol=1e-15)
        if np.any(hit):
            return values[np.argmax(hit)]
        c = self.bary / d
        return (c @ values) / c.sum()


@dataclass
class PicardResult:
    solution: ConvergentFunction
    iterations: int
    diffs: list
    bounds: list
    c0: float
    horizon: float


def _picard_horizon(sys: LinearSystem, tol: float, cap: float = 200.0) -> float:
    """Smallest dyadic horizon beyond which the coefficient mass is below ``tol``."""
    T = 1.0
    f = lambda t: float(np.linalg.norm(sys.A(t), 2)) + float(np.linalg.norm(sys.a(t)))
    while T < cap:
        if _quad(f, T, 4 * T, sys.breakpoints) < tol:
            return T
        T *= 2.0
    return cap


def picard_solve(
    sys: LinearSystem,
    z: ConvergentFunction,
    tau: float,
    grid: SemiInfiniteGrid,
    tol: float = 1e-10,
    max_iter: int = MAX_PICARD_ITER,
    panel_width: float = 0.25,
    order: int = 12,
) -> PicardResult:
    """Fixed point of x = z + int_tau^t (A x + a) ds by successive substitution.

    The integral operator is discretised on panels of width ``panel_width``
    with ``order`` Gauss points each.  ``tau`` may be ``inf``.
    """
    cert_A, cert_a = sys.certificates()
    if not (cert_A.summable and cert_a.summable):
        which = "A" if not cert_A.summable else "a"
        raise NonSummableSystemError(f"coefficient {which} failed the tail test")
    c0 = cert_A.integral + cert_A.tail_estimate
    T = max(_picard_horizon(sys, 1e-3 * tol), grid.t_last)
    if np.isfinite(tau):
        if grid.index_of(tau) is None:
            raise InvalidInputError("tau must be a grid node or inf")
        T = max(T, tau)
    rule = _PanelRule(order)
    cuts = [0.0, T, *[b for b in sys.breakpoints if 0 < b < T]]
    if np.isfinite(tau):
        cuts.append(tau)
    cuts.extend(np.arange(0.0, T, panel_width))
    edges = np.unique(np.asarray(cuts, dtype=float))
    a_, b_ = edges[:-1], edges[1:]
    half = 0.5 * (b_ - a_)
    pts = (a_[:, None] + half[:, None] * (rule.xi[None, :] + 1.0))  # (P, q)
    P, q, n = pts.shape[0], order, sys.n

    A_pts = np.array([[np.asarray(sys.A(t), dtype=float).reshape(n, n) for t in row] for row in pts])
    a_pts = np.array([[np.asarray(sys.a(t), dtype=float).reshape(n) for t in row] for row in pts])
    z_pts = np.array([[z(t) for t in row] for row in pts])
    z_edges = np.array([z(t) for t in edges])
    z_inf = z.limit

    def cumulative(x_pts):
        g = np.einsum("pqij,pqj->pqi", A_pts, x_pts) + a_pts
        inner = np.einsum("ij,pjk->pik", rule.S, g) * half[:, None, None]
        panel = np.einsum("j,pjk->pk", rule.w, g) * half[:, None]
        starts = np.vstack([np.zeros((1, n)), np.cumsum(panel, axis=0)])  # value at each edge
        return starts[:-1, None, :] + inner, starts

    if np.isfinite(tau):
        k_tau = int(np.argmin(np.abs(edges - tau)))
    x_pts, x_edges = z_pts.copy(), z_edges.copy()
    diffs, bounds = [], []
    first = None
    for it in range(1, max_iter + 1):
        I_pts, I_edges = cumulative(x_pts)
        ref = I_edges[-1] if not np.isfinite(tau) else I_edges[k_tau]
        new_pts = z_pts + I_pts - ref
        new_edges = z_edges + I_edges - ref
        diff = max(float(np.max(np.abs(new_pts - x_pts))), float(np.max(np.abs(new_edges - x_edges))))
        if first is None:
            first = diff
        diffs.append(diff)
        bounds.append(c0 ** (it - 1) / math.factorial(it - 1) * first)
        x_pts, x_edges = new_pts, new_edges
        if diff < tol:
            break
    else:
        raise NoConvergenceError(f"Picard iteration did not settle in {max_iter} steps")

    I_pts, I_edges = cumulative(x_pts)
    limit = z_inf if not np.isfinite(tau) else z_inf + (I_edges[-1] - I_edges[k_tau])
    x_T = x_edges[-1]

    def fn(t):
        if t >= T:
            return x_T
        p = min(int(np.searchsorted(edges, t, side="right")) - 1, P - 1)
        xi = (t - a_[p]) / half[p] - 1.0
        return np.array([rule.interpolate(x_pts[p, :, i], xi) for i in range(n)])

    values = np.array([fn(t) for t in grid.nodes])
    sol = ConvergentFunction(grid, values, limit, fn=fn)
    return PicardResult(sol, it, diffs, bounds, c0, T)


# ---------------------------------------------------------------------------
# fundamental matrices
# ---------------------------------------------------------------------------


@dataclass
class FundamentalMatrices:
    """Y' = A Y and Z' = -A^T Z with Y(0) = Z(0) = I."""

    path: IVPPath
    n: int
    horizon: float
    Y_limit: Optional[np.ndarray]
    Z_limit: Optional[np.ndarray]
    certificate: Optional[SummabilityCertificate]

    def Y(self, t) -> np.ndarray:
        if np.isinf(t):
            return self.Y_limit
        return self.path(min(t, self.horizon))[: self.n * self.n].reshape(self.n, self.n)

    def Z(self, t) -> np.ndarray:
        if np.isinf(t):
            return self.Z_limit
        return self.path(min(t, self.horizon))[self.n * self.n :].reshape(self.n, self.n)

    def duality_error(self, times) -> float:
        eye = np.eye(self.n)
        return max(float(np.max(np.abs(self.Y(t).T @ self.Z(t) - eye))) for t in times)


def fundamental_matrices(
    phi_x: Callable[[float], np.ndarray],
    grid: SemiInfiniteGrid,
    breakpoints: Sequence[float] = (),
    require_summable: bool = True,
    horizon: Optional[float] = None,
    tol: float = 1e-12,
) -> FundamentalMatrices:
    """Fundamental matrices of the linearised system along a process.

    ``phi_x`` is the Jacobian already evaluated along the process.  With
    a summable Jacobian the horizon is doubled until Y and Z settle; the
    settled values are recorded as the limits.
    """
    n = np.asarray(phi_x(0.0)).shape[0]
    cert = summability_certificate(lambda t: float(np.linalg.norm(phi_x(t), 2)), breakpoints=breakpoints)
    if require_summable and not cert.summable:
        raise NonSummableSystemError("phi_x is not summable along the process")

    def rhs(t, w):
        A = np.asarray(phi_x(t), dtype=float)
        Y = w[: n * n].reshape(n, n)
        Z = w[n * n :].reshape(n, n)
        return np.concatenate([(A @ Y).ravel(), (-A.T @ Z).ravel()])

    w0 = np.concatenate([np.eye(n).ravel(), np.eye(n).ravel()])
    T = max(grid.t_last, 1.0) if horizon is None else float(horizon)
    path = integrate_ivp(rhs, w0, grid.nodes, t_end=T, breakpoints=breakpoints, rtol=1e-12, atol=1e-14)
    if cert.summable and horizon is None:
        while True:
            longer = integrate_ivp(rhs, w0, grid.nodes, t_end=2 * T, breakpoints=breakpoints, rtol=1e-12, atol=1e-14)
            settled = np.max(np.abs(longer(2 * T) - longer(T))) <= tol * (1 + np.max(np.abs(longer(2 * T))))
            path, T = longer, 2 * T
            if settled or T > 1e4:
                break
        end = path(T)
        Y_lim, Z_lim = end[: n * n].reshape(n, n), end[n * n :].reshape(n, n)
    else:
        Y_lim = Z_lim = None
    return FundamentalMatrices(path, n, T, Y_lim, Z_lim, cert)


# ---------------------------------------------------------------------------
# process simulation
# ---------------------------------------------------------------------------


def simulate_process(
    problem,
    x0,
    control: Callable[[float], np.ndarray],
    grid: SemiInfiniteGrid,
    switch_times: Sequence[float] = (),
    u_limit=None,
    tol: float = 1e-11,
    max_horizon: float = 1e3,
    label: str = "",
) -> Process:
    """State generated by a control law, extended until it has converged."""
    bps = sorted(set(float(s) for s in switch_times) | set(problem.breakpoints))

    def rhs(t, x):
        return problem.phi_val(t, x, control(t))

    T = max(grid.t_last, (bps[-1] if bps else 0.0) + 1.0)
    while True:
        path = integrate_ivp(rhs, x0, grid.nodes, t_end=2 * T, breakpoints=bps, rtol=1e-12, atol=1e-14)
        gap = float(np.max(np.abs(path(2 * T) - path(T))))
        T *= 2
        if gap <= tol * (1 + float(np.max(np.abs(path(T))))) or T >= max_horizon:
            break
    limit = path(T)

    def x_fn(t):
        return path(t) if t <= T else limit

    x = ConvergentFunction.from_callable(grid, x_fn, limit)
    if u_limit is None:
        u_limit = control(T)
    u = ControlPath.from_callable(grid, control, u_limit, switch_times)
    return Process(x, u, label, {"horizon": T, "tail_gap": gap})
