"""Adjoint functions, constraint measures and transversality at infinity.

The adjoint solves

    p' = -phi_x^T p + lambda0 omega f_x + sum_j lambda_j(t) g_jx

between the atoms s_n of the constraint measures, jumps by
sum_j beta_jn g_jx(s_n, x(s_n)) across them and is continuous from the
left.  With Y the fundamental matrix of y' = phi_x y, the quantity
w = Y^T p has w' = Y^T b, so

    p(t) = Y(t)^{-T} [ Y(inf)^T p(inf) - int_t^inf Y^T b ds
                       - sum_{s_n >= t} Y(s_n)^T J_n ],

which is how candidates are evaluated here.  For a free endpoint with no
measures this is the integral representation with Z = Y^{-T}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate as spint

from .errors import GridMismatchError, InvalidInputError, NonSummableSystemError
from .linear_ode import integrate_until_settled, summability_certificate
from .problem import ControlProblem, Process, SemiInfiniteGrid
from .report import ConditionEntry

NONTRIVIALITY_THRESHOLD = 1e-9


@dataclass(frozen=True)
class BorelMeasureExt:
    """Measure on [0, inf]: density + finitely many atoms + atom at infinity."""

    density: Optional[Callable[[float], float]] = None
    atoms: tuple = ()
    atom_at_infinity: float = 0.0
    density_support: tuple = (0.0, np.inf)
    support_tolerance: float = 1e-7

    def __post_init__(self):
        atoms = tuple(sorted((float(s), float(b)) for s, b in self.atoms))
        if any(b < 0 for _, b in atoms) or self.atom_at_infinity < 0:
            raise InvalidInputError("measure masses must be nonnegative")
        if any(not np.isfinite(s) or s < 0 for s, _ in atoms):
            raise InvalidInputError("finite atoms must sit in [0, inf)")
        object.__setattr__(self, "atoms", atoms)

    def density_at(self, t: float) -> float:
        if self.density is None:
            return 0.0
        lo, hi = self.density_support
        if t < lo or t > hi:
            return 0.0
        return float(self.density(t))

    @property
    def breakpoints(self) -> tuple:
        pts = [s for s, _ in self.atoms]
        pts += [b for b in self.density_support if np.isfinite(b) and b > 0]
        return tuple(pts)

    def density_mass(self) -> float:
        if self.density is None:
            return 0.0
        lo, hi = self.density_support
        val, _ = spint.quad(self.density_at, lo, hi, limit=400)
        return float(val)

    def total_mass(self) -> float:
        return self.density_mass() + sum(b for _, b in self.atoms) + float(self.atom_at_infinity)

    def to_dict(self) -> dict:
        return {
            "atoms": [list(a) for a in self.atoms],
            "atom_at_infinity": self.atom_at_infinity,
            "density_mass": self.density_mass(),
            "total_mass": self.total_mass(),
        }


@dataclass
class AdjointSolution:
    """Left-continuous adjoint with its multipliers.

    ``p(t)`` returns the value at t (the left limit at an atom) and
    ``p_right(t)`` the right limit.  ``horizon`` is the finite time at
    which the tail was declared settled.
    """

    grid: SemiInfiniteGrid
    n: int
    lambda0: float
    p_limit: np.ndarray
    measures: tuple = ()
    l0: Optional[np.ndarray] = None
    l1: Optional[np.ndarray] = None
    jumps: tuple = ()
    horizon: float = np.inf
    left_fn: Optional[Callable] = None
    right_fn: Optional[Callable] = None
    metadata: dict = field(default_factory=dict)

    def p(self, t: float) -> np.ndarray:
        if np.isinf(t):
            return np.asarray(self.p_limit, dtype=float)
        if self.left_fn is None:
            return np.zeros(self.n)
        return self.left_fn(t)

    def p_right(self, t: float) -> np.ndarray:
        if np.isinf(t) or self.right_fn is None:
            return self.p(t)
        return self.right_fn(t)

    @property
    def values(self) -> np.ndarray:
        return np.array([self.p(t) for t in self.grid.nodes])

    def sup_norm(self) -> float:
        vals = np.vstack([self.values, np.atleast_2d(self.p_limit)])
        return float(np.max(np.linalg.norm(vals, axis=1)))

    def total_variation(self) -> float:
        """Jump magnitudes plus the grid variation of the smooth part."""
        vals = self.values
        tv = float(np.sum(np.linalg.norm(np.diff(vals, axis=0), axis=1)))
        return tv + float(np.linalg.norm(vals[-1] - self.p_limit))

    @classmethod
    def zero(cls, grid: SemiInfiniteGrid, n: int, s0: int = 0, s1: int = 0) -> "AdjointSolution":
        return cls(grid, n, 0.0, np.zeros(n), (), np.zeros(s0), np.zeros(s1))


# ---------------------------------------------------------------------------
# solving for the adjoint
# ---------------------------------------------------------------------------


def _constraint_jacobians(problem, t, x):
    return [problem.gx_val(j, t, x) for j in range(problem.l)]


def limit_from_transversality(problem, process, l1=None, measures=(), t_eval=None) -> np.ndarray:
    """-h1_x^T l1 - sum_j g_jx mu_j({inf}), evaluated on the tail of the process."""
    n = problem.n
    x_inf = process.x.limit
    t = 1e6 if t_eval is None else t_eval
    out = np.zeros(n)
    if l1 is not None and problem.h1 is not None:
        out -= problem.h1x_val(t, x_inf).T @ np.asarray(l1, dtype=float)
    for j, mu in enumerate(measures):
        if mu.atom_at_infinity:
            out -= problem.gx_val(j, t, x_inf) * mu.atom_at_infinity
    return out


def solve_adjoint(
    problem: ControlProblem,
    process: Process,
    grid: Optional[SemiInfiniteGrid] = None,
    lambda0: float = 1.0,
    measures: Sequence[BorelMeasureExt] = (),
    l1=None,
    p_limit=None,
    l0=None,
    require_summable: bool = True,
    settle_tol: float = 1e-12,
    max_horizon: float = 2e3,
) -> AdjointSolution:
    """Adjoint of a supplied multiplier set (lambda0, l1, measures).

    ``p_limit`` defaults to the transversality value built from ``l1`` and
    the atoms at infinity.  When it is nonzero the fundamental matrix must
    converge, which requires a summable phi_x.
    """
    grid = process.grid if grid is None else grid
    n = problem.n
    measures = tuple(measures)
    if len(measures) not in (0, problem.l):
        raise InvalidInputError(f"expected {problem.l} measures, got {len(measures)}")
    if p_limit is None:
        p_limit = limit_from_transversality(problem, process, l1, measures)
    p_limit = np.asarray(p_limit, dtype=float).reshape(n)

    def A(t):
        return problem.phix_val(t, process.x(t), process.u(t))

    bps = set(process.breakpoints) | set(problem.breakpoints)
    for mu in measures:
        bps |= set(mu.breakpoints)
    bps = sorted(b for b in bps if b > 0)
    cert = summability_certificate(lambda t: float(np.linalg.norm(A(t), 2)), breakpoints=bps)
    if require_summable and not cert.summable:
        raise NonSummableSystemError("phi_x along the process failed the tail test")
    if np.any(p_limit != 0) and not cert.summable:
        raise NonSummableSystemError("a nonzero limit of p needs a convergent fundamental matrix")

    def b(t):
        x, u = process.x(t), process.u(t)
        out = lambda0 * problem.omega(t) * problem.fx_val(t, x, u)
        for j, mu in enumerate(measures):
            lam = mu.density_at(t)
            if lam:
                out = out + lam * problem.gx_val(j, t, x)
        return out

    def rhs(t, w):
        Y = w[: n * n].reshape(n, n)
        return np.concatenate([(A(t) @ Y).ravel(), Y.T @ b(t)])

    w0 = np.concatenate([np.eye(n).ravel(), np.zeros(n)])
    need_Y = bool(np.any(p_limit != 0))

    def settled(a_, b_):
        dC = np.max(np.abs(b_[n * n :] - a_[n * n :]))
        ok = dC <= settle_tol * (1 + np.max(np.abs(b_[n * n :])))
        if need_Y:
            dY = np.max(np.abs(b_[: n * n] - a_[: n * n]))
            ok = ok and dY <= settle_tol * (1 + np.max(np.abs(b_[: n * n])))
        return ok

    T0 = max(grid.t_last, (bps[-1] if bps else 0.0)) + 1.0
    path = integrate_until_settled(rhs, w0, T0, settled, bps, max_horizon=max_horizon)
    T = path.t_end
    end = path(T)
    Y_inf, C_inf = end[: n * n].reshape(n, n), end[n * n :]
    w_inf = Y_inf.T @ p_limit - C_inf

    # atoms at finite times and their jump vectors J_n = sum_j beta_jn g_jx
    atom_times = sorted({s for mu in measures for s, _ in mu.atoms})
    jumps = []
    for s in atom_times:
        x = process.x(s)
        J = np.zeros(n)
        for j, mu in enumerate(measures):
            for s_n, beta in mu.atoms:
                if s_n == s:
                    J += beta * problem.gx_val(j, s, x)
        Y_s = path(s)[: n * n].reshape(n, n)
        jumps.append((s, J, Y_s.T @ J))

    def _p(t, include_equal: bool):
        t_c = min(t, T)
        state = path(t_c)
        Y = state[: n * n].reshape(n, n)
        w = w_inf + state[n * n :]
        for s, _, YJ in jumps:
            if s > t or (include_equal and s == t):
                w = w - YJ
        return np.linalg.solve(Y.T, w)

    left = lambda t: _p(t, True)
    right = lambda t: _p(t, False)
    return AdjointSolution(
        grid=grid,
        n=n,
        lambda0=float(lambda0),
        p_limit=p_limit,
        measures=measures,
        l0=None if l0 is None else np.asarray(l0, dtype=float),
        l1=None if l1 is None else np.atleast_1d(np.asarray(l1, dtype=float)),
        jumps=tuple((s, J) for s, J, _ in jumps),
        horizon=T,
        left_fn=left,
        right_fn=right,
        metadata={"phi_x_summable": cert.summable, "phi_x_l1": cert.integral},
    )


def adjoint_free_endpoint(
    problem: ControlProblem,
    process: Process,
    grid: Optional[SemiInfiniteGrid] = None,
    require_summable: bool = True,
) -> AdjointSolution:
    """Normal-form adjoint of a free-endpoint problem: lambda0 = 1, p(inf) = 0."""
    if problem.endpoint_kind != "free":
        raise InvalidInputError("the integral representation needs a free right endpoint")
    return solve_adjoint(
        problem, process, grid, lambda0=1.0, p_limit=np.zeros(problem.n), require_summable=require_summable
    )


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------


def _adjoint_rhs(problem, adj, process, t, p):
    x, u = process.x(t), process.u(t)
    out = -problem.phix_val(t, x, u).T @ p + adj.lambda0 * problem.omega(t) * problem.fx_val(t, x, u)
    for j, mu in enumerate(adj.measures):
        lam = mu.density_at(t)
        if lam:
            out = out + lam * problem.gx_val(j, t, x)
    return out


def _one_sided_derivative(adj, t, h, breaks):
    """Three-point derivative of p at t that does not straddle a breakpoint."""
    ahead = [s for s in breaks if t < s <= t + 2 * h]
    if not ahead or t - 2 * h < 0:
        h_eff = h if not ahead else 0.25 * (min(ahead) - t)
        p0, p1, p2 = adj.p_right(t), adj.p(t + h_eff), adj.p(t + 2 * h_eff)
        return (-3 * p0 + 4 * p1 - p2) / (2 * h_eff)
    p0, p1, p2 = adj.p(t), adj.p(t - h), adj.p(t - 2 * h)
    return (3 * p0 - 4 * p1 + p2) / (2 * h)


def grid_fd_residual(adj, problem, process) -> float:
    """Nonuniform three-point differences on the grid alone (diagnostic)."""
    nodes = adj.grid.nodes
    vals = adj.values
    breaks = set(process.breakpoints) | set(problem.breakpoints) | {s for s, _ in adj.jumps}
    worst = 0.0
    for k in range(1, len(nodes) - 1):
        t0, t1, t2 = nodes[k - 1], nodes[k], nodes[k + 1]
        if any(t0 < s <= t2 for s in breaks):
            continue
        h1, h2 = t1 - t0, t2 - t1
        d = (-h2 / (h1 * (h1 + h2))) * vals[k - 1] + ((h2 - h1) / (h1 * h2)) * vals[k] + (h1 / (h2 * (h1 + h2))) * vals[k + 1]
        r = np.linalg.norm(d - _adjoint_rhs(problem, adj, process, t1, vals[k]))
        worst = max(worst, float(r))
    return worst


def adjoint_residual(
    adj: AdjointSolution,
    problem: ControlProblem,
    process: Process,
    grid: Optional[SemiInfiniteGrid] = None,
    tol: float = 1e-6,
    h: float = 1e-5,
) -> list:
    """Residual of the adjoint equation between atoms and of the jump identities."""
    grid = adj.grid if grid is None else grid
    for s, _ in adj.jumps:
        if grid.index_of(s) is None:
            raise GridMismatchError(f"atom at t={s} is not a grid node")
    breaks = sorted(set(process.breakpoints) | set(problem.breakpoints) | {s for s, _ in adj.jumps})
    worst, worst_t = 0.0, None
    for t in grid.nodes:
        dp = _one_sided_derivative(adj, float(t), h, breaks)
        # the right-hand side is taken on the same side as the stencil
        p_here = adj.p_right(t)
        r = float(np.linalg.norm(dp - _adjoint_rhs(problem, adj, process, float(t), p_here)))
        if r > worst:
            worst, worst_t = r, float(t)
    entries = [
        ConditionEntry("adjoint_ode", worst, tol, worst_t, {"grid_fd": grid_fd_residual(adj, problem, process)})
    ]
    jump_worst, jump_t = 0.0, None
    for s, _ in adj.jumps:
        x = process.x(s)
        expected = np.zeros(problem.n)
        for j, mu in enumerate(adj.measures):
            for s_n, beta in mu.atoms:
                if s_n == s:
                    expected += beta * problem.gx_val(j, s, x)
        r = float(np.linalg.norm(adj.p_right(s) - adj.p(s) - expected))
        if r >= jump_worst:
            jump_worst, jump_t = r, s
    entries.append(ConditionEntry("adjoint_jumps", jump_worst, tol, jump_t, {"count": len(adj.jumps)}))
    return entries


# ---------------------------------------------------------------------------
# transversality and nontriviality
# ---------------------------------------------------------------------------


def fit_l0(problem, process, adj):
    """Least-squares l0 from p(0) = h0_x^T l0; returns (l0, residual)."""
    p0 = adj.p(0.0)
    if problem.h0 is None:
        return np.zeros(0), float(np.linalg.norm(p0))
    H = problem.h0x_val(process.x(0.0))
    l0, *_ = np.linalg.lstsq(H.T, p0, rcond=None)
    return l0, float(np.linalg.norm(H.T @ l0 - p0))


def atoms_at_infinity_from_limit(problem, process, p_limit, l1=None) -> np.ndarray:
    """Least-squares mu_j({inf}) from lim p = -h1_x^T l1 - sum_j g_jx mu_j({inf})."""
    n, t = problem.n, 1e6
    x_inf = process.x.limit
    rhs = -np.asarray(p_limit, dtype=float)
    if l1 is not None and problem.h1 is not None:
        rhs = rhs - problem.h1x_val(t, x_inf).T @ np.asarray(l1, dtype=float)
    if problem.l == 0:
        return np.zeros(0)
    G = np.column_stack([problem.gx_val(j, t, x_inf) for j in range(problem.l)]).reshape(n, problem.l)
    mu, *_ = np.linalg.lstsq(G, rhs, rcond=None)
    return mu


def transversality_check(
    adj: AdjointSolution,
    problem: ControlProblem,
    process: Process,
    kind: Optional[str] = None,
    tol: float = 1e-6,
) -> list:
    kind = problem.endpoint_kind if kind is None else kind
    if kind != problem.endpoint_kind:
        raise InvalidInputError(f"kind {kind!r} does not match the problem ({problem.endpoint_kind!r})")
    entries = []
    # (i) left endpoint
    if adj.l0 is not None and problem.h0 is not None:
        H = problem.h0x_val(process.x(0.0))
        r0 = float(np.linalg.norm(adj.p(0.0) - H.T @ adj.l0))
        entries.append(ConditionEntry("transversality_t0", r0, tol, 0.0, {"l0": adj.l0, "fitted": False}))
    else:
        l0, r0 = fit_l0(problem, process, adj)
        entries.append(ConditionEntry("transversality_t0", r0, tol, 0.0, {"l0": l0, "fitted": True}))

    # (ii) limit identity, with p taken where the tail was declared settled
    T = adj.horizon
    p_T = adj.p(T)
    target = limit_from_transversality(problem, process, adj.l1, adj.measures)
    r_lim = float(np.linalg.norm(p_T - target))
    entries.append(
        ConditionEntry("transversality_limit", r_lim, tol, float(T), {"p_limit": p_T, "target": target})
    )

    # (iii) natural transversality for a free endpoint without state constraints
    if kind == "free" and problem.l == 0:
        x_T = process.x(T)
        r_p = float(np.linalg.norm(p_T))
        r_px = abs(float(p_T @ x_T))
        entries.append(ConditionEntry("free_endpoint_limit", max(r_p, r_px), tol, float(T), {"p": r_p, "px": r_px}))

    # (iv) Michel condition when the density vanishes at infinity
    if problem.omega(T) < 1e-8:
        from .pmp_verify import pontryagin_function

        H = pontryagin_function(problem)(T, process.x(T), process.u(T), p_T, adj.lambda0)
        entries.append(ConditionEntry("michel", abs(H), tol, float(T)))
    return entries


def nontriviality_check(adj: AdjointSolution, threshold: float = NONTRIVIALITY_THRESHOLD):
    mags = {
        "lambda0": abs(adj.lambda0),
        "l0": float(np.linalg.norm(adj.l0)) if adj.l0 is not None else 0.0,
        "l1": float(np.linalg.norm(adj.l1)) if adj.l1 is not None else 0.0,
        "measures": float(sum(mu.total_mass() for mu in adj.measures)),
        "p_sup": adj.sup_norm(),
    }
    dominant = max(mags, key=mags.get)
    return mags[dominant] > threshold, {"magnitudes": mags, "dominant": dominant}
