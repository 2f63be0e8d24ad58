"""Compactifying time transformation, finite-horizon embedding and the
finite-horizon approximation pathology for the linear Ramsey model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate as spint

from .errors import HorizonTooShortError, IncompleteVerificationError, InvalidInputError
from .linear_ode import integrate_ivp
from .problem import ControlProblem, TimeMap, get_time_map

EPS_DEFAULT = 1e-6


# ---------------------------------------------------------------------------
# time transformation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransformedProblem:
    """The problem on s in [0, 1): y' = v(s) phi(t(s), y, w), t' = v(s)."""

    base: ControlProblem
    t_map: TimeMap

    def v(self, s):
        return float(self.t_map.speed(s))

    def rhs(self, control: Callable[[float], np.ndarray]):
        """Right-hand side in the augmented state (t, y); the clock is integrated too."""

        def f(s, z):
            # RK stage values of the clock are not accurate enough to
            # locate switches, so the exact t(s) drives control and dynamics
            v = self.v(s)
            t, y = float(self.t_map.forward(s)), z[1:]
            return np.concatenate([[v], v * self.base.phi_val(t, y, control(t))])

        return f

    def integrate(self, x0, control, switch_times=(), eps: float = EPS_DEFAULT, rtol=1e-12, atol=1e-14):
        """Integrate the transformed system on [0, 1 - eps]."""
        s_breaks = [float(self.t_map.inverse(t)) for t in switch_times if t > 0]
        z0 = np.concatenate([[0.0], np.atleast_1d(np.asarray(x0, dtype=float))])
        return integrate_ivp(self.rhs(control), z0, [0.0], t_end=1.0 - eps, breakpoints=s_breaks,
                             rtol=rtol, atol=atol)


def to_finite(problem: ControlProblem, t_map="log", probes: int = 2001, eps: float = EPS_DEFAULT) -> TransformedProblem:
    """Transformed problem; the map must start at 0, increase and have positive speed."""
    tm = get_time_map(t_map)
    s = np.linspace(0.0, 1.0 - eps, probes)
    t = np.asarray(tm.forward(s), dtype=float)
    v = np.asarray(tm.speed(s), dtype=float)
    if abs(t[0]) > 0 or np.any(np.diff(t) <= 0) or np.any(v <= 0):
        raise InvalidInputError(f"time map {tm.name!r} is not a monotone bijection onto [0, inf)")
    return TransformedProblem(problem, tm)


def round_trip_error(problem, x0, control, switch_times=(), t_map="log", eps=EPS_DEFAULT, samples=200) -> float:
    """Sup distance between the pulled-back transformed solution and direct integration."""
    tp = to_finite(problem, t_map, eps=eps)
    path_s = tp.integrate(x0, control, switch_times, eps)
    T = float(tp.t_map.forward(1.0 - eps))
    direct = integrate_ivp(lambda t, x: problem.phi_val(t, x, control(t)), x0, [0.0], t_end=T,
                           breakpoints=switch_times, rtol=1e-12, atol=1e-14)
    worst = 0.0
    for s in np.linspace(0.0, 1.0 - eps, samples):
        z = path_s(s)
        worst = max(worst, float(np.max(np.abs(z[1:] - direct(min(z[0], T))))))
    return worst


# ---------------------------------------------------------------------------
# finite-horizon embedding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteProblem:
    """Classical problem on [t0, t1] with h1 depending on x(t1) only."""

    state_dim: int
    control_dim: int
    t0: float
    t1: float
    f: Callable
    f_x: Callable
    phi: Callable
    phi_x: Callable
    control_set: object
    h0: Optional[Callable] = None
    h0_x: Optional[Callable] = None
    h1: Optional[Callable] = None
    h1_x: Optional[Callable] = None
    constraints: tuple = ()
    vectorized: bool = False
    name: str = ""


def _tilde_g(g, t0, t1):
    """Extension of g_j beyond [t0, t1] that relaxes the constraint away from the interval."""

    def gt(t, x):
        if t < t0:
            return g(t0, x) + (1.0 - math.exp(min((t - t0) ** 2, 700.0)))
        if t > t1:
            return g(t1, x) + (1.0 - math.exp(min((t - t1) ** 2, 700.0)))
        return g(t, x)

    return gt


def _tilde_gx(g_x, t0, t1):
    return lambda t, x: g_x(min(max(t, t0), t1), x)


def embed_finite(fp: FiniteProblem) -> ControlProblem:
    """Infinite-horizon problem with indicator density and frozen dynamics outside [t0, t1]."""
    from .problem import StateConstraint

    t0, t1 = float(fp.t0), float(fp.t1)
    if not t0 < t1:
        raise InvalidInputError(f"need t0 < t1, got [{t0}, {t1}]")
    n = fp.state_dim

    # half-open, so right limits at t1 already see the frozen dynamics
    def inside(t):
        return t0 <= t < t1

    def f(t, x, u):
        if inside(t):
            return fp.f(t, x, u)
        return np.zeros(np.shape(u)[:-1]) if fp.vectorized else 0.0

    def f_x(t, x, u):
        return fp.f_x(t, x, u) if inside(t) else np.zeros(n)

    def phi(t, x, u):
        if inside(t):
            return fp.phi(t, x, u)
        return np.zeros(np.shape(u)[:-1] + (n,)) if fp.vectorized else np.zeros(n)

    def phi_x(t, x, u):
        return fp.phi_x(t, x, u) if inside(t) else np.zeros((n, n))

    h1 = h1_x = None
    if fp.h1 is not None:
        h1 = lambda t, x: fp.h1(x)
        h1_x = lambda t, x: fp.h1_x(x)
    cons = tuple(
        StateConstraint(_tilde_g(c.g, t0, t1), _tilde_gx(c.g_x, t0, t1), c.name) for c in fp.constraints
    )
    return ControlProblem(
        state_dim=n,
        control_dim=fp.control_dim,
        f=f,
        f_x=f_x,
        phi=phi,
        phi_x=phi_x,
        omega=lambda t: 1.0 if inside(t) else 0.0,
        omega_l1=t1 - t0,
        control_set=fp.control_set,
        h0=fp.h0,
        h0_x=fp.h0_x,
        h1=h1,
        h1_x=h1_x,
        constraints=cons,
        endpoint_kind="free" if h1 is None else "fixed",
        breakpoints=tuple(b for b in (t0, t1) if b > 0),
        vectorized=fp.vectorized,
        name=fp.name + "_embedded" if fp.name else "embedded",
    )


def classical_pmp_readout(fp: FiniteProblem, embedded: ControlProblem, process, adj, report=None,
                          h: float = 1e-5) -> dict:
    """Restate an embedded verification as the classical finite-horizon principle."""
    if report is None or adj is None:
        raise IncompleteVerificationError("classical readout needs the embedded verification run")
    t0, t1 = float(fp.t0), float(fp.t1)
    nodes = process.grid.nodes
    outside = [t for t in nodes if t > t1 or t < t0]
    # derivative of p outside [t0, t1] by one-sided differences that stay outside
    const_res = 0.0
    for t in outside:
        if t > t1:
            d = (adj.p(t + 2 * h) - adj.p(t + h)) / h
        else:
            lo = max(0.0, t - 2 * h)
            d = (adj.p(t) - adj.p(lo)) / max(t - lo, h) if t > 0 else np.zeros(adj.n)
        const_res = max(const_res, float(np.max(np.abs(d))))
    drift = max((float(np.max(np.abs(adj.p(t) - adj.p_right(t1)))) for t in outside if t > t1), default=0.0)

    x1 = process.x(t1)
    atoms_t1 = np.zeros(adj.n)
    jump_table = []
    for j, mu in enumerate(adj.measures):
        for s, beta in mu.atoms:
            jump_table.append({"s": s, "j": j + 1, "beta": beta})
            if abs(s - t1) < 1e-12:
                atoms_t1 += beta * embedded.gx_val(j, t1, x1)
    target_t1 = -atoms_t1
    if fp.h1 is not None and adj.l1 is not None:
        target_t1 = target_t1 - np.asarray(fp.h1_x(x1), dtype=float).reshape(-1, adj.n).T @ adj.l1
    p_t1 = adj.p(t1)
    readout = float(np.max(np.abs(p_t1 - target_t1)))
    jump = float(np.max(np.abs((adj.p_right(t1) - p_t1) - atoms_t1)))
    # the infinite-horizon limit condition, carried back to t1+ by the frozen adjoint
    limit_match = float(np.max(np.abs(adj.p_right(t1) - adj.p(adj.horizon))))
    inner = [e for e in report.conditions if e.name in ("adjoint_ode", "max_condition", "transversality_t0")]
    return {
        "interval": [t0, t1],
        "adjoint_constant_outside": const_res,
        "adjoint_drift_after_t1": drift,
        "p_t1": p_t1,
        "transversality_t1_residual": readout,
        "jump_t1_residual": jump,
        "limit_match_residual": limit_match,
        "jump_table": jump_table,
        "inner_conditions": {e.name: e.passed for e in inner},
    }


def active_sets_coincide(fp: FiniteProblem, embedded: ControlProblem, process, tol=1e-7) -> bool:
    from .pmp_verify import active_set

    for j, c in enumerate(fp.constraints):
        emb = [t for t in active_set(embedded, process, j, tol) if fp.t0 <= t <= fp.t1]
        fin = [float(t) for t in process.grid.nodes
               if fp.t0 <= t <= fp.t1 and abs(c.g(t, process.x(t))) <= tol]
        if emb != fin:
            return False
    return True


# ---------------------------------------------------------------------------
# finite-horizon approximation pathology (linear Ramsey model, sup problem)
# ---------------------------------------------------------------------------


def finite_switch_time(rho: float, T: float) -> float:
    return T + math.log(1.0 - rho) / rho


def _value(rho, x0, tau, T):
    """int_0^T e^{-rho t} (1 - u) x dt for u = 1 on [0, tau), 0 afterwards."""
    x_tau = x0 * math.exp(tau)
    integrand = lambda t: math.exp(-rho * t) * x_tau
    if math.isinf(T):
        val, _ = spint.quad(integrand, tau, np.inf, epsabs=1e-13, epsrel=1e-12)
    else:
        val, _ = spint.quad(integrand, tau, T, epsabs=1e-13, epsrel=1e-12)
    return val


def pathology_demo(rho: float = 0.5, x0: float = 1.0, T_list: Sequence[float] = (5, 10, 20, 40)) -> dict:
    """Finite-horizon optima versus their infinite-horizon values.

    For each T the finite-horizon optimum switches at
    tau(T) = T + ln(1 - rho)/rho.  The limit T -> inf is u = 1, whose
    infinite-horizon value is 0.
    """
    if not 0 < rho < 1:
        raise InvalidInputError("rho must lie in (0, 1)")
    T_list = [float(T) for T in T_list]
    if any(b <= a for a, b in zip(T_list, T_list[1:])):
        raise InvalidInputError("T values must be increasing")
    rows = []
    for T in T_list:
        tau = finite_switch_time(rho, T)
        if tau <= 0:
            raise HorizonTooShortError(f"T={T} gives tau(T)={tau:.4g} <= 0; need T > {-math.log(1 - rho) / rho:.6g}")
        rows.append({
            "T": T,
            "tau": tau,
            "J_T": _value(rho, x0, tau, T),
            "J_infinite_of_T_process": _value(rho, x0, tau, math.inf),
            "J_limit_process": 0.0,
        })
    # the limit process has (1 - u) = 0 everywhere: integrate it anyway
    j_lim, _ = spint.quad(lambda t: math.exp(-rho * t) * (1.0 - 1.0) * x0 * math.exp(t), 0.0, 50.0)
    for r in rows:
        r["J_limit_process"] = j_lim
    not_optimal = all(r["J_T"] > r["J_limit_process"] for r in rows)
    return {
        "rho": rho,
        "x0": x0,
        "rows": rows,
        "tau_minus_T": math.log(1.0 - rho) / rho,
        "limit_not_optimal": not_optimal,
    }
