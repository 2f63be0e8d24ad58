"""Arrow-type sufficiency: concavity of the maximised Hamiltonian and Delta(T)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate as spint

from .errors import IncompleteVerificationError, RadiusExceededError, UnboundedHamiltonianWarning
from .pmp_verify import hamiltonian_max
from .problem import BoxControlSet


def hamiltonian_sup(problem, t, x, p, control_set=None):
    """sup over U of H(t, x, u, p, 1): (value, maximising control)."""
    value, u = hamiltonian_max(problem, t, x, p, 1.0, control_set=control_set)
    cs = problem.control_set if control_set is None else control_set
    if isinstance(cs, BoxControlSet) and cs.truncated:
        v4, _ = hamiltonian_max(problem, t, x, p, 1.0, control_set=cs.enlarged(4.0))
        v16, _ = hamiltonian_max(problem, t, x, p, 1.0, control_set=cs.enlarged(16.0))
        if v16 - v4 > v4 - value > 1e-6 * (1 + abs(value)):
            warnings.warn(f"sup of H grows with the control box at t={t:.4g}", UnboundedHamiltonianWarning)
    return value, u


@dataclass
class ConcavityProbe:
    samples: int
    gamma: float
    violations: int
    worst_violation: float
    seed: int
    tolerance: float
    worst_at: Optional[float] = None
    worst_hessian_eig: Optional[float] = None

    @property
    def clean(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "violations": self.violations,
            "worst_violation": self.worst_violation,
            "gamma": self.gamma,
            "seed": self.seed,
            "tolerance": self.tolerance,
        }


def _ball_point(rng, centre, gamma):
    d = rng.normal(size=centre.size)
    d /= max(np.linalg.norm(d), 1e-300)
    return centre + gamma * rng.uniform() ** (1.0 / centre.size) * d


def concavity_check(
    problem,
    adj,
    process,
    gamma: Optional[float] = None,
    samples: int = 1000,
    seed: int = 0,
    tol: float = 1e-9,
    H_sup: Optional[Callable] = None,
    t_max: Optional[float] = None,
) -> ConcavityProbe:
    """Midpoint concavity of x -> sup_u H(t, x, u, p(t), 1) on the gamma tube.

    ``H_sup(t, x, p)`` replaces the sampled maximisation when a closed form
    is known.  A sample violates concavity when the midpoint value falls
    below the chord by more than ``tol (1 + |chord|)``.
    """
    gamma = problem.gamma if gamma is None else gamma
    if H_sup is None:
        H_sup = lambda t, x, p: hamiltonian_max(problem, t, x, p, 1.0)[0]
    rng = np.random.default_rng(seed)
    t_max = process.grid.t_last if t_max is None else t_max
    viol, worst, worst_t = 0, 0.0, None
    for _ in range(samples):
        t = float(rng.uniform(0.0, t_max))
        xs, p = process.x(t), adj.p_right(t)
        xa, xb = _ball_point(rng, xs, gamma), _ball_point(rng, xs, gamma)
        chord = 0.5 * (H_sup(t, xa, p) + H_sup(t, xb, p))
        gap = chord - H_sup(t, 0.5 * (xa + xb), p)
        if gap > tol * (1 + abs(chord)):
            viol += 1
        if gap > worst:
            worst, worst_t = gap, t
    return ConcavityProbe(samples, gamma, viol, max(worst, 0.0), seed, tol, worst_t)


def convexity_check(problem, process, gamma=None, samples=1000, seed=0, tol=1e-9) -> list:
    """Midpoint convexity of each g_j(t, .) on the gamma tube."""
    gamma = problem.gamma if gamma is None else gamma
    out = []
    for j in range(problem.l):
        rng = np.random.default_rng(seed + 1 + j)
        viol, worst, worst_t = 0, 0.0, None
        for _ in range(samples):
            t = float(rng.uniform(0.0, process.grid.t_last))
            xs = process.x(t)
            xa, xb = _ball_point(rng, xs, gamma), _ball_point(rng, xs, gamma)
            chord = 0.5 * (problem.g_val(j, t, xa) + problem.g_val(j, t, xb))
            gap = problem.g_val(j, t, 0.5 * (xa + xb)) - chord
            if gap > tol * (1 + abs(chord)):
                viol += 1
            if gap > worst:
                worst, worst_t = gap, t
        out.append(ConcavityProbe(samples, gamma, viol, max(worst, 0.0), seed + 1 + j, tol, worst_t))
    return out


def _radius(process_star, process_alt, gamma):
    dev = max(float(np.linalg.norm(process_alt.x(t) - process_star.x(t))) for t in process_star.grid.times())
    if dev > gamma:
        raise RadiusExceededError(f"alternative leaves the gamma-tube: sup deviation {dev:.4g} > {gamma}")
    return dev


def delta_T_check(
    problem,
    process_star,
    process_alt,
    adj,
    T_list: Sequence[float],
    gamma: Optional[float] = None,
    tol: float = 1e-9,
) -> list:
    """Delta(T) >= <p(T), x(T) - x*(T)> - <p(0), x(0) - x*(0)> at each T.

    Delta(T) = int_0^T omega (f(x, u) - f(x*, u*)) dt is computed by
    adaptive quadrature split at both processes' switch times.
    """
    gamma = problem.gamma if gamma is None else gamma
    dev = _radius(process_star, process_alt, gamma)
    bps = sorted(set(process_star.breakpoints) | set(process_alt.breakpoints) | set(problem.breakpoints))

    def gap(t):
        return problem.omega(t) * (
            problem.f_val(t, process_alt.x(t), process_alt.u(t))
            - problem.f_val(t, process_star.x(t), process_star.u(t))
        )

    rhs0 = float(adj.p_right(0.0) @ (process_alt.x(0.0) - process_star.x(0.0)))
    rows = []
    lhs, prev = 0.0, 0.0
    for T in sorted(float(T) for T in T_list):
        pts = [b for b in bps if prev < b < T]
        val, _ = spint.quad(gap, prev, T, points=pts or None, limit=500, epsabs=1e-13, epsrel=1e-11)
        lhs += val
        prev = T
        rhs = float(adj.p(T) @ (process_alt.x(T) - process_star.x(T))) - rhs0
        margin = lhs - rhs
        rows.append({"T": T, "lhs": lhs, "rhs": rhs, "margin": margin, "holds": bool(margin >= -tol)})
    if rows:
        T = rows[-1]["T"]
        rows[-1]["limit_pairing"] = float(adj.p(T) @ (process_alt.x(T) - process_star.x(T)))
        rows[-1]["sup_deviation"] = dev
    return rows


def natural_transversality(problem, process_star, alternatives, adj, tol=1e-8) -> dict:
    """<p(0), x(0) - x*(0)> = 0 and lim <p, x - x*> >= 0 on supplied alternatives (sampled)."""
    worst0, worst_lim = 0.0, 0.0
    T = adj.horizon
    for alt in alternatives:
        worst0 = max(worst0, abs(float(adj.p_right(0.0) @ (alt.x(0.0) - process_star.x(0.0)))))
        worst_lim = min(worst_lim, float(adj.p(T) @ (alt.x(T) - process_star.x(T))))
    return {
        "sampled": True,
        "alternatives": len(alternatives),
        "start_pairing": worst0,
        "limit_pairing": worst_lim,
        "holds": bool(worst0 <= tol and worst_lim >= -tol),
    }


def piecewise_adjoint_valid(adj, grid=None) -> dict:
    """Normal form, nonnegative densities and atoms, summable jumps."""
    grid = adj.grid if grid is None else grid
    dens_ok = all(mu.density_at(t) >= 0 for mu in adj.measures for t in grid.nodes)
    atoms_ok = all(b >= 0 for mu in adj.measures for _, b in mu.atoms) and all(
        mu.atom_at_infinity >= 0 for mu in adj.measures
    )
    jump_sum = float(sum(np.linalg.norm(J) for _, J in adj.jumps))
    ok = bool(adj.lambda0 == 1.0 and dens_ok and atoms_ok and np.isfinite(jump_sum))
    return {"valid": ok, "normal_form": adj.lambda0 == 1.0, "densities_nonnegative": dens_ok,
            "atoms_nonnegative": atoms_ok, "jump_total": jump_sum}


def arrow_verdict(
    pmp=None,
    piecewise=None,
    concavity: Optional[ConcavityProbe] = None,
    convexity: Optional[list] = None,
    delta_T: Optional[list] = None,
    natural: Optional[dict] = None,
) -> dict:
    """Conjunction of all sufficiency ingredients; every one must be supplied."""
    parts = {"pmp": pmp, "piecewise": piecewise, "concavity": concavity, "convexity": convexity,
             "delta_T": delta_T, "natural": natural}
    missing = [k for k, v in parts.items() if v is None]
    if missing:
        raise IncompleteVerificationError(f"missing sub-reports: {', '.join(missing)}")
    pmp_ok = pmp.passed if hasattr(pmp, "passed") else bool(pmp)
    checks = {
        "pmp": pmp_ok,
        "piecewise_adjoint_valid": bool(piecewise["valid"]),
        "concavity": concavity.clean,
        "convexity": all(c.clean for c in convexity),
        "delta_T": all(r["holds"] for r in delta_T),
        "natural_transversality": bool(natural["holds"]),
    }
    failed = [k for k, v in checks.items() if not v]
    return {
        "pmp": pmp.to_dict() if hasattr(pmp, "to_dict") else {"pass": pmp_ok},
        "piecewise_adjoint_valid": checks["piecewise_adjoint_valid"],
        "concavity": concavity.to_dict(),
        "convexity": [c.to_dict() for c in convexity],
        "delta_T": [{k: r[k] for k in ("T", "lhs", "rhs", "margin", "holds")} for r in delta_T],
        "natural_transversality": natural,
        "failed": failed,
        "verdict": "pass" if not failed else "fail",
    }
