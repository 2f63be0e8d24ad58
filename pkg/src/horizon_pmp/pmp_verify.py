"""Maximum condition, admissibility classes, active sets and slackness."""

from __future__ import annotations

import warnings
from typing import Optional

import numpy as np

from .errors import UnboundedHamiltonianWarning
from .linear_ode import summability_certificate
from .problem import BoxControlSet, ControlProblem, Process, SemiInfiniteGrid
from .report import ConditionEntry, VerificationReport

ACTIVATION_TOL = 1e-7
T_PROBE = 1e3  # stand-in for t = inf in time-dependent maps


def pontryagin_function(problem: ControlProblem):
    """H(t, x, u, p, lambda0) = -lambda0 omega f + <p, phi>."""

    def H(t, x, u, p, lambda0=1.0):
        return -lambda0 * problem.omega(t) * problem.f_val(t, x, u) + float(np.dot(p, problem.phi_val(t, x, u)))

    return H


def hamiltonian_batch(problem: ControlProblem, t, x, U, p, lambda0=1.0) -> np.ndarray:
    """H over a batch of controls U of shape (k, m)."""
    U = np.atleast_2d(U)
    if problem.vectorized:
        f = np.asarray(problem.f(t, x, U), dtype=float).reshape(-1)
        phi = np.asarray(problem.phi(t, x, U), dtype=float).reshape(len(U), problem.n)
        return -lambda0 * problem.omega(t) * f + phi @ p
    H = pontryagin_function(problem)
    return np.array([H(t, x, u, p, lambda0) for u in U])


def hamiltonian_max(problem, t, x, p, lambda0=1.0, samples=None, control_set=None):
    """Sampled maximum of H over U with coordinate-wise golden-section polish."""
    cs = problem.control_set if control_set is None else control_set
    U = cs.samples() if samples is None else samples
    vals = hamiltonian_batch(problem, t, x, U, p, lambda0)
    k = int(np.argmax(vals))
    H = pontryagin_function(problem)
    u_best, v_best = cs.refine(lambda u: H(t, x, u, p, lambda0), U[k])
    if v_best < vals[k]:
        u_best, v_best = U[k], vals[k]
    return float(v_best), np.asarray(u_best, dtype=float)


def max_condition_check(
    problem: ControlProblem,
    process: Process,
    adj,
    grid: Optional[SemiInfiniteGrid] = None,
    rel_tol: float = 1e-6,
    enlarge: float = 4.0,
) -> ConditionEntry:
    """Largest gap max_u H - H(u*) over the nodes, scaled by 1 + |H(u*)|."""
    grid = process.grid if grid is None else grid
    H = pontryagin_function(problem)
    samples = problem.control_set.samples()
    worst_rel, worst_raw, worst_t = 0.0, 0.0, None
    gaps = []
    for t in grid.nodes:
        t = float(t)
        x, u_star, p = process.x(t), process.u(t), adj.p_right(t)
        h_star = H(t, x, u_star, p, adj.lambda0)
        h_max, _ = hamiltonian_max(problem, t, x, p, adj.lambda0, samples)
        gap = max(h_max - h_star, 0.0)
        gaps.append(gap)
        rel = gap / (1.0 + abs(h_star))
        if rel > worst_rel or worst_t is None:
            worst_rel, worst_raw, worst_t = rel, gap, t
    detail = {"max_gap": float(max(gaps)), "gap_at_worst": worst_raw}
    cs = problem.control_set
    if isinstance(cs, BoxControlSet) and getattr(cs, "truncated", False):
        big = cs.enlarged(enlarge)
        bigger = cs.enlarged(enlarge**2)
        for t in grid.nodes[:: max(1, grid.size // 16)]:
            x, p = process.x(t), adj.p_right(t)
            m1, _ = hamiltonian_max(problem, t, x, p, adj.lambda0, control_set=cs)
            m2, _ = hamiltonian_max(problem, t, x, p, adj.lambda0, control_set=big)
            m3, _ = hamiltonian_max(problem, t, x, p, adj.lambda0, control_set=bigger)
            if m3 - m2 > m2 - m1 > 1e-6 * (1 + abs(m1)):
                warnings.warn(
                    f"sup of H grows with the control box at t={t:.4g}; U may be too small",
                    UnboundedHamiltonianWarning,
                )
                detail["unbounded_at"] = float(t)
                break
    entry = ConditionEntry("max_condition", worst_rel, rel_tol, worst_t, detail)
    entry.gaps = np.array(gaps)
    return entry


# ---------------------------------------------------------------------------
# admissibility classes
# ---------------------------------------------------------------------------


def _random_perturbation(rng, n, gamma):
    """A convergent W^1_inf function v1 + v2 exp(-c t) with sup norm at most gamma."""
    v1 = rng.normal(size=n)
    v2 = rng.normal(size=n)
    v1 *= 0.5 * gamma * rng.uniform() / max(np.linalg.norm(v1), 1e-12)
    v2 *= 0.5 * gamma * rng.uniform() / max(np.linalg.norm(v2), 1e-12)
    rate = rng.uniform(0.1, 2.0)
    return lambda t: v1 + v2 * np.exp(-rate * t)


def admissibility_class_check(
    problem: ControlProblem,
    process: Process,
    gamma: Optional[float] = None,
    n_pairs: int = 20,
    seed: int = 0,
    tol: float = 1e-7,
) -> dict:
    """Flags adm, lim_cond1, lim_cond2 and lip for a process.

    lim_cond2 is a sampled proxy: for random pairs xi, xi' in the gamma
    tube the linearisation remainder must have a vanishing tail integral,
    tested with the dyadic certificate.
    """
    gamma = problem.gamma if gamma is None else gamma
    grid = process.grid
    bps = sorted(set(process.breakpoints) | set(problem.breakpoints))
    details = {}

    # adm: constraints, boundary maps, control membership, finite cost
    viol = 0.0
    for j in range(problem.l):
        vals = [problem.g_val(j, t, process.x(t)) for t in grid.nodes]
        with np.errstate(over="ignore", invalid="ignore"):
            vals.append(problem.g_val(j, T_PROBE, process.x.limit))
        viol = max(viol, max(vals))
    bound = 0.0
    if problem.h0 is not None:
        bound = max(bound, float(np.max(np.abs(problem.h0(process.x(0.0))))))
    if problem.h1 is not None:
        bound = max(bound, float(np.max(np.abs(problem.h1(T_PROBE, process.x.limit)))))
    in_U = all(problem.control_set.contains(process.u(t)) for t in grid.nodes)
    cost = summability_certificate(
        lambda t: abs(problem.omega(t) * problem.f_val(t, process.x(t), process.u(t))), breakpoints=bps
    )
    adm = bool(viol <= tol and bound <= tol and in_U and cost.summable)
    details["adm"] = {"constraint_violation": max(viol, 0.0), "boundary_residual": bound, "controls_in_U": in_U,
                      "cost_summable": cost.summable}

    # lim_cond1
    c_phi = summability_certificate(
        lambda t: float(np.linalg.norm(problem.phi_val(t, process.x(t), process.u(t)))), breakpoints=bps
    )
    c_phix = summability_certificate(
        lambda t: float(np.linalg.norm(problem.phix_val(t, process.x(t), process.u(t)), 2)), breakpoints=bps
    )
    lim1 = bool(c_phi.summable and c_phix.summable)
    details["lim_cond1"] = {"phi_ratios": c_phi.ratios[-3:], "phi_x_ratios": c_phix.ratios[-3:]}

    # lim_cond2, sampled
    rng = np.random.default_rng(seed)
    worst_tail, lim2 = 0.0, True
    for _ in range(n_pairs):
        eta, eta2 = _random_perturbation(rng, problem.n, gamma), _random_perturbation(rng, problem.n, gamma)
        scale = max(float(np.max([np.linalg.norm(eta(t) - eta2(t)) for t in grid.times()])), 1e-12)

        def remainder(t, eta=eta, eta2=eta2):
            x, u = process.x(t), process.u(t)
            xi, xi2 = x + eta(t), x + eta2(t)
            a, b = problem.phi_val(t, xi, u), problem.phi_val(t, xi2, u)
            lin = problem.phix_val(t, x, u) @ (xi - xi2)
            r = float(np.linalg.norm(a - b - lin))
            # below the cancellation floor the remainder is indistinguishable from 0
            floor = 64 * np.finfo(float).eps * (np.linalg.norm(a) + np.linalg.norm(b) + np.linalg.norm(lin))
            return (r if r > floor else 0.0) / scale

        cert = summability_certificate(remainder, breakpoints=bps, doublings=10, rule="gauss")
        lim2 = lim2 and cert.summable
        worst_tail = max(worst_tail, cert.blocks[-1])
    details["lim_cond2"] = {"pairs": n_pairs, "gamma": gamma, "worst_last_block": worst_tail}

    # lip: analytic Jacobians against finite differences along the process
    from .problem import jacobian_check

    jac = jacobian_check(problem, n_points=20, seed=seed, t_range=(0.0, max(grid.t_last, 1.0)), centre=process.x)
    details["lip"] = {"max_error": jac.max_error, "worst": jac.worst}
    return {
        "adm": adm,
        "lim_cond1": lim1,
        "lim_cond2": bool(lim2),
        "lip": jac.passed,
        "details": details,
    }


# ---------------------------------------------------------------------------
# state constraints
# ---------------------------------------------------------------------------


def _g_limit(problem, j, process):
    with np.errstate(over="ignore", invalid="ignore"):
        return problem.g_val(j, T_PROBE, process.x.limit)


def active_set(problem: ControlProblem, process: Process, j: int, tol: float = ACTIVATION_TOL) -> list:
    """Nodes (and possibly inf) where |g_j(t, x(t))| <= tol."""
    if not 0 <= j < problem.l:
        raise IndexError(f"constraint index {j} out of range")
    out = [float(t) for t in process.grid.nodes if abs(problem.g_val(j, t, process.x(t))) <= tol]
    if abs(_g_limit(problem, j, process)) <= tol:
        out.append(np.inf)
    return out


def slackness_check(adj, problem: ControlProblem, process: Process, tol: float = ACTIVATION_TOL) -> ConditionEntry:
    """Atoms and density support of each measure must sit in the active set."""
    worst, worst_t, where = 0.0, None, None
    for j, mu in enumerate(adj.measures):
        for s, beta in mu.atoms:
            if beta > 0:
                r = abs(problem.g_val(j, s, process.x(s)))
                if r > worst:
                    worst, worst_t, where = r, s, f"atom of mu_{j + 1}"
        if mu.density is not None:
            for t in process.grid.nodes:
                if mu.density_at(t) > 0:
                    r = abs(problem.g_val(j, t, process.x(t)))
                    if r > worst:
                        worst, worst_t, where = r, float(t), f"density of mu_{j + 1}"
        if mu.atom_at_infinity > 0:
            r = abs(_g_limit(problem, j, process))
            if r > worst:
                worst, worst_t, where = r, np.inf, f"atom at infinity of mu_{j + 1}"
    return ConditionEntry("slackness", worst, tol, worst_t, {"location": where} if where else {})


# ---------------------------------------------------------------------------
# full necessary-condition run
# ---------------------------------------------------------------------------


def feasibility_check(problem: ControlProblem, process: Process, tol: float = ACTIVATION_TOL) -> ConditionEntry:
    """Largest violation of g_j <= 0 over the nodes and the limit."""
    worst, worst_t = 0.0, None
    for j in range(problem.l):
        for t in process.grid.nodes:
            v = problem.g_val(j, t, process.x(t))
            if v > worst:
                worst, worst_t = v, float(t)
        with np.errstate(over="ignore", invalid="ignore"):
            v = _g_limit(problem, j, process)
        if v > worst:
            worst, worst_t = v, np.inf
    return ConditionEntry("feasibility", worst, tol, worst_t)


def nontriviality_entry(adj, threshold=1e-9) -> ConditionEntry:
    from .adjoint import nontriviality_check

    ok, info = nontriviality_check(adj, threshold)
    mag = info["magnitudes"][info["dominant"]]
    # residual reads as "how far below the threshold", zero when nontrivial
    return ConditionEntry("nontriviality", 0.0 if ok else threshold - mag, 0.0, None, info, passed=ok)


def run_pmp(
    problem: ControlProblem,
    process: Process,
    adj,
    name: str = "",
    tol_abs: float = 1e-6,
    tol_rel: float = 1e-6,
    flags: Optional[dict] = None,
    seed: int = 0,
) -> VerificationReport:
    """Every necessary condition for the supplied candidate and multipliers."""
    from .adjoint import adjoint_residual, transversality_check

    report = VerificationReport(name or problem.name)
    report.grid = {"N": process.grid.size, "t_last": process.grid.t_last, "horizon": adj.horizon}
    report.extend(adjoint_residual(adj, problem, process, tol=tol_abs))
    report.extend(transversality_check(adj, problem, process, tol=tol_abs))
    report.add(max_condition_check(problem, process, adj, rel_tol=tol_rel))
    if problem.l:
        report.add(feasibility_check(problem, process))
        report.add(slackness_check(adj, problem, process))
    report.add(nontriviality_entry(adj))
    if flags is None:
        flags = admissibility_class_check(problem, process, seed=seed)
    report.flags = {k: v for k, v in flags.items() if k != "details"}
    report.diagnostics["admissibility"] = flags.get("details", {})
    report.diagnostics["grid_fd_adjoint"] = report.get("adjoint_ode").detail.get("grid_fd")
    report.diagnostics["measures"] = [mu.to_dict() for mu in adj.measures]
    report.diagnostics["lambda0"] = adj.lambda0
    return report
