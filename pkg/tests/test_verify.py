import dataclasses
import math

import numpy as np
import pytest

from horizon_pmp.adjoint import (
    AdjointSolution,
    BorelMeasureExt,
    adjoint_free_endpoint,
    adjoint_residual,
    nontriviality_check,
    solve_adjoint,
)
from horizon_pmp.errors import IncompleteVerificationError, InvalidInputError
from horizon_pmp.pmp_verify import (
    active_set,
    admissibility_class_check,
    feasibility_check,
    max_condition_check,
    nontriviality_entry,
    run_pmp,
    slackness_check,
)
from horizon_pmp.problem import ControlPath, Process
from horizon_pmp.scenarios import build_instance
from horizon_pmp.sufficiency import (
    arrow_verdict,
    concavity_check,
    delta_T_check,
    hamiltonian_sup,
    natural_transversality,
)

SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="module")
def lq():
    inst = build_instance("lq_regulator", N=64)
    return inst, inst.adjoint(inst.process)


@pytest.fixture(scope="module")
def ramsey():
    inst = build_instance("ramsey_budget", N=64)
    return inst, inst.adjoint(inst.process)


def _shifted(process, lo, hi, bump):
    u = process.u
    fn = lambda t: u(t) + (bump if lo <= t < hi else 0.0)
    return Process(process.x, ControlPath.from_callable(u.grid, fn, u.limit, sorted({*u.breakpoints, lo, hi})), "bumped")


def test_lq_adjoint_closed_form(lq):
    inst, adj = lq
    k = 1 + SQRT2
    for t in inst.process.grid.nodes[::5]:
        assert adj.p(t)[0] == pytest.approx(-2 * k * math.exp(-k * t), abs=1e-8)
    assert adj.lambda0 == 1.0 and np.allclose(adj.p_limit, 0.0)


def test_adjoint_residual_small_and_sensitive(lq):
    inst, adj = lq
    entries = adjoint_residual(adj, inst.problem, inst.process)
    assert entries[0].name == "adjoint_ode" and entries[0].residual < 1e-6
    wrong = dataclasses.replace(adj, left_fn=lambda t: 1.1 * adj.p(t), right_fn=lambda t: 1.1 * adj.p(t))
    assert adjoint_residual(wrong, inst.problem, inst.process)[0].residual > 1e-3


def test_free_endpoint_rejects_fixed(ramsey):
    with pytest.raises(InvalidInputError):
        adjoint_free_endpoint(build_instance("ramsey_fixed", N=64).problem, ramsey[0].process)


def test_measure_validation():
    with pytest.raises(InvalidInputError):
        BorelMeasureExt(atoms=((1.0, -0.5),))
    with pytest.raises(InvalidInputError):
        BorelMeasureExt(atoms=((math.inf, 1.0),))
    mu = BorelMeasureExt(density=lambda t: math.exp(-t), atoms=((1.0, 0.25),), atom_at_infinity=0.5)
    assert mu.total_mass() == pytest.approx(1.75, abs=1e-10)


def test_lq_report_passes(lq):
    inst, adj = lq
    rep = run_pmp(inst.problem, inst.process, adj, "lq")
    assert rep.passed, rep.summary()
    assert rep.get("max_condition").residual < 1e-8
    assert rep.flags["adm"] and rep.flags["lip"]
    assert not rep.flags["lim_cond1"]  # phi_x = 2 is not summable


@pytest.mark.parametrize("bump", [0.1, -0.1])
def test_perturbed_control_fails_max_condition(lq, bump):
    inst, adj = lq
    bad = _shifted(inst.process, 0.5, 1.5, bump)
    e = max_condition_check(inst.problem, bad, adj)
    assert not e.passed
    assert e.detail["max_gap"] > 1e-3


def test_zero_multipliers_are_trivial(lq):
    inst, _ = lq
    zero = AdjointSolution.zero(inst.process.grid, 1, s0=1)
    ok, info = nontriviality_check(zero)
    assert not ok and info["magnitudes"]["lambda0"] == 0.0
    assert not nontriviality_entry(zero).passed
    assert not run_pmp(inst.problem, inst.process, zero, "zero").passed


def test_ramsey_flags_and_slackness(ramsey):
    inst, adj = ramsey
    flags = admissibility_class_check(inst.problem, inst.process)
    assert flags["adm"] and flags["lim_cond1"] and flags["lip"]
    assert active_set(inst.problem, inst.process, 0)[-1] == math.inf
    assert feasibility_check(inst.problem, inst.process).passed
    assert slackness_check(adj, inst.problem, inst.process).passed
    misplaced = dataclasses.replace(adj, measures=(BorelMeasureExt(atoms=((0.25, 1.0),)),))
    assert not slackness_check(misplaced, inst.problem, inst.process).passed


def test_feasibility_catches_violation(ramsey):
    inst, _ = ramsey
    x = inst.process.x
    shifted = type(x)(x.grid, x.values + np.array([0.0, 1.0]), x.limit + np.array([0.0, 1.0]))
    e = feasibility_check(inst.problem, Process(shifted, inst.process.u, "over_budget"))
    assert not e.passed and e.residual == pytest.approx(1.0, abs=1e-9)


def test_ramsey_bumped_control_stays_in_U(ramsey):
    # u* = 1 on [0, tau); a positive bump leaves U = [0, 1]
    inst, _ = ramsey
    bad = _shifted(inst.process, 0.05, 0.3, 0.1)
    assert not admissibility_class_check(inst.problem, bad)["adm"]


def test_hamiltonian_sup_lq_closed_form(lq):
    inst, _ = lq
    rng = np.random.default_rng(3)
    for _ in range(10):
        t, x, p = rng.uniform(0, 1), rng.normal(size=1), rng.normal(size=1) * 0.5
        val, u = hamiltonian_sup(inst.problem, t, x, p)
        assert val == pytest.approx(inst.H_sup(t, x, p), abs=1e-9)
        assert u[0] == pytest.approx(p[0] * math.exp(2 * t), abs=1e-5)


def test_concavity_and_delta_T(lq):
    inst, adj = lq
    probe = concavity_check(inst.problem, adj, inst.process, 0.5, samples=200, H_sup=inst.H_sup)
    assert probe.clean
    rows = delta_T_check(inst.problem, inst.process, inst.alternatives[0], adj, [1, 2, 5, 10])
    assert all(r["holds"] for r in rows)
    nat = natural_transversality(inst.problem, inst.process, inst.alternatives, adj)
    assert nat["holds"]


def test_flipped_sign_breaks_concavity():
    inst = build_instance("lq_sign_flipped", N=64)
    adj = inst.adjoint(inst.process)
    probe = concavity_check(inst.problem, adj, inst.process, 0.5, samples=200, H_sup=inst.H_sup)
    assert not probe.clean


def test_arrow_needs_every_part():
    with pytest.raises(IncompleteVerificationError):
        arrow_verdict(pmp=True, piecewise={"valid": True})


def test_solve_adjoint_measure_count(ramsey):
    inst, _ = ramsey
    with pytest.raises(InvalidInputError):
        solve_adjoint(inst.problem, inst.process, measures=(BorelMeasureExt(), BorelMeasureExt()))
