import math

import numpy as np
import pytest

from horizon_pmp.errors import HorizonTooShortError, IncompleteVerificationError, InvalidInputError
from horizon_pmp.horizon import (
    classical_pmp_readout,
    embed_finite,
    finite_switch_time,
    pathology_demo,
    round_trip_error,
    to_finite,
)
from horizon_pmp.problem import TimeMap
from horizon_pmp.scenarios import build_instance, run_scenario, solve_switching_time


@pytest.fixture(scope="module")
def ramsey():
    return build_instance("ramsey_budget", N=64)


@pytest.mark.parametrize("t_map", ["log", "rational"])
def test_round_trip_through_compactified_time(ramsey, t_map):
    tau = solve_switching_time(0.5, 3.0)
    u = lambda t: np.array([1.0 if t < tau else 0.0])
    err = round_trip_error(ramsey.problem, ramsey.process.x(0.0), u, [tau], t_map)
    assert err < 1e-8


def test_transformed_clock_matches_map(ramsey):
    tp = to_finite(ramsey.problem, "log")
    path = tp.integrate(ramsey.process.x(0.0), lambda t: np.array([0.0]))
    for s in (0.1, 0.5, 0.9, 0.999):
        assert path(s)[0] == pytest.approx(-math.log1p(-s), rel=1e-9)


def test_bad_time_map_rejected(ramsey):
    flat = TimeMap("flat", forward=lambda s: np.minimum(s, 0.5), speed=lambda s: np.ones_like(s),
                   inverse=lambda t: t)
    with pytest.raises(InvalidInputError):
        to_finite(ramsey.problem, flat)


def test_embedding_freezes_outside_interval():
    inst = build_instance("embedded_terminal", N=64)
    pb, fp = inst.problem, inst.finite
    x, u = np.array([0.3]), np.array([1.0])
    assert pb.omega(0.5) == 1.0 and pb.omega(fp.t1) == 0.0 and pb.omega(3.0) == 0.0
    assert pb.f_val(3.0, x, u) == 0.0
    assert np.all(pb.phi_val(3.0, x, u) == 0.0)
    # the extended constraint relaxes away from [t0, t1]
    inside = pb.g_val(0, fp.t1, x)
    assert pb.g_val(0, fp.t1 + 0.5, x) < inside
    assert pb.g_val(0, fp.t1 + 50.0, x) < -1e10
    assert pb.omega_l1 == fp.t1 - fp.t0


def test_embedding_rejects_empty_interval():
    fp = build_instance("embedded_lq", N=64).finite
    with pytest.raises(InvalidInputError):
        embed_finite(type(fp)(**{**fp.__dict__, "t1": fp.t0}))


@pytest.mark.parametrize("name", ["embedded_lq", "embedded_terminal"])
def test_classical_readout(name):
    res = run_scenario(name, N=128)
    emb = res.embedding
    assert emb["adjoint_constant_outside"] < 1e-9
    assert emb["adjoint_drift_after_t1"] < 1e-9
    assert emb["transversality_t1_residual"] < 1e-8
    assert emb["limit_match_residual"] < 1e-8
    assert emb["active_sets_coincide"]
    assert all(emb["inner_conditions"].values())


def test_readout_needs_report():
    inst = build_instance("embedded_lq", N=64)
    with pytest.raises(IncompleteVerificationError):
        classical_pmp_readout(inst.finite, inst.problem, inst.process, None, None)


def test_pathology_table():
    out = pathology_demo(0.5, 1.0, [5, 10, 20])
    assert out["tau_minus_T"] == math.log(0.5) / 0.5
    for row in out["rows"]:
        assert row["tau"] - row["T"] == pytest.approx(-2 * math.log(2), abs=1e-12)
        # closed form of the quadrature: e^{tau} (e^{-rho tau} - e^{-rho T}) / rho
        exact = math.exp(row["tau"]) * (math.exp(-0.5 * row["tau"]) - math.exp(-0.5 * row["T"])) / 0.5
        assert row["J_T"] == pytest.approx(exact, rel=1e-9)
        assert row["J_T"] > 0.5
        assert abs(row["J_limit_process"]) <= 1e-10
    assert out["limit_not_optimal"]
    Js = [r["J_T"] for r in out["rows"]]
    assert Js == sorted(Js)


def test_pathology_errors():
    with pytest.raises(HorizonTooShortError):
        pathology_demo(0.5, 1.0, [1.0])
    with pytest.raises(InvalidInputError):
        pathology_demo(1.5)
    with pytest.raises(InvalidInputError):
        pathology_demo(0.5, 1.0, [10, 5])
    assert finite_switch_time(0.5, 2 * math.log(2)) == pytest.approx(0.0, abs=1e-15)
