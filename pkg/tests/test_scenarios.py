import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from horizon_pmp.errors import InvalidInputError, ResourceTooLargeError, ScenarioNotFoundError
from horizon_pmp.scenarios import (
    LOG1P,
    extracted_total,
    get_scenario,
    load_config,
    resource_extraction_threshold,
    run_scenario,
    scenario_config,
    scenario_names,
    solve_switching_time,
)

R, A, C = 0.1, 0.05, 1.0
D = (R - A * C) / R


def _tau_closed(rho, Z):
    k = 1 / rho + 1 / (1 - rho)
    return math.log((Z + 1 / (1 - rho)) / k) / (1 - rho)


def _U_closed(q, tau, r=R, d=D):
    # extraction of u = d/(q + k e^{r(t - tau)}) - 1 over [0, tau]
    k = d - q
    return (d / q) * (tau - (math.log(q + k) - math.log(q + k * math.exp(-r * tau))) / r) - tau


def test_switching_time_reference():
    assert solve_switching_time(0.5, 3.0) == pytest.approx(2 * math.log(1.25), abs=1e-12)


@given(st.floats(0.05, 0.95), st.floats(0.01, 50.0))
def test_switching_time_matches_closed_form(rho, extra):
    Z = 1 / rho + extra
    assert solve_switching_time(rho, Z) == pytest.approx(_tau_closed(rho, Z), abs=1e-10)


def test_switching_time_rejects_small_budget():
    with pytest.raises(InvalidInputError):
        solve_switching_time(0.5, 2.0)
    with pytest.raises(InvalidInputError):
        solve_switching_time(1.0, 5.0)


@pytest.mark.parametrize("tau", [0.5, 2.0, 7.0])
def test_extracted_total_closed_form(tau):
    assert extracted_total(LOG1P, R, D, 0.1, tau) == pytest.approx(_U_closed(0.1, tau), abs=1e-11)


def test_case_classification():
    assert resource_extraction_threshold("log1p", R, A, C, 0.6, 1.0) == ("A", None)
    label, t_prime = resource_extraction_threshold("log1p", R, A, C, 0.1, 1.0)
    assert label == "C" and t_prime > 0


def test_ladder_strictly_increasing():
    taus = np.linspace(0.25, 10.0, 20)
    U = [extracted_total(LOG1P, R, D, 0.1, t) for t in taus]
    assert all(b > a for a, b in zip(U, U[1:]))


@settings(max_examples=15, deadline=None)
@given(st.floats(0.2, 8.0))
def test_t_prime_recovery(t_prime):
    x0 = _U_closed(0.1, t_prime)
    label, got = resource_extraction_threshold("log1p", R, A, C, 0.1, x0)
    assert label == "C"
    assert got == pytest.approx(t_prime, abs=1e-8)


def test_resource_errors():
    with pytest.raises(ResourceTooLargeError):
        resource_extraction_threshold("log1p", R, A, C, 0.1, 1e6)
    with pytest.raises(InvalidInputError):
        resource_extraction_threshold("log1p", 0.01, A, C, 0.1, 1.0)
    with pytest.raises(InvalidInputError):
        resource_extraction_threshold("sqrt", R, A, C, 0.1, 1.0)


def test_registry_and_config():
    names = scenario_names()
    assert {"lq_regulator", "ramsey_budget", "resource_C", "embedded_lq"} <= set(names)
    assert set(names) <= set(load_config())
    with pytest.raises(ScenarioNotFoundError):
        get_scenario("nope")
    cfg = scenario_config("lq_regulator", N=32, tol_abs=None)
    assert cfg["N"] == 32 and cfg["tol_abs"] == 1e-6 and cfg["gamma"] == 0.5
    with pytest.raises(InvalidInputError):
        scenario_config("lq_regulator", N=4)


@pytest.mark.parametrize("name", scenario_names())
def test_scenario_matches_expected(name):
    res = run_scenario(name, N=128)
    assert res.matches_expected(), (res.mismatches(), res.report.summary())


def test_resource_B_rejected_by_feasibility():
    res = run_scenario("resource_B", N=64)
    assert not res.report.passed
    assert "feasibility" in res.report.failed()


def test_ramsey_references():
    res = run_scenario("ramsey_budget", N=64)
    d = res.deltas
    assert d["value"]["value"] == pytest.approx(2.5, abs=1e-5)
    assert d["mu_infinity"]["value"] == pytest.approx(0.5, abs=1e-6)
    assert res.adjoint.lambda0 == 1.0
