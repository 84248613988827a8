import math

import numpy as np
import pytest

from erratic2bsde.bsde import Driver
from erratic2bsde.claims import Claim, decompose_claim
from erratic2bsde.default_model import IntensityModel
from erratic2bsde.sde import MeasureFamily, MeasureSpec, TimeGrid, \
    build_measure_family
from erratic2bsde.second_order import (assemble_erratic_solution, check_dpp,
                                       check_minimality, compare_solutions,
                                       solve_auxiliary_2bsde)

LAM0 = IntensityModel.constant(0.0)
LAM1 = IntensityModel.constant(1.0)
JUMP_DRIVER = Driver(lambda t, x, y, z, u, a, m, lam: -lam * u)
QUAD = decompose_claim("terminal_g", g=lambda t, x: np.asarray(x) ** 2)
GRID = TimeGrid(0.0, 1.0, 25)
FAMILY = build_measure_family((0.1, 0.3), 3)


def test_mode_validation():
    with pytest.raises(ValueError):
        solve_auxiliary_2bsde(FAMILY, QUAD, JUMP_DRIVER, LAM0, GRID, "max")


def test_sup_envelope_dominates_every_member():
    sol = solve_auxiliary_2bsde(FAMILY, QUAD, JUMP_DRIVER, LAM0, GRID, "sup",
                                4000, 1, 2)
    # K is nonnegative and nondecreasing for each measure
    for k_m in sol.k:
        assert np.all(k_m >= 0)
        assert np.all(np.diff(k_m, axis=1) >= -1e-12)
    assert sol.clamp_mass < 1e-8
    # the envelope picked the largest volatility for a convex payoff
    assert sol.argopt[0] == len(FAMILY) - 1


def test_sup_vs_inf_ordering():
    sup = solve_auxiliary_2bsde(FAMILY, QUAD, JUMP_DRIVER, LAM0, GRID, "sup",
                                4000, 1, 2)
    inf = solve_auxiliary_2bsde(FAMILY, QUAD, JUMP_DRIVER, LAM0, GRID, "inf",
                                4000, 1, 2)
    assert inf.y0 <= sup.y0 + 1e-9


def test_single_member_family_has_zero_k():
    fam = MeasureFamily((MeasureSpec(0.2),))
    sol = solve_auxiliary_2bsde(fam, QUAD, JUMP_DRIVER, LAM0, GRID, "sup",
                                2000, 2, 2)
    for k_m in sol.k:
        assert np.all(np.abs(k_m) < 1e-10)
    rep = check_minimality(sol)
    assert rep.passed


def test_minimality_on_convex_payoff():
    sol = solve_auxiliary_2bsde(FAMILY, QUAD, JUMP_DRIVER, LAM0, GRID, "sup",
                                8000, 3, 2)
    rep = check_minimality(sol)
    assert rep.passed
    assert rep.argmin_measure == len(FAMILY) - 1
    # the wrong-measure K mean is visibly larger
    assert rep.k_terminal_means[0] > 5 * max(rep.min_mean, 1e-6)


def test_envelope_at_matches_stored_values():
    sol = solve_auxiliary_2bsde(FAMILY, QUAD, JUMP_DRIVER, LAM0, GRID, "sup",
                                2000, 4, 2)
    m = sol.argopt[10]
    xs = sol.bundles[m].x[:50, 10]
    env = sol.envelope_at(10, xs)
    assert np.allclose(env, sol.y[m][:50, 10], atol=1e-8)


def test_erratic_assembly_pastes_at_default():
    sol = solve_auxiliary_2bsde(FAMILY, QUAD, JUMP_DRIVER, LAM1, GRID, "sup",
                                1000, 5, 2)
    err = assemble_erratic_solution(sol, QUAD, intensity=LAM1, seed=11)
    times = GRID.times
    for m in range(len(FAMILY)):
        defaulted = np.isfinite(err.tau[m]) & (err.tau[m] <= 1.0)
        if not defaulted.any():
            continue
        i = int(np.flatnonzero(defaulted)[0])
        j = int(np.searchsorted(times, err.tau[m][i]))
        x_tau = np.interp(err.tau[m][i], times, sol.bundles[m].x[i])
        assert err.y[m][i, j] == pytest.approx(x_tau ** 2)
        assert np.all(err.z[m][i, j:] == 0.0)
        assert np.all(err.u[m][i, j:] == 0.0)
        break
    # at t = 0 nothing has defaulted, so the pasted value is the envelope
    assert err.y0 == pytest.approx(
        np.mean([y[:, 0].mean() for y in sol.y]), abs=1e-9)


def test_dpp_consistency_small():
    rep = check_dpp(FAMILY, QUAD, JUMP_DRIVER, LAM0, TimeGrid(0.0, 1.0, 20),
                    0.5, "sup", 4000, 6, 2)
    assert rep.passed
    assert rep.t_mid == pytest.approx(0.5)


def test_dpp_tmid_validation():
    with pytest.raises(ValueError):
        check_dpp(FAMILY, QUAD, JUMP_DRIVER, LAM0, GRID, 1.5, "sup", 500, 0, 2)


def _shared_xi_a(t, x):
    return np.zeros(np.shape(x))


def test_comparison_ordered_pair_passes():
    claim_a = Claim(xi_b=lambda xs, T: xs[:, -1] ** 2 + 0.2, xi_a=_shared_xi_a)
    claim_b = Claim(xi_b=lambda xs, T: xs[:, -1] ** 2, xi_a=_shared_xi_a)
    drv_a = Driver(lambda t, x, y, z, u, a, m, lam: -0.1 * np.ones(np.shape(y)))
    drv_b = Driver(lambda t, x, y, z, u, a, m, lam: np.zeros(np.shape(y)))
    rep = compare_solutions(claim_a, claim_b, drv_a, drv_b, FAMILY, LAM0,
                            GRID, "sup", 1000, 7, 2)
    assert rep.precondition_ok
    assert rep.passed
    assert rep.y0_gap > 0


def test_comparison_rejects_unordered_terminal_data():
    claim_a = Claim(xi_b=lambda xs, T: xs[:, -1] ** 2 - 1.0, xi_a=_shared_xi_a)
    claim_b = Claim(xi_b=lambda xs, T: xs[:, -1] ** 2, xi_a=_shared_xi_a)
    rep = compare_solutions(claim_a, claim_b, Driver.zero(), Driver.zero(),
                            FAMILY, LAM0, GRID, "sup", 500, 8, 2)
    assert not rep.precondition_ok
    assert not rep.passed


def test_comparison_rejects_mismatched_xi_a():
    claim_a = Claim(xi_b=lambda xs, T: xs[:, -1] ** 2 + 1.0,
                    xi_a=lambda t, x: np.ones(np.shape(x)))
    claim_b = Claim(xi_b=lambda xs, T: xs[:, -1] ** 2, xi_a=_shared_xi_a)
    rep = compare_solutions(claim_a, claim_b, Driver.zero(), Driver.zero(),
                            FAMILY, LAM0, GRID, "sup", 500, 9, 2)
    assert not rep.precondition_ok
