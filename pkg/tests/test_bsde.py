import math

import numpy as np
import pytest

from erratic2bsde.bsde import (Driver, closed_form_linear_bsde,
                               probe_lipschitz, solve_brownian_bsde,
                               solve_jump_bsde)
from erratic2bsde.claims import decompose_claim
from erratic2bsde.default_model import IntensityModel
from erratic2bsde.sde import MeasureSpec, TimeGrid, simulate_paths

LAM0 = IntensityModel.constant(0.0)
LAM1 = IntensityModel.constant(1.0)
JUMP_DRIVER = Driver(lambda t, x, y, z, u, a, m, lam: -lam * u)


def _bundle(n_steps=50, n_paths=4000, sigma=0.2, seed=0):
    return simulate_paths(TimeGrid(0.0, 1.0, n_steps), MeasureSpec(sigma),
                          None, n_paths, seed)


def test_zero_driver_reproduces_martingale():
    bundle = _bundle(n_paths=10000, seed=1)
    claim = decompose_claim("terminal_g", g=lambda x: np.asarray(x))
    sol = solve_brownian_bsde(bundle, claim, Driver.zero(), LAM0, 3)
    assert sol.y0 == pytest.approx(1.0, abs=1e-2)
    # the hedge against dX of a unit-delta claim is 1
    assert np.all(np.abs(sol.z.mean(axis=0) - 1.0) < 0.05)


def test_defaultable_bond_value():
    bundle = _bundle(n_steps=400, n_paths=2000, seed=2)
    claim = decompose_claim("survival")
    sol = solve_brownian_bsde(bundle, claim, JUMP_DRIVER, LAM1, 2)
    assert sol.y0 == pytest.approx(math.exp(-1.0), abs=1e-3)


def test_linear_y_driver_discounts():
    # f = +r y under the convention Y_k = E[Y_{k+1}] - dt f gives e^{-rT}
    bundle = _bundle(n_steps=200, n_paths=1000, seed=3)
    claim = decompose_claim("terminal_g", g=lambda x: np.ones(np.shape(x)))
    driver = Driver(lambda t, x, y, z, u, a, m, lam: 0.5 * y)
    sol = solve_brownian_bsde(bundle, claim, driver, LAM0, 1)
    assert sol.y0 == pytest.approx(math.exp(-0.5), abs=2e-3)


def test_closed_form_linear_bsde():
    assert closed_form_linear_bsde(0.0, 1.0, 1.0, 1.0) == pytest.approx(
        math.exp(-1.0))
    assert closed_form_linear_bsde(0.0, 0.0, 1.0, 2.5) == pytest.approx(2.5)
    # recovery xi_a = 1 makes the bond worth par
    assert closed_form_linear_bsde(0.0, 1.0, 1.0, 1.0, xi_a=1.0) == \
        pytest.approx(1.0)


def test_degree_fallback_on_degenerate_states():
    # at step 0 every path sits at x0: the design matrix is rank one
    bundle = _bundle(n_steps=5, n_paths=200)
    claim = decompose_claim("terminal_g", g=lambda x: np.asarray(x))
    sol = solve_brownian_bsde(bundle, claim, Driver.zero(), LAM0, 3)
    assert np.all(np.isfinite(sol.y))
    assert np.all(np.isfinite(sol.z))


def test_basis_degree_validation():
    bundle = _bundle(n_steps=5, n_paths=50)
    claim = decompose_claim("survival")
    with pytest.raises(ValueError):
        solve_brownian_bsde(bundle, claim, Driver.zero(), LAM0, -1)


def test_jump_bsde_pasting():
    bundle = _bundle(n_steps=50, n_paths=500, seed=4)
    claim = decompose_claim("terminal_g", g=lambda t, x: np.asarray(x) ** 2)
    sol = solve_jump_bsde(bundle, claim, JUMP_DRIVER, LAM1, seed=99)
    times = bundle.grid.times
    defaulted = np.isfinite(sol.tau) & (sol.tau <= 1.0)
    assert defaulted.any() and (~defaulted).any()
    i = int(np.flatnonzero(defaulted)[0])
    j_after = int(np.searchsorted(times, sol.tau[i]))
    x_tau = np.interp(sol.tau[i], times, bundle.x[i])
    # Y frozen at xi_a(tau, X_tau), Z and U killed from tau on
    assert sol.y[i, j_after] == pytest.approx(x_tau ** 2)
    assert sol.y[i, -1] == pytest.approx(x_tau ** 2)
    assert np.all(sol.z[i, j_after:] == 0.0)
    assert np.all(sol.u[i, j_after:] == 0.0)
    # pre-default jump size is xi_a - Y
    k = max(j_after - 2, 0)
    if times[k] < sol.tau[i]:
        expected = bundle.x[i, k] ** 2 - np.nan_to_num(sol.y[i, k])
        # u is computed from the pre-default y, which equals sol.y before tau
        assert sol.u[i, k] == pytest.approx(expected)


def test_jump_bsde_requires_tau_or_seed():
    bundle = _bundle(n_steps=10, n_paths=50)
    claim = decompose_claim("survival")
    with pytest.raises(ValueError):
        solve_jump_bsde(bundle, claim, JUMP_DRIVER, LAM1)


def test_probe_lipschitz_flags_affine_driver():
    driver = Driver(lambda t, x, y, z, u, a, m, lam: -2.0 * y + 0.5 * z)
    cy, cz, cu = probe_lipschitz(driver, 7)
    assert cy == pytest.approx(2.0, rel=1e-9)
    assert cu == pytest.approx(0.0, abs=1e-12)
