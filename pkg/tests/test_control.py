import math

import numpy as np
import pytest

from erratic2bsde.claims import decompose_claim
from erratic2bsde.control import (ControlSpec, check_isaacs, driver_f,
                                  estimate_objective, hamiltonian_inf_sup,
                                  hamiltonian_sup_sup, solve_control_value,
                                  solve_robust_value)
from erratic2bsde.default_model import IntensityModel
from erratic2bsde.sde import TimeGrid

LAM0 = IntensityModel.constant(0.0)
QUAD = decompose_claim("terminal_g", g=lambda t, x: np.asarray(x) ** 2)


def _quad_cost_spec(a_n=5):
    return ControlSpec(
        a_grid=tuple(np.linspace(0.0, 1.0, a_n)),
        b_grid=(0.1, 0.3),
        mu=lambda t, x, a, b: a * np.ones(np.shape(x)),
        c=lambda t, x, a, b: a * a * np.ones(np.shape(x)),
    )


def test_driver_f_direct_substitution():
    spec = ControlSpec(a_grid=(0.5,), b_grid=(0.2,),
                       mu=lambda t, x, a, b: a * np.ones(np.shape(x)),
                       c=lambda t, x, a, b: a * a * np.ones(np.shape(x)))
    val = driver_f(spec, 0.0, 1.0, 0.0, 1.0, 0.5, 0.5, 0.2, 1.0)
    assert float(val) == pytest.approx(0.75)
    zero_spec = ControlSpec(a_grid=(0.0,), b_grid=(0.2,))
    assert float(driver_f(zero_spec, 0, 1, 0, 0, 0, 0, 0.2, 0)) == 0.0
    k_spec = ControlSpec(a_grid=(0.0,), b_grid=(0.2,), k=0.05)
    assert float(driver_f(k_spec, 0, 1, 2.0, 0, 0, 0, 0.2, 0)) == \
        pytest.approx(-0.1)


def test_hamiltonian_sup_sup_quadratic_max():
    spec = _quad_cost_spec()
    val, a_s, b_s = hamiltonian_sup_sup(spec, 0.0, 1.0, 0.0, 1.0, 0.5,
                                        1.0, 0.09)
    assert val == pytest.approx(0.25 + 0.5)
    assert a_s == pytest.approx(0.5)
    assert b_s == pytest.approx(0.3)


def test_hamiltonian_boundary_max_at_zero():
    spec = _quad_cost_spec()
    val, a_s, _ = hamiltonian_sup_sup(spec, 0.0, 1.0, 0.0, -1.0, 0.0,
                                      0.0, 0.09)
    # sup_a {-a - a^2} on [0, 1] sits at a = 0
    assert val == pytest.approx(0.0)
    assert a_s == pytest.approx(0.0)


def test_vol_matching_set_tolerance():
    spec = ControlSpec(a_grid=(0.0,), b_grid=(0.1, 0.3))
    assert spec.vol_matching_set(0.0, 1.0, 0.09) == [0.3]
    assert spec.vol_matching_set(0.0, 1.0, 0.01) == [0.1]
    with pytest.raises(ValueError):
        hamiltonian_sup_sup(spec, 0, 1, 0, 0, 0, 0, 5.0)


def test_inf_sup_reduces_on_singleton():
    spec = _quad_cost_spec()
    sup = hamiltonian_sup_sup(spec, 0.0, 1.0, 0.0, 1.0, 0.5, 1.0, 0.09)
    inf = hamiltonian_inf_sup(spec, 0.0, 1.0, 0.0, 1.0, 0.5, 1.0, 0.09)
    assert inf == sup


def test_isaacs_decoupled_passes():
    spec = _quad_cost_spec()
    probes = [(0.3, 1.0, 0.1, 1.0, 0.5, 1.0, 0.09),
              (0.5, 1.0, -1.0, 0.3, 0.2, 0.5, 0.01)]
    rep = check_isaacs(spec, probes)
    assert rep.passed
    assert rep.max_gap <= 1e-9


def test_isaacs_matrix_game_fails_with_gap_two():
    # f = a * b on {-1, 1}^2, encoded through the drift slot
    spec = ControlSpec(a_grid=(-1.0, 1.0), b_grid=(1.0, 2.0),
                       mu=lambda t, x, a, b: a * (1.0 if b == 1.0 else -1.0)
                       * np.ones(np.shape(x)),
                       tol_sigma=10.0)
    rep = check_isaacs(spec, [(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0)])
    assert not rep.passed
    assert rep.max_gap == pytest.approx(2.0, abs=1e-12)


def test_argmax_invariant_under_common_scaling():
    # sup_a {kappa a z - kappa a^2}: the argmax z/2 ignores kappa
    for kappa in (1.0, 3.0):
        spec = ControlSpec(
            a_grid=tuple(np.linspace(0.0, 1.0, 201)), b_grid=(0.3,),
            mu=lambda t, x, a, b, s=kappa: s * a * np.ones(np.shape(x)),
            c=lambda t, x, a, b, s=kappa: s * a * a * np.ones(np.shape(x)))
        _, a_s, _ = hamiltonian_sup_sup(spec, 0.0, 1.0, 0.0, 0.8, 0.0,
                                        0.0, 0.09)
        assert a_s == pytest.approx(0.4, abs=0.005)


def test_robust_refuses_on_isaacs_failure():
    spec = ControlSpec(a_grid=(-1.0, 1.0), b_grid=(1.0, 2.0),
                       mu=lambda t, x, a, b: a * (1.0 if b == 1.0 else -1.0)
                       * np.ones(np.shape(x)),
                       tol_sigma=10.0)
    out = solve_robust_value(spec, QUAD, LAM0, TimeGrid(0.0, 1.0, 10),
                             n_paths=200, seed=0, basis_degree=1)
    assert out.value is None
    assert not out.isaacs.passed
    assert "Isaacs" in out.diagnostics["reason"]


def test_degenerate_control_reduces_to_bsde():
    spec = ControlSpec(a_grid=(0.0,), b_grid=(0.2,))
    cv = solve_control_value(spec, QUAD, LAM0, TimeGrid(0.0, 1.0, 25),
                             4000, 1, 2, mc_check=False)
    # single sigma, zero drift/cost: the plain martingale value of x^2
    assert cv.value == pytest.approx(1.04, abs=0.02)


def test_estimate_objective_trivial_cases():
    grid = TimeGrid(0.0, 1.0, 50)
    const_a = lambda t, x: np.zeros(np.shape(x))  # noqa: E731
    const_b = lambda t, x: np.full(np.shape(x), 0.2)  # noqa: E731

    # pure cost integral: J = -T
    spec = ControlSpec(a_grid=(0.0,), b_grid=(0.2,), c=1.0)
    zero_claim = decompose_claim("terminal_g", g=lambda x: np.zeros(np.shape(x)))
    j, se = estimate_objective(spec, const_a, const_b, zero_claim, LAM0,
                               grid, 500, 3)
    assert j == pytest.approx(-1.0, abs=1e-9)

    # pure discount: J = exp(-r T)
    spec_r = ControlSpec(a_grid=(0.0,), b_grid=(0.2,), k=0.5)
    one_claim = decompose_claim("terminal_g", g=lambda x: np.ones(np.shape(x)))
    j, _ = estimate_objective(spec_r, const_a, const_b, one_claim, LAM0,
                              grid, 500, 3)
    assert j == pytest.approx(math.exp(-0.5), abs=2e-3)

    # survival claim under unit hazard: J = exp(-1) up to MC error
    spec_0 = ControlSpec(a_grid=(0.0,), b_grid=(0.2,))
    surv = decompose_claim("survival")
    j, se = estimate_objective(spec_0, const_a, const_b, surv,
                               IntensityModel.constant(1.0), grid, 4000, 3)
    assert abs(j - math.exp(-1.0)) < 4 * se
