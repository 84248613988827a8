import math

import numpy as np
import pytest

from erratic2bsde.oracles import TreeOracle, ode_oracle, tree_value


def _quad(x):
    return np.asarray(x) ** 2


def test_tree_martingale_payoff_returns_x0():
    oracle = TreeOracle(50, (0.1, 0.3), 1.7, 1.0, lambda x: np.asarray(x))
    assert tree_value(oracle, "sup") == pytest.approx(1.7, abs=1e-12)
    assert tree_value(oracle, "inf") == pytest.approx(1.7, abs=1e-12)


def test_tree_quadratic_matches_closed_form():
    oracle = TreeOracle(200, (0.1, 0.3), 1.0, 1.0, _quad)
    sup = tree_value(oracle, "sup")
    inf = tree_value(oracle, "inf")
    assert sup == pytest.approx(ode_oracle("bsb_quadratic", x0=1.0, sigma=0.3,
                                           T=1.0), abs=5e-3)
    assert inf == pytest.approx(ode_oracle("bsb_quadratic", x0=1.0, sigma=0.1,
                                           T=1.0), abs=5e-3)


def test_tree_self_convergence_on_call():
    payoff = lambda x: np.maximum(np.asarray(x) - 1.0, 0.0)  # noqa: E731
    vals = {n: tree_value(TreeOracle(n, (0.1, 0.3), 1.0, 1.0, payoff), "sup")
            for n in (50, 100, 200)}
    assert abs(vals[50] - vals[200]) > abs(vals[100] - vals[200])


def test_tree_validation():
    with pytest.raises(ValueError):
        TreeOracle(0, (0.1, 0.3), 1.0, 1.0, _quad)
    with pytest.raises(ValueError):
        TreeOracle(10, (0.0, 0.3), 1.0, 1.0, _quad)
    oracle = TreeOracle(10, (0.1, 0.3), 1.0, 1.0, _quad)
    with pytest.raises(ValueError):
        tree_value(oracle, "max")


def test_ode_oracle_families():
    assert ode_oracle("survival", lam=1.0, T=1.0) == pytest.approx(
        math.exp(-1.0))
    assert ode_oracle("discount", r=0.05, T=2.0) == pytest.approx(
        math.exp(-0.1))
    assert ode_oracle("bsb_quadratic", x0=1.0, sigma=0.3, T=1.0) == \
        pytest.approx(1.09)
    val = ode_oracle("jump_quadratic", x0=1.0, sigma=0.3, T=1.0, lam=1.0)
    assert val == pytest.approx(1.0 + 0.09 * (1 - math.exp(-1.0)))
    # lam -> 0 limit recovers the BSB quadratic
    assert ode_oracle("jump_quadratic", x0=1.0, sigma=0.3, T=1.0, lam=0.0) == \
        pytest.approx(1.09)
    with pytest.raises(ValueError):
        ode_oracle("rainbow")
