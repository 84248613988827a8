"""Independent oracles: trinomial lattice and closed-form values.

These share no arithmetic with the Monte Carlo or finite-difference
solvers; they exist so that every golden value in the test suite is
computed twice along genuinely different routes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["TreeOracle", "tree_value", "ode_oracle"]


@dataclass(frozen=True)
class TreeOracle:
    """Recombining trinomial lattice for the uncertain-volatility value.

    At each node the one-step variance is chosen from the endpoints of the
    band; the spacing is set so both variance choices give admissible
    branch probabilities.
    """

    n_levels: int
    vol_band: tuple
    x0: float
    T: float
    payoff: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        lo, hi = self.vol_band
        if not (0 < lo <= hi):
            raise ValueError("volatility band must satisfy 0 < lo <= hi")
        if self.n_levels < 1:
            raise ValueError("need at least one level")


def tree_value(oracle: TreeOracle, mode: str = "sup") -> float:
    """Backward dynamic program over the lattice.

    value(node) = max (or min) over {sigma_min, sigma_max} of the one-step
    expectation with that variance.  Converges to the uncertain-volatility
    value as n_levels grows; exact for quadratic payoffs at any depth
    because the branch probabilities match the second moment exactly.
    """
    if mode not in ("sup", "inf"):
        raise ValueError("mode must be 'sup' or 'inf'")
    n = oracle.n_levels
    dt = oracle.T / n
    lo, hi = oracle.vol_band
    # h chosen so p_mid >= 0 for the largest variance
    h = hi * math.sqrt(1.5 * dt)
    xs = oracle.x0 + h * np.arange(-n, n + 1)
    v = np.asarray(oracle.payoff(xs), dtype=float)
    pick = np.maximum if mode == "sup" else np.minimum
    for _level in range(n - 1, -1, -1):
        vals = None
        for sig in (lo, hi):
            p = sig * sig * dt / (2.0 * h * h)
            cand = p * v[2:] + p * v[:-2] + (1.0 - 2.0 * p) * v[1:-1]
            vals = cand if vals is None else pick(vals, cand)
        v = vals
    return float(v[0])


def ode_oracle(family: str, **params) -> float:
    """Closed-form reference values for the golden scenarios.

    family:
        "survival"        -- exp(-lambda T)
        "discount"        -- exp(-r T)
        "bsb_quadratic"   -- x0^2 + sigma^2 T
        "jump_quadratic"  -- x0^2 + sigma^2 (1 - exp(-lambda T)) / lambda
    """
    if family == "survival":
        return math.exp(-params["lam"] * params["T"])
    if family == "discount":
        return math.exp(-params["r"] * params["T"])
    if family == "bsb_quadratic":
        return params["x0"] ** 2 + params["sigma"] ** 2 * params["T"]
    if family == "jump_quadratic":
        lam, sig, T = params["lam"], params["sigma"], params["T"]
        if lam == 0.0:
            return params["x0"] ** 2 + sig * sig * T
        return params["x0"] ** 2 + sig * sig * (1.0 - math.exp(-lam * T)) / lam
    raise ValueError(f"unknown oracle family {family!r}")
