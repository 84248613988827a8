"""Terminal claims at the uncertain horizon and their two-part split.

A claim paid at T ^ tau decomposes into a pre-default part xi_b (a function
of the full path, collected if the horizon T arrives first) and an
at-default process xi_a(t, .) (collected at tau when tau <= T).  Claims are
specified in canonical forms for which the split is constructive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = ["Claim", "decompose_claim", "evaluate_claim", "UTILITIES"]


def _identity(v):
    return v


def _exp_neg(v):
    return -np.exp(-np.asarray(v, dtype=float))


UTILITIES = {"identity": _identity, "exp_neg": _exp_neg}


@dataclass(frozen=True)
class Claim:
    """Decomposed claim: xi = xi_b 1_{T<tau} + xi_a(tau) 1_{tau<=T}.

    xi_b consumes the full path matrix (n_paths, n_times) plus the horizon
    T and returns one value per path; xi_a(t, x_t) consumes the state at t
    only, which keeps it predictable.  The utility is applied componentwise
    on top of both parts.
    """

    xi_b: Callable[[np.ndarray, float], np.ndarray]
    xi_a: Callable[[float, np.ndarray], np.ndarray]
    utility: Callable = field(default=_identity, compare=False)
    kind: str = "custom"

    def terminal(self, x_paths: np.ndarray, horizon: float) -> np.ndarray:
        """Utility of xi_b on a (n_paths, n_times) path matrix."""
        raw = np.asarray(self.xi_b(np.atleast_2d(x_paths), horizon), dtype=float)
        return np.asarray(self.utility(raw), dtype=float)

    def predefault(self, t: float, x_t) -> np.ndarray:
        """Utility of xi_a(t, x_t), vectorised over states."""
        raw = np.asarray(self.xi_a(t, np.asarray(x_t, dtype=float)), dtype=float)
        return np.asarray(self.utility(raw), dtype=float)


def decompose_claim(kind: str, *, strike: float = 0.0,
                    g: Optional[Callable] = None,
                    utility: str = "identity") -> Claim:
    """Build the (xi_b, xi_a) pair for a canonical claim form.

    kind:
        "survival"   -- xi = 1_{tau > T}: xi_b = 1, xi_a = 0.
        "terminal_g" -- xi = g(t, X_t) at t = T ^ tau: xi_b = g(T, X_T),
                        xi_a(t) = g(t, X_t); ``g`` is (t, x) -> value or,
                        for convenience, x -> value.
        "call"       -- g(t, x) = max(x - strike, 0).
    """
    if utility not in UTILITIES:
        raise ValueError(f"unknown utility {utility!r}")
    phi = UTILITIES[utility]
    if kind == "survival":
        return Claim(
            xi_b=lambda xs, T: np.ones(xs.shape[0]),
            xi_a=lambda t, x: np.zeros(np.shape(x)),
            utility=phi, kind=kind,
        )
    if kind == "call":
        k = float(strike)
        gts = lambda t, x: np.maximum(np.asarray(x) - k, 0.0)  # noqa: E731
    elif kind == "terminal_g":
        if g is None:
            raise ValueError("terminal_g claim needs a payoff function g")
        gts = _as_time_space(g)
    else:
        raise ValueError(f"unsupported claim form {kind!r}")

    return Claim(
        xi_b=lambda xs, T: np.asarray(gts(T, xs[:, -1]), dtype=float),
        xi_a=lambda t, x: np.asarray(gts(t, x), dtype=float),
        utility=phi, kind=kind,
    )


def _as_time_space(g):
    """Accept g(x) or g(t, x); normalise to g(t, x)."""
    try:
        g(0.0, np.array([1.0]))
        return g
    except TypeError:
        return lambda t, x: g(x)


def evaluate_claim(claim: Claim, path, tau: float, horizon: float) -> float:
    """Payoff of a decomposed claim on one realised (path, tau).

    ``path`` is (times, values) on [0, horizon]; ``tau`` may be the +inf
    sentinel.  Evaluates Phi(xi_b) 1_{T<tau} + Phi(xi_a(tau)) 1_{tau<=T}
    with the state at tau obtained by linear interpolation.
    """
    times, values = path
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if math.isfinite(tau) and tau <= horizon:
        x_tau = float(np.interp(tau, times, values))
        return float(claim.predefault(tau, np.array([x_tau]))[0])
    return float(claim.terminal(values[None, :], horizon)[0])
