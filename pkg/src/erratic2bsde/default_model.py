"""Exogenous default time: intensity, hazard, survival and sampling.

The default time tau is modelled through a nonnegative, bounded intensity
process lambda.  Its time integral Lambda gives the survival probability
exp(-Lambda_t), and tau itself is sampled by inverting Lambda against a
unit-rate exponential draw.  The same intensity applies under every measure
of a family, so all outputs here are measure-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "IntensityModel",
    "DefaultSample",
    "cumulative_hazard",
    "survival_probability",
    "sample_default",
    "sample_defaults",
]

# Intensity kinds
CONSTANT = "constant"
PIECEWISE = "piecewise"
STATE_FUNCTIONAL = "state"

_KINDS = (CONSTANT, PIECEWISE, STATE_FUNCTIONAL)


@dataclass(frozen=True)
class IntensityModel:
    """Hazard-rate model for the default time.

    kind:
        "constant"  -- a single nonnegative rate.
        "piecewise" -- deterministic piecewise-constant rate; ``times`` are
                       the left endpoints of each segment (times[0] == 0).
        "state"     -- bounded functional (t, x) -> rate evaluated along a
                       simulated state path.
    cap:
        Declared upper bound for the rate.  Rates above the cap are
        rejected (constant/piecewise) or clipped (state functional), which
        keeps the hazard integrable on any horizon.
    """

    kind: str
    rate: float = 0.0
    times: tuple = ()
    rates: tuple = ()
    func: Optional[Callable[[float, np.ndarray], np.ndarray]] = field(
        default=None, compare=False
    )
    cap: float = 1e3

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown intensity kind {self.kind!r}")
        if not math.isfinite(self.cap) or self.cap < 0:
            raise ValueError("intensity cap must be finite and nonnegative")
        if self.kind == CONSTANT:
            if self.rate < 0:
                raise ValueError("intensity rate must be nonnegative")
            if self.rate > self.cap:
                raise ValueError("intensity rate exceeds declared cap")
        elif self.kind == PIECEWISE:
            if len(self.times) != len(self.rates) or not self.times:
                raise ValueError("piecewise intensity needs matching times/rates")
            if self.times[0] != 0.0:
                raise ValueError("piecewise intensity must start at t = 0")
            if any(t1 <= t0 for t0, t1 in zip(self.times, self.times[1:])):
                raise ValueError("piecewise breakpoints must be increasing")
            if any(r < 0 for r in self.rates):
                raise ValueError("intensity rates must be nonnegative")
            if any(r > self.cap for r in self.rates):
                raise ValueError("piecewise rate exceeds declared cap")
        else:
            if self.func is None:
                raise ValueError("state-functional intensity needs a callable")

    @staticmethod
    def constant(rate: float, cap: float = 1e3) -> "IntensityModel":
        return IntensityModel(kind=CONSTANT, rate=float(rate), cap=cap)

    @staticmethod
    def piecewise(times: Sequence[float], rates: Sequence[float],
                  cap: float = 1e3) -> "IntensityModel":
        return IntensityModel(
            kind=PIECEWISE, times=tuple(float(t) for t in times),
            rates=tuple(float(r) for r in rates), cap=cap,
        )

    @staticmethod
    def state_functional(func, cap: float = 1e3) -> "IntensityModel":
        return IntensityModel(kind=STATE_FUNCTIONAL, func=func, cap=cap)

    @property
    def is_deterministic(self) -> bool:
        return self.kind != STATE_FUNCTIONAL

    def rate_at(self, t, x=None):
        """Pointwise rate lambda(t, x); ``x`` only consumed by state kind."""
        if self.kind == CONSTANT:
            return self.rate if np.isscalar(t) else np.full(np.shape(t), self.rate)
        if self.kind == PIECEWISE:
            idx = np.searchsorted(self.times, t, side="right") - 1
            idx = np.clip(idx, 0, len(self.rates) - 1)
            out = np.asarray(self.rates)[idx]
            return float(out) if np.isscalar(t) else out
        if x is None:
            raise ValueError("state-functional intensity requires a state value")
        out = np.clip(self.func(t, np.asarray(x)), 0.0, self.cap)
        return out


@dataclass(frozen=True)
class DefaultSample:
    """A sampled default time; ``tau = inf`` encodes no default ever."""

    tau: float
    occurred_before: bool

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("default time must be strictly positive")


def _hazard_on_grid(model: IntensityModel, times: np.ndarray,
                    values: Optional[np.ndarray]) -> np.ndarray:
    """Cumulative hazard at every grid time, left-endpoint quadrature."""
    times = np.asarray(times, dtype=float)
    if model.kind == STATE_FUNCTIONAL:
        if values is None:
            raise ValueError("state-functional intensity requires a path")
        rates = np.array([model.rate_at(t, x) for t, x in zip(times[:-1], values[:-1])])
    else:
        rates = np.asarray(model.rate_at(times[:-1]), dtype=float)
    dt = np.diff(times)
    lam = np.concatenate([[0.0], np.cumsum(rates * dt)])
    return lam


def cumulative_hazard(model: IntensityModel, path, t: float) -> float:
    """Lambda_t = int_0^t lambda_s ds.

    ``path`` is a (times, values) pair and is required iff the model is
    state-functional; deterministic kinds integrate exactly (their rate is
    piecewise constant, so left-endpoint quadrature is exact).
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    if model.kind == CONSTANT:
        return model.rate * t
    if model.kind == PIECEWISE:
        total = 0.0
        for i, (t0, r) in enumerate(zip(model.times, model.rates)):
            t1 = model.times[i + 1] if i + 1 < len(model.times) else math.inf
            if t <= t0:
                break
            total += r * (min(t, t1) - t0)
        return total
    if path is None:
        raise ValueError("state-functional intensity requires a path")
    times, values = path
    times = np.asarray(times, dtype=float)
    if t > times[-1] + 1e-12:
        raise ValueError("time beyond the supplied path horizon")
    lam = _hazard_on_grid(model, times, np.asarray(values, dtype=float))
    return float(np.interp(t, times, lam))


def survival_probability(model: IntensityModel, path, t: float) -> float:
    """P(tau > t | F_t) = exp(-Lambda_t)."""
    return math.exp(-cumulative_hazard(model, path, t))


def sample_default(model: IntensityModel, path, horizon: float,
                   rng) -> DefaultSample:
    """Draw one default time by inverse-hazard sampling.

    tau = inf{t : Lambda_t >= E} with E ~ Exp(1).  When the hazard never
    reaches E before ``horizon`` the sample is the +inf sentinel with
    occurred_before = False.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    e = rng.exponential(1.0)
    tau = _invert_hazard(model, path, horizon, e)
    return DefaultSample(tau=tau, occurred_before=tau <= horizon)


def sample_defaults(model: IntensityModel, paths, horizon: float, n: int,
                    rng) -> np.ndarray:
    """Vectorised draw of ``n`` default times (inf sentinel past horizon).

    ``paths`` may be None (deterministic intensities), a single
    (times, values) pair shared by all draws, or a (times, matrix) pair with
    one row per draw.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    e = rng.exponential(1.0, size=n)
    if model.kind != STATE_FUNCTIONAL or paths is None or np.ndim(paths[1]) == 1:
        return np.array([_invert_hazard(model, paths, horizon, ei) for ei in e])
    times, values = paths
    if values.shape[0] != n:
        raise ValueError("one path row per default draw expected")
    return np.array([
        _invert_hazard(model, (times, values[i]), horizon, e[i]) for i in range(n)
    ])


def _invert_hazard(model: IntensityModel, path, horizon: float, e: float) -> float:
    if model.kind == CONSTANT:
        if model.rate <= 0.0:
            return math.inf
        tau = e / model.rate
        return tau if tau <= horizon else math.inf
    if model.kind == PIECEWISE:
        acc = 0.0
        for i, (t0, r) in enumerate(zip(model.times, model.rates)):
            t1 = model.times[i + 1] if i + 1 < len(model.times) else math.inf
            seg = (min(t1, horizon) - t0)
            if seg <= 0:
                break
            if r > 0 and acc + r * seg >= e:
                return t0 + (e - acc) / r
            acc += max(r, 0.0) * seg
        return math.inf
    times, values = path
    times = np.asarray(times, dtype=float)
    lam = _hazard_on_grid(model, times, np.asarray(values, dtype=float))
    if lam[-1] < e or times[-1] < horizon:
        # hazard exhausted on the observable window
        if lam[-1] < e:
            return math.inf
    idx = int(np.searchsorted(lam, e, side="left"))
    idx = min(idx, len(times) - 1)
    t0, t1 = times[idx - 1], times[idx]
    l0, l1 = lam[idx - 1], lam[idx]
    tau = t0 if l1 == l0 else t0 + (e - l0) / (l1 - l0) * (t1 - t0)
    return tau if tau <= horizon else math.inf
