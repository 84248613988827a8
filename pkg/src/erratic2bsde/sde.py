"""State-process simulation under a finite family of volatility regimes.

Each member of a MeasureFamily fixes a volatility control (and optionally a
drift control); paths are simulated by Euler-Maruyama and carry the model
quadratic-variation density a_hat alongside a realized-variance estimator
for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "TimeGrid",
    "MeasureSpec",
    "MeasureFamily",
    "Coefficients",
    "PathBundle",
    "simulate_paths",
    "estimate_quadratic_variation",
    "build_measure_family",
]


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    n_steps: int

    def __post_init__(self):
        if not self.T > self.t0:
            raise ValueError("grid requires T > t0")
        if self.n_steps < 1:
            raise ValueError("grid requires at least one step")

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.T, self.n_steps + 1)

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t0, self.T, self.n_steps * factor)


@dataclass(frozen=True)
class MeasureSpec:
    """One family member: volatility control b, optional drift control a."""

    sigma_ctrl: float
    drift_ctrl: Optional[float] = None

    def __post_init__(self):
        if not self.sigma_ctrl > 0:
            raise ValueError("volatility control must be strictly positive")


@dataclass(frozen=True)
class MeasureFamily:
    members: tuple

    def __post_init__(self):
        if not self.members:
            raise ValueError("measure family must be non-empty")

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i):
        return self.members[i]

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([m.sigma_ctrl for m in self.members])


ScalarOrFn = Union[float, Callable]


@dataclass(frozen=True)
class Coefficients:
    """Drift/volatility maps.  Scalars are promoted to constant functions.

    mu(t, x, a) and sigma(t, x, b) must be vectorised over x.  Defaults give
    the driftless SDE with volatility equal to the measure's control b.
    """

    mu: ScalarOrFn = 0.0
    sigma: ScalarOrFn = field(default=None)

    def mu_at(self, t, x, a):
        if callable(self.mu):
            return np.asarray(self.mu(t, np.asarray(x), a), dtype=float)
        return np.full(np.shape(x), float(self.mu))

    def sigma_at(self, t, x, b):
        if self.sigma is None:
            return np.full(np.shape(x), float(b))
        if callable(self.sigma):
            return np.asarray(self.sigma(t, np.asarray(x), b), dtype=float)
        return np.full(np.shape(x), float(self.sigma))


@dataclass
class PathBundle:
    """Simulated paths under one measure.

    x:     (n_paths, n_steps+1) state values
    w:     (n_paths, n_steps) Brownian increments
    a_hat: (n_paths, n_steps) model quadratic-variation density sigma^2
    """

    grid: TimeGrid
    spec: MeasureSpec
    x: np.ndarray
    w: np.ndarray
    a_hat: np.ndarray
    measure_index: int
    seed: int
    coeffs: "Coefficients" = field(default_factory=lambda: Coefficients())

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]


def simulate_paths(grid: TimeGrid, spec: MeasureSpec,
                   coeffs: Optional[Coefficients], n_paths: int, seed: int,
                   measure_index: int = 0, x0: float = 1.0) -> PathBundle:
    """Euler-Maruyama paths of dX = mu dt + sigma dW under one measure.

    Deterministic given (seed, spec, grid): the generator is freshly seeded
    per call.  Raises on non-positive volatility or NaN propagation.
    """
    if n_paths < 1:
        raise ValueError("need at least one path")
    coeffs = coeffs if coeffs is not None else Coefficients()
    rng = np.random.default_rng(seed)
    n = grid.n_steps
    dt = grid.dt
    times = grid.times
    x = np.empty((n_paths, n + 1))
    w = rng.standard_normal((n_paths, n)) * np.sqrt(dt)
    a_hat = np.empty((n_paths, n))
    x[:, 0] = x0
    b = spec.sigma_ctrl
    a = spec.drift_ctrl
    for k in range(n):
        sig = coeffs.sigma_at(times[k], x[:, k], b)
        if np.any(sig <= 0):
            raise ValueError(f"non-positive volatility at step {k}")
        mu = coeffs.mu_at(times[k], x[:, k], a)
        x[:, k + 1] = x[:, k] + mu * dt + sig * w[:, k]
        a_hat[:, k] = sig ** 2
        bad = np.flatnonzero(~np.isfinite(x[:, k + 1]))
        if bad.size:
            raise FloatingPointError(
                f"NaN/inf state at step {k + 1}, path index {bad[0]}")
    return PathBundle(grid=grid, spec=spec, x=x, w=w, a_hat=a_hat,
                      measure_index=measure_index, seed=seed, coeffs=coeffs)


def estimate_quadratic_variation(bundle: PathBundle) -> np.ndarray:
    """Realized-variance estimate (dX)^2/dt per step, for diagnostics."""
    if bundle.grid.n_steps < 2:
        raise ValueError("need at least two steps for a realized variance")
    dx = np.diff(bundle.x, axis=1)
    return dx ** 2 / bundle.grid.dt


def build_measure_family(band, n_members: int,
                         drift_ctrl: Optional[float] = None) -> MeasureFamily:
    """Uniform grid of constant-volatility members spanning [lo, hi]."""
    lo, hi = float(band[0]), float(band[1])
    if not (0 < lo <= hi):
        raise ValueError("volatility band must satisfy 0 < lo <= hi")
    if n_members < 1:
        raise ValueError("need at least one member")
    sig = np.linspace(lo, hi, n_members).tolist()
    return MeasureFamily(tuple(MeasureSpec(s, drift_ctrl) for s in sig))
