"""Markovian route: bi-conjugate Hamiltonian and monotone explicit scheme.

The fully nonlinear terminal-value problem

    d_t v + Hhat(t, x, v, grad v, g - v, lap v) = 0,   v(T, .) = g(T, .)

is solved backward with explicit finite differences; Hhat is realised as a
grid maximum of 0.5*a*gamma - F_b(..., a) over a finite set of variance
levels, which keeps the scheme monotone under the CFL restriction
dt <= dx^2 / max(a).  The pathwise solution of the uncertain-horizon
equation is then assembled by interpolating v along simulated paths and
switching to g(tau, X_tau) at default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .default_model import IntensityModel
from .sde import TimeGrid

__all__ = [
    "PdeGrid",
    "PdeSolution",
    "biconjugate_hamiltonian",
    "solve_pde",
    "piecewise_fk_assemble",
    "fk_consistency_check",
    "FkReport",
]


@dataclass(frozen=True)
class PdeGrid:
    x_min: float
    x_max: float
    n_x: int
    time: TimeGrid
    a_max: float

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError("spatial domain must have positive width")
        if self.n_x < 3:
            raise ValueError("need at least three spatial nodes")
        if self.a_max <= 0:
            raise ValueError("a_max must be positive")
        if self.time.dt > self.dx ** 2 / self.a_max * (1 + 1e-12):
            raise ValueError(
                f"CFL violated: dt={self.time.dt:.3e} > dx^2/a_max="
                f"{self.dx ** 2 / self.a_max:.3e}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1)

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_x)

    @staticmethod
    def with_cfl(x_min: float, x_max: float, n_x: int, t0: float, T: float,
                 a_max: float, safety: float = 0.9) -> "PdeGrid":
        """Pick the coarsest time grid satisfying the CFL restriction."""
        dx = (x_max - x_min) / (n_x - 1)
        dt_max = safety * dx * dx / a_max
        n_steps = max(1, int(math.ceil((T - t0) / dt_max)))
        return PdeGrid(x_min, x_max, n_x, TimeGrid(t0, T, n_steps), a_max)


@dataclass
class PdeSolution:
    """Grid solution with centred derivatives and the Hamiltonian density.

    v, grad_v, lap_v, k_density, argmax_a: (n_steps+1, n_x).  k_density is
    Hhat evaluated at the scheme's own derivatives; the nonnegative drift
    gap relative to a realised variance level comes from ``drift_gap``.
    """

    grid: PdeGrid
    g: Callable
    f_b: Callable
    a_grid: np.ndarray
    lam_fn: Callable
    v: np.ndarray
    grad_v: np.ndarray
    lap_v: np.ndarray
    k_density: np.ndarray
    argmax_a: np.ndarray

    def value_at(self, t: float, x: float) -> float:
        return float(_interp2(self.grid, self.v, t, x))

    def gradient_at(self, t: float, x: float) -> float:
        return float(_interp2(self.grid, self.grad_v, t, x))

    def drift_gap(self, t: float, x: float, a: float) -> float:
        """Hhat minus the single-variance term at level ``a`` (>= 0)."""
        v = self.value_at(t, x)
        z = self.gradient_at(t, x)
        gamma = float(_interp2(self.grid, self.lap_v, t, x))
        u = float(self.g(t, x)) - v
        lam = float(self.lam_fn(t))
        hhat, _ = biconjugate_hamiltonian(
            self.f_b, self.a_grid, t, np.array([x]), np.array([v]),
            np.array([z]), np.array([u]), np.array([gamma]), lam)
        term = (0.5 * a * gamma
                - float(self.f_b(t, np.array([x]), np.array([v]),
                                 np.array([z]), np.array([u]), a, lam)[0]))
        return float(hhat[0]) - term


def _interp2(grid: PdeGrid, field: np.ndarray, t: float, x: float):
    """Bilinear interpolation on the (time, space) grid, clamped to it."""
    times = grid.time.times
    t = min(max(t, times[0]), times[-1])
    x = min(max(x, grid.x_min), grid.x_max)
    kt = min(int((t - times[0]) / grid.time.dt), grid.time.n_steps - 1)
    wt = (t - times[kt]) / grid.time.dt
    row = field[kt] * (1 - wt) + field[kt + 1] * wt
    return np.interp(x, grid.xs, row)


def biconjugate_hamiltonian(f_b: Callable, a_grid, t, x, y, z, u, gamma,
                            lam: float = 0.0):
    """Hhat = max over the a-grid of 0.5*a*gamma - F_b(t,x,y,z,u,a).

    All state arguments are vectorised arrays over spatial nodes; returns
    (values, attained a per node).  Ties break to the lowest grid index.
    """
    a_grid = np.asarray(a_grid, dtype=float)
    if a_grid.size == 0:
        raise ValueError("empty variance grid")
    if np.any(a_grid < 0):
        raise ValueError("variance levels must be nonnegative")
    x = np.asarray(x, dtype=float)
    stack = np.stack([
        0.5 * a * np.asarray(gamma, dtype=float)
        - np.asarray(f_b(t, x, y, z, u, a, lam), dtype=float)
        for a in a_grid
    ])
    best = np.argmax(stack, axis=0)
    return stack[best, np.arange(x.size)], a_grid[best]


def _derivatives(row: np.ndarray, dx: float):
    grad = np.empty_like(row)
    grad[1:-1] = (row[2:] - row[:-2]) / (2 * dx)
    grad[0] = (row[1] - row[0]) / dx
    grad[-1] = (row[-1] - row[-2]) / dx
    lap = np.zeros_like(row)
    lap[1:-1] = (row[2:] - 2 * row[1:-1] + row[:-2]) / (dx * dx)
    lap[0] = lap[1]
    lap[-1] = lap[-2]
    return grad, lap


def solve_pde(grid: PdeGrid, g: Callable, f_b: Callable, a_grid,
              intensity: Optional[IntensityModel] = None) -> PdeSolution:
    """Explicit backward sweep of the fully nonlinear equation.

    ``g(t, x)`` is the payoff (vectorised over x); ``f_b(t, x, y, z, u, a,
    lam)`` the pre-default generator whose u-slot receives g - v.  The
    intensity must be deterministic on this route; state-functional models
    are rejected.  Dirichlet boundary frozen at g.
    """
    if intensity is not None and not intensity.is_deterministic:
        raise ValueError("the PDE route requires a deterministic intensity")
    lam_fn = (lambda t: 0.0) if intensity is None else (
        lambda t: float(intensity.rate_at(t)))
    a_grid = np.asarray(a_grid, dtype=float)
    times = grid.time.times
    n = grid.time.n_steps
    dt = grid.time.dt
    xs = grid.xs
    try:
        vec_ok = np.asarray(g(times[0], xs)).shape == xs.shape
    except Exception:
        vec_ok = False
    gv = g if vec_ok else np.vectorize(g)

    v = np.empty((n + 1, grid.n_x))
    v[n] = np.asarray(gv(times[-1], xs), dtype=float)
    for k in range(n - 1, -1, -1):
        t1 = times[k + 1]
        row = v[k + 1]
        grad, lap = _derivatives(row, grid.dx)
        u = np.asarray(gv(t1, xs), dtype=float) - row
        hhat, _ = biconjugate_hamiltonian(f_b, a_grid, t1, xs, row, grad,
                                          u, lap, lam_fn(t1))
        nxt = row + dt * hhat
        nxt[0] = float(gv(times[k], xs[0]))
        nxt[-1] = float(gv(times[k], xs[-1]))
        bad = np.flatnonzero(~np.isfinite(nxt))
        if bad.size:
            raise FloatingPointError(
                f"blow-up at t={times[k]:.6g}, x={xs[bad[0]]:.6g}")
        v[k] = nxt

    grad_v = np.empty_like(v)
    lap_v = np.empty_like(v)
    k_density = np.empty_like(v)
    argmax_a = np.empty_like(v)
    for k in range(n + 1):
        grad_v[k], lap_v[k] = _derivatives(v[k], grid.dx)
        u = np.asarray(gv(times[k], xs), dtype=float) - v[k]
        k_density[k], argmax_a[k] = biconjugate_hamiltonian(
            f_b, a_grid, times[k], xs, v[k], grad_v[k], u, lap_v[k],
            lam_fn(times[k]))
    return PdeSolution(grid=grid, g=lambda t, x: float(np.asarray(gv(t, x))),
                       f_b=f_b, a_grid=a_grid, lam_fn=lam_fn, v=v,
                       grad_v=grad_v, lap_v=lap_v, k_density=k_density,
                       argmax_a=argmax_a)


def piecewise_fk_assemble(pde: PdeSolution, times, path, a_hat, tau: float):
    """Pathwise (Y, Z, U, K) from the grid solution.

    Before tau: Y = v(t, X_t), Z = grad v, U = g - v, and K accumulates the
    drift gap of the realised variance against the Hamiltonian's optimum.
    From tau on: Y freezes at g(tau, X_tau); Z, U, K are killed.
    """
    times = np.asarray(times, dtype=float)
    path = np.asarray(path, dtype=float)
    n = times.size - 1
    y = np.empty(n + 1)
    z = np.zeros(n + 1)
    u = np.zeros(n + 1)
    kk = np.zeros(n + 1)
    g_at_tau = None
    if math.isfinite(tau) and tau <= times[-1]:
        x_tau = float(np.interp(tau, times, path))
        g_at_tau = pde.g(tau, x_tau)
    acc = 0.0
    for j, t in enumerate(times):
        if g_at_tau is not None and t >= tau:
            y[j] = g_at_tau
            kk[j] = 0.0
            continue
        xj = float(path[j])
        y[j] = pde.value_at(t, xj)
        z[j] = pde.gradient_at(t, xj)
        u[j] = pde.g(t, xj) - y[j]
        kk[j] = acc
        if j < n:
            a_j = float(a_hat[j]) if np.ndim(a_hat) else float(a_hat)
            acc += max(pde.drift_gap(t, xj, a_j), 0.0) * (times[j + 1] - times[j])
    return {"y": y, "z": z, "u": u, "k": kk}


@dataclass
class FkReport:
    v0: float
    y0_mc: float
    mc_se: float
    tolerance: float
    passed: bool


def fk_consistency_check(g: Callable, band, intensity: IntensityModel,
                         grid: TimeGrid, x0: float = 1.0, n_measures: int = 5,
                         n_paths: int = 4000, seed: int = 0,
                         n_x: int = 201, basis_degree: int = 3,
                         rel_tol: float = 0.02,
                         domain_halfwidth: Optional[float] = None) -> FkReport:
    """Cross-validate the PDE value against the Monte Carlo 2BSDE value.

    Markovian scenario only: terminal claim g, deterministic intensity,
    driftless state, jump generator -lam*u on both routes.  PASS iff the
    two values agree within max(2 MC standard errors, rel_tol relative).
    """
    from .bsde import Driver
    from .claims import decompose_claim
    from .sde import build_measure_family
    from .second_order import assemble_erratic_solution, solve_auxiliary_2bsde

    if not intensity.is_deterministic:
        raise ValueError("scenario not Markovian: stochastic intensity")
    lo, hi = band
    width = domain_halfwidth if domain_halfwidth is not None else \
        6.0 * hi * math.sqrt(grid.T - grid.t0)
    pgrid = PdeGrid.with_cfl(x0 - width, x0 + width, n_x, grid.t0, grid.T,
                             a_max=hi * hi)

    def f_b(t, x, y, z, u, a, lam):
        return -lam * np.asarray(u, dtype=float)

    a_grid = np.linspace(lo * lo, hi * hi, max(n_measures, 2))
    pde = solve_pde(pgrid, g, f_b, a_grid, intensity)
    v0 = pde.value_at(grid.t0, x0)

    claim = decompose_claim("terminal_g", g=g)
    driver = Driver(lambda t, x, y, z, u, a, m, lam: -lam * u)
    family = build_measure_family(band, n_measures)

    # point estimate from the full-sample run (smallest envelope bias);
    # standard error from the spread of independent smaller batches
    aux = solve_auxiliary_2bsde(family, claim, driver, intensity, grid,
                                "sup", n_paths, seed, basis_degree, x0=x0)
    err = assemble_erratic_solution(aux, claim, intensity=intensity,
                                    seed=seed + 7)
    y0 = err.y0
    batch_vals = []
    n_b = 4
    for i in range(n_b):
        aux_b = solve_auxiliary_2bsde(family, claim, driver, intensity, grid,
                                      "sup", max(n_paths // n_b, 200),
                                      seed + 101 * (i + 1), basis_degree,
                                      x0=x0)
        err_b = assemble_erratic_solution(aux_b, claim, intensity=intensity,
                                          seed=seed + 101 * (i + 1) + 7)
        batch_vals.append(err_b.y0)
    se = float(np.std(batch_vals, ddof=1) / math.sqrt(n_b))
    tol = max(2.0 * se, rel_tol * abs(v0))
    return FkReport(v0=v0, y0_mc=y0, mc_se=se, tolerance=tol,
                    passed=abs(v0 - y0) <= tol)
