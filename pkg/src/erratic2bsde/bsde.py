"""Backward regression solver for the pre-default BSDE and its jump lift.

The pre-default equation is solved under a single measure by least-squares
Monte Carlo: conditional expectations are polynomial regressions on the
state, Z comes from the Brownian-increment-weighted regression, and the
driver consumes u = xi_a - Y directly.  Sign convention along the backward
sweep: Y_k = E_k[Y_{k+1}] - dt * f(t_{k+1}, ...), matching a value process
with forward dynamics dY = f dt + Z dX (so the defaultable bond driver
f = -lambda*u prices to exp(-lambda*T)).

The jump solution is never iterated: it is pasted from the pre-default one
by the decomposition Y^tau = Y 1_{t<tau} + xi_a(tau) 1_{t>=tau}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .claims import Claim
from .default_model import IntensityModel
from .sde import PathBundle

__all__ = [
    "Driver",
    "BsdeSolution",
    "JumpBsdeSolution",
    "solve_brownian_bsde",
    "solve_jump_bsde",
    "closed_form_linear_bsde",
    "probe_lipschitz",
]


@dataclass(frozen=True)
class Driver:
    """BSDE generator f(t, x, y, z, u, a_hat, mu, lam), vectorised over paths.

    ``lipschitz`` optionally declares (C_y, C_z, C_u) bounds; they are not
    enforced at solve time but can be audited with probe_lipschitz.
    """

    f: Callable
    lipschitz: Optional[Tuple[float, float, float]] = None

    def __call__(self, t, x, y, z, u, a_hat, mu, lam):
        return np.asarray(self.f(t, x, y, z, u, a_hat, mu, lam), dtype=float)

    @staticmethod
    def zero() -> "Driver":
        return Driver(lambda t, x, y, z, u, a, m, l: np.zeros(np.shape(y)),
                      lipschitz=(0.0, 0.0, 0.0))


@dataclass
class BsdeSolution:
    """Pre-default solution on the simulation grid.

    y: (n_paths, n_steps+1), z: (n_paths, n_steps).  ``residual_rms`` is the
    per-step RMS of the regression residual, the discrete stand-in for the
    orthogonal martingale part.  ``degraded_steps`` lists steps where the
    regression fell back to a lower degree.
    """

    grid: object
    y: np.ndarray
    z: np.ndarray
    y0: float
    residual_rms: np.ndarray
    degraded_steps: list = field(default_factory=list)

    # per-step regression coefficients of the value fit, on normalised x
    value_fits: list = field(default_factory=list)


@dataclass
class JumpBsdeSolution(BsdeSolution):
    u: np.ndarray = None
    tau: np.ndarray = None


def _design(x: np.ndarray, degree: int, center: float, scale: float) -> np.ndarray:
    xs = (x - center) / scale
    return np.vander(xs, degree + 1, increasing=True)


def _fit(x: np.ndarray, target: np.ndarray, degree: int):
    """Least-squares polynomial fit with degree fallback on rank deficiency.

    Returns (fitted values, coeffs, center, scale, used_degree).
    """
    center = float(np.mean(x))
    scale = float(np.std(x))
    if not np.isfinite(scale) or scale < 1e-12:
        scale, degree = 1.0, 0
    deg = degree
    while True:
        a = _design(x, deg, center, scale)
        coeffs, _, rank, _ = np.linalg.lstsq(a, target, rcond=None)
        if rank == deg + 1 or deg == 0:
            return a @ coeffs, coeffs, center, scale, deg
        deg -= 1


def _eval_fit(coeffs, center, scale, x):
    return _design(np.asarray(x, dtype=float), len(coeffs) - 1, center, scale) @ coeffs


def _eval_fit_deriv(coeffs, center, scale, x):
    """Spatial derivative of a fitted polynomial at x."""
    dcoeffs = np.asarray([j * c for j, c in enumerate(coeffs)][1:]) / scale
    if dcoeffs.size == 0:
        return np.zeros(np.shape(x))
    return _design(np.asarray(x, dtype=float), len(dcoeffs) - 1, center, scale) @ dcoeffs


def solve_brownian_bsde(bundle: PathBundle, claim: Claim, driver: Driver,
                        intensity: IntensityModel,
                        basis_degree: int = 3) -> BsdeSolution:
    """Backward induction for the pre-default BSDE under one measure.

    Per step: fit the continuation E_k[Y_{k+1}], extract Z_k from the
    centred Brownian-increment regression, evaluate the driver explicitly at
    the (t_{k+1}, X_{k+1}, Y_{k+1}) values with the freshly fitted Z, then
    regress the one-step target.  Terminal condition is exact per path.
    """
    if basis_degree < 0:
        raise ValueError("basis degree must be nonnegative")
    grid = bundle.grid
    n = grid.n_steps
    dt = grid.dt
    times = grid.times
    x, w, a_hat = bundle.x, bundle.w, bundle.a_hat
    n_paths = bundle.n_paths

    y = np.empty((n_paths, n + 1))
    z = np.empty((n_paths, n))
    residual = np.empty(n)
    degraded = []
    fits = [None] * (n + 1)

    y[:, n] = claim.terminal(x, grid.T)
    for k in range(n - 1, -1, -1):
        tk1 = times[k + 1]
        xk = x[:, k]
        y_next = y[:, k + 1]

        cont_fit, c_coef, c0, cs, deg_c = _fit(xk, y_next, basis_degree)
        sig_k = np.sqrt(a_hat[:, k])
        z_target = (y_next - cont_fit) * w[:, k] / (dt * sig_k)
        z_fit, *_ = _fit(xk, z_target, basis_degree)
        z[:, k] = z_fit

        xi_a = claim.predefault(tk1, x[:, k + 1])
        lam = np.broadcast_to(
            np.asarray(intensity.rate_at(tk1, x[:, k + 1]), dtype=float),
            (n_paths,))
        mu = bundle.coeffs.mu_at(tk1, x[:, k + 1], bundle.spec.drift_ctrl)
        fval = driver(tk1, x[:, k + 1], y_next, z_fit, xi_a - y_next,
                      a_hat[:, k], mu, lam)
        target = y_next - dt * fval
        y_fit, coeffs, center, scale, deg = _fit(xk, target, basis_degree)
        y[:, k] = y_fit
        residual[k] = float(np.sqrt(np.mean((target - y_fit) ** 2)))
        fits[k] = (coeffs, center, scale)
        if deg < basis_degree and np.std(xk) > 1e-12:
            degraded.append(k)

    return BsdeSolution(grid=grid, y=y, z=z, y0=float(np.mean(y[:, 0])),
                        residual_rms=residual, degraded_steps=degraded,
                        value_fits=fits)


def solve_jump_bsde(bundle: PathBundle, claim: Claim, driver: Driver,
                    intensity: IntensityModel, tau: Optional[np.ndarray] = None,
                    seed: Optional[int] = None, basis_degree: int = 3,
                    brownian: Optional[BsdeSolution] = None) -> JumpBsdeSolution:
    """Jump BSDE via the pasting decomposition.

    Y^tau_t = Y_t 1_{t<tau} + xi_a(tau) 1_{t>=tau},
    Z^tau_t = Z_t 1_{t<tau},  U_t = (xi_a(t) - Y_t) 1_{t<tau}.

    ``tau`` is one default time per path (inf sentinel allowed); if absent,
    defaults are sampled from the intensity model with ``seed``.
    """
    from .default_model import sample_defaults

    sol = brownian if brownian is not None else solve_brownian_bsde(
        bundle, claim, driver, intensity, basis_degree)
    grid = bundle.grid
    times = grid.times
    n_paths = bundle.n_paths
    if tau is None:
        if seed is None:
            raise ValueError("need tau samples or a seed to draw them")
        tau = sample_defaults(intensity, (times, bundle.x), grid.T, n_paths,
                              np.random.default_rng(seed))
    tau = np.asarray(tau, dtype=float)

    y_tau = sol.y.copy()
    z_tau = sol.z.copy()
    u = np.empty_like(sol.y)

    # value frozen at default, per defaulted path
    frozen = np.zeros(n_paths)
    defaulted = np.isfinite(tau) & (tau <= grid.T)
    for i in np.flatnonzero(defaulted):
        x_at_tau = np.interp(tau[i], times, bundle.x[i])
        frozen[i] = claim.predefault(tau[i], np.array([x_at_tau]))[0]

    for j, t in enumerate(times):
        alive = t < tau
        xi_a_t = claim.predefault(t, bundle.x[:, j])
        u[:, j] = np.where(alive, xi_a_t - sol.y[:, j], 0.0)
        dead = ~alive
        if dead.any():
            y_tau[dead, j] = frozen[dead]
            if j < grid.n_steps:
                z_tau[dead, j] = 0.0
    return JumpBsdeSolution(grid=grid, y=y_tau, z=z_tau,
                            y0=float(np.mean(y_tau[:, 0])),
                            residual_rms=sol.residual_rms,
                            degraded_steps=sol.degraded_steps,
                            value_fits=sol.value_fits, u=u, tau=tau)


def closed_form_linear_bsde(r: float, lam: float, horizon: float,
                            terminal: float, xi_a: float = 0.0) -> float:
    """Exact value at time 0 of the scalar backward ODE

        y'(t) = (r + lam) y(t) - lam * xi_a,   y(T) = terminal.
    """
    k = r + lam
    if k == 0.0:
        return terminal + lam * xi_a * horizon
    decay = math.exp(-k * horizon)
    return terminal * decay + lam * xi_a / k * (1.0 - decay)


def probe_lipschitz(driver: Driver, rng, n_probes: int = 200,
                    lam_cap: float = 5.0) -> Tuple[float, float, float]:
    """Empirical Lipschitz ratios of the driver in (y, z, u) on random probes.

    Returns the largest observed ratio per slot: |df|/|dy|, |df|/(sqrt(a)|dz|)
    and |df|/(lam |du|).  Useful to audit a declared bound.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    worst = [0.0, 0.0, 0.0]
    for _ in range(n_probes):
        t = rng.uniform(0, 1)
        x = rng.normal(1, 0.5, size=1)
        y, z, u = rng.normal(size=3)
        a = rng.uniform(0.01, 0.25)
        mu = rng.normal(0, 0.5)
        lam = rng.uniform(0.1, lam_cap)
        base = driver(t, x, np.array([y]), np.array([z]), np.array([u]),
                      np.array([a]), np.array([mu]), np.array([lam]))[0]
        dy, dz, du = rng.normal(size=3) * 0.5
        fy = driver(t, x, np.array([y + dy]), np.array([z]), np.array([u]),
                    np.array([a]), np.array([mu]), np.array([lam]))[0]
        fz = driver(t, x, np.array([y]), np.array([z + dz]), np.array([u]),
                    np.array([a]), np.array([mu]), np.array([lam]))[0]
        fu = driver(t, x, np.array([y]), np.array([z]), np.array([u + du]),
                    np.array([a]), np.array([mu]), np.array([lam]))[0]
        if dy != 0:
            worst[0] = max(worst[0], abs(fy - base) / abs(dy))
        if dz != 0:
            worst[1] = max(worst[1], abs(fz - base) / (math.sqrt(a) * abs(dz)))
        if du != 0:
            worst[2] = max(worst[2], abs(fu - base) / (lam * abs(du)))
    return tuple(worst)
