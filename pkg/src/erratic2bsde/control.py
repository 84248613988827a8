"""Erratic stochastic control: drift/volatility control and ambiguity.

The agent's generator is the affine map

    f(t, x, y, z, u, a, b, lam) = -k y - c + mu z + lam u,

maximised over the drift grid A and, depending on the problem, maximised
(volatility control) or minimised (adversarial Nature, gated by the Isaacs
condition) over the volatility controls compatible with the realised
variance.  Values are computed through the second-order envelope layer,
whose sign convention is dY = f dt + Z dX; the Hamiltonians below are
therefore negated when handed to that layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .bsde import Driver, _eval_fit, _eval_fit_deriv
from .claims import Claim
from .default_model import IntensityModel, sample_defaults
from .sde import MeasureFamily, MeasureSpec, TimeGrid
from .second_order import (SUP, INF, SecondOrderSolution, check_minimality,
                           solve_auxiliary_2bsde)

__all__ = [
    "ControlSpec",
    "driver_f",
    "hamiltonian_sup_sup",
    "hamiltonian_inf_sup",
    "check_isaacs",
    "IsaacsReport",
    "solve_control_value",
    "solve_robust_value",
    "estimate_objective",
    "ControlValue",
]


def _as_coeff(v):
    if callable(v):
        return v
    const = float(v)
    return lambda t, x, a, b: np.full(np.shape(x), const) if np.ndim(x) else const


@dataclass(frozen=True)
class ControlSpec:
    """Control sets and coefficient maps.

    a_grid / b_grid are the finite drift and volatility control grids; all
    optimisations are exhaustive enumerations with lowest-index
    tie-breaking.  mu, k, c map (t, x, a, b) -> real; sigma maps
    (t, x, b) -> vol (default: sigma = b, which makes each b its own
    volatility regime).  tol_sigma is the variance-matching tolerance used
    to build V_t(x, Sigma); by default half the smallest sigma^2 spacing.
    """

    a_grid: tuple
    b_grid: tuple
    mu: object = 0.0
    sigma: Optional[Callable] = None
    k: object = 0.0
    c: object = 0.0
    tol_sigma: Optional[float] = None

    def __post_init__(self):
        if not len(self.a_grid) or not len(self.b_grid):
            raise ValueError("control grids must be non-empty")
        if any(b <= 0 for b in self.b_grid):
            raise ValueError("volatility controls must be positive")

    def sigma_at(self, t, x, b) -> float:
        if self.sigma is None:
            return float(b)
        return float(self.sigma(t, x, b))

    def sigma_tol(self) -> float:
        if self.tol_sigma is not None:
            return self.tol_sigma
        s2 = sorted(self.sigma_at(0.0, 0.0, b) ** 2 for b in self.b_grid)
        if len(s2) < 2:
            return max(1e-9, 1e-6 * (1 + abs(s2[0])))
        gaps = [b - a for a, b in zip(s2, s2[1:]) if b > a]
        return 0.5 * min(gaps) if gaps else max(1e-9, 1e-6 * (1 + abs(s2[0])))

    def vol_matching_set(self, t, x, Sigma) -> List[float]:
        """V_t(x, Sigma): controls b whose variance matches Sigma."""
        tol = self.sigma_tol()
        return [b for b in self.b_grid
                if abs(self.sigma_at(t, x, b) ** 2 - Sigma) <= tol]


def driver_f(spec: ControlSpec, t, x, y, z, u, a, b, lam):
    """f = -k y - c + mu z + lam u, vectorised over the state arguments."""
    mu = _as_coeff(spec.mu)(t, x, a, b)
    kk = _as_coeff(spec.k)(t, x, a, b)
    cc = _as_coeff(spec.c)(t, x, a, b)
    return -np.asarray(kk) * y - np.asarray(cc) + np.asarray(mu) * z + lam * u


def hamiltonian_sup_sup(spec: ControlSpec, t, x, y, z, u, lam, Sigma
                        ) -> Tuple[float, float, float]:
    """sup over matching b, sup over a, of the driver (scalar arguments)."""
    vset = spec.vol_matching_set(t, x, Sigma)
    if not vset:
        raise ValueError(f"no volatility control matches Sigma={Sigma!r}")
    best = (-math.inf, None, None)
    for b in vset:
        for a in spec.a_grid:
            v = float(driver_f(spec, t, x, y, z, u, a, b, lam))
            if v > best[0]:
                best = (v, a, b)
    return best


def hamiltonian_inf_sup(spec: ControlSpec, t, x, y, z, u, lam, Sigma
                        ) -> Tuple[float, float, float]:
    """inf over matching b of sup over a (scalar arguments).

    Returns (value, inner maximiser a, minimising b).
    """
    vset = spec.vol_matching_set(t, x, Sigma)
    if not vset:
        raise ValueError(f"no volatility control matches Sigma={Sigma!r}")
    best = (math.inf, None, None)
    for b in vset:
        inner = (-math.inf, None)
        for a in spec.a_grid:
            v = float(driver_f(spec, t, x, y, z, u, a, b, lam))
            if v > inner[0]:
                inner = (v, a)
        if inner[0] < best[0]:
            best = (inner[0], inner[1], b)
    return best


def _hamiltonian_vec(spec: ControlSpec, t, x, y, z, u, lam, Sigma,
                     outer: str) -> np.ndarray:
    """Vectorised Hamiltonian over path arrays at a single variance level."""
    vset = spec.vol_matching_set(t, float(np.mean(x)), Sigma)
    if not vset:
        raise ValueError(f"no volatility control matches Sigma={Sigma!r}")
    per_b = []
    for b in vset:
        stack = np.stack([
            np.asarray(driver_f(spec, t, x, y, z, u, a, b, lam), dtype=float)
            for a in spec.a_grid
        ])
        per_b.append(stack.max(axis=0))
    allb = np.stack(per_b)
    return allb.max(axis=0) if outer == "max" else allb.min(axis=0)


@dataclass
class IsaacsReport:
    max_gap: float
    tolerance: float
    passed: bool
    n_probes: int


def check_isaacs(spec: ControlSpec, probes, tol: float = 1e-9) -> IsaacsReport:
    """Compare inf-sup with sup-inf of the driver on a set of probes.

    Each probe is a tuple (t, x, y, z, u, lam, Sigma); both iterated optima
    are evaluated by exhaustive enumeration over the control grids.
    """
    worst = 0.0
    for (t, x, y, z, u, lam, Sigma) in probes:
        vset = spec.vol_matching_set(t, x, Sigma)
        if not vset:
            continue
        table = np.array([
            [float(driver_f(spec, t, x, y, z, u, a, b, lam))
             for b in vset]
            for a in spec.a_grid
        ])
        inf_sup = table.max(axis=0).min()
        sup_inf = table.min(axis=1).max()
        worst = max(worst, abs(inf_sup - sup_inf))
    return IsaacsReport(max_gap=worst, tolerance=tol, passed=worst <= tol,
                        n_probes=len(probes))


@dataclass
class ControlValue:
    value: Optional[float]
    mode: str
    aux: Optional[SecondOrderSolution]
    x_nodes: np.ndarray
    a_star: np.ndarray
    b_star: np.ndarray
    minimality: object = None
    isaacs: Optional[IsaacsReport] = None
    mc_value: Optional[float] = None
    mc_se: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    def a_field(self) -> Callable:
        return _feedback(self.aux.grid, self.x_nodes, self.a_star)

    def b_field(self) -> Callable:
        return _feedback(self.aux.grid, self.x_nodes, self.b_star)


def _feedback(grid: TimeGrid, x_nodes: np.ndarray, field_grid: np.ndarray):
    def ctrl(t, x):
        kt = min(int(round((t - grid.t0) / grid.dt)), grid.n_steps)
        return np.interp(np.asarray(x, dtype=float), x_nodes, field_grid[kt])

    return ctrl


def _measure_family(spec: ControlSpec, x0: float) -> MeasureFamily:
    sigmas = [spec.sigma_at(0.0, x0, b) for b in spec.b_grid]
    return MeasureFamily(tuple(MeasureSpec(s) for s in sigmas))


def _layer_driver(spec: ControlSpec, outer: str) -> Driver:
    """Bridge to the envelope layer: generator = -Hamiltonian.

    The envelope layer solves dY = f dt + Z dX backward; the control
    2BSDEs carry +int F ds, hence the sign flip.
    """

    def f(t, x, y, z, u, a_hat, mu, lam):
        Sigma = float(np.mean(a_hat))
        lam_s = float(np.mean(lam))
        return -_hamiltonian_vec(spec, t, x, y, z, u, lam_s, Sigma, outer)

    return Driver(f)


def _extract_controls(spec: ControlSpec, aux: SecondOrderSolution,
                      claim: Claim, intensity: IntensityModel,
                      saddle: bool, n_nodes: int = 21):
    """Feedback controls from the Hamiltonian optimisers at solved values."""
    grid = aux.grid
    xs_all = np.concatenate([b.x.ravel() for b in aux.bundles])
    lo, hi = np.quantile(xs_all, [0.01, 0.99])
    x_nodes = np.linspace(lo, hi, n_nodes)
    n = grid.n_steps
    a_star = np.empty((n + 1, n_nodes))
    b_star = np.empty((n + 1, n_nodes))
    for k in range(n + 1):
        t = grid.times[k]
        m = aux.argopt[k]
        Sigma = aux.family[m].sigma_ctrl ** 2
        fits = aux.value_fits[k]
        for j, xv in enumerate(x_nodes):
            if fits is None:
                y = float(claim.terminal(np.array([[xv]]), grid.T)[0])
                z = 0.0
            else:
                c, c0, cs = fits[m][:3]
                y = float(_eval_fit(c, c0, cs, np.array([xv]))[0])
                if len(c) > 1:
                    z = float(_eval_fit_deriv(c, c0, cs, np.array([xv]))[0])
                else:
                    # degenerate fit (all paths at one state, e.g. t = t0):
                    # the increment regression still carries the gradient
                    z = float(np.mean(aux.z[m][:, min(k, n - 1)]))
            u = float(claim.predefault(t, np.array([xv]))[0]) - y
            lam = float(intensity.rate_at(t, np.array([xv])))
            if saddle:
                _, a_s, b_s = hamiltonian_inf_sup(spec, t, xv, y, z, u, lam, Sigma)
            else:
                _, a_s, b_s = hamiltonian_sup_sup(spec, t, xv, y, z, u, lam, Sigma)
            a_star[k, j] = a_s
            b_star[k, j] = b_s
    return x_nodes, a_star, b_star


def solve_control_value(spec: ControlSpec, claim: Claim,
                        intensity: IntensityModel, grid: TimeGrid,
                        n_paths: int = 4000, seed: int = 0,
                        basis_degree: int = 3, x0: float = 1.0,
                        mc_check: bool = True) -> ControlValue:
    """Volatility-control value: sup over drift and volatility controls.

    Runs the envelope layer in sup mode with the sup-sup Hamiltonian,
    extracts feedback controls from the attained optimisers, and (when
    ``mc_check``) cross-checks the value by forward simulation of the
    objective under the extracted controls.
    """
    family = _measure_family(spec, x0)
    aux = solve_auxiliary_2bsde(family, claim, _layer_driver(spec, "max"),
                                intensity, grid, SUP, n_paths, seed,
                                basis_degree, x0=x0)
    x_nodes, a_star, b_star = _extract_controls(spec, aux, claim, intensity,
                                                saddle=False)
    out = ControlValue(value=aux.y0, mode=SUP, aux=aux, x_nodes=x_nodes,
                       a_star=a_star, b_star=b_star,
                       minimality=check_minimality(aux))
    if mc_check:
        j, se = estimate_objective(spec, out.a_field(), out.b_field(), claim,
                                   intensity, grid, n_paths, seed + 555, x0)
        out.mc_value, out.mc_se = j, se
    return out


def solve_robust_value(spec: ControlSpec, claim: Claim,
                       intensity: IntensityModel, grid: TimeGrid,
                       n_paths: int = 4000, seed: int = 0,
                       basis_degree: int = 3, x0: float = 1.0,
                       isaacs_tol: float = 1e-9,
                       probes=None, mc_check: bool = False) -> ControlValue:
    """Ambiguity value: sup over drift against Nature's worst volatility.

    Refuses to report a value when the Isaacs condition fails on the probe
    set (the saddle characterisation would be vacuous); the report is still
    returned for diagnosis.
    """
    if probes is None:
        probes = _default_probes(spec, grid, intensity, x0)
    isaacs = check_isaacs(spec, probes, isaacs_tol)
    if not isaacs.passed:
        return ControlValue(value=None, mode=INF, aux=None,
                            x_nodes=np.array([]), a_star=np.array([]),
                            b_star=np.array([]), isaacs=isaacs,
                            diagnostics={"reason": "Isaacs condition failed"})
    family = _measure_family(spec, x0)
    aux = solve_auxiliary_2bsde(family, claim, _layer_driver(spec, "min"),
                                intensity, grid, INF, n_paths, seed,
                                basis_degree, x0=x0)
    x_nodes, a_star, b_star = _extract_controls(spec, aux, claim, intensity,
                                                saddle=True)
    out = ControlValue(value=aux.y0, mode=INF, aux=aux, x_nodes=x_nodes,
                       a_star=a_star, b_star=b_star,
                       minimality=check_minimality(aux), isaacs=isaacs)
    if mc_check:
        j, se = estimate_objective(spec, out.a_field(), out.b_field(), claim,
                                   intensity, grid, n_paths, seed + 555, x0)
        out.mc_value, out.mc_se = j, se
    return out


def _default_probes(spec: ControlSpec, grid: TimeGrid,
                    intensity: IntensityModel, x0: float, n: int = 60):
    rng = np.random.default_rng(2024)
    sigmas = sorted({spec.sigma_at(0.0, x0, b) for b in spec.b_grid})
    probes = []
    for _ in range(n):
        t = rng.uniform(grid.t0, grid.T)
        x = x0 * math.exp(rng.normal(0, 0.3))
        y, z, u = rng.normal(0, 2, size=3)
        lam = float(intensity.rate_at(t, np.array([x]))) if intensity.is_deterministic else 1.0
        Sigma = rng.choice(sigmas) ** 2
        probes.append((t, x, y, z, u, lam, Sigma))
    return probes


def estimate_objective(spec: ControlSpec, a_field: Callable, b_field: Callable,
                       claim: Claim, intensity: IntensityModel,
                       grid: TimeGrid, n_paths: int = 4000, seed: int = 0,
                       x0: float = 1.0) -> Tuple[float, float]:
    """Monte Carlo estimate of the agent's objective under feedback controls.

    Simulates the drifted state under the plugged-in controls, samples the
    default time, discounts at rate k, and evaluates

        J = E[ Kappa_{T^tau} Phi(xi) - int_0^{T^tau} Kappa_t c dt ].

    Returns (estimate, standard error).
    """
    rng = np.random.default_rng(seed)
    n = grid.n_steps
    dt = grid.dt
    times = grid.times
    mu = _as_coeff(spec.mu)
    kfn = _as_coeff(spec.k)
    cfn = _as_coeff(spec.c)

    x = np.empty((n_paths, n + 1))
    x[:, 0] = x0
    disc = np.ones((n_paths, n + 1))
    cost = np.zeros((n_paths, n + 1))
    w = rng.standard_normal((n_paths, n)) * math.sqrt(dt)
    for kk in range(n):
        t = times[kk]
        a_ctl = np.asarray(a_field(t, x[:, kk]), dtype=float)
        b_ctl = np.asarray(b_field(t, x[:, kk]), dtype=float)
        sig = np.array([spec.sigma_at(t, xv, bv)
                        for xv, bv in zip(x[:, kk], b_ctl)]) \
            if spec.sigma is not None else b_ctl
        drift = np.asarray(mu(t, x[:, kk], a_ctl, b_ctl), dtype=float)
        x[:, kk + 1] = x[:, kk] + drift * dt + sig * w[:, kk]
        rate = np.asarray(kfn(t, x[:, kk], a_ctl, b_ctl), dtype=float)
        disc[:, kk + 1] = disc[:, kk] * np.exp(-rate * dt)
        cost[:, kk + 1] = cost[:, kk] + disc[:, kk] * np.asarray(
            cfn(t, x[:, kk], a_ctl, b_ctl), dtype=float) * dt

    tau = sample_defaults(intensity, (times, x), grid.T, n_paths, rng)
    j_vals = np.empty(n_paths)
    term = claim.terminal(x, grid.T)
    for i in range(n_paths):
        if math.isfinite(tau[i]) and tau[i] <= grid.T:
            idx = int(np.searchsorted(times, tau[i], side="right") - 1)
            x_tau = float(np.interp(tau[i], times, x[i]))
            payoff = float(claim.predefault(tau[i], np.array([x_tau]))[0])
            j_vals[i] = disc[i, idx] * payoff - cost[i, idx]
        else:
            j_vals[i] = disc[i, n] * term[i] - cost[i, n]
    return float(np.mean(j_vals)), float(np.std(j_vals, ddof=1) / math.sqrt(n_paths))
