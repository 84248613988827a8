"""Command-line front end: scenario configs in, CSV results and reports out.

Every subcommand writes ``<output_dir>/result.csv`` plus a ``report.txt``
whose header records the full effective configuration, so a result file is
always reproducible from its report.  Exit codes: 0 success, 1 solver
error, 2 config error, 3 verification FAIL.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .bsde import Driver, solve_brownian_bsde
from .claims import decompose_claim
from .config import ConfigError, Scenario, apply_overrides, load_scenario
from .control import ControlSpec, solve_control_value, solve_robust_value
from .default_model import IntensityModel, sample_defaults
from .oracles import TreeOracle, ode_oracle, tree_value
from .pde import PdeGrid, solve_pde
from .sde import MeasureSpec, TimeGrid, build_measure_family, simulate_paths
from .second_order import (assemble_erratic_solution, check_minimality,
                           solve_auxiliary_2bsde)

SUBCOMMANDS = ("simulate", "solve-bsde", "solve-2bsde", "solve-pde",
               "control", "robust", "verify")

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_CONFIG = 2
EXIT_VERIFY = 3


def _thread_cap() -> int:
    raw = os.environ.get("ERRATIC2BSDE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _num(v: float) -> str:
    """Locale-free decimal formatting for CSV cells."""
    return f"{float(v):.12g}"


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_num(c) if not isinstance(c, str) else c
                              for c in row) + "\n")


def _write_report(path: str, scn: Scenario, subcommand: str, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"erratic2bsde {__version__} report\n")
        fh.write(f"subcommand = {subcommand}\n")
        fh.write(f"threads = {_thread_cap()}\n")
        fh.write("# effective configuration\n")
        for ln in scn.provenance_lines():
            fh.write(ln + "\n")
        fh.write("# results\n")
        for ln in lines:
            fh.write(ln + "\n")


def _intensity(scn: Scenario) -> IntensityModel:
    if scn.intensity_kind == "constant":
        return IntensityModel.constant(scn.intensity_rate, scn.intensity_cap)
    return IntensityModel.piecewise(scn.intensity_breakpoints,
                                    scn.intensity_rates, scn.intensity_cap)


def _grid(scn: Scenario) -> TimeGrid:
    return TimeGrid(0.0, scn.sde_horizon, scn.sde_n_steps)


def _claim(scn: Scenario):
    if scn.claim_kind == "quadratic":
        return decompose_claim("terminal_g", g=lambda t, x: np.asarray(x) ** 2,
                               utility=scn.claim_utility)
    return decompose_claim(scn.claim_kind, strike=scn.claim_strike,
                           utility=scn.claim_utility)


def _payoff_g(scn: Scenario):
    """Markovian payoff g(t, x) for the PDE route, or None."""
    if scn.claim_kind == "quadratic":
        return lambda t, x: np.asarray(x, dtype=float) ** 2
    if scn.claim_kind == "call":
        k = scn.claim_strike
        return lambda t, x: np.maximum(np.asarray(x, dtype=float) - k, 0.0)
    return None


def _jump_driver() -> Driver:
    return Driver(lambda t, x, y, z, u, a, m, lam: -lam * u)


def _cmd_simulate(scn: Scenario, out: str):
    grid = _grid(scn)
    lo, hi = scn.sde_sigma_band
    spec = MeasureSpec(0.5 * (lo + hi))
    bundle = simulate_paths(grid, spec, None, scn.sde_n_paths, scn.sde_seed,
                            x0=scn.sde_x0)
    header = [f"t_{k}" for k in range(grid.n_steps + 1)]
    _write_csv(os.path.join(out, "result.csv"), header, bundle.x)
    return [f"paths = {scn.sde_n_paths}",
            f"sigma = {_num(spec.sigma_ctrl)}",
            f"x_T_mean = {_num(bundle.x[:, -1].mean())}",
            f"x_T_sd = {_num(bundle.x[:, -1].std(ddof=1))}"], EXIT_OK


def _cmd_solve_bsde(scn: Scenario, out: str):
    grid = _grid(scn)
    lo, hi = scn.sde_sigma_band
    spec = MeasureSpec(0.5 * (lo + hi))
    bundle = simulate_paths(grid, spec, None, scn.sde_n_paths, scn.sde_seed,
                            x0=scn.sde_x0)
    intensity = _intensity(scn)
    sol = solve_brownian_bsde(bundle, _claim(scn), _jump_driver(), intensity,
                              scn.bsde_basis_degree)
    times = grid.times
    rows = []
    for k in range(grid.n_steps + 1):
        zm = sol.z[:, k].mean() if k < grid.n_steps else 0.0
        rr = sol.residual_rms[k] if k < grid.n_steps else 0.0
        rows.append((times[k], sol.y[:, k].mean(), sol.y[:, k].std(ddof=1),
                     zm, rr))
    _write_csv(os.path.join(out, "result.csv"),
               ["t", "y_mean", "y_sd", "z_mean", "residual_rms"], rows)
    return [f"y0 = {_num(sol.y0)}",
            f"degraded_steps = {len(sol.degraded_steps)}"], EXIT_OK


def _cmd_solve_2bsde(scn: Scenario, out: str):
    grid = _grid(scn)
    family = build_measure_family(scn.sde_sigma_band, scn.sde_n_measures)
    intensity = _intensity(scn)
    claim = _claim(scn)
    aux = solve_auxiliary_2bsde(family, claim, _jump_driver(), intensity,
                                grid, scn.run_mode, scn.sde_n_paths,
                                scn.sde_seed, scn.bsde_basis_degree,
                                x0=scn.sde_x0)
    err = assemble_erratic_solution(aux, claim, intensity=intensity,
                                    seed=scn.run_seed)
    mini = check_minimality(err)
    m = aux.argopt[0]
    times = grid.times
    rows = []
    for k in range(grid.n_steps + 1):
        zm = aux.z[m][:, k].mean() if k < grid.n_steps else 0.0
        rr = aux.residual_rms[k] if k < grid.n_steps else 0.0
        rows.append((times[k], aux.y[m][:, k].mean(),
                     aux.y[m][:, k].std(ddof=1), zm, rr))
    _write_csv(os.path.join(out, "result.csv"),
               ["t", "y_mean", "y_sd", "z_mean", "residual_rms"], rows)
    lines = [f"mode = {scn.run_mode}",
             f"y0_envelope = {_num(aux.y0)}",
             f"y0_erratic = {_num(err.y0)}",
             f"argopt_sigma = {_num(family[m].sigma_ctrl)}",
             f"minimality_min_K = {_num(mini.min_mean)}",
             f"minimality = {'PASS' if mini.passed else 'FAIL'}"]
    return lines, EXIT_OK


def _cmd_solve_pde(scn: Scenario, out: str):
    g = _payoff_g(scn)
    if g is None:
        raise ConfigError(
            f"claim.kind: {scn.claim_kind!r} has no Markovian payoff g for "
            "the PDE route")
    lo, hi = scn.sde_sigma_band
    grid = PdeGrid(scn.pde_x_min, scn.pde_x_max, scn.pde_n_x,
                   _cfl_time(scn, lo, hi), a_max=hi * hi)
    a_grid = np.linspace(lo * lo, hi * hi, scn.pde_a_grid_n)
    intensity = _intensity(scn)

    def f_b(t, x, y, z, u, a, lam):
        return -lam * np.asarray(u, dtype=float)

    pde = solve_pde(grid, g, f_b, a_grid, intensity)
    header = ["t"] + [f"x_{j}" for j in range(grid.n_x)]
    rows = [(grid.time.times[k],) + tuple(pde.v[k])
            for k in range(grid.time.n_steps + 1)]
    _write_csv(os.path.join(out, "result.csv"), header, rows)
    v0 = pde.value_at(0.0, scn.sde_x0)
    return [f"v0_at_x0 = {_num(v0)}",
            f"n_time_steps = {grid.time.n_steps}"], EXIT_OK


def _cfl_time(scn: Scenario, lo: float, hi: float) -> TimeGrid:
    dx = (scn.pde_x_max - scn.pde_x_min) / (scn.pde_n_x - 1)
    dt_max = 0.9 * dx * dx / (hi * hi)
    n_steps = max(1, int(math.ceil(scn.sde_horizon / dt_max)))
    return TimeGrid(0.0, scn.sde_horizon, n_steps)


def _control_spec(scn: Scenario) -> ControlSpec:
    cc, dc, kk = (scn.control_cost_coeff, scn.control_drift_coeff,
                  scn.control_discount)
    return ControlSpec(
        a_grid=tuple(scn.control_a_grid),
        b_grid=tuple(scn.control_b_grid),
        mu=(lambda t, x, a, b: dc * a * np.ones(np.shape(x))),
        k=kk,
        c=(lambda t, x, a, b: cc * a * a * np.ones(np.shape(x))),
    )


def _control_rows(cv):
    rows = []
    times = cv.aux.grid.times
    for k, t in enumerate(times):
        for j, xn in enumerate(cv.x_nodes):
            rows.append((t, xn, cv.a_star[k, j], cv.b_star[k, j]))
    return rows


def _cmd_control(scn: Scenario, out: str):
    cv = solve_control_value(_control_spec(scn), _claim(scn), _intensity(scn),
                             _grid(scn), scn.sde_n_paths, scn.sde_seed,
                             scn.bsde_basis_degree, scn.sde_x0)
    _write_csv(os.path.join(out, "result.csv"),
               ["t", "x_node", "a_star", "b_star"], _control_rows(cv))
    lines = [f"value_sup = {_num(cv.value)}",
             f"mc_objective = {_num(cv.mc_value)}",
             f"mc_se = {_num(cv.mc_se)}",
             f"minimality = {'PASS' if cv.minimality.passed else 'FAIL'}"]
    return lines, EXIT_OK


def _cmd_robust(scn: Scenario, out: str):
    cv = solve_robust_value(_control_spec(scn), _claim(scn), _intensity(scn),
                            _grid(scn), scn.sde_n_paths, scn.sde_seed,
                            scn.bsde_basis_degree, scn.sde_x0)
    if cv.value is None:
        lines = ["value_inf = REFUSED",
                 f"isaacs_gap = {_num(cv.isaacs.max_gap)}",
                 "isaacs = FAIL"]
        _write_csv(os.path.join(out, "result.csv"),
                   ["t", "x_node", "a_star", "b_star"], [])
        return lines, EXIT_VERIFY
    _write_csv(os.path.join(out, "result.csv"),
               ["t", "x_node", "a_star", "b_star"], _control_rows(cv))
    lines = [f"value_inf = {_num(cv.value)}",
             f"isaacs_gap = {_num(cv.isaacs.max_gap)}",
             "isaacs = PASS",
             f"minimality = {'PASS' if cv.minimality.passed else 'FAIL'}"]
    return lines, EXIT_OK


def _cmd_verify(scn: Scenario, out: str):
    """Desk-scale oracle cross-checks; PASS/FAIL per line, exit 3 on FAIL."""
    checks = []

    bsb_sup = ode_oracle("bsb_quadratic", x0=1.0, sigma=0.3, T=1.0)
    bsb_inf = ode_oracle("bsb_quadratic", x0=1.0, sigma=0.1, T=1.0)
    oracle = TreeOracle(200, (0.1, 0.3), 1.0, 1.0, lambda x: x ** 2)
    checks.append(("tree_vs_closed_form_sup",
                   abs(tree_value(oracle, "sup") - bsb_sup) <= 5e-3))
    checks.append(("tree_vs_closed_form_inf",
                   abs(tree_value(oracle, "inf") - bsb_inf) <= 5e-3))

    lam_model = IntensityModel.constant(1.0)
    taus = sample_defaults(lam_model, None, 1.0, 20000,
                           np.random.default_rng(scn.run_seed))
    p_emp = float(np.mean(np.isfinite(taus)))
    p_exact = 1.0 - ode_oracle("survival", lam=1.0, T=1.0)
    se = math.sqrt(p_exact * (1 - p_exact) / 20000)
    checks.append(("survival_sampling", abs(p_emp - p_exact) <= 3 * se))

    grid = TimeGrid(0.0, 1.0, 200)
    bundle = simulate_paths(grid, MeasureSpec(0.2), None, 2000, scn.run_seed)
    claim = decompose_claim("survival")
    sol = solve_brownian_bsde(bundle, claim, _jump_driver(), lam_model, 2)
    checks.append(("defaultable_bond",
                   abs(sol.y0 - ode_oracle("survival", lam=1.0, T=1.0)) <= 2e-3))

    pgrid = PdeGrid.with_cfl(-0.8, 2.8, 201, 0.0, 1.0, a_max=0.09)
    pde = solve_pde(pgrid, lambda t, x: np.asarray(x) ** 2,
                    lambda t, x, y, z, u, a, lam: -lam * np.asarray(u),
                    np.linspace(0.01, 0.09, 5), lam_model)
    target = ode_oracle("jump_quadratic", x0=1.0, sigma=0.3, T=1.0, lam=1.0)
    checks.append(("pde_jump_quadratic",
                   abs(pde.value_at(0.0, 1.0) - target) <= 1e-2))

    rows = [(name, "PASS" if ok else "FAIL") for name, ok in checks]
    _write_csv(os.path.join(out, "result.csv"), ["check", "status"], rows)
    lines = [f"{name}: {'PASS' if ok else 'FAIL'}" for name, ok in checks]
    all_ok = all(ok for _, ok in checks)
    lines.append(f"overall = {'PASS' if all_ok else 'FAIL'}")
    return lines, EXIT_OK if all_ok else EXIT_VERIFY


_HANDLERS = {
    "simulate": _cmd_simulate,
    "solve-bsde": _cmd_solve_bsde,
    "solve-2bsde": _cmd_solve_2bsde,
    "solve-pde": _cmd_solve_pde,
    "control": _cmd_control,
    "robust": _cmd_robust,
    "verify": _cmd_verify,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="erratic2bsde",
        description="2BSDE solvers with an uncertain terminal horizon")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", metavar="PATH", default=None)
    parser.add_argument("--set", metavar="key=value", action="append",
                        default=[], dest="overrides")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", metavar="DIR", default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        scn = load_scenario(args.config) if args.config else Scenario()
        apply_overrides(scn, args.overrides)
        if args.seed is not None:
            scn.run_seed = args.seed
            scn.sde_seed = args.seed
        if args.out is not None:
            scn.run_output_dir = args.out
        scn.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = scn.run_output_dir
    os.makedirs(out, exist_ok=True)
    try:
        lines, code = _HANDLERS[args.subcommand](scn, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # solver failure: report and exit 1
        print(f"solver error: {exc}", file=sys.stderr)
        _write_report(os.path.join(out, "report.txt"), scn, args.subcommand,
                      [f"error = {exc}"])
        return EXIT_SOLVER
    _write_report(os.path.join(out, "report.txt"), scn, args.subcommand, lines)
    return code


if __name__ == "__main__":
    sys.exit(main())
