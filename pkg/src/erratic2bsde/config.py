"""Scenario configuration: plain sectioned `key = value` text files.

The format is deliberately dependency-free and diff-friendly: one
`section.key = value` assignment per line (or a `[section]` header followed
by bare keys), `#` comments, decimal numeric literals, comma-separated
lists.  Unknown keys are rejected so misspellings never fall back to silent
defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields
from typing import Optional, Tuple

from .claims import UTILITIES

__all__ = ["Scenario", "ConfigError", "parse_scenario", "load_scenario",
           "apply_overrides"]


class ConfigError(ValueError):
    """Raised for unreadable, unknown, or inconsistent configuration."""


@dataclass
class Scenario:
    """Validated run configuration, one field per config key."""

    # [intensity]
    intensity_kind: str = "constant"
    intensity_rate: float = 0.0
    intensity_breakpoints: Tuple[float, ...] = ()
    intensity_rates: Tuple[float, ...] = ()
    intensity_cap: float = 1e3

    # [sde]
    sde_x0: float = 1.0
    sde_horizon: float = 1.0
    sde_sigma_band: Tuple[float, float] = (0.1, 0.3)
    sde_n_measures: int = 2
    sde_n_paths: int = 4000
    sde_n_steps: int = 50
    sde_seed: int = 0

    # [claim]
    claim_kind: str = "survival"
    claim_strike: float = 0.0
    claim_utility: str = "identity"

    # [bsde]
    bsde_basis_degree: int = 3
    bsde_scheme: str = "explicit"

    # [pde]
    pde_x_min: float = -1.0
    pde_x_max: float = 3.0
    pde_n_x: int = 201
    pde_a_grid_n: int = 5

    # [control]
    control_a_grid: Tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    control_b_grid: Tuple[float, ...] = (0.1, 0.3)
    control_discount: float = 0.0
    control_cost_coeff: float = 0.0
    control_drift_coeff: float = 0.0

    # [run]
    run_mode: str = "sup"
    run_seed: int = 0
    run_output_dir: str = "out"

    def validate(self) -> None:
        lo, hi = self.sde_sigma_band
        if not (0 < lo <= hi):
            raise ConfigError("sde.sigma_band: need 0 < lo <= hi")
        if self.sde_n_measures < 1:
            raise ConfigError("sde.n_measures: need at least one measure")
        if self.sde_n_paths < 1 or self.sde_n_steps < 1:
            raise ConfigError("sde.n_paths / sde.n_steps must be positive")
        if self.sde_horizon <= 0:
            raise ConfigError("sde.horizon must be positive")
        if self.intensity_kind not in ("constant", "piecewise"):
            raise ConfigError(
                f"intensity.kind: unsupported kind {self.intensity_kind!r}")
        if self.intensity_kind == "constant":
            if self.intensity_rate < 0:
                raise ConfigError("intensity.rate must be nonnegative")
            if self.intensity_rate > self.intensity_cap:
                raise ConfigError("intensity.rate exceeds intensity.cap")
        else:
            if len(self.intensity_breakpoints) != len(self.intensity_rates):
                raise ConfigError(
                    "intensity.breakpoints and intensity.rates must align")
            if not self.intensity_breakpoints:
                raise ConfigError("intensity.breakpoints must be non-empty")
        if self.claim_kind not in ("survival", "terminal_g", "call",
                                   "quadratic"):
            raise ConfigError(f"claim.kind: unknown kind {self.claim_kind!r}")
        if self.claim_utility not in UTILITIES:
            raise ConfigError(
                f"claim.utility: unknown utility {self.claim_utility!r}")
        if self.bsde_basis_degree < 0:
            raise ConfigError("bsde.basis_degree must be nonnegative")
        if self.bsde_scheme != "explicit":
            raise ConfigError("bsde.scheme: only 'explicit' is supported")
        if not self.pde_x_min < self.pde_x_max:
            raise ConfigError("pde.x_min must be below pde.x_max")
        if self.pde_n_x < 3:
            raise ConfigError("pde.n_x: need at least three grid points")
        if self.pde_a_grid_n < 1:
            raise ConfigError("pde.a_grid_n must be positive")
        if not self.control_a_grid or not self.control_b_grid:
            raise ConfigError("control grids must be non-empty")
        if any(b <= 0 for b in self.control_b_grid):
            raise ConfigError("control.b_grid entries must be positive")
        if self.run_mode not in ("sup", "inf"):
            raise ConfigError("run.mode must be 'sup' or 'inf'")

    def provenance_lines(self):
        """Every effective setting, for the report header."""
        out = []
        for f in dc_fields(self):
            key = f.name.replace("_", ".", 1)
            out.append(f"{key} = {_fmt(getattr(self, f.name))}")
        return out


def _fmt(v):
    if isinstance(v, tuple):
        return ", ".join(repr(x) for x in v)
    return repr(v) if isinstance(v, str) else str(v)


_FIELDS = {f.name: f for f in dc_fields(Scenario)}


def _coerce(name: str, raw: str):
    f = _FIELDS[name]
    raw = raw.strip()
    tp = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
    try:
        if tp == "str":
            return raw.strip("'\"")
        if tp == "int":
            return int(raw)
        if tp == "float":
            return float(raw)
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        key = name.replace("_", ".", 1)
        raise ConfigError(f"{key}: cannot parse value {raw!r}") from exc


def _assign(scn: Scenario, dotted: str, raw: str) -> None:
    name = dotted.strip().replace(".", "_", 1)
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {dotted.strip()!r}")
    setattr(scn, name, _coerce(name, raw))


def parse_scenario(text: str) -> Scenario:
    """Parse config text into a validated Scenario."""
    scn = Scenario()
    section = None
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key = value, got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if "." not in key:
            if section is None:
                raise ConfigError(f"line {ln}: bare key {key!r} outside a section")
            key = f"{section}.{key}"
        _assign(scn, key, raw)
    scn.validate()
    return scn


def load_scenario(path) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_scenario(text)


def apply_overrides(scn: Scenario, overrides) -> Scenario:
    """Apply repeatable --set key=value overrides, then re-validate."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        _assign(scn, key, raw)
    scn.validate()
    return scn
