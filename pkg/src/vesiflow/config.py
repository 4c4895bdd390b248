"""Run configuration: flat key/value sections, strict keys, lossless floats.

Sections map onto the package modules: ``[core]`` holds the parameter set
(every field under its own name), ``[scenario]`` the geometry/initial-data
description, ``[timestepper]`` the solver controls, ``[energetics]`` the
model switches, ``[output]`` the sink controls.  Unknown sections or keys are
hard errors: a silently ignored typo in an interaction weight would
invisibly change the physics.  Floats are written with ``repr`` so a
parameter set round-trips bit-exactly.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace

from .params import ParameterSet, validate_parameters
from .scenarios import CellShape, ScenarioSpec, preset
from .stepper import StepOptions


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _parse_cells(s: str) -> tuple[CellShape, ...]:
    out = []
    for part in s.split(";"):
        part = part.strip()
        if not part:
            continue
        nums = [float(t) for t in part.split(",")]
        if len(nums) == 3:
            out.append(CellShape(nums[0], nums[1], nums[2]))
        elif len(nums) == 4:
            out.append(CellShape(nums[0], nums[1], nums[2], nums[3]))
        else:
            raise ConfigError(f"cell entry must be 'x,y,r' or 'x,y,rx,ry': {part!r}")
    return tuple(out)


def _parse_tweezers(s: str) -> tuple[tuple[float, float, float], ...]:
    out = []
    for part in s.split(";"):
        part = part.strip()
        if not part:
            continue
        nums = [float(t) for t in part.split(",")]
        if len(nums) != 3:
            raise ConfigError(f"tweezer entry must be 'x,y,r': {part!r}")
        out.append((nums[0], nums[1], nums[2]))
    return tuple(out)


def _parse_floats(s: str) -> tuple[float, ...]:
    return tuple(float(t) for t in s.split(",") if t.strip())


_CORE_KEYS = {f.name for f in fields(ParameterSet)}
_SCEN_KEYS = {
    "preset", "nx", "ny", "extent", "main_width", "top_width", "bottom_width",
    "main_length", "branch_length", "branch_gap", "mesh_h", "mesh_kind", "tip_blunt",
    "cells", "wall_band", "tweezers", "flow", "lid_speed", "pressure_drop",
}
_STEP_KEYS = {
    "dt", "newton_tol", "newton_max_iter", "jacobian_mode", "linear_tol",
    "convection_form", "max_dt_halvings", "n_steps",
}
_ENERGETICS_KEYS = {
    "wall_quotient_squared", "lambda_mass_reg",
    "interaction_alpha_exp", "interaction_beta_exp",
}
_OUTPUT_KEYS = {"dir", "snapshot_every", "energy_residual_factor", "enforce_energy_law"}
_SECTIONS = {
    "core": _CORE_KEYS,
    "scenario": _SCEN_KEYS,
    "timestepper": _STEP_KEYS,
    "energetics": _ENERGETICS_KEYS,
    "output": _OUTPUT_KEYS,
}


@dataclass
class RunConfig:
    """Fully resolved run description."""

    spec: ScenarioSpec
    options: StepOptions
    n_steps: int = 50
    out_dir: str = "out"
    snapshot_every: int = 0
    energy_residual_factor: float = 1e2
    enforce_energy_law: bool = True


def _apply_pairs(pairs, spec, step_kw, run_kw):
    params = spec.params
    scen_kw: dict = {}
    for (section, key), raw in pairs:
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        if key not in _SECTIONS[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        if section == "core":
            if key == "n_phases":
                params = replace(params, n_phases=int(raw))
            elif key == "viscosity_model":
                params = replace(params, viscosity_model=raw.strip())
            elif key == "phase_viscosities":
                params = replace(params, phase_viscosities=_parse_floats(raw))
            else:
                params = replace(params, **{key: float(raw)})
        elif section == "scenario":
            if key == "preset":
                continue  # handled before
            if key in ("nx", "ny"):
                scen_kw[key] = int(raw)
            elif key == "extent":
                vals = _parse_floats(raw)
                if len(vals) != 4:
                    raise ConfigError("extent must be 'x0,x1,y0,y1'")
                scen_kw[key] = vals
            elif key == "cells":
                scen_kw[key] = _parse_cells(raw)
            elif key == "tweezers":
                scen_kw[key] = _parse_tweezers(raw)
            elif key in ("flow", "mesh_kind"):
                scen_kw[key] = raw.strip()
            else:
                scen_kw[key] = float(raw)
        elif section == "timestepper":
            if key == "n_steps":
                run_kw["n_steps"] = int(raw)
            elif key in ("newton_max_iter", "max_dt_halvings"):
                step_kw[key] = int(raw)
            elif key in ("jacobian_mode", "convection_form"):
                step_kw[key] = raw.strip()
            else:
                step_kw[key] = float(raw)
        elif section == "energetics":
            if key == "wall_quotient_squared":
                scen_kw["wall_quotient_squared"] = _parse_bool(raw)
            elif key == "lambda_mass_reg":
                scen_kw["lambda_mass_reg"] = float(raw)
            elif key in ("interaction_alpha_exp", "interaction_beta_exp"):
                if int(raw) != 2:
                    raise ConfigError(f"{key} is recorded for forward compatibility but only 2 is implemented")
        elif section == "output":
            if key == "dir":
                run_kw["out_dir"] = raw.strip()
            elif key == "snapshot_every":
                run_kw["snapshot_every"] = int(raw)
            elif key == "energy_residual_factor":
                run_kw["energy_residual_factor"] = float(raw)
            elif key == "enforce_energy_law":
                run_kw["enforce_energy_law"] = _parse_bool(raw)
    spec = replace(spec, params=params, **scen_kw) if scen_kw or params is not spec.params else spec
    return spec


def load_config(path=None, set_overrides=()) -> RunConfig:
    """Build a RunConfig from an INI file plus ``section.key=value`` overrides.

    The scenario preset (``scenario.preset``) provides the base; every other
    key overrides one field.  Unknown keys raise ConfigError.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    raw_pairs: list[tuple[tuple[str, str], str]] = []
    preset_name = None
    if path is not None:
        read = cp.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in cp.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in cp.items(section):
                if key not in _SECTIONS[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                if section == "scenario" and key == "preset":
                    preset_name = raw.strip()
                else:
                    raw_pairs.append(((section, key), raw))
    for item in set_overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        lhs, raw = item.split("=", 1)
        if "." not in lhs:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        section, key = lhs.split(".", 1)
        if section == "scenario" and key == "preset":
            preset_name = raw.strip()
        else:
            raw_pairs.append(((section.strip(), key.strip()), raw))
    spec = preset(preset_name) if preset_name else ScenarioSpec()
    step_kw: dict = {}
    run_kw: dict = {}
    spec = _apply_pairs(raw_pairs, spec, step_kw, run_kw)
    validate_parameters(spec.params)
    options = StepOptions(dt=step_kw.pop("dt", 1e-4), **step_kw)
    return RunConfig(spec=spec, options=options, **run_kw)


def format_config(cfg: RunConfig) -> str:
    """Serialize a RunConfig; floats use repr for bit-exact round trips."""
    p = cfg.spec.params
    lines = ["[core]"]
    for f in fields(ParameterSet):
        v = getattr(p, f.name)
        if v is None:
            continue
        if f.name == "phase_viscosities":
            lines.append(f"{f.name} = {','.join(repr(x) for x in v)}")
        elif isinstance(v, bool):
            lines.append(f"{f.name} = {str(v).lower()}")
        elif isinstance(v, float):
            lines.append(f"{f.name} = {v!r}")
        else:
            lines.append(f"{f.name} = {v}")
    s = cfg.spec
    lines += [
        "",
        "[scenario]",
        f"mesh_kind = {s.mesh_kind}",
        f"nx = {s.nx}",
        f"ny = {s.ny}",
        f"extent = {','.join(repr(v) for v in s.extent)}",
        f"main_width = {s.main_width!r}",
        f"top_width = {s.top_width!r}",
        f"bottom_width = {s.bottom_width!r}",
        f"main_length = {s.main_length!r}",
        f"branch_length = {s.branch_length!r}",
        f"branch_gap = {s.branch_gap!r}",
        f"mesh_h = {s.mesh_h!r}",
        f"wall_band = {s.wall_band!r}",
        f"flow = {s.flow}",
        f"lid_speed = {s.lid_speed!r}",
        f"pressure_drop = {s.pressure_drop!r}",
    ]
    if s.cells:
        lines.append("cells = " + "; ".join(
            f"{c.cx!r},{c.cy!r},{c.rx!r}" + (f",{c.ry!r}" if c.ry is not None else "") for c in s.cells
        ))
    if s.tweezers:
        lines.append("tweezers = " + "; ".join(f"{x!r},{y!r},{r!r}" for x, y, r in s.tweezers))
    o = cfg.options
    lines += [
        "",
        "[timestepper]",
        f"dt = {o.dt!r}",
        f"newton_tol = {o.newton_tol!r}",
        f"newton_max_iter = {o.newton_max_iter}",
        f"jacobian_mode = {o.jacobian_mode}",
        f"linear_tol = {o.linear_tol!r}",
        f"convection_form = {o.convection_form}",
        f"max_dt_halvings = {o.max_dt_halvings}",
        f"n_steps = {cfg.n_steps}",
        "",
        "[energetics]",
        f"wall_quotient_squared = {str(s.wall_quotient_squared).lower()}",
        f"lambda_mass_reg = {s.lambda_mass_reg!r}",
        "",
        "[output]",
        f"dir = {cfg.out_dir}",
        f"snapshot_every = {cfg.snapshot_every}",
        f"energy_residual_factor = {cfg.energy_residual_factor!r}",
        f"enforce_energy_law = {str(cfg.enforce_energy_law).lower()}",
    ]
    return "\n".join(lines) + "\n"


def save_config(path, cfg: RunConfig) -> None:
    with open(path, "w") as fh:
        fh.write(format_config(cfg))
