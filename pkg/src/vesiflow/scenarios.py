"""Scenario construction: initial phases, wall/tweezer fields, flow driving.

A ScenarioSpec is a declarative description (geometry, cells, driving); the
builders turn it into a mesh, static fields and a ready CoupledStepper plus
initial state.  Each experiment family ships as a named preset whose
parameters can be overridden through the run configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fem import FunctionSpace
from .meshing import INLET, OUTLET, Mesh, build_rect_mesh, build_y_channel_mesh
from .params import ParameterSet, check_eps_against_mesh
from .stepper import CoupledStepper


@dataclass(frozen=True)
class CellShape:
    """Ellipse (circle when rx == ry) with tanh profile of width eps."""

    cx: float
    cy: float
    rx: float
    ry: float | None = None

    def radii(self):
        ry = self.rx if self.ry is None else self.ry
        if self.rx <= 0 or ry <= 0:
            raise ValueError("cell radii must be positive")
        return self.rx, ry


@dataclass(frozen=True)
class ScenarioSpec:
    """Declarative scenario description.

    ``flow`` selects exactly one driving mode: "none", "couette" (moving
    lids, speed ``lid_speed`` split evenly between top and bottom), or
    "pressure_drop" (open inlet/outlet with prescribed pressure jump).
    """

    name: str = "custom"
    params: ParameterSet = field(default_factory=ParameterSet)
    mesh_kind: str = "rect"  # or "y_channel"
    nx: int = 32
    ny: int = 32
    extent: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
    main_width: float = 1.0
    top_width: float = 0.7
    bottom_width: float = 0.7
    main_length: float = 1.2
    branch_length: float = 1.2
    branch_gap: float = 0.3
    mesh_h: float = 0.05
    tip_blunt: float = 0.0
    cells: tuple[CellShape, ...] = ()
    wall_band: float = 0.0  # 0 disables the wall phase
    tweezers: tuple[tuple[float, float, float], ...] = ()
    flow: str = "none"
    lid_speed: float = 0.0
    pressure_drop: float = 0.0
    wall_quotient_squared: bool = True
    lambda_mass_reg: float = 0.0

    def __post_init__(self):
        if self.flow not in ("none", "couette", "shear_lid", "pressure_drop"):
            raise ValueError("flow must be one of none, couette, shear_lid, pressure_drop")
        if len(self.cells) != self.params.n_phases:
            object.__setattr__(self, "params", replace(self.params, n_phases=max(1, len(self.cells))))


def init_cell_field(shape: CellShape, space: FunctionSpace, eps: float) -> np.ndarray:
    """Tanh profile of the (radial) signed distance to the cell boundary,
    positive inside, clipped to [-1, 1]."""
    rx, ry = shape.radii()
    x = space.dof_coords[:, 0] - shape.cx
    y = space.dof_coords[:, 1] - shape.cy
    r = np.sqrt(x * x + y * y)
    with np.errstate(invalid="ignore", divide="ignore"):
        ct, st = np.where(r > 0, x / np.maximum(r, 1e-300), 1.0), np.where(r > 0, y / np.maximum(r, 1e-300), 0.0)
    # radial distance to the ellipse along the ray (exact for circles)
    rb = rx * ry / np.sqrt((ry * ct) ** 2 + (rx * st) ** 2)
    d = rb - r
    return np.clip(np.tanh(d / (math.sqrt(2.0) * eps)), -1.0, 1.0)


def wall_distance(mesh: Mesh, points: np.ndarray) -> np.ndarray:
    """Distance from each point to the wall-tagged part of the boundary."""
    fids = mesh.facets_with_tag("wall")
    a = mesh.vertices[mesh.facets[fids, 0]]
    b = mesh.vertices[mesh.facets[fids, 1]]
    ab = b - a
    denom = np.maximum(np.sum(ab * ab, axis=1), 1e-300)
    best = np.full(points.shape[0], np.inf)
    chunk = 2048
    for s in range(0, points.shape[0], chunk):
        p = points[s : s + chunk]
        t = np.clip(((p[:, None, :] - a[None, :, :]) * ab[None, :, :]).sum(-1) / denom[None, :], 0.0, 1.0)
        proj = a[None, :, :] + t[..., None] * ab[None, :, :]
        dist = np.linalg.norm(p[:, None, :] - proj, axis=-1).min(axis=1)
        best[s : s + chunk] = dist
    return best


def init_wall_field(mesh: Mesh, band: float, space: FunctionSpace, eps: float) -> np.ndarray:
    """Wall phase: +1 within ``band`` of a wall, -1 in the fluid, tanh edge."""
    if band < 2 * eps:
        raise ValueError("wall band must be at least 2 eps to be resolved")
    w, h = mesh.extent()
    if band > 0.5 * min(w, h):
        raise ValueError("wall band exceeds the domain half-width")
    d = wall_distance(mesh, space.dof_coords)
    return np.clip(np.tanh((band - d) / (math.sqrt(2.0) * eps)), -1.0, 1.0)


def couette_wall_velocity(lid_speed: float, y_mid: float):
    """Wall slip target of a plane Couette drive: +-lid_speed/2 on top/bottom."""

    def vel(x, y, c):
        if c == 0:
            return np.where(np.asarray(y) > y_mid, 0.5 * lid_speed, -0.5 * lid_speed)
        return np.zeros_like(np.asarray(x, dtype=float))

    return vel


def lid_wall_velocity(lid_speed: float, y_top: float):
    """One-sided shear: only the top lid moves, the other walls are static."""

    def vel(x, y, c):
        if c == 0:
            return np.where(np.asarray(y) > y_top - 1e-9, lid_speed, 0.0)
        return np.zeros_like(np.asarray(x, dtype=float))

    return vel


@dataclass(frozen=True, eq=False)
class Scenario:
    """Runtime scenario: mesh, stepper, initial state and static fields."""

    spec: ScenarioSpec
    mesh: Mesh
    stepper: CoupledStepper
    initial_state: object
    wall_field: np.ndarray | None
    tweezer_fields: tuple[np.ndarray, ...]

    @property
    def closed_box(self) -> bool:
        return self.stepper.closed_box


def build_mesh(spec: ScenarioSpec) -> Mesh:
    if spec.mesh_kind == "rect":
        mesh = build_rect_mesh(spec.nx, spec.ny, spec.extent)
        if spec.flow == "pressure_drop":
            x0, x1 = spec.extent[0], spec.extent[1]
            tol = 1e-12 * max(1.0, abs(x1))
            mesh = mesh.retag(INLET, lambda m: m[:, 0] < x0 + tol)
            mesh = mesh.retag(OUTLET, lambda m: m[:, 0] > x1 - tol)
        return mesh
    if spec.mesh_kind == "y_channel":
        return build_y_channel_mesh(
            main_width=spec.main_width,
            top_width=spec.top_width,
            bottom_width=spec.bottom_width,
            main_length=spec.main_length,
            branch_length=spec.branch_length,
            branch_gap=spec.branch_gap,
            h=spec.mesh_h,
            tip_blunt=spec.tip_blunt,
        )
    raise ValueError(f"unknown mesh_kind {spec.mesh_kind!r}")


def build_scenario(spec: ScenarioSpec) -> Scenario:
    """Construct mesh, fields, stepper and the validated initial state."""
    if not spec.cells:
        raise ValueError("scenario needs at least one cell")
    mesh = build_mesh(spec)
    p = spec.params
    check_eps_against_mesh(p, min(mesh.extent()))
    space = FunctionSpace(mesh, 1)
    eps = p.interface_eps
    wall_field = None
    if spec.wall_band > 0:
        wall_field = init_wall_field(mesh, spec.wall_band, space, eps)
    tweezer_fields = tuple(
        init_cell_field(CellShape(cx, cy, r), space, eps) for cx, cy, r in spec.tweezers
    )
    for cx, cy, r in spec.tweezers:
        if r <= 0:
            raise ValueError("tweezer radius must be positive")
    phis = np.stack([init_cell_field(c, space, eps) for c in spec.cells])
    if wall_field is not None:
        # cells must start in the fluid: wall phase ~ -1 at every cell center
        for c in spec.cells:
            iv = np.argmin(
                (space.dof_coords[:, 0] - c.cx) ** 2 + (space.dof_coords[:, 1] - c.cy) ** 2
            )
            if wall_field[iv] > -0.5:
                raise ValueError(f"cell at ({c.cx}, {c.cy}) overlaps the wall band")
    wall_velocity = None
    open_bcs: tuple[tuple[str, float], ...] = ()
    if spec.flow == "couette":
        y_mid = 0.5 * (spec.extent[2] + spec.extent[3]) if spec.mesh_kind == "rect" else 0.0
        wall_velocity = couette_wall_velocity(spec.lid_speed, y_mid)
    elif spec.flow == "shear_lid":
        wall_velocity = lid_wall_velocity(spec.lid_speed, spec.extent[3])
    elif spec.flow == "pressure_drop":
        open_bcs = ((INLET, spec.pressure_drop), (OUTLET, 0.0))
    stepper = CoupledStepper(
        mesh,
        p,
        wall_field=wall_field,
        tweezer_fields=tweezer_fields,
        wall_velocity=wall_velocity,
        open_boundaries=open_bcs,
        wall_quotient_squared=spec.wall_quotient_squared,
        lambda_mass_reg=spec.lambda_mass_reg,
    )
    state = stepper.initial_state(phis)
    # start on the slow manifold: the interface forces of the initial layout
    # define a quasi-steady Stokes flow, and the midpoint scheme would ring
    # around it forever if started from rest
    state = stepper.steady_flow(state)
    ledger = stepper.ledger(state)
    ledger.check()
    return Scenario(spec, mesh, stepper, state, wall_field, tweezer_fields)


# ---------------------------------------------------------------------------
# presets for the experiment families


def preset(name: str) -> ScenarioSpec:
    """Named scenario presets; every field can be overridden via config."""
    if name == "stretch":
        params = ParameterSet(
            reynolds=2e-4, mobility=0.25, bending=2e-3, interface_eps=0.03,
            surface_penalty=2.0, wall_relax=2e-12, slip_length=5e-3,
            interaction_scale=20.0, qtw1=0.5, qtw2=1.0, inext_relax=0.0, n_phases=1,
        )
        return ScenarioSpec(
            name=name, params=params, nx=48, ny=48,
            cells=(CellShape(0.5, 0.5, 0.24, 0.18),),
            tweezers=((0.18, 0.5, 0.14), (0.82, 0.5, 0.14)),
        )
    if name == "wall_adhesion":
        params = ParameterSet(
            reynolds=2e-4, mobility=5e-4, bending=2e-2, interface_eps=2e-3,
            surface_penalty=1e2, wall_relax=4e-11, slip_length=5e-6,
            interaction_scale=1000.0, qw1=2.0, qw2=1.0, inext_relax=1e-2, n_phases=1,
        )
        return ScenarioSpec(
            name=name, params=params, nx=64, ny=64, wall_band=0.1,
            cells=(CellShape(0.5, 0.35, 0.25),),
        )
    if name == "shear_capture":
        params = ParameterSet(
            reynolds=2e-4, mobility=5e-4, bending=2e-2, interface_eps=0.03,
            surface_penalty=1e2, wall_relax=4e-11, slip_length=5e-3,
            interaction_scale=1000.0, qw1=2.0, qw2=1.0, inext_relax=0.0, n_phases=1,
        )
        return ScenarioSpec(
            name=name, params=params, nx=48, ny=24, extent=(0.0, 2.0, 0.0, 1.0),
            wall_band=0.08, cells=(CellShape(0.5, 0.3, 0.18),),
            flow="shear_lid", lid_speed=1.0,
        )
    if name == "rouleaux":
        params = ParameterSet(
            reynolds=2e-5, mobility=5e-4, bending=4e-2, interface_eps=0.03,
            surface_penalty=1e3, wall_relax=4e-12, slip_length=5e-3,
            interaction_scale=3e3, q1=1.0, q2=0.5, inext_relax=0.0, n_phases=4,
        )
        r = 0.13
        return ScenarioSpec(
            name=name, params=params, nx=48, ny=24, extent=(0.0, 2.0, 0.0, 1.0),
            cells=tuple(CellShape(0.4 + i * 2.05 * r, 0.5, r) for i in range(4)),
        )
    if name == "couette":
        spec = preset("rouleaux")
        return replace(spec, name=name, flow="couette", lid_speed=1.0)
    if name == "y_channel":
        # the purely repulsive wall band keeps cells off the channel walls
        # and cushions the divider tip
        params = ParameterSet(
            reynolds=2e-4, mobility=5e-4, bending=4e-2, interface_eps=0.035,
            surface_penalty=20.0, wall_relax=4e-11, slip_length=5e-6,
            interaction_scale=25.0, q1=1.0, q2=1.0, qw1=1.0, qw2=0.0,
            inext_relax=0.0, n_phases=4,
        )
        r = 0.115
        return ScenarioSpec(
            name=name, params=params, mesh_kind="y_channel",
            main_width=1.0, top_width=0.7, bottom_width=0.7,
            main_length=1.2, branch_length=1.2, branch_gap=0.36, mesh_h=0.05,
            tip_blunt=0.05, wall_band=0.07,
            cells=(
                CellShape(0.30, 0.155, r),
                CellShape(0.30, -0.155, r),
                CellShape(0.54, 0.155, r),
                CellShape(0.54, -0.155, r),
            ),
            flow="pressure_drop", pressure_drop=45.0,
            lambda_mass_reg=0.0,
        )
    raise KeyError(f"unknown preset {name!r}; known: stretch, wall_adhesion, shear_capture, rouleaux, couette, y_channel")


PRESET_NAMES = ("stretch", "wall_adhesion", "shear_capture", "rouleaux", "couette", "y_channel")
