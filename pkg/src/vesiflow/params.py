"""Dimensionless parameter set, system state and energy ledger.

All quantities are dimensionless.  The parameter set is the single source of
truth for a run; it is immutable and validated up front so that solver code
never has to re-check signs or ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

_POSITIVE = (
    "reynolds",
    "mobility",
    "bending",
    "interface_eps",
    "wall_relax",
    "slip_length",
)
_NONNEGATIVE = (
    "surface_penalty",
    "interaction_scale",
    "q1",
    "q2",
    "qw1",
    "qw2",
    "qtw1",
    "qtw2",
    "inext_relax",
)


class ParameterError(ValueError):
    """Raised when a parameter set violates its invariants.

    Carries the full list of violated constraints in ``violations``.
    """

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True)
class ParameterSet:
    """All dimensionless groups of the model plus interaction strengths.

    Attributes
    ----------
    reynolds : float
        Flow Reynolds number Re (> 0).
    mobility : float
        Phase mobility M (> 0).
    bending : float
        Membrane bending modulus (> 0).
    interface_eps : float
        Diffuse-interface thickness epsilon (> 0, and small against the
        domain; checked against the mesh at run start).
    surface_penalty : float
        Global surface-area penalty M_s (>= 0, 0 disables).
    wall_relax : float
        Wall relaxation coefficient kappa of the boundary phase dynamics
        (> 0; also scales the wall dissipation channel).
    slip_length : float
        Slip length l_s of the wall friction condition (> 0).
    interaction_scale : float
        Global interaction strength alpha multiplying all contact
        potentials (>= 0).
    q1, q2 : float
        Cell-cell repulsion / attraction weights (>= 0).
    qw1, qw2 : float
        Cell-wall repulsion / attraction weights (>= 0).
    qtw1, qtw2 : float
        Tweezer-phase repulsion / attraction weights (>= 0).
    inext_relax : float
        Relaxation coefficient xi of the local inextensibility constraint;
        0 disables the constraint and drops its multiplier from the system.
        Never pinned by the physical setups, so it is a solver choice; the
        default 1e-2 can be overridden per run.
    viscosity_model : str
        "constant" (viscosity identically 1) or "phase" (interpolated
        between per-phase viscosities).
    phase_viscosities : tuple of float, optional
        Per-phase viscosities, required iff ``viscosity_model == "phase"``.
    n_phases : int
        Number of evolving phases N (>= 1).
    """

    reynolds: float = 2e-4
    mobility: float = 5e-4
    bending: float = 2e-2
    interface_eps: float = 2e-2
    surface_penalty: float = 1e2
    wall_relax: float = 4e-11
    slip_length: float = 5e-3
    interaction_scale: float = 0.0
    q1: float = 0.0
    q2: float = 0.0
    qw1: float = 0.0
    qw2: float = 0.0
    qtw1: float = 0.0
    qtw2: float = 0.0
    inext_relax: float = 1e-2
    viscosity_model: str = "constant"
    phase_viscosities: tuple[float, ...] | None = None
    n_phases: int = 1

    def with_overrides(self, **kw) -> "ParameterSet":
        return replace(self, **kw)


def parameter_violations(p: ParameterSet) -> list[str]:
    """Collect every violated invariant of a parameter set.

    Returns an empty list when the set is valid.
    """
    bad: list[str] = []
    for name in _POSITIVE:
        v = getattr(p, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v)):
            bad.append(f"{name} must be a finite number")
        elif v <= 0:
            bad.append(f"{name} must be positive")
    for name in _NONNEGATIVE:
        v = getattr(p, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v)):
            bad.append(f"{name} must be a finite number")
        elif v < 0:
            bad.append(f"{name} must be nonnegative")
    if not isinstance(p.n_phases, int) or p.n_phases < 1:
        bad.append("n_phases must be a positive integer")
    if p.viscosity_model not in ("constant", "phase"):
        bad.append("viscosity_model must be 'constant' or 'phase'")
    if p.viscosity_model == "phase":
        vs = p.phase_viscosities
        if vs is None or len(vs) != p.n_phases:
            bad.append("phase_viscosities must list one value per phase")
        elif any((not math.isfinite(v)) or v <= 0 for v in vs):
            bad.append("phase_viscosities must be positive")
    elif p.phase_viscosities is not None:
        bad.append("phase_viscosities only apply to viscosity_model='phase'")
    return bad


def validate_parameters(p: ParameterSet) -> ParameterSet:
    """Return ``p`` unchanged if valid, else raise ParameterError.

    The exception carries the complete list of violations, not just the
    first one found.
    """
    bad = parameter_violations(p)
    if bad:
        raise ParameterError(bad)
    return p


def check_eps_against_mesh(p: ParameterSet, extent: float) -> None:
    """Reject an interface thickness on the order of the domain size."""
    if p.interface_eps >= 0.5 * extent:
        raise ParameterError(
            [f"interface_eps={p.interface_eps} is not small against the domain size {extent}"]
        )


@dataclass(frozen=True, eq=False)
class SystemState:
    """All solution fields at one time level.

    ``phi``, ``f``, ``mu`` and ``lam`` are (N, n_scalar) nodal arrays; the
    velocity is stored as the stacked (2 * n_velocity,) vector of x then y
    components.  ``surface_area_ref`` holds the initial surface areas,
    frozen at initialization, and ``mass_ref`` the initial per-phase masses
    used by the conservation diagnostics.  Arrays are marked read-only:
    states are immutable snapshots and safe to share across readers.
    """

    time: float
    phi: np.ndarray
    f: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    velocity: np.ndarray
    pressure: np.ndarray
    surface_area_ref: np.ndarray
    mass_ref: np.ndarray

    def __post_init__(self):
        for name in ("phi", "f", "mu", "lam", "velocity", "pressure", "surface_area_ref", "mass_ref"):
            arr = getattr(self, name)
            object.__setattr__(self, name, np.ascontiguousarray(arr, dtype=float))
            getattr(self, name).setflags(write=False)
        if self.time < 0:
            raise ValueError("time must be nonnegative")
        n = self.phi.shape[0]
        for name in ("f", "mu", "lam"):
            if getattr(self, name).shape != self.phi.shape:
                raise ValueError(f"{name} shape must match phi")
        if self.surface_area_ref.shape != (n,) or self.mass_ref.shape != (n,):
            raise ValueError("per-phase reference arrays must have length n_phases")
        if np.any(self.surface_area_ref <= 0):
            raise ValueError("surface_area_ref entries must be strictly positive")

    @property
    def n_phases(self) -> int:
        return self.phi.shape[0]


@dataclass(frozen=True)
class EnergyLedger:
    """Energy decomposition of a state plus the per-step dissipation channels.

    The five dissipation channels are filled by the time stepper after a
    step; a freshly evaluated ledger carries zeros there.  Each channel is a
    squared-norm integral and therefore nonnegative.
    """

    e_kin: float
    e_bend: tuple[float, ...]
    e_surf: tuple[float, ...]
    e_int: float
    e_wall: tuple[float, ...]
    d_visc: float = 0.0
    d_mu: float = 0.0
    d_lambda: float = 0.0
    d_wall_ac: float = 0.0
    d_slip: float = 0.0

    @property
    def total(self) -> float:
        return self.e_kin + sum(self.e_bend) + sum(self.e_surf) + self.e_int + sum(self.e_wall)

    @property
    def dissipation(self) -> float:
        return self.d_visc + self.d_mu + self.d_lambda + self.d_wall_ac + self.d_slip

    def check(self) -> None:
        """Assert ledger invariants (finite total, nonnegative channels)."""
        if not math.isfinite(self.total):
            raise ValueError("ledger total is not finite")
        for name in ("d_visc", "d_mu", "d_lambda", "d_wall_ac", "d_slip"):
            v = getattr(self, name)
            if v < -1e-13 * (1.0 + abs(self.total)):
                raise ValueError(f"dissipation channel {name} is negative: {v}")

    def with_dissipation(self, d_visc, d_mu, d_lambda, d_wall_ac, d_slip) -> "EnergyLedger":
        return replace(
            self,
            d_visc=float(d_visc),
            d_mu=float(d_mu),
            d_lambda=float(d_lambda),
            d_wall_ac=float(d_wall_ac),
            d_slip=float(d_slip),
        )
