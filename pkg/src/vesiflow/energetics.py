"""Energy densities, variational derivatives and midpoint difference quotients.

All pointwise functions broadcast over numpy arrays, so the same code serves
scalar checks, dense grids and quadrature-point evaluation.  Difference
quotients are always the closed polynomial forms: multiplying a quotient by
(new - old) reproduces the exact density difference pointwise, which is the
mechanism behind the unconditional energy stability of the time scheme.
They are never evaluated as literal divided differences, so coincident time
levels cost nothing special.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import (
    FunctionSpace,
    QuadratureRule,
    Tabulation,
    default_quadrature,
    eval_qp,
    grad_qp,
    integrate,
    load_vector,
    mass_matrix,
    stiffness_matrix,
)
from .params import EnergyLedger, ParameterSet, SystemState


# ---------------------------------------------------------------------------
# pointwise densities and quotients


def double_well_density(phi, eps: float):
    """Bulk well density (phi^2 - 1)^2 / (4 eps)."""
    return (np.asarray(phi) ** 2 - 1.0) ** 2 / (4.0 * eps)


def double_well_quotient(a, b, eps: float):
    """Closed-form quotient of the well density between two levels."""
    a = np.asarray(a)
    b = np.asarray(b)
    return (a * a + b * b - 2.0) * (a + b) / (4.0 * eps)


def membrane_reaction(phi, eps: float):
    """Reaction part (phi^2 - 1) phi / eps of the membrane density."""
    phi = np.asarray(phi)
    return (phi * phi - 1.0) * phi / eps


def membrane_reaction_levelavg(a, b, eps: float):
    """Level-averaged reaction part, consistent with the bending telescoping.

    Solving the midpoint membrane field against this form makes the
    reconstruction 2*f_mid - f_old coincide with the level evaluation, which
    the discrete bending-energy identity requires.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    return 0.5 * (membrane_reaction(a, eps) + membrane_reaction(b, eps))


def bending_reaction_weight(a, b, eps: float):
    """Weight (a^2 + b^2 + ab - 1) / eps^2 of the curvature-variation term."""
    a = np.asarray(a)
    b = np.asarray(b)
    return (a * a + b * b + a * b - 1.0) / (eps * eps)


def interaction_density(phi_a, phi_b, q1: float, q2: float):
    """Repulsive/attractive contact density between two phases."""
    pa = np.asarray(phi_a)
    pb = np.asarray(phi_b)
    return q1 * (pa + 1.0) ** 2 * (pb + 1.0) ** 2 - q2 * (pa * pa - 1.0) ** 2 * (pb * pb - 1.0) ** 2


def interaction_deriv(phi, other, q1: float, q2: float):
    """Derivative of the contact density with respect to the first phase."""
    p = np.asarray(phi)
    o = np.asarray(other)
    return 2.0 * q1 * (p + 1.0) * (o + 1.0) ** 2 - 4.0 * q2 * p * (p * p - 1.0) * (o * o - 1.0) ** 2


def interaction_quotient(a, b, other_mid, q1: float, q2: float):
    """Quotient of the contact density in the first phase, neighbor frozen."""
    a = np.asarray(a)
    b = np.asarray(b)
    A = (np.asarray(other_mid) + 1.0) ** 2
    B = (np.asarray(other_mid) ** 2 - 1.0) ** 2
    return q1 * (a + b + 2.0) * A - q2 * (a + b) * (a * a + b * b - 2.0) * B


def interaction_quotient_da(a, b, other_mid, q1: float, q2: float):
    a = np.asarray(a)
    b = np.asarray(b)
    A = (np.asarray(other_mid) + 1.0) ** 2
    B = (np.asarray(other_mid) ** 2 - 1.0) ** 2
    return q1 * A - q2 * (3.0 * a * a + 2.0 * a * b + b * b - 2.0) * B


def interaction_quotient_dother(a, b, other_mid, q1: float, q2: float):
    a = np.asarray(a)
    b = np.asarray(b)
    o = np.asarray(other_mid)
    return 2.0 * q1 * (a + b + 2.0) * (o + 1.0) - 4.0 * q2 * (a + b) * (a * a + b * b - 2.0) * o * (o * o - 1.0)


def neighbor_factors(a, b):
    """Level-averaged squared factors of a neighbor phase.

    Freezing neighbors at the average of their squared factors (rather than
    squaring the averaged value) is what makes the pairwise contact energy
    telescope exactly for any number of phases; for coincident levels both
    conventions agree.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    A = 0.5 * ((a + 1.0) ** 2 + (b + 1.0) ** 2)
    B = 0.5 * ((a * a - 1.0) ** 2 + (b * b - 1.0) ** 2)
    return A, B


def neighbor_factors_da(a):
    """Derivatives of the level-averaged factors w.r.t. the new level."""
    a = np.asarray(a)
    return a + 1.0, 2.0 * (a * a - 1.0) * a


def interaction_quotient_factors(a, b, A_other, B_other, q1: float, q2: float):
    """Contact quotient with the neighbor given by its averaged factors."""
    a = np.asarray(a)
    b = np.asarray(b)
    return q1 * (a + b + 2.0) * A_other - q2 * (a + b) * (a * a + b * b - 2.0) * B_other


def interaction_quotient_factors_da(a, b, A_other, B_other, q1: float, q2: float):
    a = np.asarray(a)
    b = np.asarray(b)
    return q1 * A_other - q2 * (3.0 * a * a + 2.0 * a * b + b * b - 2.0) * B_other


def wall_density(phi, phi_w, qw1: float, qw2: float, squared: bool = True):
    """Cell-wall contact density; the wall enters as a frozen phase.

    The squared attraction branch annihilates exactly at phi = -1 and
    telescopes against :func:`wall_quotient`; the unsquared branch is kept
    only for comparison runs.
    """
    if squared:
        return interaction_density(phi, phi_w, qw1, qw2)
    p = np.asarray(phi)
    w = np.asarray(phi_w)
    return qw1 * (p + 1.0) ** 2 * (w + 1.0) ** 2 - qw2 * (p * p - 1.0) * (w * w - 1.0)


def wall_quotient(a, b, phi_w, qw1: float, qw2: float, squared: bool = True):
    if squared:
        return interaction_quotient(a, b, phi_w, qw1, qw2)
    a = np.asarray(a)
    b = np.asarray(b)
    w = np.asarray(phi_w)
    return qw1 * (a + b + 2.0) * (w + 1.0) ** 2 - qw2 * (a + b) * (w * w - 1.0)


def wall_quotient_da(a, b, phi_w, qw1: float, qw2: float, squared: bool = True):
    if squared:
        return interaction_quotient_da(a, b, phi_w, qw1, qw2)
    w = np.asarray(phi_w)
    return qw1 * (w + 1.0) ** 2 * np.ones_like(np.asarray(a)) - qw2 * (w * w - 1.0)


def wall_deriv(phi, phi_w, qw1: float, qw2: float, squared: bool = True):
    if squared:
        return interaction_deriv(phi, phi_w, qw1, qw2)
    p = np.asarray(phi)
    w = np.asarray(phi_w)
    return 2.0 * qw1 * (p + 1.0) * (w + 1.0) ** 2 - 2.0 * qw2 * p * (w * w - 1.0)


# ---------------------------------------------------------------------------
# interface geometry at quadrature points


def surface_delta(grad_phi_q: np.ndarray, eps: float) -> np.ndarray:
    """Smeared interface indicator 0.5 eps^2 |grad phi|^2 at quadrature points."""
    return 0.5 * eps * eps * np.sum(grad_phi_q**2, axis=-1)


def projection_tensor(grad_phi_q: np.ndarray, regularizer: float) -> np.ndarray:
    """Regularized tangential projector I - (g x g) / (|g|^2 + reg^2).

    Symmetric with eigenvalues in [0, 1]; tends to the identity where the
    gradient vanishes.
    """
    if regularizer <= 0:
        raise ValueError("regularizer must be positive")
    g2 = np.sum(grad_phi_q**2, axis=-1) + regularizer**2
    outer = grad_phi_q[..., :, None] * grad_phi_q[..., None, :]
    P = -outer / g2[..., None, None]
    P[..., 0, 0] += 1.0
    P[..., 1, 1] += 1.0
    return P


# ---------------------------------------------------------------------------
# weak-form field operations


def surface_area(space: FunctionSpace, phi: np.ndarray, eps: float, rule: QuadratureRule | None = None) -> float:
    """Diffuse surface-area functional of one phase field.

    Evaluated with the assembly quadrature so that the discrete surface
    telescoping identities hold exactly against the assembled quotients.
    """
    tab = space.tabulate(rule or default_quadrature())
    g = grad_qp(tab, phi)
    w = 0.5 * eps * np.sum(g * g, axis=-1) + double_well_density(eval_qp(tab, phi), eps)
    return integrate(tab, w)


def surface_area_gradient(space: FunctionSpace, phi: np.ndarray, eps: float, rule: QuadratureRule | None = None) -> np.ndarray:
    """Nodal gradient of the surface-area functional (the membrane load)."""
    tab = space.tabulate(rule or default_quadrature())
    K = stiffness_matrix(tab, tab)
    return eps * (K @ phi) + load_vector(tab, membrane_reaction(eval_qp(tab, phi), eps))


def membrane_density_weak(
    space: FunctionSpace,
    phi: np.ndarray,
    eps: float,
    rule: QuadratureRule | None = None,
) -> np.ndarray:
    """Load vector defining the membrane density field in the C0 sense."""
    return surface_area_gradient(space, phi, eps, rule)


def solve_membrane_field(
    space: FunctionSpace,
    phi: np.ndarray,
    eps: float,
    wall_dofs: np.ndarray,
    rule: QuadratureRule | None = None,
) -> np.ndarray:
    """Membrane density as a nodal field, with f = 0 imposed on wall dofs."""
    tab = space.tabulate(rule or default_quadrature())
    M = mass_matrix(tab, tab).tolil()
    rhs = membrane_density_weak(space, phi, eps, rule)
    M[wall_dofs, :] = 0.0
    M[wall_dofs, wall_dofs] = 1.0
    rhs = rhs.copy()
    rhs[wall_dofs] = 0.0
    return spla.spsolve(M.tocsc(), rhs)


def membrane_quotient_load(
    space: FunctionSpace,
    phi_new: np.ndarray,
    phi_old: np.ndarray,
    eps: float,
    rule: QuadratureRule | None = None,
) -> np.ndarray:
    """Weak form of the midpoint membrane quotient between two levels.

    Pairing the returned vector with (phi_new - phi_old) reproduces the
    surface-area difference exactly (the quadrature-level telescoping the
    stable scheme is built on); at coincident levels it reduces to the
    membrane load.
    """
    tab = space.tabulate(rule or default_quadrature())
    K = stiffness_matrix(tab, tab)
    aq = eval_qp(tab, phi_new)
    bq = eval_qp(tab, phi_old)
    return 0.5 * eps * (K @ (phi_new + phi_old)) + load_vector(tab, double_well_quotient(aq, bq, eps))


def bending_quotient_load(
    space: FunctionSpace,
    phi_new: np.ndarray,
    phi_old: np.ndarray,
    f_mid: np.ndarray,
    eps: float,
    rule: QuadratureRule | None = None,
) -> np.ndarray:
    """Weak form of the curvature-variation quotient with a given midpoint
    membrane field; pairing with (phi_new - phi_old) telescopes the squared
    membrane norm when f_mid is the average of the level fields."""
    tab = space.tabulate(rule or default_quadrature())
    K = stiffness_matrix(tab, tab)
    aq = eval_qp(tab, phi_new)
    bq = eval_qp(tab, phi_old)
    return K @ f_mid + load_vector(tab, bending_reaction_weight(aq, bq, eps) * eval_qp(tab, f_mid))


def interaction_total(
    space: FunctionSpace,
    phis: np.ndarray,
    q1: float,
    q2: float,
    rule: QuadratureRule | None = None,
) -> float:
    """Pairwise contact energy integral, summed once over i < j."""
    tab = space.tabulate(rule or default_quadrature())
    n = phis.shape[0]
    vals = [eval_qp(tab, phis[i]) for i in range(n)]
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            total += integrate(tab, interaction_density(vals[i], vals[j], q1, q2))
    return total


def static_field_total(
    space: FunctionSpace,
    phi: np.ndarray,
    static_field: np.ndarray,
    qs1: float,
    qs2: float,
    squared: bool = True,
    rule: QuadratureRule | None = None,
) -> float:
    """Contact energy of one phase against a frozen field (wall or tweezer)."""
    tab = space.tabulate(rule or default_quadrature())
    return integrate(
        tab, wall_density(eval_qp(tab, phi), eval_qp(tab, static_field), qs1, qs2, squared=squared)
    )


def tweezer_force(
    space: FunctionSpace,
    phi: np.ndarray,
    tweezer_fields: list[np.ndarray],
    qtw1: float,
    qtw2: float,
    alpha: float,
    rule: QuadratureRule | None = None,
) -> np.ndarray:
    """Net contact force the frozen tweezer phases exert on a cell phase."""
    tab = space.tabulate(rule or default_quadrature())
    phi_q = eval_qp(tab, phi)
    grad_q = grad_qp(tab, phi)
    force = np.zeros(2)
    for tw in tweezer_fields:
        dH = alpha * interaction_deriv(phi_q, eval_qp(tab, tw), qtw1, qtw2)
        force[0] += integrate(tab, dH * grad_q[..., 0])
        force[1] += integrate(tab, dH * grad_q[..., 1])
    return force


def chemical_potential_load(
    space: FunctionSpace,
    phi: np.ndarray,
    f_field: np.ndarray,
    surface_ref: float,
    params: ParameterSet,
    neighbor_phis: list[np.ndarray] = (),
    wall_field: np.ndarray | None = None,
    tweezer_fields: list[np.ndarray] = (),
    wall_quotient_squared: bool = True,
    rule: QuadratureRule | None = None,
) -> np.ndarray:
    """Weak form of the chemical potential of one phase at a single time level.

    Assembles every term of the potential (curvature variation, surface
    penalty, cell-cell and static-field contact forces) against the scalar
    test space; the wall relaxation boundary term is part of the stepper,
    not of this equilibrium evaluation.
    """
    rule = rule or default_quadrature()
    tab = space.tabulate(rule)
    eps = params.interface_eps
    K = stiffness_matrix(tab, tab)
    phi_q = eval_qp(tab, phi)
    f_q = eval_qp(tab, f_field)
    # curvature variation: grad f . grad chi + (3 phi^2 - 1)/eps^2 f chi
    out = params.bending * (K @ f_field + load_vector(tab, (3.0 * phi_q**2 - 1.0) / eps**2 * f_q))
    # surface penalty: scalar factor times the membrane load
    s = (surface_area(space, phi, eps, rule) - surface_ref) / surface_ref
    out += params.surface_penalty * s * (eps * (K @ phi) + load_vector(tab, membrane_reaction(phi_q, eps)))
    alpha = params.interaction_scale
    if alpha != 0.0:
        w = np.zeros_like(phi_q)
        for nb in neighbor_phis:
            w += interaction_deriv(phi_q, eval_qp(tab, nb), params.q1, params.q2)
        if wall_field is not None:
            w += wall_deriv(phi_q, eval_qp(tab, wall_field), params.qw1, params.qw2, squared=wall_quotient_squared)
        for tw in tweezer_fields:
            w += interaction_deriv(phi_q, eval_qp(tab, tw), params.qtw1, params.qtw2)
        out += alpha * load_vector(tab, w)
    return out


def solve_chemical_potential(space: FunctionSpace, load: np.ndarray, rule: QuadratureRule | None = None) -> np.ndarray:
    """Nodal chemical potential from its weak load (consistent mass solve)."""
    tab = space.tabulate(rule or default_quadrature())
    M = mass_matrix(tab, tab)
    return spla.spsolve(M.tocsc(), load)


# ---------------------------------------------------------------------------
# ledger


def energy_ledger(
    space: FunctionSpace,
    vspace,
    state: SystemState,
    params: ParameterSet,
    wall_field: np.ndarray | None = None,
    tweezer_fields: list[np.ndarray] = (),
    wall_quotient_squared: bool = True,
    rule: QuadratureRule | None = None,
) -> EnergyLedger:
    """Energy decomposition of a state; dissipation channels left at zero."""
    rule = rule or default_quadrature()
    tab = space.tabulate(rule)
    vtab = vspace.scalar.tabulate(rule)
    re = params.reynolds
    eps = params.interface_eps
    n = state.n_phases
    ux = vspace.component(state.velocity, 0)
    uy = vspace.component(state.velocity, 1)
    e_kin = 0.5 * integrate(vtab, eval_qp(vtab, ux) ** 2 + eval_qp(vtab, uy) ** 2)
    e_bend = []
    e_surf = []
    e_wall = []
    for i in range(n):
        f_q = eval_qp(tab, state.f[i])
        e_bend.append(params.bending / (2.0 * re * eps) * integrate(tab, f_q * f_q))
        s = surface_area(space, state.phi[i], eps, rule)
        s0 = state.surface_area_ref[i]
        e_surf.append(params.surface_penalty * (s - s0) ** 2 / (2.0 * re * s0))
        ew = 0.0
        if wall_field is not None:
            ew += static_field_total(space, state.phi[i], wall_field, params.qw1, params.qw2,
                                     squared=wall_quotient_squared, rule=rule)
        for tw in tweezer_fields:
            ew += static_field_total(space, state.phi[i], tw, params.qtw1, params.qtw2, rule=rule)
        e_wall.append(params.interaction_scale / re * ew)
    e_int = params.interaction_scale / re * interaction_total(space, state.phi, params.q1, params.q2, rule)
    return EnergyLedger(e_kin, tuple(e_bend), tuple(e_surf), e_int, tuple(e_wall))
