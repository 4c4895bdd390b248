"""Independent brute-force and semi-analytic references.

These back the cross-checks of the assembly code and deliberately avoid the
package's assembly kernels: quadrature loops are written out directly with
their own basis evaluations, energies are differentiated by finite
differences, and profile integrals are done by dense 1D quadrature.  They
run in the test suite (and behind ``verify oracle``), not in production
paths.
"""

from __future__ import annotations

import math

import numpy as np


def oracle_tanh_surface(eps: float, resolution: int = 200_000, half_width: float | None = None) -> float:
    """1D trapezoid quadrature of the planar interface profile energy.

    Integrates eps/2 phi'^2 + (1 - phi^2)^2/(4 eps) for phi = tanh(x /
    (sqrt(2) eps)) across the interface; converges to 2 sqrt(2) / 3,
    independent of eps.
    """
    if resolution < 10_000:
        raise ValueError("resolution too low for the stated tolerance")
    L = half_width if half_width is not None else 10.0 * eps
    x = np.linspace(-L, L, resolution)
    t = np.tanh(x / (math.sqrt(2.0) * eps))
    dphi = (1.0 - t * t) / (math.sqrt(2.0) * eps)
    dens = 0.5 * eps * dphi**2 + (1.0 - t * t) ** 2 / (4.0 * eps)
    return float(np.trapezoid(dens, x))


def oracle_h_landscape(q1: float, q2: float, n: int = 400):
    """Dense scan of the contact density over [-1, 1]^2.

    Returns (min value, argmin pair, boundary row at phi_a = -1).
    """
    if n < 400:
        raise ValueError("need at least 400 points per axis")
    g = np.linspace(-1.0, 1.0, n)
    A, B = np.meshgrid(g, g, indexing="ij")
    H = q1 * (A + 1.0) ** 2 * (B + 1.0) ** 2 - q2 * (A * A - 1.0) ** 2 * (B * B - 1.0) ** 2
    k = np.argmin(H)
    i, j = np.unravel_index(k, H.shape)
    return float(H[i, j]), (float(g[i]), float(g[j])), H[0, :]


# -- independent discrete energy (plain per-element loops) --------------------

_TRI_BARY = np.array(
    [
        [1 - 2 * 0.445948490915965, 0.445948490915965, 0.445948490915965],
        [0.445948490915965, 1 - 2 * 0.445948490915965, 0.445948490915965],
        [0.445948490915965, 0.445948490915965, 1 - 2 * 0.445948490915965],
        [1 - 2 * 0.091576213509771, 0.091576213509771, 0.091576213509771],
        [0.091576213509771, 1 - 2 * 0.091576213509771, 0.091576213509771],
        [0.091576213509771, 0.091576213509771, 1 - 2 * 0.091576213509771],
    ]
)
_TRI_W = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3) / 2.0


def _p1_element_data(verts):
    """Area and P1 gradient coefficients of one triangle (own derivation)."""
    (x0, y0), (x1, y1), (x2, y2) = verts
    det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    area = 0.5 * det
    grads = np.array(
        [
            [y1 - y2, x2 - x1],
            [y2 - y0, x0 - x2],
            [y0 - y1, x1 - x0],
        ]
    ) / det
    return area, grads


def oracle_discrete_energy(
    mesh,
    phis: np.ndarray,
    f_fields: np.ndarray,
    surface_refs: np.ndarray,
    params,
    wall_field=None,
    tweezer_fields=(),
    wall_quotient_squared: bool = True,
) -> float:
    """Total microscale energy of nodal fields by direct element loops.

    Matches the assembled ledger (times Re, kinetic part excluded) because
    both use the same published quadrature rule; everything else (basis
    evaluation, gradients, summation) is reimplemented here from scratch.
    """
    eps = params.interface_eps
    n = phis.shape[0]
    e_bend = np.zeros(n)
    surf = np.zeros(n)
    e_int = 0.0
    e_wall = 0.0
    for tri in mesh.triangles:
        verts = mesh.vertices[tri]
        area, grads = _p1_element_data(verts)
        w = _TRI_W * 2.0 * area  # bary weights sum to 1/2; det = 2 area
        vals = _TRI_BARY  # (nq, 3) barycentric = P1 shape values
        phi_q = phis[:, tri] @ vals.T  # (n, nq)
        f_q = f_fields[:, tri] @ vals.T
        for i in range(n):
            gphi = grads.T @ phis[i, tri]
            e_bend[i] += np.sum(w * f_q[i] ** 2)
            surf[i] += np.sum(w * (0.5 * eps * (gphi @ gphi) + (phi_q[i] ** 2 - 1.0) ** 2 / (4 * eps)))
        for i in range(n):
            for j in range(i + 1, n):
                h = (
                    params.q1 * (phi_q[i] + 1) ** 2 * (phi_q[j] + 1) ** 2
                    - params.q2 * (phi_q[i] ** 2 - 1) ** 2 * (phi_q[j] ** 2 - 1) ** 2
                )
                e_int += np.sum(w * h)
        if wall_field is not None:
            ww = wall_field[tri] @ vals.T
            for i in range(n):
                if wall_quotient_squared:
                    h = (
                        params.qw1 * (phi_q[i] + 1) ** 2 * (ww + 1) ** 2
                        - params.qw2 * (phi_q[i] ** 2 - 1) ** 2 * (ww**2 - 1) ** 2
                    )
                else:
                    h = (
                        params.qw1 * (phi_q[i] + 1) ** 2 * (ww + 1) ** 2
                        - params.qw2 * (phi_q[i] ** 2 - 1) * (ww**2 - 1)
                    )
                e_wall += np.sum(w * h)
        for tw in tweezer_fields:
            tw_q = tw[tri] @ vals.T
            for i in range(n):
                h = (
                    params.qtw1 * (phi_q[i] + 1) ** 2 * (tw_q + 1) ** 2
                    - params.qtw2 * (phi_q[i] ** 2 - 1) ** 2 * (tw_q**2 - 1) ** 2
                )
                e_wall += np.sum(w * h)
    total = params.bending / (2.0 * eps) * e_bend.sum()
    total += sum(
        params.surface_penalty * (surf[i] - surface_refs[i]) ** 2 / (2.0 * surface_refs[i])
        for i in range(n)
    )
    total += params.interaction_scale * (e_int + e_wall)
    return float(total)


def oracle_energy_gradient(
    mesh,
    phis: np.ndarray,
    dof: tuple[int, int],
    surface_refs: np.ndarray,
    params,
    membrane_solver,
    h: float = 1e-6,
    wall_field=None,
    tweezer_fields=(),
    wall_quotient_squared: bool = True,
) -> float:
    """Central finite difference of the discrete energy in one nodal value.

    ``membrane_solver(phi_nodal) -> f_nodal`` supplies the level membrane
    field (the only linear solve the energy definition needs); everything
    else is the independent quadrature above.
    """
    if not (1e-8 <= h <= 1e-4):
        raise ValueError("h must lie in [1e-8, 1e-4]")
    i, k = dof

    def total(phi_arr):
        f_fields = np.stack([membrane_solver(phi_arr[j]) for j in range(phi_arr.shape[0])])
        return oracle_discrete_energy(
            mesh, phi_arr, f_fields, surface_refs, params,
            wall_field=wall_field, tweezer_fields=tweezer_fields,
            wall_quotient_squared=wall_quotient_squared,
        )

    up = phis.copy()
    up[i, k] += h
    dn = phis.copy()
    dn[i, k] -= h
    return (total(up) - total(dn)) / (2.0 * h)
