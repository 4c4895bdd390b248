"""Persistence and measurement: ledger CSV, grid snapshots, contours, report.

The ledger CSV column order is part of the external contract:
``step,time,e_kin,e_bend,e_surf,e_int,e_wall,total,d_visc,d_mu,d_lambda,
d_wall_ac,d_slip,energy_law_residual,mass_1..mass_N``.  Floats are written
with ``repr`` so re-running a scenario reproduces the file bit for bit.
Snapshots use the legacy ASCII unstructured-grid format (triangles, point
data) for diff-ability.
"""

from __future__ import annotations

import os

import numpy as np

from .fem import FunctionSpace, VectorSpace, eval_qp, grad_qp, vec_grad_qp
from .meshing import Mesh
from .params import EnergyLedger, SystemState
from . import energetics as eng


def ledger_header(n_phases: int) -> str:
    cols = [
        "step", "time", "e_kin", "e_bend", "e_surf", "e_int", "e_wall", "total",
        "d_visc", "d_mu", "d_lambda", "d_wall_ac", "d_slip", "energy_law_residual",
    ] + [f"mass_{i + 1}" for i in range(n_phases)]
    return ",".join(cols)


class LedgerWriter:
    """Append-only CSV writer for the per-step energy ledger."""

    def __init__(self, path, n_phases: int):
        self.path = path
        self.n_phases = n_phases
        self._fh = open(path, "w")
        self._fh.write(ledger_header(n_phases) + "\n")
        self._fh.flush()
        self.rows = 0

    def write_row(self, step: int, time: float, ledger: EnergyLedger, energy_residual: float, masses) -> None:
        vals = [
            repr(float(v))
            for v in (
                time, ledger.e_kin, sum(ledger.e_bend), sum(ledger.e_surf), ledger.e_int,
                sum(ledger.e_wall), ledger.total, ledger.d_visc, ledger.d_mu,
                ledger.d_lambda, ledger.d_wall_ac, ledger.d_slip, energy_residual,
            )
        ] + [repr(float(m)) for m in np.atleast_1d(masses)]
        self._fh.write(f"{step}," + ",".join(vals) + "\n")
        self._fh.flush()
        self.rows += 1

    def close(self):
        self._fh.close()


def read_ledger(path):
    """Load a ledger CSV into a dict of column arrays."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return {name: data[:, k] for k, name in enumerate(header)}


def surface_divergence_field(
    space: FunctionSpace,
    vspace: VectorSpace,
    phi: np.ndarray,
    velocity: np.ndarray,
    eps: float,
    projection_reg: float,
) -> np.ndarray:
    """Nodal (P : grad u) delta diagnostic by mass-lumped projection.

    Quadrature-point values are averaged to vertices with weights given by
    the lumped mass, mirroring how the stretching diagnostic is rendered.
    """
    from .fem import default_quadrature, load_vector

    rule = default_quadrature()
    tab = space.tabulate(rule)
    vtab = vspace.scalar.tabulate(rule)
    g = grad_qp(tab, phi)
    P = eng.projection_tensor(g, projection_reg)
    delta = eng.surface_delta(g, eps)
    gu = vec_grad_qp(vtab, vspace, velocity)
    w = np.einsum("tqcd,tqcd->tq", P, gu) * delta
    num = load_vector(tab, w)
    lumped = load_vector(tab, np.ones_like(w))
    return num / lumped


def write_snapshot(
    path,
    mesh: Mesh,
    state: SystemState,
    fields=("phi", "velocity", "pressure", "lambda", "surface_div"),
    space: FunctionSpace | None = None,
    vspace: VectorSpace | None = None,
    eps: float | None = None,
    projection_reg: float = 1e-6,
    title: str = "vesiflow snapshot",
) -> None:
    """Write a legacy ASCII unstructured-grid snapshot with point data.

    Vertex data only; the quadratic velocity is restricted to vertices.  The
    vector array carries a zero third component as the format requires.
    """
    if not fields:
        raise ValueError("fields selector must be nonempty")
    nv = mesh.n_vertices
    lines = [
        "# vtk DataFile Version 2.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} float",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{float(x)!r} {float(y)!r} 0.0")
    nt = mesh.n_triangles
    lines.append(f"CELLS {nt} {4 * nt}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)
    lines.append(f"POINT_DATA {nv}")
    n = state.n_phases
    if "phi" in fields:
        for i in range(n):
            lines.append(f"SCALARS phi_{i + 1} float 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(repr(float(v)) for v in state.phi[i][:nv])
    if "pressure" in fields:
        lines.append("SCALARS pressure float 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(repr(float(v)) for v in state.pressure[:nv])
    if "lambda" in fields:
        for i in range(n):
            lines.append(f"SCALARS lambda_{i + 1} float 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(repr(float(v)) for v in state.lam[i][:nv])
    if "surface_div" in fields and space is not None and vspace is not None and eps is not None:
        for i in range(n):
            sd = surface_divergence_field(space, vspace, state.phi[i], state.velocity, eps, projection_reg)
            lines.append(f"SCALARS surface_div_{i + 1} float 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(repr(float(v)) for v in sd[:nv])
    if "velocity" in fields and vspace is not None:
        ux = vspace.component(state.velocity, 0)[:nv]
        uy = vspace.component(state.velocity, 1)[:nv]
        lines.append("VECTORS velocity float")
        lines.extend(f"{repr(float(a))} {repr(float(b))} 0.0" for a, b in zip(ux, uy))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def extract_contour(mesh: Mesh, values: np.ndarray, level: float = 0.0) -> np.ndarray:
    """Marching-edges contour segments of a vertex field, (nseg, 2, 2)."""
    v = values[: mesh.n_vertices] - level
    tris = mesh.triangles
    pts = mesh.vertices
    segs = []
    sv = v[tris]
    crossing = ~(np.all(sv > 0, axis=1) | np.all(sv < 0, axis=1))
    for t in np.nonzero(crossing)[0]:
        cut = []
        for k in range(3):
            i, j = tris[t, k], tris[t, (k + 1) % 3]
            vi, vj = v[i], v[j]
            if vi == 0.0 and vj == 0.0:
                continue
            if (vi < 0 < vj) or (vj < 0 < vi) or vi == 0.0 or vj == 0.0:
                if vi == vj:
                    continue
                s = vi / (vi - vj)
                if 0.0 <= s <= 1.0:
                    cut.append(pts[i] + s * (pts[j] - pts[i]))
        if len(cut) >= 2:
            uniq = [cut[0]]
            for c in cut[1:]:
                if all(np.linalg.norm(c - u) > 1e-14 for u in uniq):
                    uniq.append(c)
            if len(uniq) >= 2:
                segs.append((uniq[0], uniq[1]))
    if not segs:
        return np.zeros((0, 2, 2))
    return np.array(segs)


def measure_contour(
    mesh: Mesh,
    phi: np.ndarray,
    level: float = 0.0,
    wall_field: np.ndarray | None = None,
    wall_threshold: float = 0.9,
):
    """Contour polyline with axial/transverse diameters and wall contact length.

    Diameters are the x/y extents of the level set; contact length is the
    arclength of the contour inside the region where the wall phase exceeds
    the threshold (midpoint test with nodal interpolation).
    """
    segs = extract_contour(mesh, phi, level)
    if segs.shape[0] == 0:
        raise ValueError("empty contour at the requested level")
    points = segs.reshape(-1, 2)
    dia_x = float(points[:, 0].max() - points[:, 0].min())
    dia_y = float(points[:, 1].max() - points[:, 1].min())
    contact = 0.0
    if wall_field is not None:
        mids = segs.mean(axis=1)
        wall_at = _interp_vertex_field(mesh, wall_field, mids)
        lengths = np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1)
        contact = float(lengths[wall_at > wall_threshold].sum())
    return segs, dia_x, dia_y, contact


def _interp_vertex_field(mesh: Mesh, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Nearest-vertex sample of a vertex field at arbitrary points."""
    out = np.empty(points.shape[0])
    verts = mesh.vertices
    chunk = 1024
    for s in range(0, points.shape[0], chunk):
        p = points[s : s + chunk]
        d2 = ((p[:, None, :] - verts[None, :, :]) ** 2).sum(-1)
        out[s : s + chunk] = values[np.argmin(d2, axis=1)]
    return out


def phase_centroid(space: FunctionSpace, phi: np.ndarray) -> np.ndarray:
    """Area centroid of the phi > 0 region via the (phi+1)/2 indicator."""
    from .fem import _p1_basis, default_quadrature, integrate

    rule = default_quadrature()
    tab = space.tabulate(rule)
    ind = 0.5 * (eval_qp(tab, phi) + 1.0)
    m = integrate(tab, ind)
    geom = space.mesh.vertices[space.mesh.triangles]
    val1, _ = _p1_basis(rule.tri_points)
    xq = np.einsum("qi,tid->tqd", val1, geom)
    cx = integrate(tab, ind * xq[..., 0]) / m
    cy = integrate(tab, ind * xq[..., 1]) / m
    return np.array([cx, cy])


def write_report(path, sections: dict[str, dict]) -> None:
    """Plain-text run report: resolved parameters, options, summary."""
    with open(path, "w") as fh:
        for title, kv in sections.items():
            fh.write(f"[{title}]\n")
            for k, v in kv.items():
                fh.write(f"{k} = {v}\n")
            fh.write("\n")
