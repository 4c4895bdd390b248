"""C0 finite elements on triangles: spaces, quadrature and assembly kernels.

Scalar fields live in P1 or P2 Lagrange spaces; the velocity uses a vector P2
space paired with P1 pressure (inf-sup stable).  Assembly is vectorized over
elements: local blocks are built with einsum and scattered into COO/CSR.
The default quadrature integrates degree-4 polynomials exactly on triangles
(enough for the quartic well terms against linear test functions) and
degree-3 on edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .meshing import Mesh


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Reference-triangle and reference-edge points and weights.

    Triangle weights sum to 1/2 (the reference area); edge weights to 1 over
    the unit parameter interval.
    """

    tri_points: np.ndarray
    tri_weights: np.ndarray
    tri_degree: int
    edge_points: np.ndarray
    edge_weights: np.ndarray
    edge_degree: int

    def __post_init__(self):
        if np.any(self.tri_weights <= 0) or np.any(self.edge_weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if self.tri_degree < 4 or self.edge_degree < 3:
            raise ValueError("rule must be exact to degree >= 4 on triangles, >= 3 on edges")


def default_quadrature() -> QuadratureRule:
    """Degree-4 six-point triangle rule and two-point Gauss edge rule."""
    a = 0.445948490915965
    b = 0.091576213509771
    wa = 0.223381589678011 / 2.0
    wb = 0.109951743655322 / 2.0
    bary = np.array(
        [
            [1 - 2 * a, a, a],
            [a, 1 - 2 * a, a],
            [a, a, 1 - 2 * a],
            [1 - 2 * b, b, b],
            [b, 1 - 2 * b, b],
            [b, b, 1 - 2 * b],
        ]
    )
    pts = bary[:, 1:]  # reference coords (x, y) = (L1, L2)
    w = np.array([wa, wa, wa, wb, wb, wb])
    g = 0.5 / np.sqrt(3.0)
    return QuadratureRule(pts, w, 4, np.array([0.5 - g, 0.5 + g]), np.array([0.5, 0.5]), 3)


# ---------------------------------------------------------------------------
# reference bases


def _p1_basis(points: np.ndarray):
    x, y = points[:, 0], points[:, 1]
    val = np.stack([1 - x - y, x, y], axis=1)
    grad = np.zeros((len(points), 3, 2))
    grad[:, 0] = (-1.0, -1.0)
    grad[:, 1] = (1.0, 0.0)
    grad[:, 2] = (0.0, 1.0)
    return val, grad


def _p2_basis(points: np.ndarray):
    x, y = points[:, 0], points[:, 1]
    L = np.stack([1 - x - y, x, y], axis=1)
    dL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    nq = len(points)
    val = np.empty((nq, 6))
    grad = np.empty((nq, 6, 2))
    for i in range(3):
        val[:, i] = L[:, i] * (2 * L[:, i] - 1)
        grad[:, i] = (4 * L[:, i] - 1)[:, None] * dL[i]
    # edge functions between local vertices (0,1), (1,2), (2,0)
    pairs = [(0, 1), (1, 2), (2, 0)]
    for k, (i, j) in enumerate(pairs):
        val[:, 3 + k] = 4 * L[:, i] * L[:, j]
        grad[:, 3 + k] = 4 * (L[:, i][:, None] * dL[j] + L[:, j][:, None] * dL[i])
    return val, grad


def _edge_trace_p1(s: np.ndarray):
    val = np.stack([1 - s, s], axis=1)
    dval = np.stack([-np.ones_like(s), np.ones_like(s)], axis=1)
    return val, dval


def _edge_trace_p2(s: np.ndarray):
    val = np.stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)], axis=1)
    dval = np.stack([4 * s - 3, 4 * s - 1, 4 - 8 * s], axis=1)
    return val, dval


# ---------------------------------------------------------------------------
# function spaces


class FunctionSpace:
    """Continuous Lagrange space of degree 1 or 2 on a triangle mesh.

    Degrees of freedom are vertex values (P1) plus edge-midpoint values (P2).
    Tabulations of basis values/gradients at quadrature points are cached per
    rule.  The space is immutable after construction.
    """

    def __init__(self, mesh: Mesh, degree: int):
        if degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        self.mesh = mesh
        self.degree = degree
        tris = mesh.triangles
        nv = mesh.n_vertices
        if degree == 1:
            self.cell_dofs = tris.copy()
            self.ndof = nv
            self.dof_coords = mesh.vertices.copy()
        else:
            pairs = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]], axis=0)
            key = np.sort(pairs, axis=1)
            uniq, inv = np.unique(key, axis=0, return_inverse=True)
            nt = tris.shape[0]
            tri_edge = inv.reshape(3, nt).T
            self.edges = uniq
            self._edge_ids = {(int(a), int(b)): i for i, (a, b) in enumerate(uniq)}
            self.cell_dofs = np.concatenate([tris, nv + tri_edge], axis=1)
            self.ndof = nv + uniq.shape[0]
            mid = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
            self.dof_coords = np.concatenate([mesh.vertices, mid], axis=0)
        # element geometry
        p = mesh.vertices[tris]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (nt,2,2) columns
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv_t = np.empty_like(J)
        inv_t[:, 0, 0] = J[:, 1, 1]
        inv_t[:, 0, 1] = -J[:, 1, 0]
        inv_t[:, 1, 0] = -J[:, 0, 1]
        inv_t[:, 1, 1] = J[:, 0, 0]
        inv_t /= det[:, None, None]
        self._detJ = det
        self._invJT = inv_t
        self._tabs: dict[int, "Tabulation"] = {}
        self._edge_tabs: dict = {}
        self._bdofs: dict[str, np.ndarray] = {}

    @property
    def n_local(self) -> int:
        return 3 if self.degree == 1 else 6

    def tabulate(self, rule: QuadratureRule) -> "Tabulation":
        key = id(rule)
        tab = self._tabs.get(key)
        if tab is None:
            basis = _p1_basis if self.degree == 1 else _p2_basis
            val, ref_grad = basis(rule.tri_points)
            # physical gradients: invJT @ ref_grad
            grad = np.einsum("tde,qie->tqid", self._invJT, ref_grad, optimize=True)
            wdet = rule.tri_weights[None, :] * self._detJ[:, None]
            tab = Tabulation(self, rule, val, grad, wdet)
            self._tabs[key] = tab
        return tab

    def boundary_dofs(self, tag: str) -> np.ndarray:
        """Sorted unique dof indices lying on facets with the given tag."""
        if tag not in self._bdofs:
            fids = self.mesh.facets_with_tag(tag)
            facets = self.mesh.facets[fids]
            dofs = [facets.ravel()]
            if self.degree == 2:
                nv = self.mesh.n_vertices
                eids = [self._edge_ids[tuple(sorted((int(a), int(b))))] for a, b in facets]
                dofs.append(nv + np.asarray(eids, dtype=np.int64))
            self._bdofs[tag] = np.unique(np.concatenate(dofs))
        return self._bdofs[tag]

    def edge_tabulate(self, rule: QuadratureRule, facet_ids: np.ndarray) -> "EdgeTabulation":
        key = (id(rule), facet_ids.tobytes())
        tab = self._edge_tabs.get(key)
        if tab is None:
            tab = EdgeTabulation(self, rule, facet_ids)
            self._edge_tabs[key] = tab
        return tab


class VectorSpace:
    """Two-component vector field on a scalar space, stacked [x-block, y-block]."""

    def __init__(self, scalar: FunctionSpace):
        self.scalar = scalar
        self.ndof = 2 * scalar.ndof

    @property
    def mesh(self) -> Mesh:
        return self.scalar.mesh

    def component(self, z: np.ndarray, c: int) -> np.ndarray:
        n = self.scalar.ndof
        return z[c * n : (c + 1) * n]


@dataclass(frozen=True, eq=False)
class Tabulation:
    """Basis values/physical gradients at the triangle quadrature points."""

    space: FunctionSpace
    rule: QuadratureRule
    val: np.ndarray  # (nq, nloc)
    grad: np.ndarray  # (nt, nq, nloc, 2)
    wdet: np.ndarray  # (nt, nq)


class EdgeTabulation:
    """Trace basis data on a subset of boundary facets."""

    def __init__(self, space: FunctionSpace, rule: QuadratureRule, facet_ids: np.ndarray):
        mesh = space.mesh
        self.space = space
        self.facet_ids = np.asarray(facet_ids, dtype=np.int64)
        facets = mesh.facets[self.facet_ids]
        self.n_facets = facets.shape[0]
        vec = mesh.vertices[facets[:, 1]] - mesh.vertices[facets[:, 0]]
        self.lengths = np.linalg.norm(vec, axis=1)
        self.tangents = vec / self.lengths[:, None]
        self.normals = np.stack([self.tangents[:, 1], -self.tangents[:, 0]], axis=1)
        s = rule.edge_points
        if space.degree == 1:
            self.dofs = facets.copy()
            self.val, dval = _edge_trace_p1(s)
        else:
            nv = mesh.n_vertices
            eids = np.array(
                [space._edge_ids[tuple(sorted((int(a), int(b))))] for a, b in facets],
                dtype=np.int64,
            )
            self.dofs = np.concatenate([facets, (nv + eids)[:, None]], axis=1)
            self.val, dval = _edge_trace_p2(s)
        # physical tangential derivative: d/ds / length
        self.dval = dval  # (me, ntr) reference; divide by length per facet on use
        self.wl = rule.edge_weights[None, :] * self.lengths[:, None]  # (nfac, me)
        x0 = mesh.vertices[facets[:, 0]]
        self.points = x0[:, None, :] + s[None, :, None] * vec[:, None, :]  # (nfac, me, 2)


# ---------------------------------------------------------------------------
# evaluation helpers


def eval_qp(tab: Tabulation, z: np.ndarray) -> np.ndarray:
    """Nodal field -> values at triangle quadrature points, (nt, nq)."""
    zd = z[tab.space.cell_dofs]
    return np.einsum("qi,ti->tq", tab.val, zd, optimize=True)


def grad_qp(tab: Tabulation, z: np.ndarray) -> np.ndarray:
    """Nodal field -> gradients at quadrature points, (nt, nq, 2)."""
    zd = z[tab.space.cell_dofs]
    return np.einsum("tqid,ti->tqd", tab.grad, zd, optimize=True)


def vec_eval_qp(tab: Tabulation, vspace: VectorSpace, u: np.ndarray) -> np.ndarray:
    """Velocity values at quadrature points, (nt, nq, 2)."""
    return np.stack([eval_qp(tab, vspace.component(u, c)) for c in (0, 1)], axis=2)


def vec_grad_qp(tab: Tabulation, vspace: VectorSpace, u: np.ndarray) -> np.ndarray:
    """Velocity gradients at quadrature points, (nt, nq, 2, 2) indexed [c, d] = d_d u_c."""
    return np.stack([grad_qp(tab, vspace.component(u, c)) for c in (0, 1)], axis=2)


def edge_eval(etab: EdgeTabulation, z: np.ndarray) -> np.ndarray:
    """Trace values at edge quadrature points, (nfac, me)."""
    return np.einsum("qi,fi->fq", etab.val, z[etab.dofs], optimize=True)


def edge_eval_dtau(etab: EdgeTabulation, z: np.ndarray) -> np.ndarray:
    """Tangential derivative at edge quadrature points, (nfac, me)."""
    return np.einsum("qi,fi->fq", etab.dval, z[etab.dofs], optimize=True) / etab.lengths[:, None]


def edge_vec_eval(etab: EdgeTabulation, vspace: VectorSpace, u: np.ndarray) -> np.ndarray:
    """Velocity trace at edge quadrature points, (nfac, me, 2)."""
    return np.stack([edge_eval(etab, vspace.component(u, c)) for c in (0, 1)], axis=2)


# ---------------------------------------------------------------------------
# scatter utilities


def _scatter(rows: np.ndarray, cols: np.ndarray, local: np.ndarray, shape) -> sp.csr_matrix:
    ri = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    ci = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    return sp.coo_matrix((local.ravel(), (ri, ci)), shape=shape).tocsr()


def scatter_vector(dofs: np.ndarray, local: np.ndarray, ndof: int) -> np.ndarray:
    out = np.zeros(ndof)
    np.add.at(out, dofs.ravel(), local.ravel())
    return out


# ---------------------------------------------------------------------------
# volume kernels


def mass_matrix(row: Tabulation, col: Tabulation, weight=None) -> sp.csr_matrix:
    """Weighted mass: integral of w * (col basis) * (row basis)."""
    w = row.wdet if weight is None else row.wdet * weight
    local = np.einsum("tq,qi,qj->tij", w, row.val, col.val, optimize=True)
    return _scatter(row.space.cell_dofs, col.space.cell_dofs, local, (row.space.ndof, col.space.ndof))


def stiffness_matrix(row: Tabulation, col: Tabulation, weight=None) -> sp.csr_matrix:
    """Weighted stiffness: integral of w * grad(col) . grad(row)."""
    w = row.wdet if weight is None else row.wdet * weight
    local = np.einsum("tq,tqid,tqjd->tij", w, row.grad, col.grad, optimize=True)
    return _scatter(row.space.cell_dofs, col.space.cell_dofs, local, (row.space.ndof, col.space.ndof))


def advection_matrix(row: Tabulation, col: Tabulation, vel_q: np.ndarray) -> sp.csr_matrix:
    """Integral of (vel . grad col) * row, with vel at quadrature points."""
    vg = np.einsum("tqd,tqjd->tqj", vel_q, col.grad, optimize=True)
    local = np.einsum("tq,qi,tqj->tij", row.wdet, row.val, vg, optimize=True)
    return _scatter(row.space.cell_dofs, col.space.cell_dofs, local, (row.space.ndof, col.space.ndof))


def deriv_mass(row: Tabulation, col: Tabulation, comp: int, on: str = "col", weight=None) -> sp.csr_matrix:
    """Integral of w * (d_comp of one side) * (other side)."""
    w = row.wdet if weight is None else row.wdet * weight
    if on == "col":
        local = np.einsum("tq,qi,tqj->tij", w, row.val, col.grad[:, :, :, comp], optimize=True)
    else:
        local = np.einsum("tq,tqi,qj->tij", w, row.grad[:, :, :, comp], col.val, optimize=True)
    return _scatter(row.space.cell_dofs, col.space.cell_dofs, local, (row.space.ndof, col.space.ndof))


def dd_mass(row: Tabulation, col: Tabulation, d_row: int, d_col: int, weight=None) -> sp.csr_matrix:
    """Integral of w * d_{d_row}(row) * d_{d_col}(col)."""
    w = row.wdet if weight is None else row.wdet * weight
    local = np.einsum(
        "tq,tqi,tqj->tij", w, row.grad[:, :, :, d_row], col.grad[:, :, :, d_col], optimize=True
    )
    return _scatter(row.space.cell_dofs, col.space.cell_dofs, local, (row.space.ndof, col.space.ndof))


def load_vector(tab: Tabulation, weight_q: np.ndarray) -> np.ndarray:
    """Integral of w * (row basis) with w given at quadrature points."""
    local = np.einsum("tq,qi->ti", tab.wdet * weight_q, tab.val, optimize=True)
    return scatter_vector(tab.space.cell_dofs, local, tab.space.ndof)


def grad_load_vector(tab: Tabulation, wvec_q: np.ndarray) -> np.ndarray:
    """Integral of wvec . grad(row basis), wvec at quadrature points (nt, nq, 2)."""
    local = np.einsum("tq,tqid->ti", tab.wdet, np.einsum("tqd,tqid->tqid", wvec_q, tab.grad), optimize=True)
    return scatter_vector(tab.space.cell_dofs, local, tab.space.ndof)


def integrate(tab: Tabulation, w_q: np.ndarray) -> float:
    """Quadrature value of the integral of a field sampled at quad points."""
    return float(np.sum(tab.wdet * w_q))


# vector-space compositions ---------------------------------------------------


def vector_mass(tab: Tabulation) -> sp.csr_matrix:
    m = mass_matrix(tab, tab)
    return sp.block_diag([m, m], format="csr")


def viscous_matrix(tab: Tabulation, eta_q=None) -> sp.csr_matrix:
    """Symmetric-gradient viscous operator: integral eta (grad u + grad u^T) : grad v."""
    axx = 2 * dd_mass(tab, tab, 0, 0, weight=eta_q) + dd_mass(tab, tab, 1, 1, weight=eta_q)
    axy = dd_mass(tab, tab, 1, 0, weight=eta_q)
    ayx = dd_mass(tab, tab, 0, 1, weight=eta_q)
    ayy = dd_mass(tab, tab, 0, 0, weight=eta_q) + 2 * dd_mass(tab, tab, 1, 1, weight=eta_q)
    return sp.bmat([[axx, axy], [ayx, ayy]], format="csr")


def div_matrix(row: Tabulation, col: Tabulation) -> sp.csr_matrix:
    """Rows scalar, cols vector: integral (div u) q."""
    bx = deriv_mass(row, col, 0, on="col")
    by = deriv_mass(row, col, 1, on="col")
    return sp.hstack([bx, by], format="csr")


# ---------------------------------------------------------------------------
# edge kernels


def edge_matrix(row: EdgeTabulation, col: EdgeTabulation, weight=None) -> sp.csr_matrix:
    """Boundary mass over the tabulated facets: integral w row col ds."""
    w = row.wl if weight is None else row.wl * weight
    local = np.einsum("fq,qi,qj->fij", w, row.val, col.val, optimize=True)
    return _scatter(row.dofs, col.dofs, local, (row.space.ndof, col.space.ndof))


def edge_matrix_dtau(row: EdgeTabulation, col: EdgeTabulation, on: str = "col", weight=None) -> sp.csr_matrix:
    """Boundary coupling with a tangential derivative on one side."""
    w = row.wl if weight is None else row.wl * weight
    if on == "col":
        cval = col.dval[None, :, :] / col.lengths[:, None, None]
        local = np.einsum("fq,qi,fqj->fij", w, row.val, cval, optimize=True)
    else:
        rval = row.dval[None, :, :] / row.lengths[:, None, None]
        local = np.einsum("fq,fqi,qj->fij", w, rval, col.val, optimize=True)
    return _scatter(row.dofs, col.dofs, local, (row.space.ndof, col.space.ndof))


def edge_matrix_dtau_both(row: EdgeTabulation, col: EdgeTabulation, weight=None) -> sp.csr_matrix:
    """Boundary stiffness along the boundary: integral w (dtau row)(dtau col)."""
    w = row.wl if weight is None else row.wl * weight
    rval = row.dval[None, :, :] / row.lengths[:, None, None]
    cval = col.dval[None, :, :] / col.lengths[:, None, None]
    local = np.einsum("fq,fqi,fqj->fij", w, rval, cval, optimize=True)
    return _scatter(row.dofs, col.dofs, local, (row.space.ndof, col.space.ndof))


def edge_load(etab: EdgeTabulation, weight_fq: np.ndarray) -> np.ndarray:
    local = np.einsum("fq,qi->fi", etab.wl * weight_fq, etab.val, optimize=True)
    return scatter_vector(etab.dofs, local, etab.space.ndof)


def edge_load_dtau(etab: EdgeTabulation, weight_fq: np.ndarray) -> np.ndarray:
    dval = etab.dval[None, :, :] / etab.lengths[:, None, None]
    local = np.einsum("fq,fqi->fi", etab.wl * weight_fq, dval, optimize=True)
    return scatter_vector(etab.dofs, local, etab.space.ndof)


def edge_integrate(etab: EdgeTabulation, w_fq: np.ndarray) -> float:
    return float(np.sum(etab.wl * w_fq))


def edge_vec_tangential_mass(etab: EdgeTabulation, weight=None) -> sp.csr_matrix:
    """Vector boundary kernel: integral w (u . tau)(v . tau) over the facets."""
    blocks = []
    for c1 in (0, 1):
        rowb = []
        for c2 in (0, 1):
            tt = etab.tangents[:, c1] * etab.tangents[:, c2]
            w = tt[:, None] if weight is None else tt[:, None] * weight
            rowb.append(edge_matrix(etab, etab, weight=w))
        blocks.append(rowb)
    return sp.bmat(blocks, format="csr")


# ---------------------------------------------------------------------------
# velocity constraints (impenetrable walls)


def normal_constraint_operator(vspace: VectorSpace, wall_tags=("wall",)):
    """Sparse map from reduced velocity unknowns to the full vector, enforcing
    u . n = 0 strongly on wall facets.

    Boundary nodes with a single wall direction keep one (tangential) unknown;
    nodes where differently oriented wall facets meet are fully pinned.
    Returns (T, free_mask) where T is (2 n_scalar, n_reduced) and free_mask
    flags full-space dofs untouched by any constraint.
    """
    space = vspace.scalar
    mesh = space.mesh
    n = space.ndof
    normals: dict[int, list[np.ndarray]] = {}
    for tag in wall_tags:
        if tag not in mesh.tag_names:
            continue
        fids = mesh.facets_with_tag(tag)
        if len(fids) == 0:
            continue
        etab = space.edge_tabulate(default_quadrature(), fids)
        for f in range(etab.n_facets):
            nrm = etab.normals[f]
            for d in etab.dofs[f]:
                normals.setdefault(int(d), []).append(nrm)
    cols = []
    rows = []
    vals = []
    ncol = 0
    constrained = np.zeros(n, dtype=bool)
    pinned = np.zeros(n, dtype=bool)
    tangent_of: dict[int, np.ndarray] = {}
    for d, nlist in normals.items():
        constrained[d] = True
        base = nlist[0]
        distinct = any(abs(base[0] * m[1] - base[1] * m[0]) > 1e-9 for m in nlist[1:])
        if distinct:
            pinned[d] = True
        else:
            tangent_of[d] = np.array([-base[1], base[0]])
    for d in range(n):
        if not constrained[d]:
            for c in (0, 1):
                rows.append(c * n + d)
                cols.append(ncol)
                vals.append(1.0)
                ncol += 1
        elif not pinned[d]:
            t = tangent_of[d]
            rows.extend([d, n + d])
            cols.extend([ncol, ncol])
            vals.extend([t[0], t[1]])
            ncol += 1
    T = sp.coo_matrix((vals, (rows, cols)), shape=(2 * n, ncol)).tocsr()
    free_mask = np.concatenate([~constrained, ~constrained])
    return T, free_mask


# ---------------------------------------------------------------------------
# public assembly API


def interpolate(fn, space: FunctionSpace) -> np.ndarray:
    """Nodal interpolant: evaluate ``fn`` at the dof coordinates.

    ``fn`` may be a constant or a callable of (x, y) arrays.
    """
    xy = space.dof_coords
    if callable(fn):
        return np.asarray(fn(xy[:, 0], xy[:, 1]), dtype=float) * np.ones(space.ndof)
    return float(fn) * np.ones(space.ndof)


def _coefficient_qp(space_like, coefficient, rule):
    """Coefficient field -> quadrature-point samples on the row space's mesh."""
    if coefficient is None:
        return None
    if isinstance(coefficient, np.ndarray) and coefficient.ndim >= 2:
        return coefficient  # already at quadrature points
    tab = space_like.tabulate(rule)
    return eval_qp(tab, np.asarray(coefficient, dtype=float))


def assemble_bilinear(space_row, space_col, kernel: str, coefficient=None, rule: QuadratureRule | None = None):
    """Assemble one of the named weak-form operators as a sparse matrix.

    Kernels: ``mass``, ``stiffness`` (scalar spaces, optional scalar
    coefficient); ``advection`` (scalar spaces, coefficient = (vector space,
    dofs) pair or quadrature samples of the velocity); ``viscous`` (vector
    spaces, optional viscosity); ``div`` (scalar rows, vector cols);
    ``grad`` (vector rows, scalar cols).
    """
    rule = rule or default_quadrature()
    row_scalar = space_row.scalar if isinstance(space_row, VectorSpace) else space_row
    col_scalar = space_col.scalar if isinstance(space_col, VectorSpace) else space_col
    if row_scalar.mesh is not col_scalar.mesh:
        raise ValueError("row and column spaces must share a mesh")
    rtab = row_scalar.tabulate(rule)
    ctab = col_scalar.tabulate(rule)
    if kernel == "mass":
        return mass_matrix(rtab, ctab, weight=_coefficient_qp(row_scalar, coefficient, rule))
    if kernel == "stiffness":
        return stiffness_matrix(rtab, ctab, weight=_coefficient_qp(row_scalar, coefficient, rule))
    if kernel == "advection":
        if isinstance(coefficient, tuple):
            vsp, u = coefficient
            vel_q = vec_eval_qp(vsp.scalar.tabulate(rule), vsp, np.asarray(u, dtype=float))
        else:
            vel_q = np.asarray(coefficient, dtype=float)
        return advection_matrix(rtab, ctab, vel_q)
    if kernel == "viscous":
        if not (isinstance(space_row, VectorSpace) and isinstance(space_col, VectorSpace)):
            raise ValueError("viscous kernel needs vector spaces")
        return viscous_matrix(rtab, eta_q=_coefficient_qp(row_scalar, coefficient, rule))
    if kernel == "div":
        if not isinstance(space_col, VectorSpace):
            raise ValueError("div kernel needs a vector column space")
        return div_matrix(rtab, ctab)
    if kernel == "grad":
        if not isinstance(space_row, VectorSpace):
            raise ValueError("grad kernel needs a vector row space")
        gx = deriv_mass(rtab, ctab, 0, on="col")
        gy = deriv_mass(rtab, ctab, 1, on="col")
        return sp.vstack([gx, gy], format="csr")
    raise ValueError(f"unknown kernel {kernel!r}")


def assemble_boundary(space, tag: str, kernel: str, coefficient=None, rule: QuadratureRule | None = None):
    """Assemble a boundary operator over the facets carrying ``tag``.

    Kernels: ``robin_mass`` (scalar boundary mass, optional coefficient),
    ``slip_traction`` (vector spaces, (1/l_s) tangential friction with
    coefficient = l_s), ``surface_gradient`` (tangential-derivative
    stiffness along the boundary).
    """
    rule = rule or default_quadrature()
    scalar = space.scalar if isinstance(space, VectorSpace) else space
    fids = scalar.mesh.facets_with_tag(tag)
    etab = scalar.edge_tabulate(rule, fids)
    if kernel == "robin_mass":
        w = None if coefficient is None else edge_eval(etab, np.asarray(coefficient, dtype=float))
        return edge_matrix(etab, etab, weight=w)
    if kernel == "slip_traction":
        if not isinstance(space, VectorSpace):
            raise ValueError("slip_traction needs a vector space")
        ls = 1.0 if coefficient is None else float(coefficient)
        return edge_vec_tangential_mass(etab, weight=np.full((etab.n_facets, 1), 1.0 / ls))
    if kernel == "surface_gradient":
        return edge_matrix_dtau_both(etab, etab)
    raise ValueError(f"unknown boundary kernel {kernel!r}")
