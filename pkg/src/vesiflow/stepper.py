"""Coupled midpoint time step: residual, analytic Jacobian, Newton solve.

One step advances phases and velocity from level n to n+1 while the membrane
density, chemical potential, interface pressure and hydrostatic pressure are
solved as midpoint quantities.  The nonlinear system is the weak form of the
full model: phase transport, chemical potential with closed-form difference
quotients, level-averaged membrane equation, incompressible momentum with
interface forces, wall slip friction with wall relaxation of the phases, and
the optional local inextensibility constraint.

Every step reports the discrete energy balance: the energy change plus the
five dissipation channels (viscous, chemical-potential diffusion, interface
pressure relaxation, wall relaxation and wall slip) must cancel to solver
tolerance on closed boxes.  Exactness relies on structural choices encoded
here: skew-symmetrized convection, force/transport pairs assembled with the
same quadrature, the surface-area factor carried as an auxiliary unknown, and
level-averaged membrane algebra.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import energetics as eng
from .linsolve import factorized_lu
from .fem import (
    EdgeTabulation,
    FunctionSpace,
    QuadratureRule,
    VectorSpace,
    advection_matrix,
    default_quadrature,
    deriv_mass,
    div_matrix,
    edge_eval,
    edge_eval_dtau,
    edge_integrate,
    edge_load,
    edge_matrix,
    edge_matrix_dtau,
    edge_vec_eval,
    eval_qp,
    grad_load_vector,
    grad_qp,
    integrate,
    load_vector,
    mass_matrix,
    normal_constraint_operator,
    scatter_vector,
    stiffness_matrix,
    vec_eval_qp,
    vec_grad_qp,
    vector_mass,
    viscous_matrix,
)
from .meshing import Mesh
from .params import EnergyLedger, ParameterSet, SystemState, validate_parameters


class StepNonconvergence(RuntimeError):
    """Newton iteration failed to reach tolerance within the iteration cap."""

    def __init__(self, message, iterations, residual_norm, initial_norm):
        super().__init__(message)
        self.iterations = iterations
        self.residual_norm = residual_norm
        self.initial_norm = initial_norm


@dataclass(frozen=True)
class StepOptions:
    """Controls of one nonlinear solve."""

    dt: float
    newton_tol: float = 1e-9
    newton_max_iter: int = 30
    jacobian_mode: str = "analytic"  # or "finite-difference-check"
    linear_tol: float = 1e-10
    convection_form: str = "skew"  # or "plain"
    max_dt_halvings: int = 3
    step_min_change: float = 1e-14

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        for name in ("newton_tol", "linear_tol"):
            v = getattr(self, name)
            if not (0 < v < 1):
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.jacobian_mode not in ("analytic", "finite-difference-check"):
            raise ValueError("jacobian_mode must be 'analytic' or 'finite-difference-check'")
        if self.convection_form not in ("skew", "plain"):
            raise ValueError("convection_form must be 'skew' or 'plain'")


@dataclass(frozen=True)
class StepReport:
    """Per-step diagnostics: solver effort, energy balance, conservation."""

    iterations: int
    residual_norm: float
    initial_residual_norm: float
    dt_used: float
    ledger_before: EnergyLedger
    ledger_after: EnergyLedger
    energy_residual: float
    mass_change: np.ndarray
    div_residual: float
    f_consistency: float
    jacobian_check: float | None = None


class CoupledStepper:
    """Assembles and solves the coupled midpoint system on one mesh.

    Static scenario data (wall field, tweezer phases, wall motion, open
    boundaries) is fixed at construction; states flow through ``step`` and
    ``run``.
    """

    def __init__(
        self,
        mesh: Mesh,
        params: ParameterSet,
        wall_field: np.ndarray | None = None,
        tweezer_fields: tuple[np.ndarray, ...] = (),
        wall_velocity=None,
        open_boundaries: tuple[tuple[str, float], ...] = (),
        wall_quotient_squared: bool = True,
        projection_reg: float | None = None,
        lambda_coeff_reg: float = 1e-8,
        lambda_mass_reg: float = 0.0,
        rule: QuadratureRule | None = None,
    ):
        self.mesh = mesh
        self.params = validate_parameters(params)
        self.rule = rule or default_quadrature()
        self.space = FunctionSpace(mesh, 1)
        self.v_scalar = FunctionSpace(mesh, 2)
        self.vspace = VectorSpace(self.v_scalar)
        self.tab = self.space.tabulate(self.rule)
        self.vtab = self.v_scalar.tabulate(self.rule)
        self.wall_field = wall_field
        self.tweezer_fields = tuple(tweezer_fields)
        self.wall_velocity = wall_velocity
        self.open_boundaries = tuple(open_boundaries)
        self.wall_quotient_squared = wall_quotient_squared
        eps = self.params.interface_eps
        self.projection_reg = projection_reg if projection_reg is not None else 1e-8 / eps
        self.lambda_coeff_reg = lambda_coeff_reg
        self.lambda_mass_reg = lambda_mass_reg
        self.with_lambda = self.params.inext_relax > 0.0

        n = self.params.n_phases
        self.ns = self.space.ndof
        self.nv = self.v_scalar.ndof

        # constant operators
        self.Ms = mass_matrix(self.tab, self.tab)
        self.Ks = stiffness_matrix(self.tab, self.tab)
        self.Mv = vector_mass(self.vtab)
        self.Bdiv = div_matrix(self.tab, self.vtab)
        self.mass_vec = np.asarray(self.Ms.sum(axis=1)).ravel()  # integral of each P1 basis
        self._Mf_lu = None  # factorized mass with wall rows, for level membrane solves

        # wall boundary machinery
        open_tags = {e[0] for e in self.open_boundaries}
        self.wall_tags = tuple(t for t in mesh.tag_names if t not in open_tags)
        wall_fids = np.concatenate([mesh.facets_with_tag(t) for t in self.wall_tags]) if self.wall_tags else np.empty(0, dtype=np.int64)
        wall_fids = np.sort(wall_fids)
        self.wall_fids = wall_fids
        self.e1 = self.space.edge_tabulate(self.rule, wall_fids)
        self.e2 = self.v_scalar.edge_tabulate(self.rule, wall_fids)
        self.wall_dofs = np.unique(np.concatenate([self.space.boundary_dofs(t) for t in self.wall_tags])) if self.wall_tags else np.empty(0, dtype=np.int64)

        self.T, _ = normal_constraint_operator(self.vspace, self.wall_tags)
        self.Tt = self.T.T.tocsr()
        self.nu = self.T.shape[1]

        self.Mb_wall = edge_matrix(self.e1, self.e1)
        me2 = edge_matrix(self.e2, self.e2)
        self.Mslip = sp.block_diag([me2, me2], format="csr")
        if self.wall_velocity is not None:
            pts = self.e1.points  # same facets for both spaces
            w = np.stack([np.asarray(self.wall_velocity(pts[..., 0], pts[..., 1], c)) * np.ones(pts.shape[:2]) for c in (0, 1)], axis=-1)
            self.wall_vel_e = w
        else:
            self.wall_vel_e = np.zeros(self.e1.points.shape[:2] + (2,))
        self.bslip = np.concatenate([edge_load(self.e2, self.wall_vel_e[..., c]) for c in (0, 1)])

        # open-boundary traction load (constant in time); entries are
        # (tag, normal pressure) or (tag, normal pressure, tangential traction)
        trac = np.zeros(2 * self.nv)
        for entry in self.open_boundaries:
            tag, pbc = entry[0], entry[1]
            ttan = entry[2] if len(entry) > 2 else 0.0
            et = self.v_scalar.edge_tabulate(self.rule, mesh.facets_with_tag(tag))
            for c in (0, 1):
                w = (pbc * et.normals[:, c] - ttan * et.tangents[:, c])[:, None] / self.params.reynolds
                trac[c * self.nv : (c + 1) * self.nv] += edge_load(et, w * np.ones_like(et.wl))
        self.traction = trac

        self.pin_pressure = len(self.open_boundaries) == 0
        self.pin_dof = 0

        # unknown layout
        self.n_phases = n
        self.n_scalar_blocks = n * (4 if self.with_lambda else 3)
        self.off_u = self.n_scalar_blocks * self.ns
        self.off_p = self.off_u + self.nu
        self.off_s = self.off_p + self.ns
        self.n_unknowns = self.off_s + n

        self.closed_box = len(self.open_boundaries) == 0 and self.wall_velocity is None

    # -- indexing helpers ---------------------------------------------------

    def _sl_phi(self, i):
        return slice(i * self.ns, (i + 1) * self.ns)

    def _sl_f(self, i):
        return slice((self.n_phases + i) * self.ns, (self.n_phases + i + 1) * self.ns)

    def _sl_mu(self, i):
        return slice((2 * self.n_phases + i) * self.ns, (2 * self.n_phases + i + 1) * self.ns)

    def _sl_lam(self, i):
        return slice((3 * self.n_phases + i) * self.ns, (3 * self.n_phases + i + 1) * self.ns)

    # -- initialization -----------------------------------------------------

    def membrane_mass_lu(self):
        if self._Mf_lu is None:
            M = self.Ms.tolil()
            M[self.wall_dofs, :] = 0.0
            M[self.wall_dofs, self.wall_dofs] = 1.0
            self._Mf_lu = spla.splu(M.tocsc())
        return self._Mf_lu

    def membrane_level_field(self, phi: np.ndarray) -> np.ndarray:
        """Weak membrane density at a single level, zero trace on walls."""
        rhs = eng.membrane_density_weak(self.space, phi, self.params.interface_eps, self.rule)
        rhs = rhs.copy()
        rhs[self.wall_dofs] = 0.0
        return self.membrane_mass_lu().solve(rhs)

    def initial_state(self, phis: np.ndarray, time: float = 0.0) -> SystemState:
        """Assemble a consistent initial state from nodal phase fields."""
        phis = np.atleast_2d(np.asarray(phis, dtype=float))
        if phis.shape[0] != self.n_phases:
            raise ValueError("number of initial phase fields must match n_phases")
        n = self.n_phases
        f = np.stack([self.membrane_level_field(phis[i]) for i in range(n)])
        s_ref = np.array([eng.surface_area(self.space, phis[i], self.params.interface_eps, self.rule) for i in range(n)])
        mu = np.zeros_like(phis)
        for i in range(n):
            load = eng.chemical_potential_load(
                self.space,
                phis[i],
                f[i],
                s_ref[i],
                self.params,
                neighbor_phis=[phis[j] for j in range(n) if j != i],
                wall_field=self.wall_field,
                tweezer_fields=list(self.tweezer_fields),
                wall_quotient_squared=self.wall_quotient_squared,
                rule=self.rule,
            )
            mu[i] = spla.spsolve(self.Ms.tocsc(), load)
        mass = self.mass_vec @ phis.T
        return SystemState(
            time=time,
            phi=phis,
            f=f,
            mu=mu,
            lam=np.zeros_like(phis),
            velocity=np.zeros(2 * self.nv),
            pressure=np.zeros(self.ns),
            surface_area_ref=s_ref,
            mass_ref=np.atleast_1d(mass),
        )

    def ledger(self, state: SystemState) -> EnergyLedger:
        return eng.energy_ledger(
            self.space,
            self.vspace,
            state,
            self.params,
            wall_field=self.wall_field,
            tweezer_fields=list(self.tweezer_fields),
            wall_quotient_squared=self.wall_quotient_squared,
            rule=self.rule,
        )

    # -- per-step frozen data -------------------------------------------------

    def _freeze(self, state: SystemState, options: StepOptions):
        p = self.params
        n = self.n_phases
        fr = {}
        fr["b"] = state.phi
        fr["b_q"] = [eval_qp(self.tab, state.phi[i]) for i in range(n)]
        fr["grad_b_q"] = [grad_qp(self.tab, state.phi[i]) for i in range(n)]
        fr["delta_q"] = [eng.surface_delta(g, p.interface_eps) for g in fr["grad_b_q"]]
        fr["P_q"] = [eng.projection_tensor(g, self.projection_reg) for g in fr["grad_b_q"]]
        fr["S_old"] = [eng.surface_area(self.space, state.phi[i], p.interface_eps, self.rule) for i in range(n)]
        fr["f_old"] = state.f
        fr["b_e"] = [edge_eval(self.e1, state.phi[i]) for i in range(n)]
        if p.viscosity_model == "constant":
            fr["eta_q"] = None
        else:
            eta = np.ones_like(fr["b_q"][0])
            for i in range(n):
                eta = eta + (p.phase_viscosities[i] - 1.0) * 0.5 * (1.0 + fr["b_q"][i])
            fr["eta_q"] = np.maximum(eta, 1e-12)
        # inextensibility coupling operators (frozen at level n)
        if self.with_lambda:
            G = []
            Kw = []
            xi_eps2 = p.inext_relax * p.interface_eps**2
            for i in range(n):
                w = fr["delta_q"][i][..., None, None] * fr["P_q"][i]
                blocks = []
                for c in (0, 1):
                    m = deriv_mass(self.tab, self.vtab, 0, on="col", weight=w[..., c, 0])
                    m = m + deriv_mass(self.tab, self.vtab, 1, on="col", weight=w[..., c, 1])
                    blocks.append(m)
                G.append(sp.hstack(blocks, format="csr"))
                coeff = fr["b_q"][i] ** 2 + self.lambda_coeff_reg
                Kwi = xi_eps2 * stiffness_matrix(self.tab, self.tab, weight=coeff)
                if self.lambda_mass_reg > 0.0:
                    Kwi = Kwi + self.lambda_mass_reg * self.Ms
                Kw.append(Kwi.tocsr())
            fr["G"] = G
            fr["Kw"] = Kw
        fr["Kvisc"] = viscous_matrix(self.vtab, eta_q=fr["eta_q"])
        fr["u_old"] = state.velocity
        fr["u_old_red"] = self.Tt @ state.velocity
        fr["dt"] = options.dt
        return fr

    def _initial_guess(self, state: SystemState, fr) -> np.ndarray:
        X = np.zeros(self.n_unknowns)
        for i in range(self.n_phases):
            X[self._sl_phi(i)] = state.phi[i]
            X[self._sl_f(i)] = state.f[i]
            X[self._sl_mu(i)] = state.mu[i]
            if self.with_lambda:
                X[self._sl_lam(i)] = state.lam[i]
        X[self.off_u : self.off_p] = fr["u_old_red"]
        X[self.off_p : self.off_s] = state.pressure
        for i in range(self.n_phases):
            X[self.off_s + i] = (fr["S_old"][i] - state.surface_area_ref[i]) / state.surface_area_ref[i]
        return X

    # -- evaluation of unknown-dependent fields --------------------------------

    def _unpack(self, X, state, fr):
        n = self.n_phases
        d = {}
        d["a"] = [X[self._sl_phi(i)] for i in range(n)]
        d["m"] = [X[self._sl_f(i)] for i in range(n)]
        d["mu"] = [X[self._sl_mu(i)] for i in range(n)]
        d["lam"] = [X[self._sl_lam(i)] for i in range(n)] if self.with_lambda else [np.zeros(self.ns)] * n
        d["u_red"] = X[self.off_u : self.off_p]
        d["U"] = self.T @ d["u_red"]
        d["p"] = X[self.off_p : self.off_s]
        d["s"] = [X[self.off_s + i] for i in range(n)]
        d["um"] = 0.5 * (d["U"] + fr["u_old"])
        d["mid"] = [0.5 * (d["a"][i] + fr["b"][i]) for i in range(n)]
        d["a_q"] = [eval_qp(self.tab, a) for a in d["a"]]
        d["mid_q"] = [0.5 * (aq + bq) for aq, bq in zip(d["a_q"], fr["b_q"])]
        d["grad_mid_q"] = [grad_qp(self.tab, m) for m in d["mid"]]
        d["m_q"] = [eval_qp(self.tab, m) for m in d["m"]]
        if self.n_phases > 1:
            d["A_q"], d["B_q"] = zip(*[eng.neighbor_factors(aq, bq) for aq, bq in zip(d["a_q"], fr["b_q"])])
        d["mu_q"] = [eval_qp(self.tab, m) for m in d["mu"]]
        d["um_q"] = vec_eval_qp(self.vtab, self.vspace, d["um"])
        d["grad_um_q"] = vec_grad_qp(self.vtab, self.vspace, d["um"])
        # wall traces
        d["a_e"] = [edge_eval(self.e1, a) for a in d["a"]]
        d["dtau_mid_e"] = [0.5 * (edge_eval_dtau(self.e1, a) + edge_eval_dtau(self.e1, fr["b"][i])) for i, a in enumerate(d["a"])]
        um_e = edge_vec_eval(self.e2, self.vspace, d["um"])
        d["um_e"] = um_e
        d["utau_e"] = np.einsum("fqc,fc->fq", um_e, self.e1.tangents)
        d["phidot_e"] = [
            (d["a_e"][i] - fr["b_e"][i]) / fr["dt"] + d["utau_e"] * d["dtau_mid_e"][i]
            for i in range(self.n_phases)
        ]
        return d

    def _static_quotient(self, i, d, fr, statics_q):
        """Contact quotient of phase i against other phases and static fields."""
        p = self.params
        a_q, b_q = d["a_q"][i], fr["b_q"][i]
        w = np.zeros_like(a_q)
        for j in range(self.n_phases):
            if j != i:
                w = w + eng.interaction_quotient_factors(a_q, b_q, d["A_q"][j], d["B_q"][j], p.q1, p.q2)
        wall_q, tw_qs = statics_q
        if wall_q is not None:
            w = w + eng.wall_quotient(a_q, b_q, wall_q, p.qw1, p.qw2, squared=self.wall_quotient_squared)
        for tq in tw_qs:
            w = w + eng.interaction_quotient(a_q, b_q, tq, p.qtw1, p.qtw2)
        return w

    def _statics_q(self):
        wall_q = None if self.wall_field is None else eval_qp(self.tab, self.wall_field)
        tw_qs = [eval_qp(self.tab, tw) for tw in self.tweezer_fields]
        return wall_q, tw_qs

    # -- residual ---------------------------------------------------------------

    def residual(self, X, state, fr, options) -> np.ndarray:
        p = self.params
        n = self.n_phases
        eps = p.interface_eps
        dt = fr["dt"]
        d = self._unpack(X, state, fr)
        statics_q = self._statics_q()
        R = np.zeros_like(X)

        for i in range(n):
            a, b = d["a"][i], fr["b"][i]
            a_q, b_q = d["a_q"][i], fr["b_q"][i]
            # phase transport
            adv_w = np.einsum("tqc,tqc->tq", d["um_q"], d["grad_mid_q"][i])
            R[self._sl_phi(i)] = (
                self.Ms @ (a - b) / dt + load_vector(self.tab, adv_w) + p.mobility * (self.Ks @ d["mu"][i])
            )
            # membrane equation (level-averaged reaction)
            rf = self.Ms @ d["m"][i] - 0.5 * eps * (self.Ks @ (a + b)) - load_vector(
                self.tab, eng.membrane_reaction_levelavg(a_q, b_q, eps)
            )
            rf[self.wall_dofs] = d["m"][i][self.wall_dofs]
            R[self._sl_f(i)] = rf
            # chemical potential
            surf_load = 0.5 * eps * (self.Ks @ (a + b)) + load_vector(
                self.tab, eng.double_well_quotient(a_q, b_q, eps)
            )
            bend = p.bending * (
                self.Ks @ d["m"][i]
                + load_vector(self.tab, eng.bending_reaction_weight(a_q, b_q, eps) * d["m_q"][i])
            )
            quot = self._static_quotient(i, d, fr, statics_q)
            rmu = (
                self.Ms @ d["mu"][i]
                - bend
                - p.surface_penalty * d["s"][i] * surf_load
                - p.interaction_scale * load_vector(self.tab, quot)
                - p.wall_relax * edge_load(self.e1, d["phidot_e"][i])
            )
            R[self._sl_mu(i)] = rmu
            # inextensibility
            if self.with_lambda:
                R[self._sl_lam(i)] = fr["G"][i] @ d["um"] - fr["Kw"][i] @ d["lam"][i]
            # surface-area factor
            s_new = eng.surface_area(self.space, a, eps, self.rule)
            R[self.off_s + i] = (
                state.surface_area_ref[i] * d["s"][i] - 0.5 * (s_new + fr["S_old"][i]) + state.surface_area_ref[i]
            )

        # momentum
        re = p.reynolds
        Ru = self.Mv @ (d["U"] - fr["u_old"]) / dt
        conv1 = np.concatenate(
            [
                load_vector(self.vtab, np.einsum("tqd,tqd->tq", d["um_q"], d["grad_um_q"][:, :, c, :]))
                for c in (0, 1)
            ]
        )
        if options.convection_form == "skew":
            conv2 = np.concatenate(
                [grad_load_vector(self.vtab, d["um_q"] * d["um_q"][..., c : c + 1]) for c in (0, 1)]
            )
            Ru = Ru + 0.5 * (conv1 - conv2)
        else:
            Ru = Ru + conv1
        Ru = Ru + (1.0 / re) * (fr["Kvisc"] @ d["um"]) - (1.0 / re) * (self.Bdiv.T @ d["p"])
        for i in range(n):
            w = d["mu_q"][i][..., None] * d["grad_mid_q"][i]
            Ru = Ru - (1.0 / re) * np.concatenate(
                [load_vector(self.vtab, w[..., c]) for c in (0, 1)]
            )
            if self.with_lambda:
                Ru = Ru + (1.0 / re) * (fr["G"][i].T @ d["lam"][i])
            # wall relaxation stress on the wall
            wb = d["phidot_e"][i] * d["dtau_mid_e"][i]
            Ru = Ru + (p.wall_relax / re) * np.concatenate(
                [edge_load(self.e2, wb * self.e1.tangents[:, c][:, None]) for c in (0, 1)]
            )
        Ru = Ru + (1.0 / (re * p.slip_length)) * (self.Mslip @ d["um"] - self.bslip)
        Ru = Ru + self.traction
        R[self.off_u : self.off_p] = self.Tt @ Ru

        # incompressibility
        rp = self.Bdiv @ d["um"]
        if self.pin_pressure:
            rp[self.pin_dof] = d["p"][self.pin_dof]
        R[self.off_p : self.off_s] = rp
        return R

    # -- Jacobian -----------------------------------------------------------------

    def jacobian(self, X, state, fr, options) -> sp.csc_matrix:
        p = self.params
        n = self.n_phases
        eps = p.interface_eps
        dt = fr["dt"]
        re = p.reynolds
        d = self._unpack(X, state, fr)
        statics_q = self._statics_q()

        nb = self.n_scalar_blocks
        rows = nb + 2 + n  # scalar blocks, u, p, s scalars
        blocks = [[None] * rows for _ in range(rows)]
        IU, IP = nb, nb + 1

        def bset(r, c, mat):
            blocks[r][c] = mat if blocks[r][c] is None else blocks[r][c] + mat

        iphi = lambda i: i
        if_ = lambda i: n + i
        imu = lambda i: 2 * n + i
        ilam = lambda i: 3 * n + i
        is_ = lambda i: nb + 2 + i

        wall_id = sp.coo_matrix(
            (np.ones(len(self.wall_dofs)), (self.wall_dofs, self.wall_dofs)), shape=(self.ns, self.ns)
        ).tocsr()
        keep = sp.diags(np.where(np.isin(np.arange(self.ns), self.wall_dofs), 0.0, 1.0))

        Am = advection_matrix(self.tab, self.tab, d["um_q"])
        for i in range(n):
            a_q, b_q = d["a_q"][i], fr["b_q"][i]
            m_q = d["m_q"][i]
            # phase transport rows
            bset(iphi(i), iphi(i), self.Ms / dt + 0.5 * Am)
            bset(iphi(i), imu(i), p.mobility * self.Ks)
            cblocks = [
                mass_matrix(self.tab, self.vtab, weight=d["grad_mid_q"][i][..., c]) for c in (0, 1)
            ]
            bset(iphi(i), IU, 0.5 * sp.hstack(cblocks, format="csr") @ self.T)
            # membrane rows (with wall Dirichlet)
            bset(if_(i), if_(i), keep @ self.Ms + wall_id)
            dfa = keep @ (
                -0.5 * eps * self.Ks
                - mass_matrix(self.tab, self.tab, weight=(3.0 * a_q**2 - 1.0) / (2.0 * eps))
            )
            bset(if_(i), iphi(i), dfa)
            # chemical potential rows
            bset(imu(i), imu(i), self.Ms)
            bset(imu(i), if_(i), -p.bending * (self.Ks + mass_matrix(self.tab, self.tab, weight=eng.bending_reaction_weight(a_q, b_q, eps))))
            dmu_da = -p.bending * mass_matrix(self.tab, self.tab, weight=(2.0 * a_q + b_q) / eps**2 * m_q)
            dmu_da = dmu_da - p.surface_penalty * d["s"][i] * (
                0.5 * eps * self.Ks
                + mass_matrix(self.tab, self.tab, weight=(3.0 * a_q**2 + 2.0 * a_q * b_q + b_q**2 - 2.0) / (4.0 * eps))
            )
            wq = np.zeros_like(a_q)
            wall_q, tw_qs = statics_q
            for j in range(n):
                if j != i:
                    wq = wq + eng.interaction_quotient_factors_da(a_q, b_q, d["A_q"][j], d["B_q"][j], p.q1, p.q2)
            if wall_q is not None:
                wq = wq + eng.wall_quotient_da(a_q, b_q, wall_q, p.qw1, p.qw2, squared=self.wall_quotient_squared)
            for tq in tw_qs:
                wq = wq + eng.interaction_quotient_da(a_q, b_q, tq, p.qtw1, p.qtw2)
            dmu_da = dmu_da - p.interaction_scale * mass_matrix(self.tab, self.tab, weight=wq)
            dmu_da = dmu_da - p.wall_relax * (
                self.Mb_wall / dt
                + 0.5 * edge_matrix_dtau(self.e1, self.e1, on="col", weight=d["utau_e"])
            )
            bset(imu(i), iphi(i), dmu_da)
            for j in range(n):
                if j == i:
                    continue
                dA, dB = eng.neighbor_factors_da(d["a_q"][j])
                wij = p.q1 * (a_q + b_q + 2.0) * dA - p.q2 * (a_q + b_q) * (a_q**2 + b_q**2 - 2.0) * dB
                bset(imu(i), iphi(j), -p.interaction_scale * mass_matrix(self.tab, self.tab, weight=wij))
            cg = [
                edge_matrix(self.e1, self.e2, weight=d["dtau_mid_e"][i] * self.e1.tangents[:, c][:, None])
                for c in (0, 1)
            ]
            bset(imu(i), IU, -p.wall_relax * 0.5 * sp.hstack(cg, format="csr") @ self.T)
            # surface-area load column
            surf_load = 0.5 * eps * (self.Ks @ (d["a"][i] + fr["b"][i])) + load_vector(
                self.tab, eng.double_well_quotient(a_q, b_q, eps)
            )
            bset(imu(i), is_(i), -p.surface_penalty * sp.csr_matrix(surf_load[:, None]))
            # inextensibility rows
            if self.with_lambda:
                bset(ilam(i), IU, 0.5 * fr["G"][i] @ self.T)
                bset(ilam(i), ilam(i), -fr["Kw"][i])
            # surface-area factor rows
            ell = eps * (self.Ks @ d["a"][i]) + load_vector(self.tab, eng.membrane_reaction(a_q, eps))
            bset(is_(i), iphi(i), sp.csr_matrix(-0.5 * ell[None, :]))
            bset(is_(i), is_(i), sp.csr_matrix(np.array([[state.surface_area_ref[i]]])))

        # momentum rows
        Juu = self.Mv / dt + (0.5 / re) * fr["Kvisc"] + (0.5 / (re * p.slip_length)) * self.Mslip
        A2 = advection_matrix(self.vtab, self.vtab, d["um_q"])
        C = sp.block_diag([A2, A2], format="csr")
        D1b = [[mass_matrix(self.vtab, self.vtab, weight=d["grad_um_q"][:, :, k, m]) for m in (0, 1)] for k in (0, 1)]
        D1 = sp.bmat(D1b, format="csr")
        if options.convection_form == "skew":
            D2b = [
                [deriv_mass(self.vtab, self.vtab, m, on="row", weight=d["um_q"][..., k]) for m in (0, 1)]
                for k in (0, 1)
            ]
            D2 = sp.bmat(D2b, format="csr")
            Juu = Juu + 0.25 * (C - C.T + D1 - D2)
        else:
            Juu = Juu + 0.5 * (C + D1)
        for i in range(n):
            tt = [
                [
                    edge_matrix(
                        self.e2,
                        self.e2,
                        weight=d["dtau_mid_e"][i] ** 2 * (self.e1.tangents[:, c1] * self.e1.tangents[:, c2])[:, None],
                    )
                    for c2 in (0, 1)
                ]
                for c1 in (0, 1)
            ]
            Juu = Juu + (0.5 * p.wall_relax / re) * sp.bmat(tt, format="csr")
        bset(IU, IU, self.Tt @ Juu @ self.T)
        bset(IU, IP, -(1.0 / re) * (self.Tt @ self.Bdiv.T))
        for i in range(n):
            nmu = sp.vstack(
                [mass_matrix(self.vtab, self.tab, weight=d["grad_mid_q"][i][..., c]) for c in (0, 1)],
                format="csr",
            )
            bset(IU, imu(i), -(1.0 / re) * (self.Tt @ nmu))
            nphi = sp.vstack(
                [deriv_mass(self.vtab, self.tab, c, on="col", weight=d["mu_q"][i]) for c in (0, 1)],
                format="csr",
            )
            Jup = -(0.5 / re) * (self.Tt @ nphi)
            # wall relaxation stress: phi dependence
            eb = []
            for c in (0, 1):
                tc = self.e1.tangents[:, c][:, None]
                m1 = edge_matrix(self.e2, self.e1, weight=d["dtau_mid_e"][i] * tc / dt)
                m2 = edge_matrix_dtau(self.e2, self.e1, on="col", weight=0.5 * d["utau_e"] * d["dtau_mid_e"][i] * tc)
                m3 = edge_matrix_dtau(self.e2, self.e1, on="col", weight=0.5 * d["phidot_e"][i] * tc)
                eb.append(m1 + m2 + m3)
            Jup = Jup + (p.wall_relax / re) * (self.Tt @ sp.vstack(eb, format="csr"))
            bset(IU, iphi(i), Jup)
            if self.with_lambda:
                bset(IU, ilam(i), (1.0 / re) * (self.Tt @ fr["G"][i].T))

        # incompressibility rows
        Bp = (0.5 * self.Bdiv @ self.T).tolil()
        if self.pin_pressure:
            Bp[self.pin_dof, :] = 0.0
            bset(IP, IP, sp.coo_matrix(([1.0], ([self.pin_dof], [self.pin_dof])), shape=(self.ns, self.ns)).tocsr())
        bset(IP, IU, Bp.tocsr())

        sizes_r = [self.ns] * nb + [self.nu, self.ns] + [1] * n
        for r in range(rows):
            if all(blocks[r][c] is None for c in range(rows)):
                blocks[r][r] = sp.csr_matrix((sizes_r[r], sizes_r[r]))
        return sp.bmat(blocks, format="csc")

    # -- Newton iteration -----------------------------------------------------------

    def _fd_jacobian_check(self, X, state, fr, options, J, n_probe=3, h=1e-7):
        rng = np.random.default_rng(12345)
        worst = 0.0
        for _ in range(n_probe):
            v = rng.standard_normal(self.n_unknowns)
            v /= np.linalg.norm(v)
            rp = self.residual(X + h * v, state, fr, options)
            rm = self.residual(X - h * v, state, fr, options)
            fd = (rp - rm) / (2 * h)
            jv = J @ v
            denom = np.linalg.norm(fd) + 1e-30
            worst = max(worst, float(np.linalg.norm(jv - fd) / denom))
        return worst

    def step(self, state: SystemState, options: StepOptions, rates: SystemState | None = None):
        """Advance one time level; returns (new state, StepReport).

        ``rates`` optionally carries finite-difference time derivatives of the
        fields (as a SystemState-shaped container) used to extrapolate the
        Newton initial guess.  Raises StepNonconvergence if Newton stalls; the
        run loop applies the halved-step retry policy.
        """
        fr = self._freeze(state, options)
        ledger_before = self.ledger(state)
        X = self._initial_guess(state, fr)
        if rates is not None:
            dt = fr["dt"]
            for i in range(self.n_phases):
                X[self._sl_phi(i)] = state.phi[i] + dt * rates.phi[i]
            X[self.off_u : self.off_p] = self.Tt @ (state.velocity + dt * rates.velocity)
        R = self.residual(X, state, fr, options)
        r0 = float(np.linalg.norm(R))
        rnorm = r0
        target = options.newton_tol * r0
        it = 0
        jac_check = None
        stalled = False
        while rnorm > target and it < options.newton_max_iter and not stalled:
            J = self.jacobian(X, state, fr, options)
            if options.jacobian_mode == "finite-difference-check":
                jac_check = self._fd_jacobian_check(X, state, fr, options, J)
            lu = factorized_lu(J)
            dx = lu.solve(-R)
            ndx = float(np.linalg.norm(dx))
            # backtracking line search; a trial is accepted on the natural
            # (affine-invariant) monotonicity test |J0^-1 R(X+lam dx)| <=
            # (1 - lam/2)|dx|, which is insensitive to the wildly different
            # row scalings of the blocks, or on plain residual decrease
            lam = 1.0
            accepted = False
            for _ in range(8):
                Xn = X + lam * dx
                Rn = self.residual(Xn, state, fr, options)
                rn = float(np.linalg.norm(Rn))
                if rn <= (1.0 - 1e-4 * lam) * rnorm:
                    accepted = True
                    break
                nat = float(np.linalg.norm(lu.solve(-Rn)))
                if nat <= (1.0 - 0.5 * lam) * ndx:
                    accepted = True
                    break
                lam *= 0.5
            it += 1
            if not accepted:
                raise StepNonconvergence(
                    f"Newton line search stalled at iteration {it} "
                    f"(|R| = {rnorm:.3e}, |R0| = {r0:.3e})",
                    it,
                    rnorm,
                    r0,
                )
            X, R, rnorm = Xn, Rn, rn
            # update smaller than roundoff on the state: the residual sits at
            # its numerical floor (e.g. an equilibrium); accept if not growing
            if np.linalg.norm(lam * dx) <= options.step_min_change * (1.0 + np.linalg.norm(X)):
                stalled = True
        if rnorm > target and not (stalled and rnorm <= r0):
            raise StepNonconvergence(
                f"Newton did not reach tol after {it} iterations "
                f"(|R| = {rnorm:.3e}, |R0| = {r0:.3e})",
                it,
                rnorm,
                r0,
            )

        d = self._unpack(X, state, fr)
        n = self.n_phases
        f_new = np.stack([2.0 * d["m"][i] - fr["f_old"][i] for i in range(n)])
        new_state = SystemState(
            time=state.time + fr["dt"],
            phi=np.stack(d["a"]),
            f=f_new,
            mu=np.stack(d["mu"]),
            lam=np.stack(d["lam"]),
            velocity=d["U"],
            pressure=d["p"],
            surface_area_ref=state.surface_area_ref,
            mass_ref=state.mass_ref,
        )
        ledger_after = self._ledger_with_dissipation(new_state, d, fr)
        mass_new = self.mass_vec @ new_state.phi.T
        mass_old = self.mass_vec @ state.phi.T
        rp = self.Bdiv @ d["um"]
        if self.pin_pressure:
            rp[self.pin_dof] = 0.0
        fcons = 0.0
        for i in range(n):
            lvl = self.membrane_level_field(new_state.phi[i])
            fcons = max(fcons, float(np.max(np.abs(f_new[i] - lvl)) / (1.0 + np.max(np.abs(lvl)))))
        energy_residual = ledger_after.total - ledger_before.total + ledger_after.dissipation
        report = StepReport(
            iterations=it,
            residual_norm=rnorm,
            initial_residual_norm=r0,
            dt_used=fr["dt"],
            ledger_before=ledger_before,
            ledger_after=ledger_after,
            energy_residual=float(energy_residual),
            mass_change=np.atleast_1d(mass_new - mass_old),
            div_residual=float(np.max(np.abs(rp))),
            f_consistency=fcons,
            jacobian_check=jac_check,
        )
        return new_state, report

    def _ledger_with_dissipation(self, new_state, d, fr) -> EnergyLedger:
        p = self.params
        dt = fr["dt"]
        re = p.reynolds
        base = self.ledger(new_state)
        g = d["grad_um_q"]
        D = 0.5 * (g + np.swapaxes(g, 2, 3))
        eta = fr["eta_q"] if fr["eta_q"] is not None else 1.0
        d_visc = 2.0 * dt / re * integrate(self.vtab, eta * np.einsum("tqcd,tqcd->tq", D, D))
        d_mu = 0.0
        d_lam = 0.0
        d_ac = 0.0
        for i in range(self.n_phases):
            d_mu += p.mobility * dt / re * float(d["mu"][i] @ (self.Ks @ d["mu"][i]))
            if self.with_lambda:
                d_lam += dt / re * float(d["lam"][i] @ (fr["Kw"][i] @ d["lam"][i]))
            d_ac += p.wall_relax * dt / re * edge_integrate(self.e1, d["phidot_e"][i] ** 2)
        slip = d["um_e"] - self.wall_vel_e
        d_slip = dt / (re * p.slip_length) * edge_integrate(self.e1, np.einsum("fqc,fqc->fq", slip, slip))
        return base.with_dissipation(d_visc, d_mu, d_lam, d_ac, d_slip)

    def steady_flow(self, state: SystemState) -> SystemState:
        """Quasi-steady flow for the current phase configuration.

        Solves the linear Stokes-with-interface-forces subsystem (momentum
        without the time derivative and convection, incompressibility and,
        when active, the inextensibility constraint) at frozen phases, and
        returns the state with velocity, pressure and interface pressures
        replaced.  Used to start driven runs on the slow manifold: the
        midpoint scheme does not damp stiff transients, so starting from
        rest would ring around the quasi-steady flow.
        """
        p = self.params
        re = p.reynolds
        opts = StepOptions(dt=1.0)
        fr = self._freeze(state, opts)
        nlam = self.n_phases if self.with_lambda else 0
        nu, ns = self.nu, self.ns
        rows = []
        rhs_u = -self.traction + (1.0 / (re * p.slip_length)) * self.bslip
        grads = [grad_qp(self.tab, state.phi[i]) for i in range(self.n_phases)]
        mus = [eval_qp(self.tab, state.mu[i]) for i in range(self.n_phases)]
        for i in range(self.n_phases):
            w = mus[i][..., None] * grads[i]
            rhs_u += (1.0 / re) * np.concatenate([load_vector(self.vtab, w[..., c]) for c in (0, 1)])
        Juu = (1.0 / re) * fr["Kvisc"] + (1.0 / (re * p.slip_length)) * self.Mslip
        blocks = [[self.Tt @ Juu @ self.T, -(1.0 / re) * (self.Tt @ self.Bdiv.T)] + [
            (1.0 / re) * (self.Tt @ fr["G"][i].T) for i in range(nlam)
        ]]
        Bp = self.Bdiv @ self.T
        if self.pin_pressure:
            Bp = Bp.tolil()
            Bp[self.pin_dof, :] = 0.0
            Bp = Bp.tocsr()
            Jpp = sp.coo_matrix(([1.0], ([self.pin_dof], [self.pin_dof])), shape=(ns, ns)).tocsr()
        else:
            Jpp = None
        blocks.append([Bp, Jpp] + [None] * nlam)
        for i in range(nlam):
            row = [fr["G"][i] @ self.T, None] + [None] * nlam
            row[2 + i] = -fr["Kw"][i]
            blocks.append(row)
        J = sp.bmat(blocks, format="csc")
        rhs = np.concatenate([self.Tt @ rhs_u, np.zeros(ns)] + [np.zeros(ns)] * nlam)
        sol = factorized_lu(J).solve(rhs)
        U = self.T @ sol[:nu]
        pr = sol[nu : nu + ns]
        lam = state.lam.copy()
        for i in range(nlam):
            lam[i] = sol[nu + ns + i * ns : nu + ns + (i + 1) * ns]
        return SystemState(
            time=state.time, phi=state.phi, f=state.f, mu=state.mu, lam=lam,
            velocity=U, pressure=pr, surface_area_ref=state.surface_area_ref,
            mass_ref=state.mass_ref,
        )

    # -- run loop -----------------------------------------------------------------

    def run(self, state: SystemState, n_steps: int, options: StepOptions, on_step=None):
        """March ``n_steps`` steps with the halved-dt retry policy.

        ``on_step(k, state, report)`` is invoked after every successful step;
        ``on_step(0, state, None)`` reports the initial state.  Returns the
        final state and the list of reports.
        """
        reports = []
        if on_step is not None:
            on_step(0, state, None)
        rates = None
        for k in range(1, n_steps + 1):
            dt = options.dt
            halvings = 0
            while True:
                try:
                    new_state, rep = self.step(state, replace(options, dt=dt), rates=rates)
                    break
                except StepNonconvergence as exc:
                    halvings += 1
                    if halvings > options.max_dt_halvings:
                        raise StepNonconvergence(
                            f"step {k} failed after {options.max_dt_halvings} dt halvings "
                            f"(last attempt at dt={dt:g}: {exc})",
                            exc.iterations,
                            exc.residual_norm,
                            exc.initial_norm,
                        )
                    dt *= 0.5
                    rates = None  # extrapolation is stale after a rejected step
            dt_used = rep.dt_used
            rates = SystemState(
                time=0.0,
                phi=(new_state.phi - state.phi) / dt_used,
                f=(new_state.f - state.f) / dt_used,
                mu=np.zeros_like(state.mu),
                lam=np.zeros_like(state.lam),
                velocity=(new_state.velocity - state.velocity) / dt_used,
                pressure=np.zeros_like(state.pressure),
                surface_area_ref=state.surface_area_ref,
                mass_ref=state.mass_ref,
            )
            state = new_state
            reports.append(rep)
            if on_step is not None:
                on_step(k, state, rep)
        return state, reports
