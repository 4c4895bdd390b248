"""Command-line entry point: run, verify and sweep.

Exit codes are a stable contract: 0 success, 1 solver failure or a breached
runtime invariant (energy balance on closed boxes), 2 usage/config errors.
"""

from __future__ import annotations

import argparse
import os
import sys


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="vesiflow", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run one scenario from a config file")
    runp.add_argument("--config", default=None, help="INI config path")
    runp.add_argument("--steps", type=int, default=None)
    runp.add_argument("--dt", type=float, default=None)
    runp.add_argument("--out", default=None, help="output directory")
    runp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                      help="override one config key (section.key=value); repeatable")
    runp.add_argument("--snapshot-every", type=int, default=None)

    verp = sub.add_parser("verify", help="run a built-in verification suite")
    verp.add_argument("suite", choices=["identities", "energy_law", "gradient", "oracle"])

    swp = sub.add_parser("sweep", help="run one scenario for each value of a parameter")
    swp.add_argument("--config", default=None)
    swp.add_argument("--key", required=True, help="config key, e.g. core.interaction_scale")
    swp.add_argument("--values", required=True, help="comma-separated values")
    swp.add_argument("--steps", type=int, default=None)
    swp.add_argument("--out", default=None)
    swp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")

    args = ap.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "verify":
            return cmd_verify(args.suite)
        if args.command == "sweep":
            return cmd_sweep(args)
    except _config_errors() as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 2


def _config_errors():
    from .config import ConfigError
    from .params import ParameterError

    return (ConfigError, ParameterError, KeyError)


def _load(args, extra_sets=()):
    from .config import load_config

    overrides = list(extra_sets) + list(args.set)
    cfg = load_config(args.config, overrides)
    if getattr(args, "steps", None) is not None:
        cfg.n_steps = args.steps
    if getattr(args, "dt", None) is not None:
        from dataclasses import replace

        cfg.options = replace(cfg.options, dt=args.dt)
    if getattr(args, "out", None) is not None:
        cfg.out_dir = args.out
    if getattr(args, "snapshot_every", None) is not None:
        cfg.snapshot_every = args.snapshot_every
    return cfg


def _execute(cfg, quiet=False):
    """Run one configured scenario into its output directory.

    Returns (exit_code, summary dict)."""
    import numpy as np

    from .config import format_config
    from .output import LedgerWriter, measure_contour, write_snapshot
    from .scenarios import build_scenario
    from .stepper import StepNonconvergence

    scenario = build_scenario(cfg.spec)
    st = scenario.stepper
    os.makedirs(cfg.out_dir, exist_ok=True)
    ledger_path = os.path.join(cfg.out_dir, "run.csv")
    writer = LedgerWriter(ledger_path, st.n_phases)
    led0 = st.ledger(scenario.initial_state)
    e0 = abs(led0.total)
    bound = cfg.energy_residual_factor * (cfg.options.newton_tol + cfg.options.linear_tol) * max(e0, 1e-30)
    masses0 = st.mass_vec @ scenario.initial_state.phi.T
    writer.write_row(0, 0.0, led0, 0.0, masses0)
    worst = {"elr": 0.0, "iters": 0}

    def on_step(k, state, rep):
        if k == 0:
            if cfg.snapshot_every > 0:
                write_snapshot(os.path.join(cfg.out_dir, "snap_%06d.vtk" % 0), scenario.mesh, state,
                               space=st.space, vspace=st.vspace, eps=st.params.interface_eps,
                               projection_reg=st.projection_reg)
            return
        masses = st.mass_vec @ state.phi.T
        writer.write_row(k, state.time, rep.ledger_after, rep.energy_residual, masses)
        worst["elr"] = max(worst["elr"], abs(rep.energy_residual))
        worst["iters"] = max(worst["iters"], rep.iterations)
        if cfg.snapshot_every > 0 and k % cfg.snapshot_every == 0:
            write_snapshot(os.path.join(cfg.out_dir, "snap_%06d.vtk" % k), scenario.mesh, state,
                           space=st.space, vspace=st.vspace, eps=st.params.interface_eps,
                           projection_reg=st.projection_reg)
        if not quiet and (k % 10 == 0 or k == cfg.n_steps):
            print(f"  step {k:5d}  t={state.time:.5g}  E={rep.ledger_after.total:.8g}  "
                  f"elr={rep.energy_residual:.3e}  it={rep.iterations}")

    status = 0
    message = "completed"
    final_state = scenario.initial_state
    try:
        final_state, reports = st.run(scenario.initial_state, cfg.n_steps, cfg.options, on_step=on_step)
    except StepNonconvergence as exc:
        status = 1
        message = f"solver failure: {exc}"
    writer.close()

    summary = {
        "steps_completed": writer.rows - 1,
        "final_time": final_state.time,
        "final_total_energy": st.ledger(final_state).total,
        "max_energy_residual": worst["elr"],
        "max_newton_iterations": worst["iters"],
        "energy_residual_bound": bound,
        "status": message,
    }
    if scenario.closed_box and cfg.enforce_energy_law and worst["elr"] > bound and status == 0:
        status = 1
        summary["status"] = (
            f"energy-law residual {worst['elr']:.3e} exceeded bound {bound:.3e} on a closed box"
        )
    # contour measurements of the first phase (when a contour exists)
    try:
        _, dx, dy, contact = measure_contour(
            scenario.mesh, final_state.phi[0], 0.0, wall_field=scenario.wall_field
        )
        summary["final_diameter_x"] = dx
        summary["final_diameter_y"] = dy
        summary["final_contact_length"] = contact
    except ValueError:
        pass
    with open(os.path.join(cfg.out_dir, "report.txt"), "w") as fh:
        fh.write("# run summary\n")
        for k, v in summary.items():
            fh.write(f"{k} = {v}\n")
        fh.write("\n# resolved configuration\n")
        fh.write(format_config(cfg))
    if not quiet:
        print(f"{summary['status']}; outputs in {cfg.out_dir}")
    return status, summary


def cmd_run(args) -> int:
    cfg = _load(args)
    status, _ = _execute(cfg)
    return status


def cmd_sweep(args) -> int:
    values = [v for v in args.values.split(",") if v.strip()]
    if not values:
        print("sweep: empty values list", file=sys.stderr)
        return 2
    base_out = args.out or "out/sweep"
    rows = []
    for v in values:
        sub = argparse.Namespace(
            config=args.config, steps=args.steps, dt=None,
            out=os.path.join(base_out, f"{args.key.split('.')[-1]}={v}"),
            set=list(args.set) + [f"{args.key}={v}"], snapshot_every=None,
        )
        cfg = _load(sub)
        print(f"sweep {args.key}={v} -> {cfg.out_dir}")
        status, summary = _execute(cfg)
        if status != 0:
            return status
        rows.append((v, summary))
    os.makedirs(base_out, exist_ok=True)
    with open(os.path.join(base_out, "summary.csv"), "w") as fh:
        fh.write("value,final_contact_length,final_diameter_x,final_diameter_y,final_total_energy\n")
        for v, s in rows:
            fh.write(
                f"{v},{s.get('final_contact_length', float('nan'))!r},"
                f"{s.get('final_diameter_x', float('nan'))!r},"
                f"{s.get('final_diameter_y', float('nan'))!r},"
                f"{s['final_total_energy']!r}\n"
            )
    print(f"sweep summary in {os.path.join(base_out, 'summary.csv')}")
    return 0


# ---------------------------------------------------------------------------
# verification suites


def _report(name, ok, detail=""):
    print(f"  [{'PASS' if ok else 'FAIL'}] {name}" + (f"  ({detail})" if detail else ""))
    return ok


def verify_identities() -> bool:
    import numpy as np

    from . import energetics as eng
    from .fem import FunctionSpace
    from .meshing import build_rect_mesh

    ok = True
    g = np.linspace(-1.2, 1.2, 500)
    A, B = np.meshgrid(g, g, indexing="ij")
    eps = 0.02
    r = eng.double_well_quotient(A, B, eps) * (A - B) - (
        eng.double_well_density(A, eps) - eng.double_well_density(B, eps)
    )
    scale = 1.0 + np.abs(eng.double_well_density(A, eps)) + np.abs(eng.double_well_density(B, eps))
    ok &= _report("double-well quotient telescoping", np.max(np.abs(r / scale)) < 1e-12,
                  f"max {np.max(np.abs(r / scale)):.2e}")
    for nb in (-0.3, 0.7):
        h = eng.interaction_quotient(A, B, nb, 2.0, 3.0) * (A - B) - (
            eng.interaction_density(A, nb, 2.0, 3.0) - eng.interaction_density(B, nb, 2.0, 3.0)
        )
        sc = 1.0 + np.abs(eng.interaction_density(A, nb, 2.0, 3.0)) + np.abs(eng.interaction_density(B, nb, 2.0, 3.0))
        ok &= _report(f"interaction quotient telescoping (neighbor {nb})",
                      np.max(np.abs(h / sc)) < 1e-12, f"max {np.max(np.abs(h / sc)):.2e}")
    for sq in (True, False):
        h = eng.wall_quotient(A, B, 0.4, 2.0, 1.0, squared=sq) * (A - B) - (
            eng.wall_density(A, 0.4, 2.0, 1.0, squared=sq) - eng.wall_density(B, 0.4, 2.0, 1.0, squared=sq)
        )
        sc = 1.0 + np.abs(eng.wall_density(A, 0.4, 2.0, 1.0, squared=sq)) + np.abs(eng.wall_density(B, 0.4, 2.0, 1.0, squared=sq))
        ok &= _report(f"wall quotient telescoping (squared={sq})",
                      np.max(np.abs(h / sc)) < 1e-12, f"max {np.max(np.abs(h / sc)):.2e}")

    # assembled identities on a small mesh with random nodal fields
    from .fem import default_quadrature, eval_qp, load_vector, mass_matrix, stiffness_matrix

    mesh = build_rect_mesh(4, 4)
    space = FunctionSpace(mesh, 1)
    rule = default_quadrature()
    tab = space.tabulate(rule)
    rng = np.random.default_rng(3)
    a = rng.uniform(-1.1, 1.1, space.ndof)
    b = rng.uniform(-1.1, 1.1, space.ndof)
    eps = 0.25
    K = stiffness_matrix(tab, tab)
    aq, bq = eval_qp(tab, a), eval_qp(tab, b)
    quot = 0.5 * eps * (K @ (a + b)) + load_vector(tab, eng.double_well_quotient(aq, bq, eps))
    lhs = float(quot @ (a - b))
    rhs = eng.surface_area(space, a, eps, rule) - eng.surface_area(space, b, eps, rule)
    rel = abs(lhs - rhs) / (1.0 + abs(rhs))
    ok &= _report("membrane quotient integral identity", rel < 1e-10, f"rel {rel:.2e}")

    wall = space.boundary_dofs("wall")
    a2, b2 = a.copy(), b.copy()
    M = mass_matrix(tab, tab).tolil()
    M[wall, :] = 0.0
    M[wall, wall] = 1.0
    import scipy.sparse.linalg as spla

    def level_f(phi):
        rhs_ = eng.membrane_density_weak(space, phi, eps, rule)
        rhs_[wall] = 0.0
        return spla.spsolve(M.tocsc(), rhs_)

    fa, fb = level_f(a2), level_f(b2)
    fmid = 0.5 * (fa + fb)
    gl = K @ fmid + load_vector(tab, eng.bending_reaction_weight(aq, bq, eps) * eval_qp(tab, fmid))
    lhs = float(gl @ (a2 - b2))
    Mc = mass_matrix(tab, tab)
    rhs = float(fa @ (Mc @ fa) - fb @ (Mc @ fb)) / (2.0 * eps)
    rel = abs(lhs - rhs) / (1.0 + abs(rhs))
    ok &= _report("curvature-variation integral identity", rel < 1e-10, f"rel {rel:.2e}")
    return ok


def verify_energy_law() -> bool:
    import numpy as np

    from .config import load_config

    cfg = load_config(None, [
        "scenario.preset=wall_adhesion", "scenario.nx=24", "scenario.ny=24",
        "core.interface_eps=0.05", "scenario.wall_band=0.12", "scenario.cells=0.5,0.34,0.22",
        "timestepper.dt=2e-4",
    ])
    from .scenarios import build_scenario

    scen = build_scenario(cfg.spec)
    state = scen.initial_state
    st = scen.stepper
    e0 = abs(st.ledger(state).total)
    bound = 100.0 * (cfg.options.newton_tol + cfg.options.linear_tol) * e0
    totals = [st.ledger(state).total]
    ok = True
    worst = 0.0
    for _ in range(20):
        state, rep = st.step(state, cfg.options)
        totals.append(rep.ledger_after.total)
        worst = max(worst, abs(rep.energy_residual))
    mono = all(t1 <= t0 + 1e-12 * e0 for t0, t1 in zip(totals, totals[1:]))
    ok &= _report("energy monotonically non-increasing", mono)
    ok &= _report("energy-balance residual within bound", worst <= bound,
                  f"worst {worst:.3e} vs bound {bound:.3e}")
    channels = rep.ledger_after
    ok &= _report("dissipation channels nonnegative",
                  min(channels.d_visc, channels.d_mu, channels.d_lambda, channels.d_wall_ac, channels.d_slip) >= 0.0)
    return ok


def verify_gradient(n_dofs: int = 20) -> bool:
    import numpy as np

    from . import energetics as eng
    from .fem import FunctionSpace
    from .meshing import build_rect_mesh
    from .oracles import oracle_energy_gradient
    from .params import ParameterSet
    from .scenarios import CellShape, init_cell_field, init_wall_field
    from .stepper import CoupledStepper

    mesh = build_rect_mesh(12, 12)
    params = ParameterSet(
        reynolds=1.0, mobility=1.0, bending=2e-2, interface_eps=0.08, surface_penalty=50.0,
        wall_relax=1e-3, slip_length=1.0, interaction_scale=10.0, q1=1.0, q2=0.5,
        qw1=2.0, qw2=1.0, inext_relax=0.0, n_phases=2,
    )
    space = FunctionSpace(mesh, 1)
    eps = params.interface_eps
    wall = init_wall_field(mesh, 0.18, space, eps)
    phis = np.stack([
        init_cell_field(CellShape(0.42, 0.52, 0.22), space, eps),
        init_cell_field(CellShape(0.68, 0.5, 0.18), space, eps),
    ])
    st = CoupledStepper(mesh, params, wall_field=wall)
    state = st.initial_state(phis)
    rng = np.random.default_rng(11)
    ok = True
    worst = 0.0
    checked = 0
    for i in (0, 1):
        band = np.nonzero((phis[i] > -0.9) & (phis[i] < 0.9))[0]
        picks = rng.choice(band, size=max(1, n_dofs // 2), replace=False)
        load = eng.chemical_potential_load(
            space, phis[i], state.f[i], state.surface_area_ref[i], params,
            neighbor_phis=[phis[j] for j in range(2) if j != i], wall_field=wall,
        )
        for k in picks:
            fd = oracle_energy_gradient(
                mesh, phis, (i, int(k)), state.surface_area_ref, params,
                membrane_solver=st.membrane_level_field, wall_field=wall,
            )
            rel = abs(load[k] - fd) / max(1e-8, abs(fd))
            worst = max(worst, rel)
            checked += 1
    ok &= _report(f"potential load matches FD energy gradient at {checked} dofs",
                  worst < 1e-5, f"worst rel {worst:.2e}")
    return ok


def verify_oracle() -> bool:
    import math

    import numpy as np

    from .oracles import oracle_h_landscape, oracle_tanh_surface

    ok = True
    v = oracle_tanh_surface(0.02)
    ok &= _report("profile energy converges to 2 sqrt(2)/3", abs(v - 2 * math.sqrt(2) / 3) < 1e-4, f"{v:.6f}")
    v2 = oracle_tanh_surface(0.5)
    ok &= _report("profile energy independent of thickness", abs(v - v2) < 1e-4)
    v3 = oracle_tanh_surface(0.02, resolution=400_000)
    ok &= _report("profile energy quadrature converged", abs(v - v3) < 1e-8)
    mn, arg, row = oracle_h_landscape(50.0, 400.0)
    ok &= _report("contact density vanishes along phi_a = -1", np.max(np.abs(row)) < 1e-12)
    ok &= _report("attractive well exists in the interior", mn < 0 and -1 < arg[0] < 1 and -1 < arg[1] < 1,
                  f"min {mn:.1f} at {arg}")
    mn0, arg0, _ = oracle_h_landscape(50.0, 0.0)
    ok &= _report("pure repulsion has zero minimum", abs(mn0) < 1e-12)
    return ok


def cmd_verify(suite: str) -> int:
    print(f"verify {suite}:")
    ok = {
        "identities": verify_identities,
        "energy_law": verify_energy_law,
        "gradient": verify_gradient,
        "oracle": verify_oracle,
    }[suite]()
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
