"""Acceptance criteria, each checked at its stated tolerance.

The expensive 50% steady run is shared through module fixtures; one line per
criterion is printed in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from stenoflow.dg import BoundarySpec, DGSolver, Mesh1D, SolverConfig, StateField
from stenoflow.geometry import derivatives_at, make_stenosis_profile, straight_vessel
from stenoflow.harness import RunConfig, cell_means, convergence_study, relative_difference, run_case, stenotic_mask
from stenoflow.model import (
    C0Variant,
    Correction,
    PhysicalParams,
    eigenvalues,
    flux,
    riemann_invariants,
    state_from_invariants,
    wave_speed,
)
from stenoflow.postprocess import (
    CharacteristicScales,
    SliceData,
    coriolis_integral,
    ode_residual,
    radial_velocity_solve,
)

BASE = RunConfig().with_overrides(geometry={"kind": "stenosis", "severity": 50})


@pytest.fixture(scope="module")
def steady_extended(tmp_path_factory):
    """Full 50% run, N = 200, k = 2, T = 1 s, with mass log and dense snapshots."""
    cfg = BASE.with_overrides(solver={"t_end": 1.0, "track_mass": True, "output_interval": 0.01})
    start = time.perf_counter()
    case = run_case(cfg, tmp_path_factory.mktemp("steady50"))
    case.elapsed = time.perf_counter() - start
    return case


@pytest.fixture(scope="module")
def steady_classical(tmp_path_factory):
    cfg = BASE.with_overrides(model={"correction": "classical"}, solver={"t_end": 1.0, "stop_at_steady": True})
    return run_case(cfg, tmp_path_factory.mktemp("classical50"))


def test_c01_straight_tube_model_equivalence(record_criterion):
    start = time.perf_counter()
    geom = straight_vessel()
    mesh = Mesh1D(200, geom.length, 2)
    spec = BoundarySpec(inlet_value=22.5, ramp_time=1e-3)
    runs = {}
    for corr in (Correction.EXTENDED, Correction.CLASSICAL):
        solver = DGSolver(mesh, geom, PhysicalParams(), spec, SolverConfig(correction=corr))
        u, t = solver.equilibrium.coeffs, 0.0
        traj = []
        for _ in range(100):
            dt = solver.cfl_dt(u)
            u, _ = solver.step(u, t, dt)
            t += dt
            traj.append(u)
        runs[corr] = np.array(traj)
    ext, cla = runs[Correction.EXTENDED], runs[Correction.CLASSICAL]
    scale = np.where(np.abs(cla) > 0, np.abs(cla), np.finfo(float).tiny)
    worst = float(np.max(np.abs(ext - cla) / scale))
    moved = float(np.abs(ext[-1, 1]).max())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and moved > 0 and elapsed < 10
    record_criterion(1, "straight-tube equivalence", ok, f"max rel diff {worst:.1e} over 100 steps, {elapsed:.2f} s")
    assert ok


def _raw_rest_residual(sev, variant, n, k=2):
    geom = make_stenosis_profile(sev)
    solver = DGSolver(
        Mesh1D(n, geom.length, k), geom, PhysicalParams(c0_variant=variant),
        BoundarySpec(inlet_value=0.0), SolverConfig(well_balanced=False),
    )
    res = solver.semidiscrete_rhs(solver.equilibrium.coeffs)
    return math.sqrt(0.5 * solver.mesh.dz * float(np.sum(res**2)))


def test_c02_rest_state_well_balanced(record_criterion):
    k = 2
    worst_q, worst_rate, lines = 0.0, math.inf, []
    for sev in (23, 40, 50):
        geom = make_stenosis_profile(sev)
        for variant in C0Variant:
            params = PhysicalParams(c0_variant=variant)
            solver = DGSolver(Mesh1D(200, geom.length, k), geom, params, BoundarySpec(inlet_value=0.0), SolverConfig())
            u = solver.equilibrium.coeffs
            for _ in range(1000):
                u, _ = solver.step(u, 0.0, solver.cfl_dt(u))
            rec = solver.record(StateField(u), n_samples=2001)
            c = float(wave_speed(geom.r_max**2, derivatives_at(geom, 0.0), solver.params))
            worst_q = max(worst_q, float(np.abs(rec.q).max()) / (c * geom.r_max**2))
            errs = [_raw_rest_residual(sev, variant, n, k) for n in (50, 100, 200, 400)]
            rate = math.log2(errs[-2] / errs[-1])
            worst_rate = min(worst_rate, rate)
            lines.append(f"{sev}%/{variant.value}: rate {rate:.2f}")
    ok = worst_q < 1e-8 and worst_rate >= k + 1
    record_criterion(
        2, "rest-state well-balancedness", ok,
        f"max |Q|/(c R_max^2) {worst_q:.1e} after 1000 steps; min residual rate {worst_rate:.2f} ({'; '.join(lines)})",
    )
    assert ok


def test_c03_convergence_order(record_criterion):
    table = convergence_study(RunConfig(), n_list=(50, 100, 200), degrees=(1, 2))
    details, ok = [], table.wall_clock_s < 300
    for k in (1, 2):
        ra, rq = table.rates(k)
        details.append(f"k={k}: A {ra:.2f}, Q {rq:.2f}")
        ok = ok and abs(ra - (k + 1)) <= 0.3 and abs(rq - (k + 1)) <= 0.3
    record_criterion(3, "convergence order", ok, f"{'; '.join(details)}; {table.wall_clock_s:.1f} s")
    assert ok


def test_c04_discrete_conservation(steady_extended, record_criterion):
    log = steady_extended.run.mass_log
    dm, net, mass = log[:, 2], log[:, 3], log[:, 4]
    rel = np.abs(dm - net) / mass
    ok = len(log) == steady_extended.run.n_steps and float(rel.max()) <= 1e-12
    record_criterion(4, "discrete conservation", ok, f"max |dM - flux dt|/M {rel.max():.1e} over {len(log)} steps")
    assert ok


def test_c05_steady_continuity(steady_extended, record_criterion):
    run, solver = steady_extended.run, steady_extended.solver
    final = steady_extended.records[-1]
    _, qm = cell_means(solver, run.final)
    q_spread = float((qm.max() - qm.min()) / np.abs(qm).max())
    nodal_spread = float((final.q.max() - final.q.min()) / np.abs(final.q).max())
    i = int(np.argmax(final.u))
    u_ratio = final.u[i] / final.u[0]
    a_ratio = final.a[0] / final.a[i]
    mismatch = abs(u_ratio / a_ratio - 1.0)
    ok = run.steady and run.residual < 1e-6 and q_spread <= 1e-6 and mismatch <= 0.01
    record_criterion(
        5, "steady continuity", ok,
        f"residual {run.residual:.1e}; Q cell-mean spread {q_spread:.1e} (nodal {nodal_spread:.1e}); "
        f"U ratio {u_ratio:.4f} vs A ratio {a_ratio:.4f}",
    )
    assert ok


def test_c06_eigenstructure_and_invariants(steady_extended, record_criterion):
    rng = np.random.default_rng(2024)
    geom = make_stenosis_profile(50)
    params = PhysicalParams().with_r0_star(geom.r_max)
    g = derivatives_at(geom, rng.uniform(0.0, geom.length, 10_000))
    a = g.r0**2 * rng.uniform(0.5, 1.5, g.r0.size)
    q = a * rng.uniform(-200.0, 200.0, g.r0.size)
    worst_eig = 0.0
    for corr in Correction:
        l1, l2 = eigenvalues(a, q, g, params, corr)
        # Jacobian of (Q, alpha Q^2/A + K A^{3/2}/(3 D^2)) written out independently
        alpha = params.alpha + (g.alpha_c if corr is Correction.EXTENDED else 0.0)
        dfq_da = -alpha * (q / a) ** 2 + params.elastic_k * np.sqrt(a) / (2 * geom.r_max**2)
        dfq_dq = 2 * alpha * q / a
        scale = np.abs(l1) + np.abs(l2)
        worst_eig = max(
            worst_eig,
            float(np.max(np.abs(l1 + l2 - dfq_dq) / scale)),
            float(np.max(np.abs(l1 * l2 + dfq_da) / scale**2)),
        )
        assert np.all(flux(a, q, g, params, corr)[0] == q)
    w1, w2 = riemann_invariants(a, q, g, params)
    a2, q2 = state_from_invariants(w1, w2, g, params)
    c = wave_speed(a, g, params)
    worst_inv = max(float(np.max(np.abs(a2 - a) / a)), float(np.max(np.abs(q2 - q) / (np.abs(q) + a * c))))

    # ghost states at every snapshot of the full run carry the interior outgoing invariants
    solver = steady_extended.solver
    b = solver.basis
    g0, gl = derivatives_at(geom, 0.0), derivatives_at(geom, geom.length)
    worst_ghost = 0.0
    for snap in steady_extended.run.snapshots:
        cf = snap.coeffs
        (ga, gq), (ha, hq) = solver.boundary_ghosts(cf, snap.t)
        a0, q0 = cf[0, 0] @ b.phiL, cf[1, 0] @ b.phiL
        an, qn = cf[0, -1] @ b.phiR, cf[1, -1] @ b.phiR
        _, w2_int = riemann_invariants(a0, q0, g0, solver.params)
        _, w2_gh = riemann_invariants(ga, gq, g0, solver.params)
        w1_int, _ = riemann_invariants(an, qn, gl, solver.params)
        w1_gh, w2_out = riemann_invariants(ha, hq, gl, solver.params)
        u_in = solver.spec.inlet_at(snap.t)
        worst_ghost = max(
            worst_ghost,
            abs(w2_gh - w2_int) / abs(w2_int),
            abs(w1_gh - w1_int) / abs(w1_int),
            abs(w2_out - solver._w2_out) / abs(solver._w2_out),
            abs(gq / ga - u_in) / max(abs(u_in), 1.0),
        )
    ok = worst_eig <= 1e-12 and worst_inv <= 1e-12 and worst_ghost <= 1e-10
    record_criterion(
        6, "eigenstructure and invariants", ok,
        f"eig {worst_eig:.1e}, invariants {worst_inv:.1e} (10^4 states); ghosts {worst_ghost:.1e} "
        f"over {len(steady_extended.run.snapshots)} snapshots",
    )
    assert ok


def test_c07_radial_velocity_bvp(steady_extended, record_criterion):
    geom = make_stenosis_profile(50)
    params = PhysicalParams()
    scales = CharacteristicScales(22.5, geom.length, geom.r_max, params.rho_f, params.mu_f)

    straight = straight_vessel()
    gs = derivatives_at(straight, 2.0)
    prof = radial_velocity_solve(SliceData(2.0, straight.r_max**2, 22.5 * straight.r_max**2, 0.0, gs), scales)
    straight_max = float(np.abs(prof.u_r).max())

    final = steady_extended.records[-1]
    g = derivatives_at(geom, final.z)
    worst_wall = worst_robin = worst_res = 0.0
    for j in range(len(final.z)):
        sl = SliceData(float(final.z[j]), float(final.a[j]), float(final.q[j]), 0.0, g.take(j))
        prof = radial_velocity_solve(sl, scales)
        R, r1 = sl.r, prof.r1
        worst_wall = max(worst_wall, abs(prof(np.array([R]))[0] - sl.dr_dt))
        worst_robin = max(worst_robin, abs(r1 * prof.derivative(np.array([r1]))[0] - prof(np.array([r1]))[0]))
        if prof.solution is not None:
            r = np.linspace(2 * r1, 0.99 * R, 40)
            worst_res = max(worst_res, float(ode_residual(sl, scales, prof, r).max()))
    ok = straight_max < 1e-10 and worst_wall <= 1e-8 and worst_robin <= 1e-8 and worst_res <= 1e-6
    record_criterion(
        7, "radial-velocity BVP", ok,
        f"straight max|u_r| {straight_max:.1e}; {len(final.z)} slices: wall BC {worst_wall:.1e}, "
        f"axis BC {worst_robin:.1e}, ODE residual {worst_res:.1e}",
    )
    assert ok


def test_c08_profile_closure(record_criterion):
    params = PhysicalParams()
    val = coriolis_integral(params.gamma, mean_velocity=22.5, wall_radius=0.18)
    ok = params.gamma == pytest.approx(9.0, rel=1e-15) and abs(val - 1.1) <= 1e-6
    record_criterion(8, "profile closure", ok, f"gamma {params.gamma:.12g}, Coriolis integral {val:.15f}")
    assert ok


def test_c09_model_discrimination(steady_extended, steady_classical, record_criterion):
    ext, cla = steady_extended.records[-1], steady_classical.records[-1]
    geom = make_stenosis_profile(50)
    mask = stenotic_mask(geom, ext.z)
    u_max_rel, _ = relative_difference(ext.u, cla.u, mask)
    peak_ext, peak_cla = float(ext.u.max()), float(cla.u.max())
    ok = steady_classical.run.steady and u_max_rel > 0.05 and peak_ext > peak_cla
    record_criterion(
        9, "model discrimination", ok,
        f"max rel U difference {u_max_rel:.2e} (needs > 5e-2); peak U extended {peak_ext:.4f} vs classical {peak_cla:.4f}",
    )
    assert ok


def test_c10_end_to_end_runtime(steady_extended, record_criterion):
    s = steady_extended.summary
    ok = s["status"] == "ok" and steady_extended.elapsed < 120.0
    record_criterion(
        10, "end-to-end runtime", ok,
        f"{steady_extended.elapsed:.1f} s wall for {s['n_steps']} steps (solver {s['wall_clock_s']:.1f} s)",
    )
    assert ok
