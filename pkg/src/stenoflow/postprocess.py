"""Pointwise fields reconstructed from 1D (A, Q) solutions.

The axial velocity follows the gamma profile; the radial velocity solves a
nonlinear second-order ODE in r per axial slice.  Near the axis the solution
is taken as ``u_r = c r`` on ``[0, r1]`` with ``r1 = R / (4 n_points)``; the
collocation problem lives on ``[r1, R]`` with the Robin condition
``r1 u'(r1) = u(r1)`` that makes the two pieces join with matching slope.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_bvp

from .errors import BVPSolveError, DomainError, InvalidParameterError, StateValidityError
from .geometry import GeometryDerivatives, VesselGeometry, derivatives_at
from .model import Correction, PhysicalParams, total_pressure


def axial_velocity_profile(mean_velocity, r, wall_radius, gamma):
    """u_z = ((gamma + 2) / gamma) U (1 - (r / R)**gamma)."""
    r = np.asarray(r, dtype=float)
    wall_radius = np.asarray(wall_radius, dtype=float)
    if np.any(wall_radius <= 0):
        raise DomainError("wall radius must be positive")
    if np.any(r < 0) or np.any(r > wall_radius * (1.0 + 1e-14)):
        raise DomainError("profile evaluated outside [0, R]")
    return (gamma + 2.0) / gamma * mean_velocity * (1.0 - np.minimum(r / wall_radius, 1.0) ** gamma)


def _gauss(n=64):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def profile_mean(mean_velocity, wall_radius, gamma, n=64):
    """Cross-sectional mean (2 / R^2) int_0^R r u_z dr by Gauss quadrature."""
    s, w = _gauss(n)
    r = s * wall_radius
    u = axial_velocity_profile(mean_velocity, r, wall_radius, gamma)
    return float(2.0 * np.sum(w * s * u))


def coriolis_integral(gamma, mean_velocity=1.0, wall_radius=1.0, n=64):
    """(2 / (R^2 U^2)) int_0^R r u_z^2 dr for the gamma profile."""
    s, w = _gauss(n)
    u = axial_velocity_profile(mean_velocity, s * wall_radius, wall_radius, gamma)
    return float(2.0 * np.sum(w * s * u * u) / mean_velocity**2)


@dataclass(frozen=True)
class CharacteristicScales:
    """Velocity and length scales that enter the radial-velocity ODE."""

    u_z_scale: float
    length_scale: float
    r0: float
    rho_f: float
    mu_f: float

    def __post_init__(self):
        for name in ("u_z_scale", "length_scale", "r0", "rho_f", "mu_f"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def u_r_scale(self) -> float:
        return self.r0 * self.u_z_scale / self.length_scale

    @property
    def reynolds(self) -> float:
        return self.rho_f * self.u_z_scale * self.r0**2 / (self.mu_f * self.length_scale)

    def at_radius(self, r0: float) -> "CharacteristicScales":
        return CharacteristicScales(self.u_z_scale, self.length_scale, r0, self.rho_f, self.mu_f)


@dataclass(frozen=True)
class SliceData:
    z: float
    a: float
    q: float
    da_dt: float
    geometry: GeometryDerivatives

    def __post_init__(self):
        if not self.a > 0:
            raise StateValidityError(f"slice at z={self.z}: area must be positive")

    @property
    def r(self) -> float:
        return math.sqrt(self.a)

    @property
    def dr_dt(self) -> float:
        return self.da_dt / (2.0 * math.sqrt(self.a))

    @property
    def r0(self) -> float:
        return float(self.geometry.r0)

    @property
    def dr0_dz(self) -> float:
        return float(self.geometry.dr0_dz)


@dataclass
class RadialProfile:
    r: np.ndarray
    u_r: np.ndarray
    r1: float
    slope: float
    residual_history: list = field(default_factory=list)
    solution: object = field(default=None, repr=False)
    # the collocation solution is v(s) with u_r = velocity_scale * v(r / wall_radius)
    velocity_scale: float = 1.0
    wall_radius: float = 1.0

    def __call__(self, r):
        """Evaluate u_r at arbitrary radii in [0, R]."""
        r = np.asarray(r, dtype=float)
        inner = r <= self.r1
        out = np.empty_like(r)
        out[inner] = self.slope * r[inner]
        if self.solution is None:
            out[~inner] = self.slope * r[~inner]
        else:
            out[~inner] = self.velocity_scale * self.solution.sol(r[~inner] / self.wall_radius)[0]
        return out

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        if self.solution is None:
            return np.full_like(r, self.slope)
        s = np.maximum(r, self.r1) / self.wall_radius
        outer = self.velocity_scale / self.wall_radius * self.solution.sol(s)[1]
        return np.where(r <= self.r1, self.slope, outer)


class RadialODE:
    """Coefficients of the radial-velocity ODE for one slice, evaluated as written.

    r u'' + (R0 - u r Re/U_r) u'
      + (4 U_z r / R - 2 u r Re U_z / (R0 U_r) (1 - r^2/R^2)) dR0/dz + R0 u / r = 0
    """

    def __init__(self, sl: SliceData, scales: CharacteristicScales):
        self.R = sl.r
        self.R0 = sl.r0
        self.dR0 = sl.dr0_dz
        self.uz = scales.u_z_scale
        self.re_over_ur = scales.reynolds / scales.u_r_scale

    def terms(self, r, u, du, d2u):
        """The four additive terms of the left-hand side, stacked."""
        R, R0 = self.R, self.R0
        t1 = r * d2u
        t2 = (R0 - u * r * self.re_over_ur) * du
        t3 = (4.0 * self.uz * r / R - 2.0 * u * r * self.re_over_ur * self.uz / R0 * (1.0 - r * r / (R * R))) * self.dR0
        t4 = R0 * u / r
        return np.stack([t1, t2, t3, t4])



class _ScaledRadialODE:
    """The same ODE in s = r / R and v = u / U_s, as a first-order system.

    Scaling keeps the collocation residual control relative for slices whose
    radial velocity is tiny (e.g. near the throat where dR0/dz vanishes).
    """

    def __init__(self, ode: RadialODE, u_s: float):
        self.ode = ode
        self.u_s = u_s
        self.forcing = 1.0

    def _parts(self, s, v, dv):
        o = self.ode
        R, R0, k, us = o.R, o.R0, o.re_over_ur, self.u_s
        dR0 = self.forcing * o.dR0
        c1 = R0 - us * R * k * s * v
        c3 = (4.0 * o.uz * s - 2.0 * us * R * k * o.uz * s * v * (1.0 - s * s) / R0) * dR0 * R / us
        return c1, c3, R0, R, k, us, dR0

    def rhs(self, s, y):
        v, dv = y
        c1, c3, R0, *_ = self._parts(s, v, dv)
        return np.vstack([dv, -(c1 * dv + c3 + R0 * v / s) / s])

    def jac(self, s, y):
        v, dv = y
        c1, _, R0, R, k, us, dR0 = self._parts(s, v, dv)
        o = self.ode
        d_dv = -us * R * k * s * dv - 2.0 * R * R * k * o.uz * s * (1.0 - s * s) * dR0 / R0 + R0 / s
        J = np.zeros((2, 2, s.size))
        J[0, 1] = 1.0
        J[1, 0] = -d_dv / s
        J[1, 1] = -c1 / s
        return J


def _graded_mesh(r1, R, n):
    # geometric clustering toward the axis end, where the solution varies fastest
    s = np.linspace(0.0, 1.0, n)
    return r1 * (R / r1) ** s


def radial_velocity_solve(
    sl: SliceData, scales: CharacteristicScales, n_points: int = 64, tol: float = 1e-10, r1: float | None = None
) -> RadialProfile:
    """Solve for u_r(r) on [0, R]; returns samples at ``n_points`` radii plus an evaluator.

    ``r1`` overrides the default matching radius R / (4 n_points).  The
    indicial exponents of the ODE at r = 0 are complex for the radii of
    interest, so the solution carries a weak log-periodic dependence on r1.
    """
    if n_points < 16:
        raise InvalidParameterError("n_points must be >= 16")
    R = sl.r
    r_out = np.linspace(0.0, R, n_points)
    r1 = R / (4.0 * n_points) if r1 is None else float(r1)
    if not 0 < r1 < R:
        raise InvalidParameterError("matching radius must lie in (0, R)")
    dRdt = sl.dr_dt
    ode = RadialODE(sl, scales.at_radius(sl.r0))
    u_s = max(abs(dRdt), 4.0 * ode.uz * abs(ode.dR0) * R)
    # no forcing, or forcing so small it is subnormal: u_r is zero to working precision
    if u_s < np.finfo(float).tiny:
        return RadialProfile(r=r_out, u_r=np.zeros(n_points), r1=r1, slope=0.0)
    scaled = _ScaledRadialODE(ode, u_s)
    s1 = r1 / R
    v_wall = dRdt / u_s

    def bc(ya, yb):
        return np.array([s1 * ya[1] - ya[0], yb[0] - v_wall])

    mesh = _graded_mesh(s1, 1.0, max(n_points, 32))
    # initial guess: linear interpolation of the boundary values
    guess = np.vstack([v_wall * mesh, np.full_like(mesh, v_wall)])
    history = []
    sol = None
    res = None
    # continuation in the geometric forcing if the direct solve fails
    for ramp in ([1.0], [0.25, 0.5, 0.75, 1.0], [0.05 * i for i in range(1, 21)]):
        x, y0 = mesh, guess
        ok = True
        for lam in ramp:
            scaled.forcing = lam
            res = solve_bvp(scaled.rhs, bc, x, y0, fun_jac=scaled.jac, tol=tol, bc_tol=1e-13, max_nodes=200000)
            history.append(float(np.max(res.rms_residuals)) if res.rms_residuals is not None else math.inf)
            if res.status != 0:
                ok = False
                break
            x, y0 = res.x, res.y
        if ok:
            sol = res
            break
    if sol is None:
        raise BVPSolveError(f"radial BVP at z={sl.z:.6g} did not converge: {res.message}", residual_history=history)
    u1 = u_s * float(sol.sol(s1)[0])
    prof = RadialProfile(
        r=r_out, u_r=np.empty(n_points), r1=r1, slope=u1 / r1, residual_history=history,
        solution=sol, velocity_scale=u_s, wall_radius=R,
    )
    prof.u_r = prof(r_out)
    prof.u_r[0] = 0.0
    return prof


def ode_residual(sl: SliceData, scales: CharacteristicScales, profile: RadialProfile, r, step=None):
    """Plug a solution back into the ODE with fourth-order central differences.

    Returns the residual divided by the largest term magnitude at each point.
    The default step is proportional to r so the truncation error stays
    uniform toward the axis; the five-point stencil keeps it small near the
    wall, where the profile bends sharply at high Reynolds number.
    """
    r = np.asarray(r, dtype=float)
    ode = RadialODE(sl, scales.at_radius(sl.r0))
    h = step if step is not None else 1e-3 * r
    u2p, up, u0, um, u2m = (profile(r + m * h) for m in (2, 1, 0, -1, -2))
    du = (-u2p + 8.0 * up - 8.0 * um + u2m) / (12.0 * h)
    d2u = (-u2p + 16.0 * up - 30.0 * u0 + 16.0 * um - u2m) / (12.0 * h * h)
    terms = ode.terms(r, u0, du, d2u)
    scale = np.max(np.abs(terms), axis=0)
    return np.abs(terms.sum(axis=0)) / np.where(scale > 0, scale, 1.0)


@dataclass
class Field2D:
    z: np.ndarray
    r_norm: np.ndarray
    r: np.ndarray
    u_r: np.ndarray
    u_z: np.ndarray
    p: np.ndarray
    eta: np.ndarray
    scales: dict

    def write(self, path) -> None:
        """CSV ``z,r,u_r,u_z,p`` plus a JSON sidecar with scales and grid."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["z", "r", "u_r", "u_z", "p"])
            for j, zj in enumerate(self.z):
                for i in range(len(self.r_norm)):
                    w.writerow([repr(float(v)) for v in (zj, self.r[i, j], self.u_r[i, j], self.u_z[i, j], self.p[i, j])])
        meta = {
            "n_r": int(len(self.r_norm)),
            "n_z": int(len(self.z)),
            "columns": ["z", "r", "u_r", "u_z", "p"],
            "scales": self.scales,
        }
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2))


def reconstruct_2d_field(
    records,
    geometry: VesselGeometry,
    params: PhysicalParams,
    grid=(33, 65),
    *,
    steady: bool = False,
    u_z_scale: float = 22.5,
    correction=Correction.EXTENDED,
    n_points: int = 64,
) -> Field2D:
    """u_r, u_z and p on a (r/R) x z tensor grid taken from the last record.

    Grid z-points are a subset of the record's sample points so wall
    displacement matches the record exactly.  dA/dt is the backward difference
    over the last two records unless ``steady`` is set.
    """
    records = list(records)
    if not records:
        raise InvalidParameterError("need at least one record")
    if params.r0_star is None:
        params = params.with_r0_star(geometry.r_max)
    last = records[-1]
    if steady:
        da_dt = np.zeros_like(last.a)
    else:
        if len(records) < 2:
            raise InvalidParameterError("unsteady reconstruction needs two records")
        prev = records[-2]
        if not np.array_equal(prev.z, last.z) or not last.t > prev.t:
            raise InvalidParameterError("records must share z and increase in time")
        da_dt = (last.a - prev.a) / (last.t - prev.t)
    n_r, n_z = grid
    if n_r < 2 or n_z < 1:
        raise InvalidParameterError("grid needs n_r >= 2 and n_z >= 1")
    idx = np.unique(np.round(np.linspace(0, len(last.z) - 1, n_z)).astype(int))
    z = last.z[idx]
    g = derivatives_at(geometry, z)
    r_norm = np.linspace(0.0, 1.0, n_r)
    wall = np.sqrt(last.a[idx])
    r = r_norm[:, None] * wall[None, :]
    u_mean = last.q[idx] / last.a[idx]
    u_z = axial_velocity_profile(u_mean[None, :], r, wall[None, :], params.gamma)
    p = np.broadcast_to(total_pressure(last.a[idx], last.q[idx], g, params, correction), r.shape).copy()
    u_r = np.empty_like(r)
    base = CharacteristicScales(u_z_scale, geometry.length, float(geometry.r_max), params.rho_f, params.mu_f)
    for j, zj in enumerate(z):
        sl = SliceData(float(zj), float(last.a[idx[j]]), float(last.q[idx[j]]), float(da_dt[idx[j]]), g.take(j))
        try:
            prof = radial_velocity_solve(sl, base, n_points=n_points)
        except BVPSolveError as exc:
            raise BVPSolveError(f"z={zj:.6g}: {exc}", exc.residual_history) from exc
        u_r[:, j] = prof(r[:, j])
        u_r[0, j] = 0.0
    scales = asdict(base)
    scales.update(reynolds_at_rmax=base.reynolds, u_r_scale_at_rmax=base.u_r_scale, t=float(last.t), steady=bool(steady))
    return Field2D(z=z, r_norm=r_norm, r=r, u_r=u_r, u_z=u_z, p=p, eta=wall - g.r0, scales=scales)
