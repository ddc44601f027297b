"""Discontinuous Galerkin discretisation of the (A, Q) system.

Orthonormal Legendre modal basis per element (so the mass matrix is
``h/2 * I``), Gauss-Legendre quadrature with ``k + 2`` points for the volume
terms, local Lax-Friedrichs interface fluxes, characteristic boundary
conditions and the three-stage SSP Runge-Kutta scheme.

The rest state ``A = R0**2, Q = 0`` is kept exactly by subtracting the
discrete residual of the projected rest state from every evaluation
(``SolverConfig.well_balanced``).  The subtraction is itself a difference of
single-valued interface fluxes, so the scheme stays conservative.
"""
from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.optimize import brentq

from . import _kernels
from .errors import BoundarySolveError, InvalidParameterError, SolverError, StateValidityError, StepFailure
from .geometry import GeometryDerivatives, VesselGeometry, derivatives_at
from .model import C0Variant, Correction, PhysicalParams, flux, eigenvalues, source, total_pressure

SQRT_HALF = math.sqrt(0.5)


@dataclass(frozen=True)
class Mesh1D:
    n_elements: int
    length: float
    degree: int

    def __post_init__(self):
        if self.n_elements < 1:
            raise InvalidParameterError("mesh needs at least one element")
        if not self.length > 0:
            raise InvalidParameterError("mesh length must be positive")
        if self.degree < 0:
            raise InvalidParameterError("polynomial degree must be >= 0")

    @property
    def dz(self) -> float:
        return self.length / self.n_elements

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n_elements + 1)

    def points(self, xi) -> np.ndarray:
        """Physical coordinates (N, len(xi)) of reference points in every element."""
        left = self.nodes[:-1, None]
        return left + 0.5 * self.dz * (np.asarray(xi)[None, :] + 1.0)


def basis_values(degree: int, xi):
    """Orthonormal Legendre values and reference derivatives, each (len(xi), k+1)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    vals = np.empty((xi.size, degree + 1))
    ders = np.empty((xi.size, degree + 1))
    for j in range(degree + 1):
        c = np.zeros(j + 1)
        c[j] = math.sqrt((2 * j + 1) / 2.0)
        vals[:, j] = npleg.legval(xi, c)
        ders[:, j] = npleg.legval(xi, npleg.legder(c))
    return vals, ders


@dataclass(frozen=True)
class Basis:
    degree: int
    xi: np.ndarray
    w: np.ndarray
    V: np.ndarray
    dV: np.ndarray
    phiL: np.ndarray
    phiR: np.ndarray


@functools.lru_cache(maxsize=None)
def legendre_basis(degree: int, n_quad: int | None = None) -> Basis:
    n_quad = degree + 2 if n_quad is None else n_quad
    xi, w = npleg.leggauss(n_quad)
    V, dV = basis_values(degree, xi)
    ends, _ = basis_values(degree, [-1.0, 1.0])
    for arr in (xi, w, V, dV, ends):
        arr.setflags(write=False)
    return Basis(degree, xi, w, V, dV, ends[0].copy(), ends[1].copy())


@dataclass
class StateField:
    """Modal coefficients ``coeffs[0]`` (A) and ``coeffs[1]`` (Q), each (N, k+1)."""

    coeffs: np.ndarray
    t: float = 0.0

    @property
    def a(self) -> np.ndarray:
        return self.coeffs[0]

    @property
    def q(self) -> np.ndarray:
        return self.coeffs[1]

    def copy(self) -> "StateField":
        return StateField(self.coeffs.copy(), self.t)


def project_initial(mesh: Mesh1D, a0: Callable, q0: Callable, n_quad: int | None = None) -> StateField:
    """Element-local L2 projection of ``a0(z)``, ``q0(z)`` onto the Legendre basis."""
    n_quad = mesh.degree + 4 if n_quad is None else max(n_quad, mesh.degree + 1)
    xi, w = npleg.leggauss(n_quad)
    V, _ = basis_values(mesh.degree, xi)
    z = mesh.points(xi)
    av = np.broadcast_to(np.asarray(a0(z), dtype=float), z.shape)
    qv = np.broadcast_to(np.asarray(q0(z), dtype=float), z.shape)
    if np.any(~(av > 0)):
        raise InvalidParameterError(f"initial area must be positive (min {np.min(av)})")
    coeffs = np.stack([(av * w) @ V, (qv * w) @ V])
    return StateField(coeffs, 0.0)


def locate(mesh: Mesh1D, z):
    """Element index and reference coordinate of each z; interfaces go to the left element."""
    z = np.asarray(z, dtype=float)
    idx = np.clip(np.ceil(z / mesh.dz).astype(int) - 1, 0, mesh.n_elements - 1)
    xi = 2.0 * (z - idx * mesh.dz) / mesh.dz - 1.0
    return idx, np.clip(xi, -1.0, 1.0)


def evaluate(mesh: Mesh1D, coeffs: np.ndarray, z, derivative: bool = False):
    """Point values (and optionally z-derivatives) of A and Q at positions z."""
    idx, xi = locate(mesh, z)
    V, dV = basis_values(mesh.degree, xi)
    a = np.einsum("pj,pj->p", coeffs[0][idx], V)
    q = np.einsum("pj,pj->p", coeffs[1][idx], V)
    if not derivative:
        return a, q
    jac = 2.0 / mesh.dz
    da = jac * np.einsum("pj,pj->p", coeffs[0][idx], dV)
    dq = jac * np.einsum("pj,pj->p", coeffs[1][idx], dV)
    return a, q, da, dq


def total_mass(mesh: Mesh1D, coeffs: np.ndarray) -> float:
    """Integral of A over the vessel (mode 0 carries the element mean)."""
    return float(mesh.dz * SQRT_HALF * math.fsum(coeffs[0][:, 0]))


def llf_flux(left, right, g: GeometryDerivatives, params: PhysicalParams, correction=Correction.EXTENDED):
    """Local Lax-Friedrichs flux {F} - max|lambda|/2 (U+ - U-) with U- = left, U+ = right."""
    aL, qL = (np.asarray(v, dtype=float) for v in left)
    aR, qR = (np.asarray(v, dtype=float) for v in right)
    fL = flux(aL, qL, g, params, correction)
    fR = flux(aR, qR, g, params, correction)
    lam = np.maximum(
        np.max(np.abs(np.stack(eigenvalues(aL, qL, g, params, correction))), axis=0),
        np.max(np.abs(np.stack(eigenvalues(aR, qR, g, params, correction))), axis=0),
    )
    fa = 0.5 * (fL[0] + fR[0]) - 0.5 * lam * (aR - aL)
    fq = 0.5 * (fL[1] + fR[1]) - 0.5 * lam * (qR - qL)
    return fa, fq


def kernel_coefficients(gq, gn, Dq, Dn, params: PhysicalParams, correction: Correction):
    """Coefficient packs consumed by :mod:`stenoflow._kernels` (layout documented there)."""
    K = params.elastic_k
    gp2nu = (params.gamma + 2.0) * params.nu
    kd = K / Dq**2
    cq = np.zeros((8,) + gq.r0.shape)
    cq[0] = kd
    cq[1] = params.alpha + (gq.alpha_c if correction is Correction.EXTENDED else 0.0)
    if params.c0_variant is C0Variant.CONSTANT:
        cq[2] = kd * gq.dr0_dz
    else:
        cq[2] = -K * gq.dr0_dz / gq.r0**2
        cq[3] = (4.0 / 3.0) * K * gq.dr0_dz / gq.r0**3
    if correction is not Correction.CLASSICAL:
        cq[4] = gp2nu * gq.dlnr0_dz
        cq[5] = gp2nu * gq.d2lnr0_dz2
    if correction is Correction.EXTENDED:
        cq[6] = gq.dalpha_c_dz
    if correction is Correction.APPENDIX_B:
        cq[7] = (4.0 / 35.0) * gq.dr0_dz**2 / gq.r0
    cn = np.stack([K / Dn**2, params.alpha + (gn.alpha_c if correction is Correction.EXTENDED else 0.0 * gn.r0)])
    return np.ascontiguousarray(cq), np.ascontiguousarray(cn)


def cosine_ramp(t: float, ramp_time: float) -> float:
    if ramp_time <= 0 or t >= ramp_time:
        return 1.0
    if t <= 0:
        return 0.0
    return 0.5 * (1.0 - math.cos(math.pi * t / ramp_time))


@dataclass(frozen=True)
class BoundarySpec:
    """Inlet waveform and outlet treatment.

    ``inlet="velocity"`` prescribes the mean velocity U_in(t) (cm/s);
    ``inlet="flow"`` prescribes Q_in(t) (cm^3/s, A = R^2 convention without pi).
    Without an explicit ``waveform`` the inlet value ramps from zero to
    ``inlet_value`` with a cosine ramp of length ``ramp_time``.
    """

    inlet: str = "velocity"
    inlet_value: float = 22.5
    ramp_time: float = 0.05
    waveform: Callable[[float], float] | None = field(default=None, compare=False)
    outlet: str = "non_reflecting"
    p_out: float = 0.0

    def __post_init__(self):
        if self.inlet not in ("velocity", "flow"):
            raise InvalidParameterError(f"inlet must be 'velocity' or 'flow', got {self.inlet!r}")
        if self.outlet not in ("non_reflecting", "pressure"):
            raise InvalidParameterError(f"outlet must be 'non_reflecting' or 'pressure', got {self.outlet!r}")
        if self.ramp_time < 0:
            raise InvalidParameterError("ramp_time must be >= 0")

    def inlet_at(self, t: float) -> float:
        if self.waveform is not None:
            return float(self.waveform(t))
        return self.inlet_value * cosine_ramp(t, self.ramp_time)


@dataclass(frozen=True)
class SolverConfig:
    cfl: float = 0.3
    t_end: float = 1.0
    limiter: bool = False
    tvb_m: float = 0.0
    correction: Correction = Correction.EXTENDED
    output_interval: float | None = None
    well_balanced: bool = True
    backend: str = "numba"
    steady_tol: float = 1e-6
    steady_window: int = 100
    stop_at_steady: bool = False
    track_mass: bool = False
    max_dt_halvings: int = 5

    def __post_init__(self):
        object.__setattr__(self, "correction", Correction.parse(self.correction))
        if not 0 < self.cfl <= 1:
            raise InvalidParameterError(f"cfl must be in (0, 1], got {self.cfl}")
        if self.t_end < 0:
            raise InvalidParameterError(f"t_end must be >= 0, got {self.t_end}")
        if self.output_interval is not None and not self.output_interval > 0:
            raise InvalidParameterError("output_interval must be positive")
        if self.backend not in ("numba", "numpy"):
            raise InvalidParameterError(f"backend must be 'numba' or 'numpy', got {self.backend!r}")


@dataclass
class SolutionRecord:
    """Nodal profiles sampled from the DG polynomials at one instant."""

    t: float
    z: np.ndarray
    a: np.ndarray
    q: np.ndarray
    u: np.ndarray
    p: np.ndarray
    r: np.ndarray
    eta: np.ndarray

    COLUMNS = ("z", "a", "q", "u", "p", "r", "eta")

    def __post_init__(self):
        n = len(self.z)
        if any(len(getattr(self, c)) != n for c in self.COLUMNS):
            raise InvalidParameterError("record arrays must share one length")
        if np.any(~(self.a > 0)):
            raise StateValidityError("record contains non-positive area")


@dataclass
class RunResult:
    snapshots: list
    final: StateField
    n_steps: int
    steady: bool
    steady_time: float | None
    residual: float
    residual_history: np.ndarray
    dt_history: np.ndarray
    mass_log: np.ndarray | None
    wall_time: float


def rk3_step(u: np.ndarray, t: float, dt: float, rhs: Callable, post: Callable | None = None) -> np.ndarray:
    """Three-stage SSP Runge-Kutta step for du/dt = rhs(u, t).

    ``post`` (e.g. a limiter) is applied to every stage value.
    """
    post = post or (lambda v: v)
    u1 = post(u + dt * rhs(u, t))
    u2 = post(0.75 * u + 0.25 * u1 + 0.25 * dt * rhs(u1, t + dt))
    return post(u / 3.0 + 2.0 / 3.0 * u2 + 2.0 / 3.0 * dt * rhs(u2, t + 0.5 * dt))


def _minmod(a, b, c):
    s = np.sign(a)
    same = (s == np.sign(b)) & (s == np.sign(c))
    return np.where(same, s * np.minimum(np.abs(a), np.minimum(np.abs(b), np.abs(c))), 0.0)


class DGSolver:
    """Semi-discrete DG operator plus time integration for one vessel."""

    def __init__(
        self,
        mesh: Mesh1D,
        geometry: VesselGeometry,
        params: PhysicalParams,
        spec: BoundarySpec | None = None,
        config: SolverConfig | None = None,
    ):
        if abs(mesh.length - geometry.length) > 1e-12 * geometry.length:
            raise InvalidParameterError("mesh and geometry lengths differ")
        if params.c0_variant is C0Variant.CONSTANT and params.r0_star is None:
            params = params.with_r0_star(geometry.r_max)
        self.mesh = mesh
        self.geometry = geometry
        self.params = params
        self.spec = spec or BoundarySpec()
        self.config = config or SolverConfig()
        self.correction = self.config.correction
        self.basis = legendre_basis(mesh.degree)

        zq = mesh.points(self.basis.xi)
        self.gq = derivatives_at(geometry, zq)
        self.gn = derivatives_at(geometry, mesh.nodes)
        if np.any(self.gq.r0 <= 0) or np.any(self.gn.r0 <= 0):
            raise InvalidParameterError("reference radius must be positive")
        if params.c0_variant is C0Variant.CONSTANT:
            self._Dq = np.full_like(zq, params.r0_star)
            self._Dn = np.full(mesh.n_elements + 1, params.r0_star)
        else:
            self._Dq = np.ascontiguousarray(self.gq.r0)
            self._Dn = np.ascontiguousarray(self.gn.r0)
        self._cq, self._cn = kernel_coefficients(self.gq, self.gn, self._Dq, self._Dn, params, self.correction)
        self._friction = 2.0 * (params.gamma + 2.0) * params.nu
        self._out = np.empty((2, mesh.n_elements, mesh.degree + 1))
        self._work = None
        self._fstar = np.empty((mesh.n_elements + 1, 2))

        self.equilibrium = self.rest_state()
        self._w2_out = self._outlet_w2(self.equilibrium.coeffs)
        self._eq_rhs = None
        self._eq_fstar = None
        if self.config.well_balanced:
            eq = self.equilibrium.coeffs
            ghosts = ((self._trace(eq, 0), 0.0), (self._trace(eq, -1), 0.0))
            self._eq_rhs, self._eq_fstar = self._raw_rhs(eq, ghosts)
            self._eq_rhs = self._eq_rhs.copy()
            self._eq_fstar = self._eq_fstar.copy()

    # -- state helpers -------------------------------------------------

    def rest_state(self) -> StateField:
        r0 = lambda z: self.geometry.radius(z) ** 2
        return project_initial(self.mesh, r0, lambda z: np.zeros_like(z))

    def _trace(self, coeffs, side):
        """Interior trace of A at z = 0 (side 0) or z = L (side -1)."""
        if side == 0:
            return float(coeffs[0, 0] @ self.basis.phiL)
        return float(coeffs[0, -1] @ self.basis.phiR)

    def _beta(self, node):
        d = self._Dn[node]
        return self.params.elastic_k / (2.0 * d * d)

    def _outlet_w2(self, coeffs):
        a = float(coeffs[0, -1] @ self.basis.phiR)
        q = float(coeffs[1, -1] @ self.basis.phiR)
        return -q / a + 4.0 * math.sqrt(self._beta(-1)) * a**0.25

    def initialize(self, state: StateField) -> None:
        """Freeze the incoming outlet invariant at the value of ``state``."""
        self._w2_out = self._outlet_w2(state.coeffs)

    # -- boundary conditions ------------------------------------------

    def boundary_ghosts(self, coeffs: np.ndarray, t: float):
        """Exterior states ``((a_in, q_in), (a_out, q_out))`` for the current traces."""
        phiL, phiR = self.basis.phiL, self.basis.phiR
        a0 = float(coeffs[0, 0] @ phiL)
        q0 = float(coeffs[1, 0] @ phiL)
        aN = float(coeffs[0, -1] @ phiR)
        qN = float(coeffs[1, -1] @ phiR)
        if not (a0 > 0 and aN > 0):
            raise StepFailure("non-positive boundary trace", t=t, element=0 if a0 <= 0 else self.mesh.n_elements - 1)
        return self._inlet_ghost(a0, q0, t), self._outlet_ghost(aN, qN)

    def _inlet_ghost(self, a, q, t):
        sb = math.sqrt(self._beta(0))
        # left-going invariant w2 = -U + 4 sqrt(beta) A^{1/4} leaves through the inlet
        w2 = -q / a + 4.0 * sb * a**0.25
        value = self.spec.inlet_at(t)
        if self.spec.inlet == "velocity":
            s = w2 + value
            if not s > 0:
                raise BoundarySolveError(
                    f"inlet: no admissible area for U_in={value:.6g} with interior w2={w2:.6g}"
                )
            ag = (s / (4.0 * sb)) ** 4
            return ag, ag * value
        f = lambda ag: -value / ag + 4.0 * sb * ag**0.25 - w2
        lo, hi = 1e-6 * a, 10.0 * a
        for _ in range(60):
            if f(lo) < 0:
                break
            lo *= 0.1
        for _ in range(60):
            if f(hi) > 0:
                break
            hi *= 4.0
        try:
            ag, info = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, full_output=True)
        except ValueError as exc:
            raise BoundarySolveError(
                f"inlet: bracket failed for Q_in={value:.6g}, w2={w2:.6g}, bracket=({lo:.3g}, {hi:.3g})"
            ) from exc
        if not info.converged:
            raise BoundarySolveError(f"inlet: root finder did not converge ({info.flag}) after {info.iterations} its")
        return ag, value

    def _outlet_ghost(self, a, q):
        sb = math.sqrt(self._beta(-1))
        # right-going invariant w1 leaves through the outlet
        w1 = -q / a - 4.0 * sb * a**0.25
        if self.spec.outlet == "non_reflecting":
            w2 = self._w2_out
            if not w2 > w1:
                raise BoundarySolveError(f"outlet: invalid invariants w1={w1:.6g} >= w2={w2:.6g}")
            ag = ((w2 - w1) / (8.0 * sb)) ** 4
            return ag, -0.5 * (w1 + w2) * ag
        p = self.params
        r0 = float(self.gn.r0[-1])
        c0 = p.h * p.E / (self._Dn[-1] ** 2 * (1.0 - p.sigma**2))
        rg = r0 + (self.spec.p_out - p.p_ext) / c0
        if not rg > 0:
            raise BoundarySolveError(f"outlet pressure {self.spec.p_out} collapses the vessel")
        ag = rg * rg
        return ag, ag * (-w1 - 4.0 * sb * ag**0.25)

    # -- spatial operator ---------------------------------------------

    def _raw_rhs(self, coeffs, ghosts):
        (ga, gq), (ha, hq) = ghosts
        if self.config.backend == "numpy":
            return self._raw_rhs_numpy(coeffs, ghosts)
        b = self.basis
        status, where = _kernels.rhs_kernel(
            coeffs[0], coeffs[1], b.V, b.dV, b.w, b.phiL, b.phiR, self.mesh.dz,
            self._cq, self._cn, self._friction, ga, gq, ha, hq, self._out, self._fstar,
        )
        if status != _kernels.OK:
            reason = {
                _kernels.BAD_AREA: "non-positive area at a quadrature point",
                _kernels.BAD_TRACE: "non-positive area at an element trace",
                _kernels.NOT_HYPERBOLIC: "loss of hyperbolicity at an interface",
            }[status]
            raise StepFailure(f"{reason} in element {where}", element=int(where))
        return self._out, self._fstar

    def _raw_rhs_numpy(self, coeffs, ghosts):
        """Reference assembly built directly on the :mod:`stenoflow.model` functions."""
        b, mesh = self.basis, self.mesh
        jac = 2.0 / mesh.dz
        cA, cQ = coeffs
        aq, qq = cA @ b.V.T, cQ @ b.V.T
        bad = np.where(~(aq > 0).all(axis=1))[0]
        if bad.size:
            raise StepFailure(f"non-positive area at a quadrature point in element {bad[0]}", element=int(bad[0]))
        daq, dqq = jac * (cA @ b.dV.T), jac * (cQ @ b.dV.T)
        fa, fq = flux(aq, qq, self.gq, self.params, self.correction)
        _, sq = source(aq, qq, daq, dqq, self.gq, self.params, self.correction)
        out = np.empty_like(coeffs)
        out[0] = jac * (fa * b.w) @ b.dV
        out[1] = jac * (fq * b.w) @ b.dV + (sq * b.w) @ b.V
        (ga, gq), (ha, hq) = ghosts
        left = (np.concatenate([[ga], cA @ b.phiR]), np.concatenate([[gq], cQ @ b.phiR]))
        right = (np.concatenate([cA @ b.phiL, [ha]]), np.concatenate([cQ @ b.phiL, [hq]]))
        if not ((left[0] > 0).all() and (right[0] > 0).all()):
            raise StepFailure("non-positive area at an element trace")
        fsa, fsq = llf_flux(left, right, self.gn, self.params, self.correction)
        fstar = np.stack([fsa, fsq], axis=1)
        out[0] -= jac * (fstar[1:, 0, None] * b.phiR - fstar[:-1, 0, None] * b.phiL)
        out[1] -= jac * (fstar[1:, 1, None] * b.phiR - fstar[:-1, 1, None] * b.phiL)
        return out, fstar

    def _rhs(self, coeffs, t):
        ghosts = self.boundary_ghosts(coeffs, t)
        out, fstar = self._raw_rhs(coeffs, ghosts)
        if self._eq_rhs is not None:
            return out - self._eq_rhs, fstar - self._eq_fstar
        return out.copy(), fstar.copy()

    def semidiscrete_rhs(self, coeffs, t: float = 0.0, *, balanced: bool = True) -> np.ndarray:
        """dU/dt coefficients.  ``balanced=False`` skips the rest-state subtraction."""
        if isinstance(coeffs, StateField):
            coeffs = coeffs.coeffs
        if balanced:
            return self._rhs(coeffs, t)[0]
        out, _ = self._raw_rhs(coeffs, self.boundary_ghosts(coeffs, t))
        return out.copy()

    def interface_fluxes(self, coeffs, t: float = 0.0) -> np.ndarray:
        """Effective interface fluxes (N+1, 2) used by the update."""
        return self._rhs(coeffs, t)[1]

    # -- time stepping --------------------------------------------------

    def max_wave_speed(self, coeffs) -> float:
        b, p = self.basis, self.params
        if self.config.backend == "numpy":
            aq, qq = coeffs[0] @ b.V.T, coeffs[1] @ b.V.T
            lq = np.abs(np.stack(eigenvalues(aq, qq, self.gq, p, self.correction))).max()
            at = np.stack([coeffs[0] @ b.phiL, coeffs[0] @ b.phiR])
            qt = np.stack([coeffs[1] @ b.phiL, coeffs[1] @ b.phiR])
            gt = GeometryDerivatives(*(np.stack([v[:-1], v[1:]]) for v in self.gn.__dict__.values()))
            lt = np.abs(np.stack(eigenvalues(at, qt, gt, p, self.correction))).max()
            return float(max(lq, lt))
        s = _kernels.max_speed_kernel(coeffs[0], coeffs[1], b.V, b.phiL, b.phiR, self._cq, self._cn)
        if s < 0:
            raise StepFailure("invalid state while computing the wave speed")
        return float(s)

    def cfl_dt(self, coeffs) -> float:
        if isinstance(coeffs, StateField):
            coeffs = coeffs.coeffs
        return self._dt_from_speed(self.max_wave_speed(coeffs))

    def _dt_from_speed(self, speed):
        return self.config.cfl * self.mesh.dz / ((2 * self.mesh.degree + 1) * speed)

    def _check_positive(self, coeffs, t):
        b = self.basis
        amin, where = _kernels.min_area_kernel(coeffs[0], b.V, b.phiL, b.phiR)
        if not amin > 0:
            raise StepFailure(f"non-positive area {amin:.3e} in element {where}", t=t, element=int(where))

    def step(self, coeffs: np.ndarray, t: float, dt: float):
        """One SSP-RK3 step; returns ``(new_coeffs, boundary_mass_flux_times_dt)``."""
        return self._step(coeffs, t, dt)[:2]

    def _fused_ok(self) -> bool:
        cfg = self.config
        return cfg.backend == "numba" and not cfg.limiter and self.spec.inlet == "velocity"

    def _step(self, coeffs, t, dt, fused=None):
        if not dt > 0:
            raise InvalidParameterError("dt must be positive")
        if fused is None:
            fused = self._fused_ok()
        if fused:
            return self._step_fused(coeffs, t, dt)
        post = self.limit if self.config.limiter else None
        fluxes = []

        def rhs(u, tt):
            out, fs = self._rhs(u, tt)
            fluxes.append(fs[0, 0] - fs[-1, 0])
            return out

        try:
            new = rk3_step(coeffs, t, dt, rhs, post)
        except StepFailure as exc:
            exc.t = t
            raise
        self._check_positive(new, t + dt)
        net = dt * (fluxes[0] / 6.0 + fluxes[1] / 6.0 + 2.0 * fluxes[2] / 3.0)
        resid = 0.0
        for c in range(2):
            val = np.linalg.norm(new[c] - coeffs[c]) / dt
            den = np.linalg.norm(coeffs[c])
            resid = max(resid, val / den if den > 0 else val)
        return new, net, resid, None

    def _step_fused(self, coeffs, t, dt):
        if self._work is None:
            self._work = (np.empty_like(coeffs), np.empty_like(coeffs), np.empty(4))
            p, b = self.params, self.basis
            if self.spec.outlet == "pressure":
                c0 = p.h * p.E / (self._Dn[-1] ** 2 * (1.0 - p.sigma**2))
                rg = float(self.gn.r0[-1]) + (self.spec.p_out - p.p_ext) / c0
                if not rg > 0:
                    raise BoundarySolveError(f"outlet pressure {self.spec.p_out} collapses the vessel")
                a_fixed = rg * rg
            else:
                a_fixed = 0.0
            balanced = self._eq_rhs is not None
            self._fused_args = (
                b.V, b.dV, b.w, b.phiL, b.phiR, self.mesh.dz, self._cq, self._cn, self._friction,
                math.sqrt(self._beta(0)), math.sqrt(self._beta(-1)),
                _kernels.OUTLET_PRESSURE if self.spec.outlet == "pressure" else _kernels.OUTLET_NON_REFLECTING,
            ), a_fixed, (
                self._eq_rhs if balanced else self._out, self._eq_fstar if balanced else self._fstar, balanced,
            )
        u1, u2, info = self._work
        new = np.empty_like(coeffs)
        inlet = self.spec.inlet_at
        u_in3 = np.array([inlet(t), inlet(t + dt), inlet(t + 0.5 * dt)])
        head, a_fixed, tail = self._fused_args
        status, where = _kernels.ssp_rk3_kernel(
            coeffs, dt, u_in3, *head, self._w2_out, a_fixed, *tail, u1, u2, new, self._out, self._fstar, info
        )
        if status == _kernels.BAD_BOUNDARY:
            raise BoundarySolveError(f"t={t:.6g}: no admissible boundary state from the interior invariants")
        if status != _kernels.OK:
            reason = {
                _kernels.BAD_AREA: "non-positive area",
                _kernels.BAD_TRACE: "non-positive area at an element trace",
                _kernels.NOT_HYPERBOLIC: "loss of hyperbolicity at an interface",
            }[status]
            raise StepFailure(f"{reason} in element {where}", t=t, element=int(where))
        if not info[3] > 0:
            raise StepFailure("new state is not hyperbolic", t=t)
        return new, float(info[0]), float(info[1]), float(info[3])

    def limit(self, coeffs: np.ndarray) -> np.ndarray:
        """TVB minmod limiter on characteristic variables (Cockburn-Shu)."""
        k = self.mesh.degree
        if k == 0:
            return coeffs
        b, p, h = self.basis, self.params, self.mesh.dz
        mean = coeffs[:, :, 0] * SQRT_HALF  # (2, N)
        right = np.einsum("cej,j->ce", coeffs, b.phiR) - mean
        left = mean - np.einsum("cej,j->ce", coeffs, b.phiL)
        padded = np.concatenate([mean[:, :1], mean, mean[:, -1:]], axis=1)
        dplus = padded[:, 2:] - mean
        dminus = mean - padded[:, :-2]
        # eigenvectors of the flux Jacobian at the element means
        gm = derivatives_at(self.geometry, self.mesh.points(np.array([0.0]))[:, 0])
        lam1, lam2 = eigenvalues(mean[0], mean[1], gm, p, self.correction)
        inv_det = 1.0 / (lam2 - lam1)

        def to_char(v):
            return np.stack([(lam2 * v[0] - v[1]) * inv_det, (v[1] - lam1 * v[0]) * inv_det])

        def from_char(w):
            return np.stack([w[0] + w[1], lam1 * w[0] + lam2 * w[1]])

        wr, wl = to_char(right), to_char(left)
        wp, wm = to_char(dplus), to_char(dminus)
        thresh = self.config.tvb_m * h * h

        def tvb(x):
            return np.where(np.abs(x) <= thresh, x, _minmod(x, wp, wm))

        wr_lim, wl_lim = tvb(wr), tvb(wl)
        troubled = ((wr_lim != wr) | (wl_lim != wl)).any(axis=0)
        if not troubled.any():
            return coeffs
        slope_phys = coeffs[:, :, 1] * b.phiR[1]  # linear-mode endpoint deviation
        ws = _minmod(to_char(slope_phys), wp, wm)
        new_slope = from_char(ws) / b.phiR[1]
        out = coeffs.copy()
        out[:, troubled, 1] = new_slope[:, troubled]
        out[:, troubled, 2:] = 0.0
        return out

    def run(self, initial: StateField | None = None) -> RunResult:
        """Integrate from ``initial`` (default: rest state) to ``config.t_end``."""
        cfg = self.config
        state = (initial or self.equilibrium).copy()
        self.initialize(state)
        u = state.coeffs
        t = state.t
        t_end = cfg.t_end
        eps = 1e-12 * max(1.0, t_end)
        interval = cfg.output_interval
        next_out = t + interval if interval else math.inf
        snapshots = [StateField(u.copy(), t)]
        residuals, dts, mass_log = [], [], []
        steady, steady_time, streak, resid = False, None, 0, math.inf
        mass = total_mass(self.mesh, u) if cfg.track_mass else 0.0
        start = time.perf_counter()
        n_steps = 0
        speed = None
        while t < t_end - eps:
            try:
                dt = self._dt_from_speed(speed) if speed else self.cfl_dt(u)
            except StepFailure as exc:
                raise SolverError(f"t={t:.6g}: {exc}", t=t, element=exc.element, state=StateField(u.copy(), t)) from exc
            dt = min(dt, t_end - t, next_out - t)
            for attempt in range(cfg.max_dt_halvings + 1):
                try:
                    new, net, resid, speed = self._step(u, t, dt)
                    break
                except (StepFailure, BoundarySolveError) as exc:
                    if attempt == cfg.max_dt_halvings:
                        raise SolverError(
                            f"step failed at t={t:.6g} after {attempt} dt halvings: {exc}",
                            t=t,
                            element=getattr(exc, "element", None),
                            state=StateField(u.copy(), t),
                        ) from exc
                    dt *= 0.5
            if cfg.track_mass:
                new_mass = total_mass(self.mesh, new)
                mass_log.append((t, dt, new_mass - mass, net, new_mass))
                mass = new_mass
            u = new
            t = t + dt
            n_steps += 1
            residuals.append(resid)
            dts.append(dt)
            streak = streak + 1 if resid < cfg.steady_tol else 0
            if streak >= cfg.steady_window and not steady:
                steady, steady_time = True, t
            if t >= next_out - eps:
                snapshots.append(StateField(u.copy(), t))
                next_out += interval
            if steady and cfg.stop_at_steady:
                break
        final = StateField(u.copy(), t)
        if snapshots[-1].t != t or n_steps == 0 and len(snapshots) == 0:
            snapshots.append(final.copy())
        return RunResult(
            snapshots=snapshots,
            final=final,
            n_steps=n_steps,
            steady=steady,
            steady_time=steady_time,
            residual=resid if n_steps else 0.0,
            residual_history=np.asarray(residuals),
            dt_history=np.asarray(dts),
            mass_log=np.asarray(mass_log) if cfg.track_mass else None,
            wall_time=time.perf_counter() - start,
        )

    # -- output ---------------------------------------------------------

    def record(self, state: StateField, n_samples: int = 512, z=None) -> SolutionRecord:
        z = np.linspace(0.0, self.mesh.length, n_samples) if z is None else np.asarray(z, dtype=float)
        a, q = evaluate(self.mesh, state.coeffs, z)
        g = derivatives_at(self.geometry, z)
        p = total_pressure(a, q, g, self.params, self.correction)
        r = np.sqrt(a)
        return SolutionRecord(t=state.t, z=z, a=a, q=q, u=q / a, p=p, r=r, eta=r - g.r0)

    def with_config(self, **changes) -> "DGSolver":
        return DGSolver(self.mesh, self.geometry, self.params, self.spec, replace(self.config, **changes))
