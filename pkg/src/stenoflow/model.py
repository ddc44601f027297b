"""Pointwise physics of the classical and extended (A, Q) systems.

Conventions: ``A = R**2`` (no factor pi, so the physical volumetric flow is
``pi * Q``), CGS units throughout.  Every function accepts scalars or numpy
arrays for ``a`` and ``q``; geometry enters through a
:class:`~stenoflow.geometry.GeometryDerivatives` evaluated at the same points.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import HyperbolicityError, InvalidInvariantsError, InvalidParameterError, StateValidityError
from .geometry import GeometryDerivatives


class Correction(str, enum.Enum):
    CLASSICAL = "classical"
    EXTENDED = "extended"
    APPENDIX_B = "appendix_b"

    @classmethod
    def parse(cls, value) -> "Correction":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise InvalidParameterError(
                f"unknown correction {value!r}; expected classical, extended or appendix-b"
            ) from None


class C0Variant(str, enum.Enum):
    VARIABLE = "variable"
    CONSTANT = "constant"


@dataclass(frozen=True)
class PhysicalParams:
    """Fluid, wall and velocity-profile parameters (defaults are the reference test values).

    ``mu_f`` is a dynamic viscosity in g/(cm s).  ``r0_star`` is the fixed
    radius used inside the wall stiffness when ``c0_variant`` is constant;
    ``None`` means "use the vessel's R_max" and must be resolved with
    :meth:`with_r0_star` before evaluating the physics.
    """

    rho_f: float = 1.055
    mu_f: float = 0.04
    h: float = 0.06
    E: float = 5.02e6
    sigma: float = 0.5
    p_ext: float = 0.0
    alpha: float = 1.1
    c0_variant: C0Variant = C0Variant.CONSTANT
    r0_star: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "c0_variant", C0Variant(self.c0_variant))
        for name in ("rho_f", "mu_f", "h", "E"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0.0 <= self.sigma < 1.0:
            raise InvalidParameterError(f"sigma must satisfy 0 <= sigma < 1, got {self.sigma}")
        if not 1.0 < self.alpha <= 2.0:
            raise InvalidParameterError(f"alpha must satisfy 1 < alpha <= 2, got {self.alpha}")
        if self.r0_star is not None and not self.r0_star > 0:
            raise InvalidParameterError(f"r0_star must be > 0, got {self.r0_star}")

    @property
    def nu(self) -> float:
        return self.mu_f / self.rho_f

    @property
    def gamma(self) -> float:
        return (2.0 - self.alpha) / (self.alpha - 1.0)

    @property
    def elastic_k(self) -> float:
        """hE / (rho_f (1 - sigma^2)), the common wall factor of flux and source."""
        return self.h * self.E / (self.rho_f * (1.0 - self.sigma**2))

    def with_r0_star(self, r0_star: float) -> "PhysicalParams":
        from dataclasses import replace

        return replace(self, r0_star=float(r0_star))


def stiffness_radius(g: GeometryDerivatives, params: PhysicalParams):
    """Radius used inside C0: local R0(z), or the fixed R0* in the constant variant."""
    if params.c0_variant is C0Variant.VARIABLE:
        return g.r0
    if params.r0_star is None:
        raise InvalidParameterError("constant C0 variant needs r0_star (use PhysicalParams.with_r0_star)")
    return np.full_like(np.asarray(g.r0, dtype=float), params.r0_star)


def _check_area(a):
    a = np.asarray(a, dtype=float)
    if np.any(~(a > 0)):
        raise StateValidityError(f"cross-section A must be > 0 (min {np.min(a)})")
    return a


def _coriolis(g: GeometryDerivatives, params: PhysicalParams, correction: Correction):
    if Correction.parse(correction) is Correction.EXTENDED:
        return params.alpha + g.alpha_c
    return params.alpha


def pressure_p1(a, g: GeometryDerivatives, params: PhysicalParams):
    """Membrane pressure p_ext + C0 (sqrt(A) - R0)."""
    a = _check_area(a)
    d = stiffness_radius(g, params)
    c0 = params.h * params.E / (d * d * (1.0 - params.sigma**2))
    return params.p_ext + c0 * (np.sqrt(a) - g.r0)


def pressure_p2(a, q, g: GeometryDerivatives, params: PhysicalParams, correction=Correction.EXTENDED):
    """Viscous geometric pressure (gamma + 2) mu_f (Q/A) dlnR0/dz."""
    a = _check_area(a)
    if Correction.parse(correction) is Correction.CLASSICAL:
        return np.zeros(np.broadcast(a, q).shape)
    return (params.gamma + 2.0) * params.rho_f * params.nu * (q / a) * g.dlnr0_dz


def total_pressure(a, q, g: GeometryDerivatives, params: PhysicalParams, correction=Correction.EXTENDED):
    return pressure_p1(a, g, params) + pressure_p2(a, q, g, params, correction)


def flux(a, q, g: GeometryDerivatives, params: PhysicalParams, correction=Correction.EXTENDED):
    """Physical flux (Q, (alpha + alpha_c) Q^2/A + K A^{3/2} / (3 D^2))."""
    a = _check_area(a)
    d = stiffness_radius(g, params)
    coriolis = _coriolis(g, params, correction)
    flux_a = np.asarray(q, dtype=float) * np.ones_like(a)
    flux_q = coriolis * q * q / a + params.elastic_k * a * np.sqrt(a) / (3.0 * d * d)
    return flux_a, flux_q


def source(a, q, da_dz, dq_dz, g: GeometryDerivatives, params: PhysicalParams, correction=Correction.EXTENDED):
    """Momentum source term; the mass equation has no source.

    ``da_dz`` and ``dq_dz`` are the local spatial derivatives of the
    discrete solution, needed by the p2 transport term and the alternative
    integral approximation.
    """
    a = _check_area(a)
    correction = Correction.parse(correction)
    k = params.elastic_k
    gp2 = params.gamma + 2.0
    u = q / a
    s = -2.0 * gp2 * params.nu * u
    if params.c0_variant is C0Variant.VARIABLE:
        r0 = g.r0
        s = s + (4.0 / 3.0) * k * a * np.sqrt(a) / r0**3 * g.dr0_dz - k * a / r0**2 * g.dr0_dz
    else:
        d = stiffness_radius(g, params)
        s = s + k * a / (d * d) * g.dr0_dz
    if correction is Correction.CLASSICAL:
        return np.zeros_like(s), s
    s = s - gp2 * params.nu * ((dq_dz - u * da_dz) * g.dlnr0_dz + q * g.d2lnr0_dz2)
    if correction is Correction.EXTENDED:
        s = s + q * q / a * g.dalpha_c_dz
    else:
        sqa = np.sqrt(a)
        s = s + (4.0 / 35.0) * g.dr0_dz**2 / g.r0 * (2.0 * q * dq_dz / sqa - q * q * da_dz / (2.0 * a * sqa))
    return np.zeros_like(s), s


def p2_transport(a, q, da_dz, dq_dz, g: GeometryDerivatives, params: PhysicalParams):
    """(A / rho_f) dp2/dz expanded by the chain rule."""
    u = q / a
    return (params.gamma + 2.0) * params.nu * ((dq_dz - u * da_dz) * g.dlnr0_dz + q * g.d2lnr0_dz2)


def wave_speed(a, g: GeometryDerivatives, params: PhysicalParams):
    """Elastic wave speed sqrt(hE sqrt(A) / (2 rho_f (1 - sigma^2) D^2))."""
    a = _check_area(a)
    d = stiffness_radius(g, params)
    return np.sqrt(params.elastic_k * np.sqrt(a) / (2.0 * d * d))


def eigenvalues(a, q, g: GeometryDerivatives, params: PhysicalParams, correction=Correction.EXTENDED):
    """Characteristic speeds (lambda1 <= lambda2) of the flux Jacobian."""
    a = _check_area(a)
    coriolis = _coriolis(g, params, correction)
    u = q / a
    c2 = wave_speed(a, g, params) ** 2
    disc = (coriolis * u) ** 2 - coriolis * u * u + c2
    if np.any(disc < 0):
        raise HyperbolicityError(f"negative discriminant {np.min(disc):.6g}: system is not hyperbolic here")
    root = np.sqrt(disc)
    return coriolis * u - root, coriolis * u + root


def riemann_invariants(a, q, g: GeometryDerivatives, params: PhysicalParams):
    """w1, w2 = -Q/A -/+ 4 sqrt(beta sqrt(A)), derived with a flat profile (alpha = 1).

    w1 is carried by the right-going family (speed U + c), w2 by the
    left-going one (speed U - c).
    """
    a = _check_area(a)
    four_c = 4.0 * wave_speed(a, g, params)
    u = q / a
    return -u - four_c, -u + four_c


def state_from_invariants(w1, w2, g: GeometryDerivatives, params: PhysicalParams):
    """Invert :func:`riemann_invariants`; returns ``(a, q)``."""
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    if np.any(~(w2 > w1)):
        raise InvalidInvariantsError("need w2 > w1")
    d = stiffness_radius(g, params)
    beta = params.elastic_k / (2.0 * d * d)
    a = ((w2 - w1) / (8.0 * np.sqrt(beta))) ** 4
    u = -0.5 * (w1 + w2)
    return a, a * u
