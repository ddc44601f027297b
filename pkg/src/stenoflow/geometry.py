"""Reference vessel radius R0(z) and the spatial derivatives the model needs.

Three profile kinds are supported: a straight tube, the smooth asymmetric
stenosis family

    R0(z) = R_max - c * exp(-50 * s(z)**4),
    s(z)  = z - 3.4 + 0.95 * exp(-0.5 * (z - 2.5)**2),

and tabulated radii interpolated by a natural cubic spline.  All derivatives
are analytic; finite differences only appear in the tests.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DomainError, InvalidParameterError

#: Default unobstructed and throat radii (cm).
R_MAX_DEFAULT = 0.18
R_MIN_DEFAULT = 0.1394
STENOSIS_LENGTH = 6.0

SEVERITIES = (23, 40, 50)

# relative slack on the [0, L] domain check
_DOMAIN_TOL = 1e-12


@dataclass(frozen=True)
class VesselGeometry:
    """Axisymmetric reference geometry on ``[0, length]``.

    ``depth`` is the stenosis amplitude ``c``; it is zero for straight tubes.
    ``spline`` is only populated for tabulated profiles.
    """

    length: float
    kind: str
    r_max: float
    r_min: float
    depth: float = 0.0
    severity: int | None = None
    spline: CubicSpline | None = field(default=None, compare=False, repr=False)

    def radius(self, z):
        return derivatives_at(self, z).r0

    def derivatives(self, z):
        return derivatives_at(self, z)

    @property
    def is_straight(self) -> bool:
        return self.kind == "straight"


@dataclass(frozen=True)
class GeometryDerivatives:
    """Radius-derived quantities at one or more axial positions."""

    r0: np.ndarray
    dr0_dz: np.ndarray
    d2r0_dz2: np.ndarray
    dlnr0_dz: np.ndarray
    d2lnr0_dz2: np.ndarray
    alpha_c: np.ndarray
    dalpha_c_dz: np.ndarray

    def take(self, idx) -> "GeometryDerivatives":
        return GeometryDerivatives(*(np.asarray(v)[idx] for v in self.__dict__.values()))


def straight_vessel(r_max: float = R_MAX_DEFAULT, length: float = STENOSIS_LENGTH) -> VesselGeometry:
    if r_max <= 0 or length <= 0:
        raise InvalidParameterError(f"straight vessel needs r_max > 0 and length > 0, got {r_max}, {length}")
    return VesselGeometry(length=float(length), kind="straight", r_max=float(r_max), r_min=float(r_max))


def _parse_severity(severity) -> int:
    if isinstance(severity, str):
        severity = severity.strip().rstrip("%")
    sev = float(severity)
    if sev < 1.0:
        sev *= 100.0
    sev_int = int(round(sev))
    if abs(sev - sev_int) > 1e-9 or sev_int not in SEVERITIES:
        raise InvalidParameterError(f"severity must be one of {SEVERITIES} (percent), got {severity!r}")
    return sev_int


def make_stenosis_profile(severity, r_max: float = R_MAX_DEFAULT, r_min: float | None = None) -> VesselGeometry:
    """Build one of the three stenosed vessels on [0, 6] cm.

    The 23% case takes its depth from ``r_max - r_min``; the 40% and 50%
    cases use ``0.4 * r_max`` and ``0.5 * r_max`` and ignore ``r_min``.
    """
    sev = _parse_severity(severity)
    if r_max <= 0:
        raise InvalidParameterError(f"r_max must be positive, got {r_max}")
    if sev == 23:
        r_min = R_MIN_DEFAULT if r_min is None else float(r_min)
        if not (r_max > r_min > 0):
            raise InvalidParameterError(f"need r_max > r_min > 0, got r_max={r_max}, r_min={r_min}")
        depth = r_max - r_min
    else:
        if r_min is not None and r_min <= 0:
            raise InvalidParameterError(f"r_min must be positive, got {r_min}")
        depth = (sev / 100.0) * r_max
        r_min = r_max - depth
    return VesselGeometry(
        length=STENOSIS_LENGTH,
        kind="stenosis",
        r_max=float(r_max),
        r_min=float(r_min),
        depth=float(depth),
        severity=sev,
    )


def tabulated_profile(z, r0) -> VesselGeometry:
    z = np.asarray(z, dtype=float)
    r0 = np.asarray(r0, dtype=float)
    if z.ndim != 1 or z.shape != r0.shape or z.size < 4:
        raise InvalidParameterError("tabulated profile needs matching 1D arrays with at least 4 samples")
    if np.any(np.diff(z) <= 0):
        raise InvalidParameterError("tabulated z must be strictly increasing")
    if np.any(r0 <= 0):
        raise InvalidParameterError("tabulated radii must be positive")
    if abs(z[0]) > 1e-12:
        raise InvalidParameterError("tabulated profile must start at z = 0")
    spline = CubicSpline(z, r0, bc_type="natural")
    fine = np.linspace(z[0], z[-1], 20 * z.size)
    if np.any(spline(fine) <= 0):
        raise InvalidParameterError("spline interpolant of the tabulated radius is not positive")
    return VesselGeometry(
        length=float(z[-1]),
        kind="tabulated",
        r_max=float(r0.max()),
        r_min=float(r0.min()),
        spline=spline,
    )


def load_profile_csv(path) -> VesselGeometry:
    """Read a two-column ``z,r0`` CSV (header line required)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != ["z", "r0"]:
            raise InvalidParameterError(f"{path}: expected header 'z,r0', got {','.join(header)!r}")
        rows = [(float(a), float(b)) for a, b in (r for r in reader if r)]
    z, r0 = np.array(rows).T
    return tabulated_profile(z, r0)


def write_profile_csv(geom: VesselGeometry, path, n: int = 601) -> None:
    z = np.linspace(0.0, geom.length, n)
    r0 = geom.radius(z)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z", "r0"])
        for zi, ri in zip(z, r0):
            w.writerow([repr(float(zi)), repr(float(ri))])


def _stenosis_radius_terms(geom: VesselGeometry, z):
    x = z - 2.5
    g = np.exp(-0.5 * x * x)
    s = z - 3.4 + 0.95 * g
    ds = 1.0 - 0.95 * x * g
    d2s = 0.95 * (x * x - 1.0) * g
    s3 = s * s * s
    e = np.exp(-50.0 * s3 * s)
    dphi = -200.0 * s3 * ds
    d2phi = -600.0 * s * s * ds * ds - 200.0 * s3 * d2s
    r0 = geom.r_max - geom.depth * e
    dr0 = -geom.depth * dphi * e
    d2r0 = -geom.depth * (d2phi + dphi * dphi) * e
    return r0, dr0, d2r0


def derivatives_at(geom: VesselGeometry, z) -> GeometryDerivatives:
    """Evaluate R0 and its derived quantities at ``z`` (scalar or array)."""
    z = np.asarray(z, dtype=float)
    tol = _DOMAIN_TOL * max(1.0, geom.length)
    if np.any(z < -tol) or np.any(z > geom.length + tol):
        raise DomainError(f"z outside [0, {geom.length}]: min {z.min()}, max {z.max()}")
    if geom.kind == "straight":
        r0 = np.full_like(z, geom.r_max)
        dr0 = np.zeros_like(z)
        d2r0 = np.zeros_like(z)
    elif geom.kind == "stenosis":
        r0, dr0, d2r0 = _stenosis_radius_terms(geom, z)
    elif geom.kind == "tabulated":
        r0 = geom.spline(z)
        dr0 = geom.spline(z, 1)
        d2r0 = geom.spline(z, 2)
    else:
        raise InvalidParameterError(f"unknown profile kind {geom.kind!r}")
    dln = dr0 / r0
    d2ln = d2r0 / r0 - dln * dln
    alpha_c = -(2.0 / 35.0) * dr0 * dr0
    dalpha_c = -(4.0 / 35.0) * dr0 * d2r0
    return GeometryDerivatives(
        r0=r0,
        dr0_dz=dr0,
        d2r0_dz2=d2r0,
        dlnr0_dz=dln,
        d2lnr0_dz2=d2ln,
        alpha_c=alpha_c,
        dalpha_c_dz=dalpha_c,
    )


def throat_location(geom: VesselGeometry, n: int = 60001) -> float:
    """Axial position of the minimum radius (dense sampling)."""
    z = np.linspace(0.0, geom.length, n)
    return float(z[np.argmin(geom.radius(z))])
