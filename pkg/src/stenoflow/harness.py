"""Configuration, run orchestration, model comparison and convergence studies.

Configs are INI files with sections ``[geometry] [physics] [model] [solver]
[boundary] [output]``.  Keys are unique across sections, so a key written
before any section header (``severity = 50``) is routed to its owning
section.  Unknown keys and sections are rejected.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import io
import json
import math
import re
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .dg import (
    BoundarySpec,
    DGSolver,
    Mesh1D,
    SolutionRecord,
    SolverConfig,
    StateField,
    basis_values,
    project_initial,
)
from .errors import ConfigError, InvalidParameterError, SolverError, StenoflowError
from .geometry import (
    R_MAX_DEFAULT,
    STENOSIS_LENGTH,
    VesselGeometry,
    derivatives_at,
    load_profile_csv,
    make_stenosis_profile,
    straight_vessel,
    throat_location,
)
from .model import C0Variant, Correction, PhysicalParams

VARIANTS = (Correction.CLASSICAL, Correction.EXTENDED, Correction.APPENDIX_B)


@dataclass(frozen=True)
class GeometryConfig:
    kind: str = "stenosis"
    severity: int = 50
    r_max: float = R_MAX_DEFAULT
    r_min: float | None = None
    length: float = STENOSIS_LENGTH
    profile_csv: str | None = None

    def build(self) -> VesselGeometry:
        if self.kind == "stenosis":
            return make_stenosis_profile(self.severity, self.r_max, self.r_min)
        if self.kind == "straight":
            return straight_vessel(self.r_max, self.length)
        if self.kind == "tabulated":
            if not self.profile_csv:
                raise ConfigError("geometry.profile_csv is required for kind = tabulated")
            return load_profile_csv(self.profile_csv)
        raise ConfigError(f"geometry.kind must be stenosis, straight or tabulated, got {self.kind!r}")


@dataclass(frozen=True)
class ModelConfig:
    correction: str = "extended"


@dataclass(frozen=True)
class SolverSettings:
    n_elements: int = 200
    degree: int = 2
    cfl: float = 0.3
    t_end: float = 1.0
    limiter: bool = False
    tvb_m: float = 0.0
    well_balanced: bool = True
    backend: str = "numba"
    steady_tol: float = 1e-6
    steady_window: int = 100
    stop_at_steady: bool = False
    output_interval: float | None = None
    track_mass: bool = False


@dataclass(frozen=True)
class BoundaryConfig:
    inlet: str = "velocity"
    inlet_value: float = 22.5
    ramp_time: float = 0.05
    outlet: str = "non_reflecting"
    p_out: float = 0.0


@dataclass(frozen=True)
class OutputConfig:
    out_dir: str = "out"
    n_samples: int = 512


@dataclass(frozen=True)
class PhysicsConfig:
    rho_f: float = 1.055
    mu_f: float = 0.04
    h: float = 0.06
    E: float = 5.02e6
    sigma: float = 0.5
    p_ext: float = 0.0
    alpha: float = 1.1
    c0_variant: str = "constant"
    r0_star: float | None = None


SECTIONS = {
    "geometry": GeometryConfig,
    "physics": PhysicsConfig,
    "model": ModelConfig,
    "solver": SolverSettings,
    "boundary": BoundaryConfig,
    "output": OutputConfig,
}

KEY_OWNER = {f.name: sec for sec, cls in SECTIONS.items() for f in fields(cls)}
assert len(KEY_OWNER) == sum(len(fields(c)) for c in SECTIONS.values()), "config keys must be unique"

_TOP = "__top__"


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometryConfig = GeometryConfig()
    physics: PhysicsConfig = PhysicsConfig()
    model: ModelConfig = ModelConfig()
    solver: SolverSettings = SolverSettings()
    boundary: BoundaryConfig = BoundaryConfig()
    output: OutputConfig = OutputConfig()

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        try:
            PhysicalParams(**{**dataclasses.asdict(self.physics), "c0_variant": C0Variant(self.physics.c0_variant)})
            self.solver_config()
            self.boundary_spec()
            Correction.parse(self.model.correction)
            if self.geometry.kind != "tabulated":
                self.geometry.build()
            elif self.geometry.profile_csv and not Path(self.geometry.profile_csv).is_file():
                raise ConfigError(f"geometry.profile_csv: file not found: {self.geometry.profile_csv}")
            if self.solver.n_elements < 1 or self.solver.degree < 0:
                raise ConfigError("solver.n_elements must be >= 1 and solver.degree >= 0")
            if self.output.n_samples < 2:
                raise ConfigError("output.n_samples must be >= 2")
        except ConfigError:
            raise
        except (InvalidParameterError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def correction(self) -> Correction:
        return Correction.parse(self.model.correction)

    def params(self, geom: VesselGeometry | None = None) -> PhysicalParams:
        """Physical parameters; an unset R0* resolves to the vessel's R_max."""
        kw = dataclasses.asdict(self.physics)
        kw["c0_variant"] = C0Variant(kw["c0_variant"])
        params = PhysicalParams(**kw)
        if params.c0_variant is C0Variant.CONSTANT and params.r0_star is None:
            r_max = (geom or self.geometry.build()).r_max if self.geometry.kind == "tabulated" else self.geometry.r_max
            params = params.with_r0_star(r_max)
        return params

    def solver_config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(
            cfl=s.cfl,
            t_end=s.t_end,
            limiter=s.limiter,
            tvb_m=s.tvb_m,
            correction=self.correction,
            output_interval=s.output_interval,
            well_balanced=s.well_balanced,
            backend=s.backend,
            steady_tol=s.steady_tol,
            steady_window=s.steady_window,
            stop_at_steady=s.stop_at_steady,
            track_mass=s.track_mass,
        )

    def boundary_spec(self) -> BoundarySpec:
        return BoundarySpec(**dataclasses.asdict(self.boundary))

    def build_solver(self) -> DGSolver:
        geom = self.geometry.build()
        mesh = Mesh1D(self.solver.n_elements, geom.length, self.solver.degree)
        return DGSolver(mesh, geom, self.params(geom), self.boundary_spec(), self.solver_config())

    def with_overrides(self, **sections) -> "RunConfig":
        """``cfg.with_overrides(solver={"t_end": 0.1})`` returns a modified copy."""
        kw = {name: replace(getattr(self, name), **vals) for name, vals in sections.items()}
        return replace(self, **kw)


def _convert(raw: str, ftype, where: str):
    text = raw.strip()
    optional = "None" in str(ftype)
    if optional and text.lower() in ("", "none"):
        return None
    base = str(ftype).replace(" | None", "")
    try:
        if base == "bool":
            low = text.lower()
            if low in ("1", "yes", "true", "on"):
                return True
            if low in ("0", "no", "false", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if base == "int":
            return int(text.rstrip("%"))
        if base == "float":
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_TOP}]\n" + text, source=source)
    except configparser.Error as exc:
        # undo the one-line shift from the injected header
        msg = re.sub(r"\[line\s+(\d+)\]", lambda m: f"[line {int(m.group(1)) - 1}]", str(exc))
        raise ConfigError(f"{source}: parse error: {msg}") from None
    values = {sec: {} for sec in SECTIONS}
    for sec in parser.sections():
        if sec != _TOP and sec not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key, raw in parser.items(sec):
            owner = KEY_OWNER.get(key)
            if owner is None or (sec != _TOP and owner != sec):
                hint = f" (belongs to [{owner}])" if owner else ""
                raise ConfigError(f"{source}: unknown key {key!r} in [{sec if sec != _TOP else 'top level'}]{hint}")
            if key in values[owner]:
                raise ConfigError(f"{source}: key {key!r} given twice")
            ftype = {f.name: f.type for f in fields(SECTIONS[owner])}[key]
            values[owner][key] = _convert(raw, ftype, f"{source}: {owner}.{key}")
    try:
        sections = {sec: SECTIONS[sec](**vals) for sec, vals in values.items()}
        return RunConfig(**sections)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def effective_config_text(cfg: RunConfig) -> str:
    """Every setting, defaults included, in loadable INI form."""
    out = io.StringIO()
    for sec in SECTIONS:
        out.write(f"[{sec}]\n")
        for f in fields(SECTIONS[sec]):
            out.write(f"{f.name} = {_fmt(getattr(getattr(cfg, sec), f.name))}\n")
        out.write("\n")
    return out.getvalue()


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(effective_config_text(cfg).encode()).hexdigest()


# -- records ----------------------------------------------------------------

RECORD_HEADER = ("t",) + SolutionRecord.COLUMNS


def write_record_csv(rec: SolutionRecord, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_HEADER)
        t = repr(float(rec.t))
        cols = [getattr(rec, c) for c in SolutionRecord.COLUMNS]
        for row in zip(*cols):
            w.writerow([t] + [repr(float(v)) for v in row])


def read_record_csv(path) -> SolutionRecord:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != RECORD_HEADER:
            raise InvalidParameterError(f"{path}: unexpected header {header}")
        data = np.array([[float(v) for v in row] for row in reader if row])
    cols = {name: data[:, i] for i, name in enumerate(RECORD_HEADER)}
    return SolutionRecord(t=float(cols["t"][0]), **{c: cols[c] for c in SolutionRecord.COLUMNS})


def cell_means(solver: DGSolver, state: StateField):
    """Element averages of A and Q (the discrete conserved quantities)."""
    s = math.sqrt(0.5)
    return state.coeffs[0][:, 0] * s, state.coeffs[1][:, 0] * s


@dataclass
class CaseResult:
    config: RunConfig
    records: list
    summary: dict
    solver: DGSolver | None = None
    run: object = None


def _json_float(x):
    return None if x is None or not math.isfinite(x) else float(x)


def run_case(cfg: RunConfig, out_dir=None, *, write: bool = True) -> CaseResult:
    """Run one configuration; writes records, effective config and ``summary.json``."""
    out = Path(out_dir if out_dir is not None else cfg.output.out_dir)
    solver = cfg.build_solver()
    summary = {
        "config_hash": config_hash(cfg),
        "variant": cfg.correction.value,
        "tolerances": {
            "steady_tol": cfg.solver.steady_tol,
            "steady_window": cfg.solver.steady_window,
            "cfl": cfg.solver.cfl,
        },
        "status": "ok",
    }
    start = time.perf_counter()
    records, result = [], None
    try:
        result = solver.run()
    except SolverError as exc:
        summary.update(status="solver_error", error=str(exc), t_fail=_json_float(exc.t), element=exc.element)
    summary["wall_clock_s"] = time.perf_counter() - start
    if result is not None:
        records = [solver.record(s, cfg.output.n_samples) for s in result.snapshots]
        final = records[-1]
        am, qm = cell_means(solver, result.final)
        q_spread = float((qm.max() - qm.min()) / max(abs(qm).max(), 1e-300))
        summary.update(
            t_final=final.t,
            n_steps=result.n_steps,
            steady=result.steady,
            steady_time=_json_float(result.steady_time),
            steady_residual=_json_float(result.residual),
            min_a=float(final.a.min()),
            max_a=float(final.a.max()),
            peak_u=float(final.u.max()),
            peak_u_z=float(final.z[np.argmax(final.u)]),
            q_cell_mean_spread=q_spread,
            q_nodal_spread=float((final.q.max() - final.q.min()) / max(abs(final.q).max(), 1e-300)),
        )
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(effective_config_text(cfg))
        names = []
        for i, rec in enumerate(records):
            name = f"record_{i:04d}.csv"
            write_record_csv(rec, out / name)
            names.append(name)
        summary["records"] = names
        (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return CaseResult(cfg, records, summary, solver, result)


# -- model comparison -------------------------------------------------------


def stenotic_mask(geom: VesselGeometry, z, fraction: float = 0.01):
    """Points where the radius deficit exceeds ``fraction`` of the stenosis depth."""
    deficit = geom.r_max - geom.radius(z)
    depth = geom.r_max - geom.r_min
    if depth <= 0:
        return np.ones_like(np.asarray(z, dtype=bool), dtype=bool)
    return deficit > fraction * depth


def relative_difference(a, b, mask):
    """(max, L2) relative difference of a against reference b over mask."""
    a, b = np.asarray(a)[mask], np.asarray(b)[mask]
    scale = np.abs(b)
    rel_max = float(np.max(np.abs(a - b) / np.where(scale > 0, scale, 1.0)))
    rel_l2 = float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
    return rel_max, rel_l2


def compare_models(cfg: RunConfig, out_dir=None, *, write: bool = True) -> dict:
    """Run the three variants on the same grid and boundary data."""
    out = Path(out_dir if out_dir is not None else cfg.output.out_dir)
    finals, status = {}, {}
    for v in VARIANTS:
        vcfg = cfg.with_overrides(model={"correction": v.value})
        case = run_case(vcfg, out / v.value, write=write)
        status[v.value] = case.summary["status"]
        if case.records:
            finals[v.value] = case.records[-1]
    geom = cfg.geometry.build()
    report = {"config_hash": config_hash(cfg), "status": status, "degenerate": bool(geom.is_straight), "metrics": {}}
    if finals:
        z = next(iter(finals.values())).z
        mask = stenotic_mask(geom, z)
        pairs = [("extended", "classical"), ("extended", "appendix_b"), ("appendix_b", "classical")]
        for a, b in pairs:
            if a in finals and b in finals:
                mx, l2 = relative_difference(finals[a].u, finals[b].u, mask)
                report["metrics"][f"{a}_vs_{b}"] = {
                    "u_max_rel": mx,
                    "u_l2_rel": l2,
                    "peak_u": [float(finals[a].u.max()), float(finals[b].u.max())],
                }
        if write:
            out.mkdir(parents=True, exist_ok=True)
            with (out / "comparison.csv").open("w", newline="") as fh:
                w = csv.writer(fh)
                names = [v.value for v in VARIANTS if v.value in finals]
                w.writerow(["z"] + [f"U_{n}" for n in names] + [f"p_{n}" for n in names])
                for i, zi in enumerate(z):
                    row = [zi] + [finals[n].u[i] for n in names] + [finals[n].p[i] for n in names]
                    w.writerow([repr(float(x)) for x in row])
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.json").write_text(json.dumps(report, indent=2))
    report["records"] = finals
    return report


# -- convergence study --------------------------------------------------------


@dataclass
class ConvergenceRow:
    degree: int
    n_elements: int
    err_a: float | None
    err_q: float | None
    rate_a: float | None
    rate_q: float | None


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)
    monotone: bool = True
    wall_clock_s: float = 0.0

    def rates(self, degree: int):
        """Rates (A, Q) from the finest pair of meshes for ``degree``."""
        rows = [r for r in self.rows if r.degree == degree and (r.rate_a is not None or r.rate_q is not None)]
        return rows[-1].rate_a, rows[-1].rate_q

    def passes(self, margin: float = 0.7) -> bool:
        degrees = sorted({r.degree for r in self.rows})
        return self.monotone and all(
            rate >= k + margin for k in degrees for rate in self.rates(k) if rate is not None
        )

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["degree", "n_elements", "err_a", "err_q", "rate_a", "rate_q"])
            for r in self.rows:
                w.writerow([r.degree, r.n_elements] + ["" if v is None else repr(float(v)) for v in (r.err_a, r.err_q, r.rate_a, r.rate_q)])


def _l2_difference(coarse: np.ndarray, n_coarse: int, fine: np.ndarray, n_fine: int, length: float, degree: int):
    """Exact L2 norm of the difference of two DG fields with nested meshes."""
    ratio = n_fine // n_coarse
    if ratio * n_coarse != n_fine:
        raise InvalidParameterError("convergence meshes must be nested")
    xi, w = np.polynomial.legendre.leggauss(degree + 2)
    V, _ = basis_values(degree, xi)
    hf = length / n_fine
    # fine Gauss points mapped into the coarse reference element
    sub = np.arange(n_fine) % ratio
    xc = (-1.0 + (2.0 * sub[:, None] + xi[None, :] + 1.0) / ratio)
    Vc, _ = basis_values(degree, xc.ravel())
    Vc = Vc.reshape(n_fine, len(xi), degree + 1)
    parent = np.arange(n_fine) // ratio
    out = []
    for c in range(2):
        vf = fine[c] @ V.T
        vc = np.einsum("eqj,ej->eq", Vc, coarse[c][parent])
        out.append(math.sqrt(0.5 * hf * np.sum(w * (vf - vc) ** 2)))
    return out


def pulse_initial(r_max: float, amplitude: float = 0.05, width: float = 0.6, center: float = 3.0):
    a0 = lambda z: r_max**2 * (1.0 + amplitude * np.exp(-(((z - center) / width) ** 2)))
    return a0, lambda z: np.zeros_like(z)


def convergence_study(
    cfg: RunConfig | None = None,
    n_list=(50, 100, 200),
    degrees=(1, 2),
    *,
    t_end: float = 1.5e-3,
    amplitude: float = 0.05,
    width: float = 0.6,
) -> ConvergenceTable:
    """Self-convergence on a straight compliant tube carrying a smooth pulse.

    Errors are L2 differences between consecutive meshes; each rate uses the
    two errors around it.  ``t_end = 0`` checks the initial projection alone.
    """
    cfg = cfg or RunConfig()
    n_list = sorted(n_list)
    if len(n_list) < 3:
        raise InvalidParameterError("need at least three meshes")
    geom = straight_vessel(cfg.geometry.r_max, cfg.geometry.length)
    params = cfg.params()
    a0, q0 = pulse_initial(geom.r_max, amplitude, width, 0.5 * geom.length)
    table = ConvergenceTable()
    start = time.perf_counter()
    for k in degrees:
        sols = []
        for n in n_list:
            mesh = Mesh1D(n, geom.length, k)
            init = project_initial(mesh, a0, q0)
            if t_end > 0:
                scfg = replace(cfg.solver_config(), t_end=t_end, output_interval=None, stop_at_steady=False)
                solver = DGSolver(mesh, geom, params, BoundarySpec(inlet_value=0.0, ramp_time=0.0), scfg)
                sols.append(solver.run(init).final.coeffs)
            else:
                sols.append(init.coeffs)
        errs = [
            _l2_difference(sols[i], n_list[i], sols[i + 1], n_list[i + 1], geom.length, k) for i in range(len(n_list) - 1)
        ]
        for i, n in enumerate(n_list):
            ea, eq = errs[i] if i < len(errs) else (None, None)
            ra = rq = None
            if 1 <= i < len(errs):
                f = math.log(n_list[i] / n_list[i - 1])
                # a component that is identically zero (e.g. Q in a projection-only study) has no rate
                ra, rq = (
                    math.log(errs[i - 1][c] / errs[i][c]) / f if errs[i][c] > 0 and errs[i - 1][c] > 0 else None
                    for c in range(2)
                )
                if any(errs[i][c] > errs[i - 1][c] or (errs[i][c] == errs[i - 1][c] > 0) for c in range(2)):
                    table.monotone = False
            table.rows.append(ConvergenceRow(k, n, ea, eq, ra, rq))
    table.wall_clock_s = time.perf_counter() - start
    return table


# -- geometry tables ----------------------------------------------------------


def write_profile_tables(out_dir, severities=(23, 40, 50), n: int = 601, r_max: float = R_MAX_DEFAULT) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for sev in severities:
        geom = make_stenosis_profile(sev, r_max)
        z = np.linspace(0.0, geom.length, n)
        g = derivatives_at(geom, z)
        path = out / f"profile_{sev}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            cols = ["r0", "dr0_dz", "d2r0_dz2", "alpha_c"]
            w.writerow(["z"] + cols)
            for i in range(n):
                w.writerow([repr(float(z[i]))] + [repr(float(getattr(g, c)[i])) for c in cols])
        paths.append(path)
    meta = {f"profile_{s}.csv": {"throat_z": throat_location(make_stenosis_profile(s, r_max))} for s in severities}
    (out / "profiles.json").write_text(json.dumps(meta, indent=2))
    return paths
