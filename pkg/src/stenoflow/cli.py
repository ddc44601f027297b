"""Command-line entry point: ``stenoflow {run,compare,converge,postprocess,profiles}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .errors import BVPSolveError, ConfigError, InvalidParameterError, SolverError, StenoflowError
from .model import Correction

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_POST = 0, 2, 3, 4


def _load(args) -> harness.RunConfig:
    cfg = harness.load_config(args.config) if args.config else harness.RunConfig()
    over = {}
    if getattr(args, "variant", None):
        over["model"] = {"correction": Correction.parse(args.variant).value}
    if getattr(args, "severity", None) is not None:
        over["geometry"] = {"kind": "stenosis", "severity": args.severity}
    if getattr(args, "steady", False) and args.command in ("run", "compare"):
        over["solver"] = {"stop_at_steady": True}
    try:
        return cfg.with_overrides(**over) if over else cfg
    except (InvalidParameterError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _out(args, cfg) -> Path:
    return Path(args.out) if args.out else Path(cfg.output.out_dir)


def cmd_run(args) -> int:
    cfg = _load(args)
    case = harness.run_case(cfg, _out(args, cfg))
    print(json.dumps({k: v for k, v in case.summary.items() if k != "records"}, indent=2))
    return EXIT_OK if case.summary["status"] == "ok" else EXIT_SOLVER


def cmd_compare(args) -> int:
    cfg = _load(args)
    report = harness.compare_models(cfg, _out(args, cfg))
    report.pop("records")
    print(json.dumps(report, indent=2))
    return EXIT_OK if all(s == "ok" for s in report["status"].values()) else EXIT_SOLVER


def cmd_converge(args) -> int:
    cfg = _load(args)
    table = harness.convergence_study(cfg, n_list=args.n, degrees=args.k, t_end=args.t_end)
    out = _out(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "convergence.csv")
    for row in table.rows:
        print(row)
    print("pass" if table.passes() else "FAIL")
    return EXIT_OK if table.passes() else EXIT_SOLVER


def cmd_postprocess(args) -> int:
    from .postprocess import reconstruct_2d_field

    run_dir = Path(args.run_dir)
    cfg = harness.load_config(run_dir / "config.ini")
    summary = json.loads((run_dir / "summary.json").read_text())
    records = [harness.read_record_csv(run_dir / name) for name in summary.get("records", [])]
    steady = args.steady or bool(summary.get("steady"))
    if not records:
        raise ConfigError(f"{run_dir}: no records listed in summary.json")
    # the velocity scale falls back to the computed peak when the inflow is zero
    u_scale = abs(cfg.boundary.inlet_value) or float(abs(records[-1].u).max()) or 1.0
    try:
        field = reconstruct_2d_field(
            records[-2:] if not steady else records[-1:],
            cfg.geometry.build(),
            cfg.params(),
            grid=(args.n_r, args.n_z),
            steady=steady,
            u_z_scale=u_scale,
            correction=cfg.correction,
        )
    except (BVPSolveError, InvalidParameterError) as exc:
        print(f"postprocess failed: {exc}", file=sys.stderr)
        return EXIT_POST
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    field.write(out / "field2d.csv")
    print(f"wrote {out / 'field2d.csv'}")
    return EXIT_OK


def cmd_profiles(args) -> int:
    sev = [args.severity] if args.severity is not None else [23, 40, 50]
    for p in harness.write_profile_tables(args.out or "profiles", sev):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stenoflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, variant=True):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--out", help="output directory")
        if variant:
            p.add_argument("--variant", choices=["classical", "extended", "appendix-b"])
        p.add_argument("--severity", type=int, choices=[23, 40, 50])
        p.add_argument("--steady", action="store_true", help="stop once the steady criterion holds")

    common(sub.add_parser("run", help="run one case"))
    common(sub.add_parser("compare", help="run all model variants and compare"), variant=False)
    p = sub.add_parser("converge", help="self-convergence study on a smooth pulse")
    common(p, variant=False)
    p.add_argument("--n", type=int, nargs="+", default=[50, 100, 200])
    p.add_argument("--k", type=int, nargs="+", default=[1, 2])
    p.add_argument("--t-end", type=float, default=1.5e-3)
    p = sub.add_parser("postprocess", help="reconstruct the 2D velocity field of a run")
    p.add_argument("run_dir", help="directory written by `run`")
    p.add_argument("--out")
    p.add_argument("--steady", action="store_true", help="treat the last record as steady (dA/dt = 0)")
    p.add_argument("--n-r", type=int, default=33)
    p.add_argument("--n-z", type=int, default=65)
    p = sub.add_parser("profiles", help="write stenosis geometry tables")
    p.add_argument("--out")
    p.add_argument("--severity", type=int, choices=[23, 40, 50])
    return parser


COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "converge": cmd_converge,
    "postprocess": cmd_postprocess,
    "profiles": cmd_profiles,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (BVPSolveError, OSError, StenoflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_POST if args.command == "postprocess" else EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
