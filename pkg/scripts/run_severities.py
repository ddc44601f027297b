"""Steady runs for the 23%, 40% and 50% stenoses; prints one summary line each."""
import argparse
from pathlib import Path

from stenoflow.harness import RunConfig, run_case


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/severities")
    ap.add_argument("--variant", default="extended")
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--t-end", type=float, default=1.0)
    args = ap.parse_args()
    print(f"{'sev':>4} {'status':>8} {'steady_t':>9} {'peak U':>9} {'at z':>6} {'Q spread':>9} {'wall s':>7}")
    for sev in (23, 40, 50):
        cfg = RunConfig().with_overrides(
            geometry={"kind": "stenosis", "severity": sev},
            model={"correction": args.variant},
            solver={"n_elements": args.n, "t_end": args.t_end, "stop_at_steady": True},
        )
        s = run_case(cfg, Path(args.out) / f"sev{sev}").summary
        steady_t = s.get("steady_time") or float("nan")
        print(
            f"{sev:>4} {s['status']:>8} {steady_t:9.4f} {s.get('peak_u', float('nan')):9.3f} "
            f"{s.get('peak_u_z', float('nan')):6.3f} {s.get('q_cell_mean_spread', float('nan')):9.1e} {s['wall_clock_s']:7.1f}"
        )


if __name__ == "__main__":
    main()
