"""Self-convergence of the DG solver on a smooth pressure pulse in a straight tube."""
import argparse
from pathlib import Path

from stenoflow.harness import convergence_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[50, 100, 200, 400])
    ap.add_argument("--k", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--t-end", type=float, default=1.5e-3)
    ap.add_argument("--out", default="out/convergence")
    args = ap.parse_args()
    table = convergence_study(n_list=args.n, degrees=args.k, t_end=args.t_end)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "convergence.csv")
    fmt = lambda v: "   -  " if v is None else f"{v:6.2f}"
    efmt = lambda v: "    -    " if v is None else f"{v:9.2e}"
    print(" k     N     err_A     err_Q  rate_A rate_Q")
    for r in table.rows:
        print(f"{r.degree:2d} {r.n_elements:5d} {efmt(r.err_a)} {efmt(r.err_q)} {fmt(r.rate_a)} {fmt(r.rate_q)}")
    print(f"{table.wall_clock_s:.1f} s, monotone={table.monotone}")


if __name__ == "__main__":
    main()
