"""Classical vs extended vs integral-approximation closure on one stenosis, at steady state."""
import argparse
import json

from stenoflow.harness import RunConfig, compare_models


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--severity", type=int, default=50, choices=[23, 40, 50])
    ap.add_argument("--out", default="out/compare")
    ap.add_argument("--c0", default="constant", choices=["constant", "variable"])
    args = ap.parse_args()
    cfg = RunConfig().with_overrides(
        geometry={"kind": "stenosis", "severity": args.severity},
        physics={"c0_variant": args.c0},
        solver={"stop_at_steady": True},
    )
    report = compare_models(cfg, args.out)
    report.pop("records")
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
