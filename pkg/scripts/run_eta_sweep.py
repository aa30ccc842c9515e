#!/usr/bin/env python3
"""Sweep the battery round-trip efficiency and report online/offline
throughput ratios under stochastic compound-Poisson harvesting.

Each sweep point reuses the same arrival and channel draws (common random
numbers), so curves differ only through the swept parameter.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ehsched.experiments import ExperimentSpec, run_sweep, write_report_csv


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--values", type=str, default="0.2,0.4,0.6,0.8,1.0",
                    help="comma-separated efficiency grid")
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--e-avg", type=float, default=5.0, help="mean packet energy (J)")
    ap.add_argument("--rate", type=float, default=1.0, help="arrival rate (1/s)")
    ap.add_argument("--T", type=float, default=10.0, help="deadline (s)")
    ap.add_argument("--eps", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=20260823)
    ap.add_argument("--modes", type=str, default="ideal,circuit")
    ap.add_argument("--out", type=Path, default=Path("eta_sweep.csv"))
    args = ap.parse_args()

    values = [float(v) for v in args.values.split(",")]
    spec = ExperimentSpec(
        T=args.T,
        arrival_rate=args.rate,
        e_avg=args.e_avg,
        eps=args.eps,
        num_trials=args.trials,
        master_seed=args.seed,
    )
    modes = tuple(args.modes.split(","))
    res = run_sweep(spec, axis="eta", values=values, modes=modes)
    with open(args.out, "w", newline="") as f:
        write_report_csv(f, res)

    print(f"eta sweep, {args.trials} trials/point, e_avg={args.e_avg}")
    for axis_value, policy, mean, stderr, ratio in res.rows:
        print(f"  eta={axis_value:4.2f}  {policy:16s} mean={mean:9.4f}"
              f"  stderr={stderr:.4f}  ratio={ratio:.4f}")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
