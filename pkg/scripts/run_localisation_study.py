#!/usr/bin/env python3
"""Run the desk-scale localisation study for the three benchmark cases.

For every requested case this sweeps the kernel range over a descending list,
compares each run against the localisation-limit model at the final time and
writes per-run diagnostics, radial profiles, final snapshots and the
convergence table under the output directory:

    <out>/case<k>/convergence.csv            distance-to-limit table
    <out>/case<k>/convergence_verdicts.csv   monotonicity verdict per species
    <out>/case<k>/case<k>_eps_<label>/...    per-run artifacts

The defaults finish in a few minutes on a laptop; raise --t-end or --grid to
move toward production scale.
"""

import argparse
import sys
import time
from pathlib import Path

from aggloc.experiment import ExperimentConfig, epsilon_sweep


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--cases", type=int, nargs="+", default=[1, 2, 3],
                        choices=(1, 2, 3))
    parser.add_argument("--epsilons", type=float, nargs="+",
                        default=[4.0, 2.0, 1.0, 0.5],
                        help="kernel ranges, strictly descending")
    parser.add_argument("--t-end", type=float, default=10.0)
    parser.add_argument("--grid", type=int, default=128, help="cells per axis")
    parser.add_argument("--half-width", type=float, default=24.0,
                        help="domain half-width (must fit the widest kernel)")
    parser.add_argument("--out", type=Path, default=Path("results"))
    args = parser.parse_args(argv)

    for case in args.cases:
        config = ExperimentConfig(
            half_width=args.half_width,
            n=args.grid,
            case=case,
            t_end=args.t_end,
            epsilons=tuple(args.epsilons),
            out_dir=str(args.out / f"case{case}"),
        )
        start = time.perf_counter()
        sweep = epsilon_sweep(config)
        elapsed = time.perf_counter() - start
        print(f"case {case} finished in {elapsed:.1f}s -> {sweep.table_path}")
        for row, eps in enumerate(sweep.epsilons):
            cells = "  ".join(f"{d:.6e}" for d in sweep.distances[row])
            print(f"  eps={eps:<6g} {cells}")
        if sweep.strictly_decreasing is not None:
            flags = ", ".join(
                f"species {i + 1}: {'yes' if v else 'NO'}"
                for i, v in enumerate(sweep.strictly_decreasing)
            )
            print(f"  strictly decreasing? {flags}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
