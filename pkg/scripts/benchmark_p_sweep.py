#!/usr/bin/env python3
"""p-sweep on the 48-cell L-shaped benchmark mesh: solves for p = 1..5,
prints the efficiency-index table for both estimators, and writes the run
data to results.csv in the output directory.

Usage: python3 scripts/benchmark_p_sweep.py [outdir]
"""

import sys
from pathlib import Path

from hpvem.cli import main as hpvem_main


def run(outdir: str) -> int:
    code = hpvem_main(["run", "--problem", "lshape-r23",
                       "--mesh", "lshape(4)", "--mode", "fixed",
                       "--p-sweep", "1:5", "--estimator", "both",
                       "--output", outdir])
    if code != 0:
        return code
    lines = (Path(outdir) / "results.csv").read_text().splitlines()
    cols = lines[0].split(",")
    print(f"{'p':>2} {'ndofs':>7} {'error':>12} {'eta':>12} "
          f"{'I':>6} {'I_loc':>6}")
    for line in lines[1:]:
        row = dict(zip(cols, line.split(",")))
        print(f"{row['pmax']:>2} {row['ndofs']:>7} "
              f"{float(row['error']):>12.4e} {float(row['eta']):>12.4e} "
              f"{float(row['I']):>6.3f} {float(row['I_loc']):>6.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(run(sys.argv[1] if len(sys.argv) > 1 else "out/p_sweep"))
