#!/usr/bin/env python3
"""ECE against tau for tau-norm-scaling and plain temperature scaling.

Writes a synthetic benchmark (unless --manifest is given), runs the sweep
and prints each method's minimising tau. The CSV has columns
tau,ece_norm,ece_temp and is ready for plotting.
"""

import argparse
import tempfile
from pathlib import Path

from normscale.pipeline import RunSpec, default_tau_grid, sweep_tau, synth_to_dir, write_sweep_csv
from normscale.synthgen import fig1_like


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--manifest", type=Path)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--bins", type=int, default=15)
    ap.add_argument("--out", type=Path, default=Path("sweep.csv"))
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        manifest = args.manifest
        if manifest is None:
            synth_to_dir(fig1_like(seed=args.seed), Path(tmp))
            manifest = Path(tmp) / "manifest.json"
        rows = sweep_tau(RunSpec(manifest=manifest, bins=args.bins), default_tau_grid())

    write_sweep_csv(args.out, rows)
    best_norm = min(rows, key=lambda r: r[1])
    best_temp = min(rows, key=lambda r: r[2])
    print(f"wrote {args.out}")
    print(f"norm-scaling: min ECE {best_norm[1]:.4g} at tau={best_norm[0]:.3g}")
    print(f"temperature:  min ECE {best_temp[2]:.4g} at tau={best_temp[0]:.3g}")


if __name__ == "__main__":
    main()
