#!/usr/bin/env python3
"""Run the full parameter study on the standard episode and print the trend
tables: per backend, one sweep per parameter, pooled precision/recall/F
scores per row.

Takes roughly 30-45 minutes end to end on one core; pass --quick for a
low-resolution smoke version (a few minutes, trends not meaningful).
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from voxbench.cli import main as voxbench_main

QUICK_SETS = [
    "scenario.duration_s=12",
    "sensors.lidar_rings=8",
    "sensors.lidar_azimuth_steps=90",
    "sensors.camera_width=40",
    "sensors.camera_height=30",
]

SWEEPS = [
    ("octree", "minimum_voxel_length", "0.05,0.075,0.1,0.125,0.15,0.175,0.2"),
    ("octree", "hit_probability", "0.5,0.7,1.0"),
    ("octree", "miss_probability", "0.2,0.4,0.7"),
    ("skiplist", "minimum_voxel_length", "0.05,0.075,0.1,0.125,0.15,0.175,0.2"),
    ("skiplist", "minimum_voxel_weight", "1,5,10"),
    ("tsdf", "minimum_voxel_length", "0.05,0.075,0.1,0.125,0.15,0.175,0.2"),
    ("tsdf", "truncation_distance", "0.05,0.1,0.2"),
    ("tsdf", "constant_weight", "false,true"),
]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--episode", help="existing episode file (recorded if omitted)")
    parser.add_argument("--out-dir", default="results", help="output directory for CSVs")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--quick", action="store_true", help="small smoke configuration")
    args = parser.parse_args()

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    episode = args.episode
    if episode is None:
        episode = str(out_dir / "standard.voep")
        record_args = ["record", "--out", episode]
        if args.quick:
            record_args += [f"--set={s}" for s in QUICK_SETS]
        print(f"recording episode -> {episode}")
        if voxbench_main(record_args) != 0:
            return 1

    for backend, param, values in SWEEPS:
        csv_path = out_dir / f"{backend}_{param}.csv"
        print(f"\n=== {backend}: sweeping {param} over {values} ===")
        t0 = time.perf_counter()
        code = voxbench_main([
            "sweep",
            "--episode", episode,
            "--backend", backend,
            "--param", param,
            "--values", values,
            "--out", str(csv_path),
            "--jobs", str(args.jobs),
        ])
        print(f"({time.perf_counter() - t0:.0f} s)")
        if code != 0:
            print(f"sweep failed for {backend}/{param}", file=sys.stderr)
            return code
        voxbench_main(["report", "--csv", str(csv_path)])
    print(f"\nCSVs written under {out_dir}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
