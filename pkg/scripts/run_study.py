"""Run one or more study configs and print their summary tables.

    python3 scripts/run_study.py scripts/configs/*.json --workers 4
"""

import argparse
import csv
import dataclasses
import time
from pathlib import Path

from rbstats.studies import StudyConfig, run_study


def _fmt(v: str) -> str:
    try:
        return f"{float(v):.4g}"
    except ValueError:
        return v[:11]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="+", type=Path)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out-root", type=Path, help="place each study under this directory instead")
    args = ap.parse_args()
    for path in args.configs:
        cfg = StudyConfig.from_file(path)
        cfg = dataclasses.replace(cfg, workers=args.workers)
        if args.out_root is not None:
            cfg = dataclasses.replace(cfg, out_dir=str(args.out_root / cfg.kind))
        t0 = time.perf_counter()
        res = run_study(cfg)
        print(f"== {cfg.kind} ({len(cfg.cells())} cells, {time.perf_counter() - t0:.1f}s) -> {cfg.out_dir}")
        with open(Path(cfg.out_dir) / f"{cfg.kind}_summary.csv") as fh:
            for row in csv.reader(fh):
                print("  " + "  ".join(f"{_fmt(v):>11}" for v in row))


if __name__ == "__main__":
    main()
