"""Run every desk-scale preset end to end and print the main tables.

    python3 scripts/run_desk.py [--out results] [--only narma-1 pmsm] [--scale desk]
"""

import argparse
import csv
import logging
import os
from pathlib import Path

from factorcast import config, experiment


def show(report_dir: Path, table: str) -> None:
    with open(report_dir / table) as fh:
        rows = list(csv.DictReader(fh))
    print(f"\n{report_dir.parent.name}  {rows[0]['protocol']}")
    print(f"{'variant':<11}{'IID MSE':>12}{'OOD MSE':>12}{'rel err':>9}")
    for r in rows:
        print(f"{r['variant']:<11}{float(r['mse_iid']):12.3e}{float(r['mse_ood']):12.3e}{float(r['relative_error']):9.2f}")


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--out", default="results")
    p.add_argument("--only", nargs="*", default=list(config.EXPERIMENTS))
    p.add_argument("--scale", default="desk", choices=config.SCALES)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for name in args.only:
        cfg = config.preset(name, args.scale)
        root = Path(args.out) / cfg.name
        experiment.reproduce(cfg, root, args.jobs)
        show(root / "report", "table2.csv" if name == "pmsm" else "table1.csv")


if __name__ == "__main__":
    main()
