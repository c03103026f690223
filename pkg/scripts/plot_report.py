"""Text summary of one report directory: intervention and horizon curves.

    python3 scripts/plot_report.py results/narma-1-desk/report
"""

import csv
import sys
from collections import defaultdict
from pathlib import Path


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def main(report: str) -> None:
    report = Path(report)
    curves = defaultdict(list)
    for r in rows(report / "intervention.csv"):
        curves[(r["variant"], r["control"], r["state"])].append((float(r["noise_std"]), float(r["mse"])))
    if curves:
        print("intervention: MSE of probed state vs noise std on the probed control")
        for (v, u, x), pts in curves.items():
            base = pts[0][1]
            print(f"  {v:<11}{u}->{x}  " + "  ".join(f"{s:g}:{m / base:5.2f}x" for s, m in pts))
    horizon = defaultdict(dict)
    for r in rows(report / "horizon.csv"):
        horizon[r["variant"]][int(r["horizon"])] = float(r["accumulated_mse_ood"])
    if horizon:
        marks = [h for h in (1, 5, 10, 20, 50) if all(h in c for c in horizon.values())]
        print("accumulated OOD MSE by horizon")
        print("  " + " " * 11 + "".join(f"{h:>11}" for h in marks))
        for v, c in horizon.items():
            print(f"  {v:<11}" + "".join(f"{c[h]:11.3e}" for h in marks))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "results/narma-1-desk/report")
