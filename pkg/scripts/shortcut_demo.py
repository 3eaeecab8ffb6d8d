"""Contrast the negative-sum objective with dPCC on three speakers sharing most of their envelope.

The negative-sum objective rewards anti-correlation with every stream, so it
collapses onto the negated shared component; dPCC cancels that component.

    python scripts/shortcut_demo.py [--out runs/shortcut]
"""

import argparse
from pathlib import Path

from aadlab.experiment import ExperimentSpec, run_experiment

SPEC = Path(__file__).resolve().parents[1] / "specs" / "shortcut.json"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--spec", default=str(SPEC))
    ap.add_argument("--out", default="runs/shortcut")
    args = ap.parse_args()

    outcome = run_experiment(ExperimentSpec.from_file(args.spec), args.out)
    table = outcome.tables[0]
    print(f"{'loss':<10} {'unit':<6} {'rho_a':>8} {'rho_u':>8} {'accuracy':>9}")
    for loss in table.losses:
        row = table.get(table.families[0], loss, table.windows[0])
        for unit in sorted(row.per_unit):
            u = row.per_unit[unit]
            print(f"{loss:<10} {unit:<6} {u.mean_rho_a:8.3f} {u.mean_rho_u:8.3f} {u.accuracy:9.3f}")
        print(f"{loss:<10} {'mean':<6} {row.mean_rho_a:8.3f} {row.mean_rho_u:8.3f} {row.accuracy:9.3f}")


if __name__ == "__main__":
    main()
