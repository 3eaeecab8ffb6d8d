"""Run the PCC vs dPCC loss comparison grid and print the table, tests and trends.

    python scripts/main_claim.py [--out runs/main_claim] [--jobs 1]
"""

import argparse
from pathlib import Path

from aadlab.experiment import ExperimentSpec, run_experiment

SPEC = Path(__file__).resolve().parents[1] / "specs" / "main_claim.json"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--spec", default=str(SPEC))
    ap.add_argument("--out", default="runs/main_claim")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    outcome = run_experiment(ExperimentSpec.from_file(args.spec), args.out, jobs=args.jobs)
    print((outcome.report_dir / "table.txt").read_text())
    for c in outcome.tests:
        if c.metric in ("mean_delta", "mean_rho_u"):
            print(f"{c.window_seconds:g} s {c.metric:<11} {c.result.method:<8} p = {c.result.p_value:.2e} {c.result.stars}")
    print()
    print((outcome.report_dir / "summary.txt").read_text())


if __name__ == "__main__":
    main()
