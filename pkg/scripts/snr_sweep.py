"""Held-out metrics of the two losses as the attended-response SNR varies.

    python scripts/snr_sweep.py [--snr -10 -5 0 5 10] [--seeds 0 1 2]
"""

import argparse
import json
from pathlib import Path

from aadlab.experiment import ExperimentSpec, run_experiment

SPEC = Path(__file__).resolve().parents[1] / "specs" / "main_claim.json"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--snr", type=float, nargs="+", default=[-10, -5, 0, 5, 10])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out", default="runs/snr_sweep")
    args = ap.parse_args()

    base = json.loads(SPEC.read_text())
    print(f"{'snr_db':>7} {'loss':<10} {'window':>6} {'acc':>6} {'dPCC':>7} {'rho_a':>7} {'rho_u':>7}")
    for snr in args.snr:
        spec = ExperimentSpec.from_dict({**base, "name": f"snr_{snr:g}", "seeds": args.seeds,
                                         "synth": {**base["synth"], "snr_db": snr}})
        table = run_experiment(spec, Path(args.out) / f"{snr:g}").tables[0]
        for r in table.rows:
            print(f"{snr:7g} {r.loss:<10} {r.window_seconds:6g} {r.accuracy:6.3f} {r.mean_delta:7.3f} "
                  f"{r.mean_rho_a:7.3f} {r.mean_rho_u:7.3f}")


if __name__ == "__main__":
    main()
