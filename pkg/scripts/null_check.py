"""Train on -60 dB data, one independent dataset per seed, and report 10 s accuracy.

    python scripts/null_check.py [--seeds 5] [--out runs/null]
"""

import argparse
import json
from pathlib import Path

import numpy as np

from aadlab.experiment import ExperimentSpec, run_experiment

SPEC = Path(__file__).resolve().parents[1] / "specs" / "null_snr.json"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", default="runs/null")
    args = ap.parse_args()

    base = json.loads(SPEC.read_text())
    accs = []
    for seed in range(args.seeds):
        spec = ExperimentSpec.from_dict({**base, "name": f"null_{seed}", "seeds": [seed],
                                         "synth": {**base["synth"], "seed": seed}})
        row = run_experiment(spec, Path(args.out) / str(seed)).tables[0].rows[0]
        accs.append(row.accuracy)
        print(f"seed {seed}: accuracy {row.accuracy:.3f} over {row.n_segments} windows")
    print(f"mean {np.mean(accs):.3f} (chance 0.5)")


if __name__ == "__main__":
    main()
