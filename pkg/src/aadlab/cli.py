"""Command-line entry point.

    aadlab synth    --spec SPEC --out DIR
    aadlab run      --spec SPEC [--out DIR] [--jobs N] [--seed-override 0,1] [--no-resume]
    aadlab envelope --rate HZ (--audio FILE | --tone HZ [--seconds S]) --out FILE

Exit codes: 0 success, 1 runtime failure, 2 usage or spec error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import signal as sig
from .dataset import save_bundle
from .errors import AadError
from .experiment import OUT_ENV, ExperimentSpec, SpecError, run_experiment
from .synth import synth_bundle

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _load_spec(path) -> ExperimentSpec:
    if path is None:
        return ExperimentSpec()
    try:
        return ExperimentSpec.from_file(path)
    except FileNotFoundError:
        raise SpecError(f"{path}: no such spec file") from None


def cmd_synth(args) -> int:
    spec = _load_spec(args.spec)
    bundle = synth_bundle(spec.synth_config())
    out = Path(args.out)
    save_bundle(bundle, out)
    total = sum(t.n_samples for t in bundle.trials) / bundle.rate_hz
    print(f"wrote {len(bundle.trials)} trials, {total:.1f} s total, to {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    spec = _load_spec(args.spec)
    if args.seed_override:
        try:
            seeds = [int(s) for s in args.seed_override.split(",") if s.strip()]
        except ValueError:
            raise SpecError(f"--seed-override expects comma-separated integers, got {args.seed_override!r}") from None
        spec = ExperimentSpec.from_dict({**spec.__dict__, "seeds": seeds})
    out = args.out or spec.out or str(Path(os.environ.get(OUT_ENV, "runs")) / spec.name)
    outcome = run_experiment(spec, out, jobs=args.jobs, resume=args.resume)
    print(f"{outcome.n_cells} cells ({outcome.n_cached} cached, {outcome.n_failed} failed); "
          f"report in {outcome.report_dir}")
    if outcome.n_failed * 2 > outcome.n_cells:
        print("more than half of the grid failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_envelope(args) -> int:
    if args.tone is not None:
        t = np.arange(int(round(args.seconds * args.rate))) / args.rate
        audio = np.sin(2 * np.pi * args.tone * t)
    else:
        audio = np.fromfile(args.audio, dtype="<f4").astype(np.float64)
    env = sig.speech_envelope(sig.Waveform(audio, args.rate))
    env.samples.astype("<f4").tofile(args.out)
    print(f"{sig.N_SUBBANDS} subbands, {len(env)} samples at {env.rate_hz:g} Hz -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aadlab", description="Auditory attention decoding lab on synthetic EEG.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic bundle")
    s.add_argument("--spec", help="experiment spec (JSON); defaults when omitted")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("run", help="run the training/evaluation grid and write a report")
    r.add_argument("--spec", help="experiment spec (JSON); defaults when omitted")
    r.add_argument("--out", help=f"output directory (default: ${OUT_ENV}/<name> or runs/<name>)")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--seed-override", help="comma-separated seeds replacing the spec's list")
    r.add_argument("--resume", action=argparse.BooleanOptionalAction, default=True)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("envelope", help="broadband speech envelope at 128 Hz from mono audio")
    e.add_argument("--rate", type=float, required=True, help="audio sample rate in Hz")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--audio", help="headerless float32 little-endian mono file")
    src.add_argument("--tone", type=float, help="generate a sine of this frequency instead")
    e.add_argument("--seconds", type=float, default=1.0, help="tone duration")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_envelope)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"aadlab: spec error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AadError, OSError, ValueError) as exc:
        print(f"aadlab: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
