"""On-disk bundles of aligned EEG/envelope trials, windowing and normalization.

Bundle directory layout::

    manifest            JSON: format version, rate, channel/speaker counts, trial list
    trial_<k>_eeg.raw   T x C float32, little-endian, time-major
    trial_<k>_env.raw   T x N float32, little-endian, time-major

Raw files carry no header; shapes come from the manifest only.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .correlation import EnvelopeSet
from .errors import BundleVersionError, CorruptBundleError, InsufficientLengthError, ShapeError

FORMAT_NAME = "aadlab-bundle"
FORMAT_VERSION = 1
BUNDLE_RATE_HZ = 128.0
_DTYPE = np.dtype("<f4")


@dataclass
class Trial:
    trial_id: str
    eeg: np.ndarray
    envelopes: np.ndarray
    attended_index: int

    @property
    def n_samples(self) -> int:
        return self.eeg.shape[0]


@dataclass
class Bundle:
    rate_hz: float
    n_channels: int
    n_speakers: int
    trials: list[Trial]
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if float(self.rate_hz) != BUNDLE_RATE_HZ:
            raise ValueError(f"bundles are stored at {BUNDLE_RATE_HZ} Hz, got {self.rate_hz}")
        ids = [t.trial_id for t in self.trials]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate trial ids in bundle")
        for t in self.trials:
            t.eeg = np.ascontiguousarray(t.eeg, dtype=np.float32)
            t.envelopes = np.ascontiguousarray(t.envelopes, dtype=np.float32)
            if t.eeg.shape[1:] != (self.n_channels,) or t.envelopes.shape != (t.eeg.shape[0], self.n_speakers):
                raise ShapeError(
                    f"trial {t.trial_id}: eeg {t.eeg.shape}, envelopes {t.envelopes.shape} "
                    f"inconsistent with C={self.n_channels}, N={self.n_speakers}"
                )
            if not 0 <= t.attended_index < self.n_speakers:
                raise ShapeError(f"trial {t.trial_id}: attended index {t.attended_index} out of range")

    @property
    def trial_ids(self) -> list[str]:
        return [t.trial_id for t in self.trials]

    def manifest(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "format_version": FORMAT_VERSION,
            "rate_hz": float(self.rate_hz),
            "n_channels": int(self.n_channels),
            "n_speakers": int(self.n_speakers),
            "dtype": "float32-le",
            "order": "row-major, time-major",
            "meta": self.meta,
            "trials": [
                {"index": k, "id": t.trial_id, "length": t.n_samples, "attended_index": int(t.attended_index)}
                for k, t in enumerate(self.trials)
            ],
        }

    def manifest_text(self) -> str:
        return json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n"


def save_bundle(bundle: Bundle, path) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for k, t in enumerate(bundle.trials):
        (root / f"trial_{k}_eeg.raw").write_bytes(t.eeg.astype(_DTYPE).tobytes(order="C"))
        (root / f"trial_{k}_env.raw").write_bytes(t.envelopes.astype(_DTYPE).tobytes(order="C"))
    (root / "manifest").write_text(bundle.manifest_text(), encoding="utf-8")
    return root


def _read_raw(path: Path, rows: int, cols: int) -> np.ndarray:
    if not path.exists():
        raise CorruptBundleError(path.name, "missing array file")
    raw = path.read_bytes()
    want = rows * cols * _DTYPE.itemsize
    if len(raw) != want:
        raise CorruptBundleError(path.name, f"{len(raw)} bytes, manifest implies {want} ({rows} x {cols} float32)")
    return np.frombuffer(raw, dtype=_DTYPE).reshape(rows, cols).astype(np.float32)


def load_bundle(path) -> Bundle:
    root = Path(path)
    mpath = root / "manifest"
    try:
        man = json.loads(mpath.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CorruptBundleError("manifest", "missing") from None
    except json.JSONDecodeError as exc:
        raise CorruptBundleError("manifest", f"unparseable at line {exc.lineno}: {exc.msg}") from None
    if man.get("format") != FORMAT_NAME:
        raise CorruptBundleError("manifest", f"unexpected format {man.get('format')!r}")
    if man.get("format_version") != FORMAT_VERSION:
        raise BundleVersionError(f"unsupported bundle version {man.get('format_version')!r}")
    c, n = int(man["n_channels"]), int(man["n_speakers"])
    trials = []
    for entry in man["trials"]:
        k, length = int(entry["index"]), int(entry["length"])
        eeg = _read_raw(root / f"trial_{k}_eeg.raw", length, c)
        env = _read_raw(root / f"trial_{k}_env.raw", length, n)
        trials.append(Trial(entry["id"], eeg, env, int(entry["attended_index"])))
    try:
        return Bundle(man["rate_hz"], c, n, trials, man.get("meta", {}))
    except (ShapeError, ValueError) as exc:
        raise CorruptBundleError("manifest", str(exc)) from None


@dataclass(frozen=True)
class WindowSpec:
    length_seconds: float
    hop_seconds: float | None = None

    def __post_init__(self) -> None:
        if not self.length_seconds > 0 or (self.hop_seconds is not None and not self.hop_seconds > 0):
            raise ValueError("window length and hop must be positive")

    @property
    def hop(self) -> float:
        return self.length_seconds if self.hop_seconds is None else self.hop_seconds

    def samples(self, rate_hz: float) -> tuple[int, int]:
        out = []
        for sec in (self.length_seconds, self.hop):
            n = round(sec * rate_hz)
            if abs(n - sec * rate_hz) > 1e-9 or n < 1:
                raise ValueError(f"{sec} s is not a whole number of samples at {rate_hz} Hz")
            out.append(int(n))
        return out[0], out[1]


@dataclass(frozen=True)
class Segment:
    eeg: np.ndarray
    env: EnvelopeSet
    trial_id: str
    window_index: int
    start: int = 0

    @property
    def n_samples(self) -> int:
        return self.eeg.shape[0]


@dataclass(frozen=True)
class SegmentSet:
    segments: tuple[Segment, ...]
    n_skipped_trials: int = 0
    flagged_channels: int = 0

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def __getitem__(self, i):
        return self.segments[i]

    @property
    def trial_ids(self) -> list[str]:
        return sorted({s.trial_id for s in self.segments})

    def select(self, trial_ids: Iterable[str]) -> list[Segment]:
        keep = set(trial_ids)
        return [s for s in self.segments if s.trial_id in keep]


def n_windows(n_samples: int, length: int, hop: int, trim: int) -> int:
    usable = n_samples - 2 * trim
    if usable < length:
        return 0
    return (usable - length) // hop + 1


def segment(bundle: Bundle, spec: WindowSpec, edge_trim_seconds: float = 0.5) -> SegmentSet:
    """Cut every trial into fixed windows, dropping ``edge_trim_seconds`` at both ends."""
    length, hop = spec.samples(bundle.rate_hz)
    trim = int(round(edge_trim_seconds * bundle.rate_hz))
    segs, skipped = [], 0
    for t in bundle.trials:
        count = n_windows(t.n_samples, length, hop, trim)
        if count == 0:
            skipped += 1
            continue
        eeg = np.asarray(t.eeg, dtype=np.float64)
        env = np.asarray(t.envelopes, dtype=np.float64)
        for w in range(count):
            a = trim + w * hop
            segs.append(Segment(eeg[a:a + length].copy(), EnvelopeSet(env[a:a + length].copy(), t.attended_index),
                                t.trial_id, w, a))
    if skipped:
        warnings.warn(f"{skipped} trial(s) too short for {spec.length_seconds} s windows were skipped")
    if not segs:
        raise InsufficientLengthError("every trial is too short for the requested windows")
    return SegmentSet(tuple(segs), skipped)


NORMALIZE_POLICIES = ("per_trial_zscore", "none")


def normalize(segments: SegmentSet | Sequence[Segment], policy: str = "per_trial_zscore") -> SegmentSet:
    """Z-score each EEG channel with statistics pooled over its trial's segments.

    Envelopes are left alone; every correlation downstream is affine invariant.
    """
    segset = segments if isinstance(segments, SegmentSet) else SegmentSet(tuple(segments))
    if len(segset) == 0:
        raise ValueError("nothing to normalize")
    if policy == "none":
        return segset
    if policy != "per_trial_zscore":
        raise ValueError(f"unknown policy {policy!r}; choose from {NORMALIZE_POLICIES}")
    by_trial: dict[str, list[int]] = {}
    for i, s in enumerate(segset.segments):
        by_trial.setdefault(s.trial_id, []).append(i)
    out = list(segset.segments)
    flagged = 0
    for tid, idx in by_trial.items():
        pooled = np.concatenate([segset.segments[i].eeg for i in idx], axis=0)
        mu = pooled.mean(axis=0)
        sd = pooled.std(axis=0)
        dead = sd <= 1e-12 * np.maximum(1.0, np.abs(mu))
        if dead.any():
            flagged += int(dead.sum())
            warnings.warn(f"trial {tid}: {int(dead.sum())} constant channel(s) zero-filled")
        sd = np.where(dead, 1.0, sd)
        for i in idx:
            z = (segset.segments[i].eeg - mu) / sd
            z[:, dead] = 0.0
            out[i] = replace(segset.segments[i], eeg=z)
    return SegmentSet(tuple(out), segset.n_skipped_trials, segset.flagged_channels + flagged)
