"""Experiment grid: decoder family x loss x seed x fold, with cached, resumable cells."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any


from . import decoder as dec
from . import signal as sig
from .correlation import LossKind, NEG_SUM
from .dataset import Bundle, SegmentSet, WindowSpec, load_bundle, normalize, save_bundle, segment
from .metrics import (
    Comparison,
    MetricRow,
    MetricsTable,
    METRICS,
    paired_test,
    pool,
    report,
    sign_test,
    trend_fit,
)
from .correlation import CorrelationRecord
from .synth import SynthConfig, synth_bundle
from .train import TrainConfig, TrainHistory, loto_folds, train_model

log = logging.getLogger(__name__)

OUT_ENV = "AADLAB_OUT"


class SpecError(ValueError):
    """Experiment spec could not be parsed or validated (exit code 2)."""


@dataclass
class ExperimentSpec:
    name: str = "default"
    synth: dict = field(default_factory=dict)
    bundle: str | None = None
    decoders: list = field(default_factory=lambda: [{"family": "linear_lagged"}])
    train: dict = field(default_factory=dict)
    train_window_seconds: float = 1.0
    eval_windows: list = field(default_factory=lambda: [1.0, 10.0])
    losses: list = field(default_factory=lambda: [LossKind.PCC.value, LossKind.DELTA_PCC.value])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    n_folds: int = 4
    edge_trim_seconds: float = 0.5
    normalize: str = "per_trial_zscore"
    out: str | None = None

    def __post_init__(self) -> None:
        if not self.seeds:
            raise SpecError("at least one seed is required")
        if not self.losses:
            raise SpecError("at least one loss kind is required")
        for loss in self.losses:
            if loss != NEG_SUM:
                try:
                    LossKind(loss)
                except ValueError:
                    raise SpecError(f"unknown loss {loss!r}") from None
        if not self.decoders:
            raise SpecError("at least one decoder is required")
        try:
            self.synth_config()
            for d in self.decoders:
                dec.DecoderConfig(**{**d, "channels": 1})
            self.train_config(self.losses[0], 0)
            for w in [self.train_window_seconds] + list(self.eval_windows):
                WindowSpec(float(w))
        except (TypeError, ValueError) as exc:
            raise SpecError(str(exc)) from None

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentSpec:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise SpecError(f"unknown spec keys: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> ExperimentSpec:
        text = Path(path).read_text(encoding="utf-8")
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        if not isinstance(d, dict):
            raise SpecError(f"{path}: line 1: spec must be a JSON object")
        return cls.from_dict(d)

    def synth_config(self) -> SynthConfig:
        return SynthConfig(**self.synth)

    def train_config(self, loss: str, seed: int) -> TrainConfig:
        return TrainConfig(**{**self.train, "loss": loss, "seed": int(seed), "experimental": loss == NEG_SUM})

    def echo(self) -> dict:
        """Spec with every default filled in, plus the fixed preprocessing constants."""
        d = asdict(self)
        d["synth"] = self.synth_config().to_dict()
        d["train"] = {k: v for k, v in asdict(self.train_config(self.losses[0], 0)).items()
                      if k not in ("loss", "seed", "experimental")}
        d["decoders"] = [asdict(dec.DecoderConfig(**{**x, "channels": self.synth_config().n_channels}))
                         for x in self.decoders]
        d.pop("out")
        d["pipeline"] = {
            "eeg_band_hz": list(sig.EEG_BAND_HZ),
            "eeg_filter": "butterworth order 4, zero-phase",
            "rate_hz": sig.EEG_RATE_HZ,
            "n_subbands": sig.N_SUBBANDS,
            "subband_range_hz": list(sig.SUBBAND_RANGE_HZ),
            "erb_spacing": "glasberg-moore",
            "power_law_exponent": sig.POWER_LAW_EXPONENT,
        }
        return d


@dataclass(frozen=True)
class Cell:
    decoder: dict
    loss: str
    seed: int
    fold: int
    train_ids: tuple
    val_ids: tuple
    test_ids: tuple

    @property
    def unit(self) -> str:
        return f"s{self.seed}f{self.fold}"

    def label(self) -> str:
        return f"{self.decoder['family']}_{self.loss}_{self.unit}"


def _digest(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()


def cell_key(spec: ExperimentSpec, cell: Cell, manifest_text: str) -> str:
    return _digest({
        "cell": asdict(cell),
        "train": spec.echo()["train"],
        "train_window_seconds": spec.train_window_seconds,
        "eval_windows": sorted(float(w) for w in spec.eval_windows),
        "edge_trim_seconds": spec.edge_trim_seconds,
        "normalize": spec.normalize,
        "manifest": hashlib.sha256(manifest_text.encode("utf-8")).hexdigest(),
    })


def plan(spec: ExperimentSpec, bundle: Bundle) -> list[Cell]:
    cells = []
    for d in spec.decoders:
        dcfg = {**d, "channels": bundle.n_channels}
        for loss in spec.losses:
            for seed in spec.seeds:
                for k, f in enumerate(loto_folds(bundle.trial_ids, spec.n_folds, seed)):
                    cells.append(Cell(dcfg, loss, int(seed), k, f.train, f.val, f.test))
    return cells


def prepare_bundle(spec: ExperimentSpec, out: Path) -> Bundle:
    if spec.bundle:
        return load_bundle(spec.bundle)
    target = out / "bundle"
    fresh = synth_bundle(spec.synth_config())
    if not (target / "manifest").exists() or (target / "manifest").read_text(encoding="utf-8") != fresh.manifest_text():
        save_bundle(fresh, target)
    return load_bundle(target)


def _segments(spec: ExperimentSpec, bundle: Bundle) -> dict[float, SegmentSet]:
    windows = sorted({float(spec.train_window_seconds), *map(float, spec.eval_windows)})
    return {w: normalize(segment(bundle, WindowSpec(w), spec.edge_trim_seconds), spec.normalize) for w in windows}


# per-process state for worker pools
_CTX: dict = {}


def _init_worker(spec_dict: dict, bundle_dir: str | None, bundle: Bundle | None) -> None:
    spec = ExperimentSpec.from_dict(spec_dict)
    b = bundle if bundle is not None else load_bundle(bundle_dir)
    _CTX.update(spec=spec, bundle=b, segments=_segments(spec, b))


def _records_to_json(records: list[CorrelationRecord]) -> list:
    return [[repr(r.rho_a), [repr(u) for u in r.rho_u]] for r in records]


def _records_from_json(data: list) -> list[CorrelationRecord]:
    return [CorrelationRecord.from_values(float(a), [float(u) for u in us]) for a, us in data]


def run_cell(cell: Cell, cell_dir: str, key: str) -> dict:
    """Train and score one cell; writes params, history and records, marker file last."""
    from .metrics import score

    spec: ExperimentSpec = _CTX["spec"]
    segs: dict[float, SegmentSet] = _CTX["segments"]
    d = Path(cell_dir)
    d.mkdir(parents=True, exist_ok=True)
    cfg = dec.DecoderConfig(**{**cell.decoder, "init_seed": cell.seed})
    tcfg = spec.train_config(cell.loss, cell.seed)
    tw = float(spec.train_window_seconds)
    params, history = train_model(cfg, tcfg, segs[tw].select(cell.train_ids), segs[tw].select(cell.val_ids))
    dec.save_params(params, cfg, d / "params.bin")
    (d / "history.tsv").write_text(history.to_text(), encoding="utf-8")
    result = {"key": key, "cell": asdict(cell), "windows": {}}
    for w in sorted(map(float, spec.eval_windows)):
        records, excluded = score(params, cfg, segs[w].select(cell.test_ids))
        result["windows"][repr(w)] = {"records": _records_to_json(records), "excluded": excluded}
    tmp = d / "result.json.tmp"
    tmp.write_text(json.dumps(result, sort_keys=True), encoding="utf-8")
    os.replace(tmp, d / "result.json")
    return result


def _run_cell_safe(args):
    cell, cell_dir, key = args
    try:
        return run_cell(cell, cell_dir, key)
    except Exception as exc:  # one failed cell must not sink the grid
        log.error("cell %s failed: %s", cell.label(), exc)
        return {"key": key, "cell": asdict(cell), "error": f"{type(exc).__name__}: {exc}"}


def _cached(cell_dir: Path, key: str) -> dict | None:
    p = cell_dir / "result.json"
    if not p.exists():
        return None
    try:
        res = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return None
    return res if res.get("key") == key and "error" not in res else None


@dataclass
class RunOutcome:
    out: Path
    report_dir: Path
    n_cells: int
    n_failed: int
    n_cached: int
    tables: list[MetricsTable]
    tests: list[Comparison]
    trends: dict


def run_experiment(spec: ExperimentSpec, out=None, jobs: int = 1, resume: bool = True) -> RunOutcome:
    out = Path(out or spec.out or os.environ.get(OUT_ENV, "runs") + f"/{spec.name}")
    out.mkdir(parents=True, exist_ok=True)
    bundle = prepare_bundle(spec, out)
    manifest_text = bundle.manifest_text()
    cells = plan(spec, bundle)
    keys = [cell_key(spec, c, manifest_text) for c in cells]
    dirs = [out / "cells" / f"{c.label()}_{k[:12]}" for c, k in zip(cells, keys)]

    results: list[dict | None] = [(_cached(d, k) if resume else None) for d, k in zip(dirs, keys)]
    todo = [i for i, r in enumerate(results) if r is None]
    n_cached = len(cells) - len(todo)
    if todo:
        args = [(cells[i], str(dirs[i]), keys[i]) for i in todo]
        if jobs <= 1:
            _init_worker(asdict(spec), None, bundle)
            fresh = [_run_cell_safe(a) for a in args]
        else:
            with ProcessPoolExecutor(jobs, initializer=_init_worker,
                                     initargs=(asdict(spec), None, bundle)) as pool_:
                fresh = list(pool_.map(_run_cell_safe, args))
        for i, r in zip(todo, fresh):
            results[i] = r

    failed = [r for r in results if "error" in r]
    tables, tests, trends = summarize(spec, cells, results)
    # cache hits stay out of the report so reruns regenerate it byte for byte
    notes = [f"cells: {len(cells)} total, {len(failed)} failed"]
    notes += [f"FAILED {Cell(**r['cell']).label()}: {r['error']}" for r in failed]
    report_dir = out / "report"
    if tables:
        report(tables, tests, trends, report_dir, config_echo=spec.echo(), notes=notes)
    return RunOutcome(out, report_dir, len(cells), len(failed), n_cached, tables, tests, trends)


def summarize(spec: ExperimentSpec, cells: list[Cell], results: list[dict]):
    """Pooled tables per decoder family, paired tests per (family, window, metric), trend fits."""
    per_family: dict[str, list[MetricsTable]] = {}
    units: dict[tuple, MetricRow] = {}
    for cell, res in zip(cells, results):
        if "error" in res:
            continue
        fam = cell.decoder["family"]
        t = MetricsTable()
        for w_repr, payload in sorted(res["windows"].items(), key=lambda kv: float(kv[0])):
            w = float(w_repr)
            row = MetricRow(fam, cell.loss, w, unit=cell.unit, n_excluded=payload["excluded"])
            row.add(_records_from_json(payload["records"]))
            if row.n_segments == 0:
                continue
            t.rows.append(row)
            units[(fam, cell.loss, w, cell.unit)] = row
        per_family.setdefault(fam, []).append(t)
    tables = [pool(ts) for ts in per_family.values()]

    tests: list[Comparison] = []
    base, prop = LossKind.PCC.value, LossKind.DELTA_PCC.value
    for fam in per_family:
        for w in sorted(map(float, spec.eval_windows)):
            shared = sorted(u for (f, l, ww, u) in units if f == fam and l == prop and ww == w
                            and (fam, base, w, u) in units)
            if len(shared) < 6:
                continue
            for metric in METRICS:
                a = [units[(fam, prop, w, u)].metric(metric) for u in shared]
                b = [units[(fam, base, w, u)].metric(metric) for u in shared]
                tests.append(Comparison(fam, w, metric, paired_test(a, b)))
                tests.append(Comparison(fam, w, metric, sign_test(a, b)))

    trends = {}
    rows = [units[k] for k in sorted(units)]
    acc = [r.accuracy for r in rows]
    for name, attr in (("accuracy_vs_rho_a", "mean_rho_a"), ("accuracy_vs_delta", "mean_delta")):
        try:
            trends[name] = trend_fit([getattr(r, attr) for r in rows], acc)
        except ValueError as exc:
            log.warning("trend %s skipped: %s", name, exc)
    return tables, tests, trends


def load_history(cell_dir) -> TrainHistory:
    return TrainHistory.from_text((Path(cell_dir) / "history.tsv").read_text(encoding="utf-8"))
