"""Table-style metric aggregation, paired significance tests, trend fits and report files."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats
from scipy.stats import rankdata

from . import decoder as dec
from .correlation import CorrelationRecord, LossKind, correlate_all
from .errors import (
    DegenerateRegressorError,
    DegenerateVarianceError,
    EvaluationError,
    InsufficientPairsError,
)

METRICS = ("accuracy", "mean_delta", "mean_rho_a", "mean_rho_u")
METRIC_TITLES = {
    "accuracy": "Accuracy",
    "mean_delta": "dPCC",
    "mean_rho_a": "attended PCC",
    "mean_rho_u": "unattended PCC",
}
STAR_LEVELS = ((0.001, "***"), (0.01, "**"), (0.05, "*"))


@dataclass
class MetricRow:
    """Aggregates for one (family, loss, window, condition) cell.

    Running sums are kept so rows from several folds/seeds pool exactly.
    """

    family: str
    loss: str
    window_seconds: float
    condition: str = "synthetic"
    unit: str = "all"
    n_segments: int = 0
    n_excluded: int = 0
    n_correct: int = 0
    sum_rho_a: float = 0.0
    sum_rho_u: float = 0.0
    n_rho_u: int = 0
    sum_delta: float = 0.0
    per_unit: dict[str, "MetricRow"] = field(default_factory=dict, repr=False)

    @property
    def key(self) -> tuple:
        return (self.family, self.loss, self.window_seconds, self.condition)

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n_segments

    @property
    def mean_rho_a(self) -> float:
        return self.sum_rho_a / self.n_segments

    @property
    def mean_rho_u(self) -> float:
        return self.sum_rho_u / self.n_rho_u

    @property
    def mean_delta(self) -> float:
        return self.sum_delta / self.n_segments

    def add(self, records: Sequence[CorrelationRecord]) -> None:
        for r in records:
            self.n_segments += 1
            self.n_correct += int(r.correct)
            self.sum_rho_a += r.rho_a
            self.sum_rho_u += sum(r.rho_u)
            self.n_rho_u += len(r.rho_u)
            self.sum_delta += r.delta

    def metric(self, name: str) -> float:
        return getattr(self, name)


@dataclass
class MetricsTable:
    rows: list[MetricRow] = field(default_factory=list)

    def get(self, family: str, loss: str, window_seconds: float, condition: str = "synthetic") -> MetricRow:
        for r in self.rows:
            if r.key == (family, loss, window_seconds, condition):
                return r
        raise KeyError((family, loss, window_seconds, condition))

    @property
    def windows(self) -> list[float]:
        return sorted({r.window_seconds for r in self.rows})

    @property
    def conditions(self) -> list[str]:
        return list(dict.fromkeys(r.condition for r in self.rows))

    @property
    def families(self) -> list[str]:
        return list(dict.fromkeys(r.family for r in self.rows))

    @property
    def losses(self) -> list[str]:
        order = [k.value for k in LossKind]
        seen = list(dict.fromkeys(r.loss for r in self.rows))
        return sorted(seen, key=lambda s: order.index(s) if s in order else len(order))


def score(params, config: dec.DecoderConfig, segments: Sequence) -> tuple[list[CorrelationRecord], int]:
    """Correlation records for every segment; degenerate segments are skipped and counted."""
    records, excluded = [], 0
    if len(segments) == 0:
        return records, 0
    x = np.stack([np.asarray(s.eeg, dtype=np.float64) for s in segments])
    y = dec.forward_batch(params, config, x)
    for yy, s in zip(y, segments):
        try:
            records.append(correlate_all(yy, s.env))
        except DegenerateVarianceError:
            excluded += 1
    return records, excluded


def evaluate(
    params,
    config: dec.DecoderConfig,
    segments: Mapping[float, Sequence],
    *,
    loss: str = "",
    condition: str = "synthetic",
    unit: str = "all",
) -> MetricsTable:
    """Score ``segments[window_seconds]`` for each window length into one table row each."""
    table = MetricsTable()
    for window in sorted(segments):
        records, excluded = score(params, config, segments[window])
        if not records:
            raise EvaluationError(f"all {excluded} segments at {window} s were degenerate")
        row = MetricRow(config.family, str(loss), float(window), condition, unit, n_excluded=excluded)
        row.add(records)
        table.rows.append(row)
    return table


def pool(tables: Iterable[MetricsTable]) -> MetricsTable:
    """Merge rows sharing (family, loss, window, condition); source rows become ``per_unit``."""
    pooled: dict[tuple, MetricRow] = {}
    for t in tables:
        for r in t.rows:
            p = pooled.get(r.key)
            if p is None:
                p = pooled[r.key] = MetricRow(r.family, r.loss, r.window_seconds, r.condition)
            p.n_segments += r.n_segments
            p.n_excluded += r.n_excluded
            p.n_correct += r.n_correct
            p.sum_rho_a += r.sum_rho_a
            p.sum_rho_u += r.sum_rho_u
            p.n_rho_u += r.n_rho_u
            p.sum_delta += r.sum_delta
            p.per_unit[r.unit] = r
    return MetricsTable(list(pooled.values()))


@dataclass(frozen=True)
class PairedTestResult:
    statistic: float
    p_value: float
    n_pairs: int
    stars: str
    n_nonzero: int = 0
    method: str = "wilcoxon"


def stars_for(p: float) -> str:
    for level, mark in STAR_LEVELS:
        if p < level:
            return mark
    return "ns"


def _exact_upper_lower(ranks2: np.ndarray, w2: int) -> tuple[float, float]:
    """P(W+ <= w), P(W+ >= w) under the sign-flip null; ranks are doubled to be integral."""
    total = int(ranks2.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in ranks2:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    denom = 2 ** len(ranks2)
    lower = sum(counts[: w2 + 1]) / denom
    upper = sum(counts[w2:]) / denom
    return float(lower), float(upper)


def paired_test(per_unit_a: Sequence[float], per_unit_b: Sequence[float]) -> PairedTestResult:
    """Two-sided Wilcoxon signed-rank test on ``a - b``.

    Zero differences are dropped. Exact null distribution for up to 25
    non-zero pairs, normal approximation with tie and continuity
    correction above. ``statistic`` is W+ - W-, so swapping the arguments
    flips its sign.
    """
    a = np.asarray(per_unit_a, dtype=np.float64)
    b = np.asarray(per_unit_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-D and of equal length")
    if a.size < 6:
        raise InsufficientPairsError(f"need at least 6 pairs, got {a.size}")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        return PairedTestResult(0.0, 1.0, a.size, "ns", 0)
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    if n <= 25:
        lower, upper = _exact_upper_lower(np.rint(2 * ranks).astype(int), int(round(2 * w_plus)))
        p = min(1.0, 2.0 * min(lower, upper))
    else:
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
        z = max(abs(w_plus - mean) - 0.5, 0.0) / math.sqrt(var)
        p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    return PairedTestResult(w_plus - w_minus, p, a.size, stars_for(p), n)


def sign_test(per_unit_a: Sequence[float], per_unit_b: Sequence[float]) -> PairedTestResult:
    """Two-sided exact sign test; statistic is (#a>b) - (#a<b)."""
    d = np.asarray(per_unit_a, dtype=np.float64) - np.asarray(per_unit_b, dtype=np.float64)
    pos, neg = int((d > 0).sum()), int((d < 0).sum())
    if pos + neg == 0:
        return PairedTestResult(0.0, 1.0, d.size, "ns", 0, "sign")
    p = float(stats.binomtest(pos, pos + neg, 0.5, alternative="two-sided").pvalue)
    return PairedTestResult(float(pos - neg), p, d.size, stars_for(p), pos + neg, "sign")


@dataclass(frozen=True)
class TrendFit:
    slope: float
    intercept: float
    r_squared: float
    n: int = 0


def trend_fit(x: Sequence[float], y: Sequence[float]) -> TrendFit:
    """Ordinary least-squares line through (x, y)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and of equal length")
    if x.size < 3:
        raise ValueError("need at least 3 points")
    xc = x - x.mean()
    sxx = xc @ xc
    if sxx <= 0 or sxx <= (np.finfo(float).eps * x.size * np.abs(x).max()) ** 2:
        raise DegenerateRegressorError("x is constant")
    slope = (xc @ (y - y.mean())) / sxx
    intercept = y.mean() - slope * x.mean()
    resid = y - (slope * x + intercept)
    ss_res = resid @ resid
    ss_tot = (y - y.mean()) @ (y - y.mean())
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return TrendFit(float(slope), float(intercept), float(min(max(r2, 0.0), 1.0)), int(x.size))


def relative_improvement(table: MetricsTable, metric: str = "mean_delta",
                         baseline: str = LossKind.PCC.value, proposed: str = LossKind.DELTA_PCC.value) -> float:
    """Mean over (family, window, condition) of (proposed - baseline) / |baseline|."""
    ratios = []
    for fam in table.families:
        for w in table.windows:
            for cond in table.conditions:
                try:
                    b = table.get(fam, baseline, w, cond).metric(metric)
                    p = table.get(fam, proposed, w, cond).metric(metric)
                except KeyError:
                    continue
                if b != 0:
                    ratios.append((p - b) / abs(b))
    return float(np.mean(ratios)) if ratios else float("nan")


@dataclass(frozen=True)
class Comparison:
    family: str
    window_seconds: float
    metric: str
    result: PairedTestResult
    condition: str = "synthetic"


def _fmt_window(w: float) -> str:
    return f"{w:g} s"


def render_table(table: MetricsTable, tests: Sequence[Comparison] = ()) -> str:
    """Plain-text table grouped as metric block x model x loss, columns window x condition."""
    tests = [c for c in tests if c.result.method == "wilcoxon"]
    star = {(c.family, c.window_seconds, c.metric, c.condition): c.result.stars for c in tests}
    cols = [(w, c) for w in table.windows for c in table.conditions]
    header = ["Metric", "Model", "Loss"] + [f"{_fmt_window(w)} {c}" for w, c in cols]
    lines = []
    body = []
    for metric in METRICS:
        first_metric = True
        for fam in table.families:
            first_fam = True
            for loss in table.losses:
                cells = []
                for w, c in cols:
                    try:
                        v = table.get(fam, loss, w, c).metric(metric)
                    except KeyError:
                        cells.append("-")
                        continue
                    s = star.get((fam, w, metric, c), "ns") if loss == LossKind.DELTA_PCC.value else "ns"
                    cells.append(f"{v:.4f}" + ("" if s == "ns" else s))
                body.append([METRIC_TITLES[metric] if first_metric else "",
                             fam if first_fam else "", loss] + cells)
                first_metric = first_fam = False
        body.append(None)
    widths = [max(len(r[i]) for r in [header] + [b for b in body if b]) for i in range(len(header))]
    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
    lines.append(rule)
    lines.append("  ".join(h.ljust(wd) for h, wd in zip(header, widths)))
    lines.append(rule)
    for b in body:
        lines.append(rule if b is None else "  ".join(v.ljust(wd) for v, wd in zip(b, widths)).rstrip())
    if tests:
        lines.append("* p < 0.05, ** p < 0.01, *** p < 0.001 (paired Wilcoxon signed-rank, dPCC loss vs PCC loss)")
    return "\n".join(lines) + "\n"


CSV_FIELDS = ["family", "loss", "window_seconds", "condition", "unit", "accuracy", "mean_delta",
              "mean_rho_a", "mean_rho_u", "n_segments", "n_excluded"]


def _csv_row(r: MetricRow, unit: str) -> list:
    return [r.family, r.loss, repr(r.window_seconds), r.condition, unit, repr(r.accuracy), repr(r.mean_delta),
            repr(r.mean_rho_a), repr(r.mean_rho_u), r.n_segments, r.n_excluded]


def render_csv(tables: Sequence[MetricsTable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for t in tables:
        for r in t.rows:
            w.writerow(_csv_row(r, r.unit))
            for unit in sorted(r.per_unit):
                w.writerow(_csv_row(r.per_unit[unit], unit))
    return buf.getvalue()


def read_csv(path) -> list[dict]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            for k in ("window_seconds", "accuracy", "mean_delta", "mean_rho_a", "mean_rho_u"):
                rec[k] = float(rec[k])
            for k in ("n_segments", "n_excluded"):
                rec[k] = int(rec[k])
            out.append(rec)
    return out


def scatter_points(tables: Sequence[MetricsTable]) -> list[MetricRow]:
    """Finest-grained rows available: per-unit rows when present, else the rows themselves."""
    pts = []
    for t in tables:
        for r in t.rows:
            if r.per_unit:
                pts.extend(r.per_unit[u] for u in sorted(r.per_unit))
            else:
                pts.append(r)
    return pts


def report(
    tables: Sequence[MetricsTable],
    tests: Sequence[Comparison],
    trends: Mapping[str, TrendFit],
    path,
    config_echo: Mapping | None = None,
    notes: Sequence[str] = (),
) -> dict[str, Path]:
    """Write metrics.csv, table.txt, scatter files, tests, trends and a summary into ``path``."""
    if not tables:
        raise ValueError("nothing to report")
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    files = {}

    def put(name: str, text: str) -> None:
        p = root / name
        p.write_text(text, encoding="utf-8")
        files[name] = p

    put("metrics.csv", render_csv(tables))
    put("table.txt", "".join(render_table(t, tests) for t in tables))
    pts = scatter_points(tables)
    for name, attr in (("scatter_acc_vs_rho_a.csv", "mean_rho_a"), ("scatter_acc_vs_delta.csv", "mean_delta")):
        rows = [f"{attr},accuracy"] + [f"{getattr(p, attr)!r},{p.accuracy!r}" for p in pts]
        put(name, "\n".join(rows) + "\n")
    test_lines = ["family,window_seconds,condition,metric,method,statistic,p_value,n_pairs,n_nonzero,stars"]
    test_lines += [
        f"{c.family},{c.window_seconds!r},{c.condition},{c.metric},{c.result.method},{c.result.statistic!r},"
        f"{c.result.p_value!r},{c.result.n_pairs},{c.result.n_nonzero},{c.result.stars}"
        for c in tests
    ]
    put("tests.csv", "\n".join(test_lines) + "\n")
    trend_lines = ["relation,slope,intercept,r_squared,n"]
    trend_lines += [f"{k},{v.slope!r},{v.intercept!r},{v.r_squared!r},{v.n}" for k, v in trends.items()]
    put("trends.csv", "\n".join(trend_lines) + "\n")

    summary = [f"relative dPCC improvement (dPCC loss vs PCC loss, mean over conditions): "
               f"{relative_improvement(t):.4%}" for t in tables]
    for k, v in trends.items():
        summary.append(f"trend {k}: R^2 = {v.r_squared:.4f} (reference R^2 > 0.5 for accuracy vs dPCC, not a gate)")
    summary.extend(notes)
    put("summary.txt", "\n".join(summary) + "\n")
    if config_echo is not None:
        put("config.json", json.dumps(config_echo, indent=2, sort_keys=True) + "\n")
    return files
