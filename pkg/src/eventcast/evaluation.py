"""Precision scoring, synthetic planted-dependency streams, sweeps and plot tables."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .correlation import active_set, symbols_for_step
from .ingest import ContextVector, EventVector
from .prediction import Prediction

logger = logging.getLogger(__name__)

GRANULARITIES = ("event", "symbol")


@dataclass
class PrecisionReport:
    """Running TP/FP/FN totals plus windowed precision.

    ``precision`` is ``None`` while nothing has been predicted. Recall is an
    extra guard against configurations that predict everything.
    """

    window_length: int = 8000
    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0
    granularity: str = "event"
    labels: dict = field(default_factory=dict)
    windows: list = field(default_factory=list)

    @property
    def predictions(self) -> int:
        return self.true_positives + self.false_positives

    @property
    def precision(self) -> Optional[float]:
        if self.predictions == 0:
            return None
        return self.true_positives / self.predictions

    @property
    def recall(self) -> Optional[float]:
        total = self.true_positives + self.false_negatives
        return None if total == 0 else self.true_positives / total

    def to_dict(self) -> dict:
        return {
            "labels": dict(sorted(self.labels.items())),
            "granularity": self.granularity,
            "window_length": self.window_length,
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "precision": self.precision,
            "recall": self.recall,
            "windows": self.windows,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


def batch_counts(predictions: Iterable[Prediction], actual, granularity: str = "event",
                 k_max: int = 1) -> tuple:
    """``(tp, fp, fn)`` for one batch of same-horizon forecasts against the realized step."""
    preds = list(predictions)
    if granularity == "event":
        predicted = set()
        for pr in preds:
            predicted |= pr.symbol
        actual_events = active_set(actual)
        return (len(predicted & actual_events), len(predicted - actual_events),
                len(actual_events - predicted))
    if granularity == "symbol":
        realized = set(symbols_for_step(actual, k_max))
        predicted = {pr.symbol for pr in preds}
        return (len(predicted & realized), len(predicted - realized), len(realized - predicted))
    raise ValueError(f"granularity must be one of {GRANULARITIES}, got {granularity!r}")


def score_step(report: PrecisionReport, predictions: Iterable[Prediction], actual,
               k_max: int = 1) -> PrecisionReport:
    """Score forecasts issued ``h`` steps ago for the step that just happened."""
    tp, fp, fn = batch_counts(predictions, actual, report.granularity, k_max)
    report.true_positives += tp
    report.false_positives += fp
    report.false_negatives += fn
    return report


class PrecisionTracker:
    """Holds issued forecasts until their target step and scores them there.

    Per-step counts are kept so precision can be reported over tumbling (the
    default) or sliding windows of ``window_length`` steps.
    """

    def __init__(self, l: int = 1, granularity: str = "event", k_max: int = 1,
                 window_length: int = 8000, sliding: bool = False, stride: int = 1):
        if granularity not in GRANULARITIES:
            raise ValueError(f"granularity must be one of {GRANULARITIES}, got {granularity!r}")
        self.l = l
        self.k_max = k_max
        self.window_length = window_length
        self.sliding = sliding
        self.stride = stride
        self.report = PrecisionReport(window_length=window_length, granularity=granularity)
        self.pending: dict = defaultdict(list)
        self.steps: list = []
        self.tp: list = []
        self.fp: list = []

    def issue(self, t: int, preds: Sequence[Prediction]) -> None:
        by_h = defaultdict(list)
        for pr in preds:
            by_h[pr.horizon].append(pr)
        for h in range(1, self.l + 1):
            self.pending[t + h].append(by_h.get(h, []))

    def score(self, t: int, actual) -> None:
        tp = fp = 0
        for batch in self.pending.pop(t, []):
            a, b, c = batch_counts(batch, actual, self.report.granularity, self.k_max)
            tp += a
            fp += b
            self.report.false_negatives += c
        self.report.true_positives += tp
        self.report.false_positives += fp
        self.steps.append(t)
        self.tp.append(tp)
        self.fp.append(fp)

    def windows(self) -> list:
        if not self.steps:
            return []
        tp = np.concatenate([[0], np.cumsum(self.tp)])
        fp = np.concatenate([[0], np.cumsum(self.fp)])
        total = len(self.steps)
        w = self.window_length
        step = self.stride if self.sliding else w
        starts = range(0, max(total - w, 0) + 1, step) if self.sliding else range(0, total, step)
        out = []
        for s in starts:
            e = min(s + w, total)
            wtp, wfp = int(tp[e] - tp[s]), int(fp[e] - fp[s])
            out.append({
                "start": int(self.steps[s]),
                "end": int(self.steps[e - 1]),
                "true_positives": wtp,
                "false_positives": wfp,
                "precision": None if wtp + wfp == 0 else wtp / (wtp + wfp),
            })
        return out

    def finish(self, labels: Optional[dict] = None) -> PrecisionReport:
        self.report.windows = self.windows()
        if labels:
            self.report.labels = dict(labels)
        return self.report


# -- synthetic data ---------------------------------------------------------------


@dataclass(frozen=True)
class PlantedRule:
    """``cause`` fully active at t makes ``effect`` fire at ``t + delay`` with probability ``q``."""

    cause: frozenset
    effect: int
    delay: int = 1
    q: float = 1.0

    def __post_init__(self):
        if self.delay < 1:
            raise ValueError("planted rule delay must be >= 1")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("planted rule probability must be in [0, 1]")


@dataclass
class SynthConfig:
    n: int = 2
    T: int = 10000
    base_rates: Sequence[float] = (0.2, 0.0)
    planted_rules: Sequence[PlantedRule] = ()
    numeric_mode: bool = False
    seed: int = 0
    noise_sigma: float = 1.0
    shift: float = 8.0
    baseline: float = 0.0

    def __post_init__(self):
        rates = self.base_rates
        if np.isscalar(rates):
            rates = [float(rates)] * self.n
        self.base_rates = tuple(float(r) for r in rates)
        if len(self.base_rates) != self.n:
            raise ValueError(f"need {self.n} base rates, got {len(self.base_rates)}")
        if any(not 0.0 <= r <= 1.0 for r in self.base_rates):
            raise ValueError("base rates must be probabilities")
        for rule in self.planted_rules:
            if rule.effect >= self.n or any(i >= self.n for i in rule.cause):
                raise ValueError(f"planted rule {rule} refers to a stream beyond n={self.n}")


@dataclass
class SynthResult:
    events: list
    numeric: Optional[list]
    truth: dict


def generate_synthetic(cfg: SynthConfig) -> SynthResult:
    """Draw an event stream (and optionally numeric streams) from ``cfg``.

    Events and numeric noise use independent generators derived from the
    seed, so switching ``numeric_mode`` does not change the event stream.
    """
    rng = np.random.default_rng([cfg.seed, 0])
    base = np.asarray(cfg.base_rates)
    flags = np.zeros((cfg.T, cfg.n), dtype=np.int8)
    firings = []
    for t in range(cfg.T):
        flags[t] |= (rng.random(cfg.n) < base).astype(np.int8)
        active = frozenset(np.flatnonzero(flags[t]).tolist())
        for idx, rule in enumerate(cfg.planted_rules):
            if rule.cause <= active and rng.random() < rule.q:
                target = t + rule.delay
                if target < cfg.T:
                    flags[target, rule.effect] = 1
                    firings.append({"rule": idx, "cause_step": t, "effect_step": target})
    events = [EventVector(t=t, flags=tuple(int(v) for v in flags[t])) for t in range(cfg.T)]
    numeric = None
    if cfg.numeric_mode:
        noise = np.random.default_rng([cfg.seed, 1]).normal(cfg.baseline, cfg.noise_sigma, (cfg.T, cfg.n))
        values = noise + cfg.shift * cfg.noise_sigma * flags
        numeric = [ContextVector(t=t, values=tuple(float(v) for v in values[t]), stamp=str(t))
                   for t in range(cfg.T)]
    truth = {
        "n": cfg.n,
        "T": cfg.T,
        "seed": cfg.seed,
        "base_rates": list(cfg.base_rates),
        "planted_rules": [
            {"cause": [f"e{i + 1}" for i in sorted(r.cause)], "effect": f"e{r.effect + 1}",
             "delay": r.delay, "q": r.q}
            for r in cfg.planted_rules
        ],
        "firings": firings,
        "event_log": [[f"e{i + 1}" for i in np.flatnonzero(flags[t]).tolist()] for t in range(cfg.T)],
    }
    return SynthResult(events=events, numeric=numeric, truth=truth)


# -- sweeps -------------------------------------------------------------------------

GRID_KEYS = ("p_thr", "k_max", "m", "l", "detector", "aging")
TABLE_COLUMNS = ("detector", "m", "l", "k_max", "p_thr", "aging", "aging_k", "aging_n", "mem",
                 "granularity", "true_positives", "false_positives", "false_negatives",
                 "predictions", "precision", "recall", "error")


def _aging_pair(value) -> tuple:
    if isinstance(value, str):
        return (value, 0.0)
    kind, k = value
    return (kind, float(k))


def expand_grid(grid: dict) -> list:
    """Cartesian product of the grid values in a fixed key order."""
    if not grid or any(len(list(v)) == 0 for v in grid.values()):
        raise ValueError("sweep grid must be non-empty")
    keys = [k for k in GRID_KEYS if k in grid]
    unknown = set(grid) - set(GRID_KEYS)
    if unknown:
        raise ValueError(f"unknown sweep keys: {sorted(unknown)}")
    combos = []
    for values in itertools.product(*(list(grid[k]) for k in keys)):
        combo = dict(zip(keys, values))
        if "aging" in combo:
            combo["aging"], combo["aging_k"] = _aging_pair(combo["aging"])
        combos.append(combo)
    return combos


def run_sweep(grid: dict, source, base_config=None) -> list:
    """One full pipeline run per grid point.

    ``source`` is a list of :class:`ContextVector` (numeric input, detection
    runs) or of :class:`EventVector` (detection skipped). Failures are logged
    and recorded in the row's ``error`` field; the sweep carries on.
    """
    from .pipeline import PipelineConfig, run_pipeline

    base_config = base_config or PipelineConfig()
    rows = []
    for combo in expand_grid(grid):
        cfg = replace(base_config, **combo)
        row = {"detector": cfg.detector, "m": cfg.m, "l": cfg.l, "k_max": cfg.k_max,
               "p_thr": cfg.p_thr, "aging": cfg.aging, "aging_k": cfg.aging_k,
               "aging_n": cfg.aging_n, "mem": cfg.mem, "granularity": cfg.granularity}
        try:
            report = run_pipeline(cfg, source).report
            row.update(true_positives=report.true_positives, false_positives=report.false_positives,
                       false_negatives=report.false_negatives, predictions=report.predictions,
                       precision=report.precision, recall=report.recall, error=None)
        except Exception as exc:  # recorded per configuration
            logger.warning("sweep configuration %s failed: %s", combo, exc)
            row.update(true_positives=None, false_positives=None, false_negatives=None,
                       predictions=None, precision=None, recall=None, error=str(exc))
        rows.append(row)
    return rows


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_table(rows: Sequence[dict], columns: Sequence[str] = TABLE_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def write_table(rows: Sequence[dict], path) -> None:
    Path(path).write_text(format_table(rows), encoding="utf-8")


_INT_COLS = {"m", "l", "k_max", "aging_n", "mem", "true_positives", "false_positives",
             "false_negatives", "predictions"}
_FLOAT_COLS = {"p_thr", "aging_k", "precision", "recall"}


def _parse_cell(col, text):
    if text == "":
        return None
    if col in _INT_COLS:
        return int(text)
    if col in _FLOAT_COLS:
        return float(text)
    return text


def read_table(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: _parse_cell(k, v) for k, v in row.items()} for row in csv.DictReader(fh)]


# -- plot-shaped tables -------------------------------------------------------------

PLOT_FAMILIES = {
    # name: (x column, series columns)
    "precision_vs_pthr": ("p_thr", ("detector",)),
    "precision_vs_k": ("k_max", ("m", "l")),
    "precision_vs_aging_k": ("aging_k", ("detector",)),
}
_CONFIG_COLS = ("detector", "m", "l", "k_max", "p_thr", "aging", "aging_k")


def series_label(row: dict, series_cols: Sequence[str]) -> str:
    if len(series_cols) == 1:
        return str(row[series_cols[0]])
    return "_".join(f"{c}{row[c]}" for c in series_cols)


def pivot_rows(rows: Sequence[dict], x: str, series_cols: Sequence[str]) -> tuple:
    """Pivot result rows into ``(header, records)`` with one column per series.

    Columns not plotted (neither x nor series) become leading group columns,
    so a table where only x and the series vary gets one row per x value.
    """
    group_cols = [c for c in _CONFIG_COLS if c != x and c not in series_cols]
    series = sorted({series_label(r, series_cols) for r in rows})
    cells: dict = {}
    for r in rows:
        key = tuple(r[c] for c in group_cols) + (r[x],)
        cells.setdefault(key, {})[series_label(r, series_cols)] = r.get("precision")
    header = [*group_cols, x, *series]
    records = []
    for key in sorted(cells, key=lambda k: tuple((v is None, str(v) if isinstance(v, str) else v) for v in k)):
        records.append([*key, *(cells[key].get(s) for s in series)])
    return header, records


def emit_plot_data(rows: Sequence[dict], outdir) -> dict:
    """Write one CSV per figure family; returns ``{family: path}``."""
    if not rows:
        raise ValueError("cannot emit plot data from an empty table")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, (x, series_cols) in PLOT_FAMILIES.items():
        header, records = pivot_rows(rows, x, series_cols)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for rec in records:
            writer.writerow([_cell(v) for v in rec])
        path = outdir / f"{name}.csv"
        path.write_text(buf.getvalue(), encoding="utf-8")
        paths[name] = path
    return paths


def read_plot_data(path, series_cols: Sequence[str] = ("detector",)) -> list:
    """Unpivot a plot CSV back into ``{config..., precision}`` rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        body = list(reader)
    n_fixed = sum(1 for h in header if h in _CONFIG_COLS)
    fixed, series = header[:n_fixed], header[n_fixed:]
    out = []
    for rec in body:
        base = {c: _parse_cell(c, v) for c, v in zip(fixed, rec[:n_fixed])}
        for label, v in zip(series, rec[n_fixed:]):
            if v == "":
                continue
            row = dict(base)
            row["series"] = label
            row["precision"] = float(v)
            out.append(row)
    return out
