"""End-to-end online chain: detect -> correlate -> predict -> prune -> age -> score.

Everything runs in strict step order. At step t the forest absorbs the new
event vector, forecasts issued earlier for t are scored, and a fresh batch of
forecasts is produced: candidates from the forest, minus those that would
break a constraint, merged with their recent extractions in the rule pool,
and kept when the pooled probability reaches ``p_thr``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

from .aging import AgingPolicy, RulePool
from .correlation import PatternForest
from .detection import DetectorBank, detect_vector
from .evaluation import PrecisionTracker
from .ingest import ContextVector, EventVector, format_event_table
from .prediction import Prediction, emit_rules, predict, prediction_to_rule
from .ptl import prune_predictions, read_constraints, rule_to_json

ENV_PREFIX = "EVENTCAST_"


class PipelineError(RuntimeError):
    def __init__(self, stage: str, step: Optional[int], cause: Exception):
        self.stage = stage
        self.step = step
        where = f"{stage} stage" + (f" at step {step}" if step is not None else "")
        super().__init__(f"{where}: {cause}")


@dataclass
class PipelineConfig:
    # detection
    detector: str = "shewhart"
    mu: Optional[float] = None
    k_pos: float = 0.5
    k_neg: float = 0.5
    thresh_pos: float = 5.0
    thresh_neg: float = 5.0
    cusum_warmup: int = 50
    L: float = 3.0
    warmup: int = 50
    sigma_floor: float = 1e-9
    # correlation / prediction
    m: int = 1
    l: int = 1
    k_max: int = 1
    p_thr: float = 0.5
    # aging
    aging: str = "none"
    aging_k: float = 0.0
    aging_n: Optional[int] = None
    mem: int = 1
    # pruning / scoring / misc
    constraints: Optional[str] = None
    granularity: str = "event"
    window: int = 8000
    sliding: bool = False
    stride: int = 1
    seed: int = 0
    fill_forward: bool = False
    snapshot_every: int = 0
    per_stream: dict = field(default_factory=dict)  # stream name -> {param: value}

    def aging_policy(self) -> AgingPolicy:
        n_window = self.aging_n if self.aging_n is not None else max(self.mem, 2)
        return AgingPolicy(kind=self.aging, k=self.aging_k, n_window=n_window)

    def detector_params(self) -> dict:
        return {k: getattr(self, k) for k in
                ("mu", "k_pos", "k_neg", "thresh_pos", "thresh_neg", "cusum_warmup", "L",
                 "warmup", "sigma_floor")}

    def labels(self) -> dict:
        return {"detector": self.detector, "m": self.m, "l": self.l, "k_max": self.k_max,
                "p_thr": self.p_thr, "aging": self.aging, "aging_k": self.aging_k,
                "aging_n": self.aging_n, "mem": self.mem, "granularity": self.granularity,
                "seed": self.seed}

    # -- flat key = value text -------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            if f.name == "per_stream":
                continue
            v = getattr(self, f.name)
            if v is None:
                continue
            lines.append(f"{f.name} = {_format_value(v)}")
        for stream in sorted(self.per_stream):
            for key in sorted(self.per_stream[stream]):
                lines.append(f"{stream}.{key} = {_format_value(self.per_stream[stream][key])}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, mapping: dict, base: Optional["PipelineConfig"] = None) -> "PipelineConfig":
        cfg = base if base is not None else cls()
        updates = {}
        per_stream = {k: dict(v) for k, v in cfg.per_stream.items()}
        for key, raw in mapping.items():
            if "." in key:
                stream, param = key.split(".", 1)
                per_stream.setdefault(stream, {})[param] = _coerce(param, raw)
                continue
            if key not in _FIELD_TYPES or key == "per_stream":
                raise ValueError(f"unknown configuration key {key!r}")
            updates[key] = _coerce(key, raw)
        return replace(cfg, per_stream=per_stream, **updates)

    @classmethod
    def from_text(cls, text: str, base: Optional["PipelineConfig"] = None) -> "PipelineConfig":
        mapping = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            mapping[key] = value
        return cls.from_mapping(mapping, base)

    @classmethod
    def from_file(cls, path, base=None) -> "PipelineConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), base)

    @classmethod
    def from_env(cls, base: Optional["PipelineConfig"] = None, environ=None) -> "PipelineConfig":
        environ = os.environ if environ is None else environ
        mapping = {}
        for f in fields(cls):
            name = ENV_PREFIX + f.name.upper()
            if f.name != "per_stream" and name in environ:
                mapping[f.name] = environ[name]
        return cls.from_mapping(mapping, base)


_FIELD_TYPES = {
    "detector": str, "mu": float, "k_pos": float, "k_neg": float, "thresh_pos": float,
    "thresh_neg": float, "cusum_warmup": int, "L": float, "warmup": int, "sigma_floor": float,
    "m": int, "l": int, "k_max": int, "p_thr": float, "aging": str, "aging_k": float,
    "aging_n": int, "mem": int, "constraints": str, "granularity": str, "window": int,
    "sliding": bool, "stride": int, "seed": int, "fill_forward": bool, "snapshot_every": int,
    "per_stream": dict,
}


def _coerce(key: str, raw):
    if not isinstance(raw, str):
        return raw
    if raw.lower() in ("", "none", "null"):
        return None
    typ = _FIELD_TYPES.get(key, float if key not in ("detector",) else str)
    if typ is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError:
        raise ValueError(f"{key}: cannot read {raw!r} as {typ.__name__}") from None


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def resolve_per_stream(per_stream: dict, names: Sequence[str]) -> dict:
    """Map per-stream overrides keyed by name (column header, ``s<i>`` or ``e<i>``) to indices."""
    out = {}
    for key, params in per_stream.items():
        if key in names:
            idx = list(names).index(key)
        elif key[:1] in ("s", "e") and key[1:].isdigit() and int(key[1:]) >= 1:
            idx = int(key[1:]) - 1
        else:
            raise ValueError(f"per-stream setting for unknown stream {key!r}")
        out.setdefault(idx, {}).update(params)
    return out


@dataclass
class RunResult:
    events: list
    rule_lines: list
    pool_lines: list
    report: object
    forest: PatternForest
    pool: RulePool
    n: int

    def events_csv(self) -> str:
        return format_event_table(self.events, self.n)

    def write(self, outdir) -> dict:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = {
            "events": outdir / "events.csv",
            "rules": outdir / "rules.jsonl",
            "pool": outdir / "pool.jsonl",
            "report": outdir / "report.json",
        }
        paths["events"].write_text(self.events_csv(), encoding="utf-8")
        paths["rules"].write_text("".join(line + "\n" for line in self.rule_lines), encoding="utf-8")
        paths["pool"].write_text("".join(line + "\n" for line in self.pool_lines), encoding="utf-8")
        paths["report"].write_text(self.report.to_json(), encoding="utf-8")
        return paths


class OnlinePipeline:
    """Step-at-a-time version of :func:`run_pipeline`."""

    def __init__(self, config: PipelineConfig, n: int, names: Optional[Sequence[str]] = None,
                 constraints: Optional[list] = None):
        self.config = config
        self.n = n
        self.names = list(names) if names is not None else [f"s{i + 1}" for i in range(n)]
        self.bank = None
        self.forest = PatternForest(m=config.m, l=config.l, k_max=config.k_max, n=n)
        self.pool = RulePool(mem=config.mem, policy=config.aging_policy())
        self.tracker = PrecisionTracker(l=config.l, granularity=config.granularity, k_max=config.k_max,
                                        window_length=config.window, sliding=config.sliding,
                                        stride=config.stride)
        if constraints is None and config.constraints:
            constraints = read_constraints(config.constraints, self.names)
        self.constraints = constraints or []
        self.history: list = []
        self.rule_lines: list = []
        self.pool_lines: list = []

    def _detector_bank(self) -> DetectorBank:
        if self.bank is None:
            per_stream = resolve_per_stream(self.config.per_stream, self.names)
            self.bank = DetectorBank.build(self.n, kind=self.config.detector, per_stream=per_stream,
                                           **self.config.detector_params())
        return self.bank

    def detect(self, cv: ContextVector) -> EventVector:
        try:
            return detect_vector(self._detector_bank(), cv)
        except Exception as exc:
            raise PipelineError("detect", cv.t, exc) from exc

    def step(self, ev: EventVector) -> list:
        """Absorb one event vector; returns the forecasts issued at this step."""
        t = ev.t
        cfg = self.config
        try:
            self.forest.update(ev)
        except Exception as exc:
            raise PipelineError("correlate", t, exc) from exc
        self.history.append(ev)
        self.tracker.score(t, ev)
        try:
            candidates = predict(self.forest, p_thr=0.0)
        except Exception as exc:
            raise PipelineError("predict", t, exc) from exc
        try:
            candidates = prune_predictions(candidates, self.constraints, self.history)
        except Exception as exc:
            raise PipelineError("prune", t, exc) from exc
        try:
            self.pool.update(emit_rules(candidates, t), t)
            issued = []
            for pr in candidates:
                merged = self.pool.merged_probability(prediction_to_rule(pr))
                if merged is not None and merged >= cfg.p_thr:
                    issued.append(Prediction(pr.horizon, pr.symbol, merged, pr.context))
        except Exception as exc:
            raise PipelineError("age", t, exc) from exc
        self.tracker.issue(t, issued)
        for rule in emit_rules(issued, t):
            self.rule_lines.append(rule_to_json(rule))
        if cfg.snapshot_every and (t + 1) % cfg.snapshot_every == 0:
            self.pool_lines.extend(self.pool.snapshot_lines())
        return issued

    def finish(self) -> RunResult:
        if not (self.config.snapshot_every and self.forest.t % self.config.snapshot_every == 0):
            self.pool_lines.extend(self.pool.snapshot_lines())
        report = self.tracker.finish(self.config.labels())
        return RunResult(events=self.history, rule_lines=self.rule_lines, pool_lines=self.pool_lines,
                         report=report, forest=self.forest, pool=self.pool, n=self.n)


def run_pipeline(config: PipelineConfig, source: Sequence, names: Optional[Sequence[str]] = None,
                 constraints: Optional[list] = None) -> RunResult:
    """Run the whole chain over ``source``.

    ``source`` holds either :class:`ContextVector` rows (detection runs) or
    :class:`EventVector` rows (detection is skipped).
    """
    source = list(source)
    if not source:
        raise PipelineError("ingest", None, ValueError("empty input"))
    first = source[0]
    n = len(first.values) if isinstance(first, ContextVector) else len(first.flags)
    pipe = OnlinePipeline(config, n, names=names, constraints=constraints)
    for row in source:
        ev = pipe.detect(row) if isinstance(row, ContextVector) else row
        pipe.step(ev)
    return pipe.finish()
