"""Command-line front end.

Subcommands read and write files only; ``run`` chains the stages that
``detect``, ``correlate`` and ``predict`` expose individually. Parameters are
resolved as: built-in defaults, then ``--config`` file, then ``EVENTCAST_*``
environment variables, then command-line flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .correlation import PatternForest
from .detection import DetectorBank
from .evaluation import (PlantedRule, SynthConfig, emit_plot_data, generate_synthetic, read_table,
                         run_sweep, write_table)
from .ingest import (IngestError, format_event_table, looks_like_event_table, read_event_table,
                     read_header, read_stream_table, write_event_table, write_stream_table)
from .pipeline import PipelineConfig, PipelineError, resolve_per_stream, run_pipeline
from .prediction import emit_rules, predict
from .ptl import prune_predictions, read_constraints, rule_to_json

logger = logging.getLogger("eventcast")

# flag dest -> config field
_FLAG_FIELDS = {
    "detector": "detector", "mu": "mu", "k_pos": "k_pos", "k_neg": "k_neg",
    "thresh_pos": "thresh_pos", "thresh_neg": "thresh_neg", "cusum_warmup": "cusum_warmup",
    "L": "L", "warmup": "warmup", "m": "m", "l": "l", "kmax": "k_max", "pthr": "p_thr",
    "aging": "aging", "aging_k": "aging_k", "aging_n": "aging_n", "mem": "mem",
    "constraints": "constraints", "granularity": "granularity", "seed": "seed",
    "fill_forward": "fill_forward", "window": "window", "sliding": "sliding",
    "snapshot_every": "snapshot_every",
}


def _add_detector_flags(p):
    g = p.add_argument_group("detection")
    g.add_argument("--detector", choices=("shewhart", "cusum"))
    g.add_argument("--mu", type=float, help="CUSUM target (default: warm-up mean)")
    g.add_argument("--k-pos", dest="k_pos", type=float)
    g.add_argument("--k-neg", dest="k_neg", type=float)
    g.add_argument("--thresh-pos", dest="thresh_pos", type=float)
    g.add_argument("--thresh-neg", dest="thresh_neg", type=float)
    g.add_argument("--cusum-warmup", dest="cusum_warmup", type=int)
    g.add_argument("--L", dest="L", type=float, help="Shewhart limit multiplier")
    g.add_argument("--warmup", type=int, help="Shewhart warm-up samples")


def _add_model_flags(p, with_pthr=True):
    g = p.add_argument_group("correlation")
    g.add_argument("--m", type=int, help="maximum context length")
    g.add_argument("--l", type=int, help="forecast horizon")
    g.add_argument("--kmax", type=int, help="largest event subset per symbol")
    if with_pthr:
        g.add_argument("--pthr", type=float, help="probability cut-off")


def _add_run_flags(p):
    g = p.add_argument_group("filtering and scoring")
    g.add_argument("--aging", choices=("none", "linear", "exponential"))
    g.add_argument("--aging-k", dest="aging_k", type=float)
    g.add_argument("--aging-n", dest="aging_n", type=int)
    g.add_argument("--mem", type=int, help="rule memory window in steps")
    g.add_argument("--constraints", help="BLK/OCC constraint file")
    g.add_argument("--granularity", choices=("event", "symbol"))
    g.add_argument("--window", type=int, help="precision window length")
    g.add_argument("--sliding", action="store_const", const=True, default=None)
    g.add_argument("--snapshot-every", dest="snapshot_every", type=int)


def _add_common(p):
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--fill-forward", dest="fill_forward", action="store_const", const=True, default=None)


def build_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        cfg = PipelineConfig.from_file(args.config, cfg)
    cfg = PipelineConfig.from_env(cfg)
    flags = {}
    for dest, name in _FLAG_FIELDS.items():
        v = getattr(args, dest, None)
        if v is not None:
            flags[name] = v
    return replace(cfg, **flags)


def _load_input(path, kind, cfg):
    """Returns ``(rows, names)``; rows are context or event vectors."""
    if kind == "auto":
        kind = "events" if looks_like_event_table(path) else "numeric"
    if kind == "events":
        rows = read_event_table(path)
        return rows, read_header(path)[1:]
    rows = read_stream_table(path, fill_forward=cfg.fill_forward)
    return rows, read_header(path)[1:]


def cmd_detect(args):
    cfg = build_config(args)
    rows = read_stream_table(args.input, fill_forward=cfg.fill_forward)
    names = read_header(args.input)[1:]
    bank = DetectorBank.build(len(names), kind=cfg.detector,
                              per_stream=resolve_per_stream(cfg.per_stream, names),
                              **cfg.detector_params())
    from .detection import detect_vector
    events = []
    for cv in rows:
        try:
            events.append(detect_vector(bank, cv))
        except Exception as exc:
            raise PipelineError("detect", cv.t, exc) from exc
    _write(args.output, format_event_table(events, len(names)))
    return 0


def cmd_correlate(args):
    cfg = build_config(args)
    if args.resume:
        forest = PatternForest.load(args.resume)
        offset = forest.t
    else:
        forest = PatternForest(m=cfg.m, l=cfg.l, k_max=cfg.k_max)
        offset = 0
    for ev in read_event_table(args.input):
        try:
            forest.update(replace(ev, t=ev.t + offset))
        except Exception as exc:
            raise PipelineError("correlate", ev.t + offset, exc) from exc
    _write(args.snapshot, forest.dumps())
    return 0


def cmd_predict(args):
    cfg = build_config(args)
    events = read_event_table(args.input)
    names = read_header(args.input)[1:]
    constraints = read_constraints(cfg.constraints, names) if cfg.constraints else []
    forest = PatternForest(m=cfg.m, l=cfg.l, k_max=cfg.k_max)
    lines = []
    for i, ev in enumerate(events):
        forest.update(ev)
        preds = predict(forest, p_thr=cfg.p_thr)
        preds = prune_predictions(preds, constraints, events[:i + 1])
        lines.extend(rule_to_json(r) for r in emit_rules(preds, ev.t))
    _write(args.output, "".join(line + "\n" for line in lines))
    return 0


def cmd_run(args):
    cfg = build_config(args)
    rows, names = _load_input(args.input, args.input_kind, cfg)
    result = run_pipeline(cfg, rows, names=names)
    paths = result.write(args.outdir)
    report = result.report
    logger.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    print(f"steps={len(result.events)} predictions={report.predictions} precision={report.precision}")
    return 0


def _split(text, conv):
    return [conv(v.strip()) for v in text.split(",") if v.strip()]


def _aging_item(text):
    if ":" in text:
        kind, k = text.split(":", 1)
        return (kind, float(k))
    return (text, 0.0)


def cmd_eval(args):
    cfg = build_config(args)
    rows, names = _load_input(args.input, args.input_kind, cfg)
    grid = {
        "p_thr": _split(args.grid_pthr, float) if args.grid_pthr else [cfg.p_thr],
        "k_max": _split(args.grid_kmax, int) if args.grid_kmax else [cfg.k_max],
        "m": _split(args.grid_m, int) if args.grid_m else [cfg.m],
        "l": _split(args.grid_l, int) if args.grid_l else [cfg.l],
        "detector": _split(args.grid_detector, str) if args.grid_detector else [cfg.detector],
        "aging": _split(args.grid_aging, _aging_item) if args.grid_aging else [(cfg.aging, cfg.aging_k)],
    }
    table = run_sweep(grid, rows, base_config=cfg)
    write_table(table, args.output)
    failed = sum(1 for r in table if r["error"])
    print(f"configurations={len(table)} failed={failed}")
    return 0


def _parse_planted(text):
    # "e1->e2:1:0.9"  or  "e1,e3->e2:2:0.5"
    try:
        lhs, rhs = text.split("->")
        effect, delay, q = rhs.split(":")
        cause = frozenset(int(e.strip()[1:]) - 1 for e in lhs.split(","))
        return PlantedRule(cause=cause, effect=int(effect.strip()[1:]) - 1, delay=int(delay), q=float(q))
    except ValueError:
        raise argparse.ArgumentTypeError(f"planted rule must look like e1->e2:DELAY:Q, got {text!r}") from None


def cmd_synth(args):
    base = _split(args.base_rates, float) if args.base_rates else [0.2] + [0.0] * (args.n - 1)
    if len(base) == 1:
        base = base * args.n
    cfg = SynthConfig(n=args.n, T=args.T, base_rates=base, planted_rules=tuple(args.rule or ()),
                      numeric_mode=args.numeric, seed=args.seed, noise_sigma=args.noise, shift=args.shift)
    result = generate_synthetic(cfg)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    write_event_table(result.events, out / "events.csv", cfg.n)
    if result.numeric is not None:
        write_stream_table(result.numeric, out / "numeric.csv", [f"s{i + 1}" for i in range(cfg.n)])
    (out / "truth.json").write_text(json.dumps(result.truth) + "\n", encoding="utf-8")
    return 0


def cmd_plotdata(args):
    paths = emit_plot_data(read_table(args.table), args.outdir)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eventcast", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="numeric CSV -> event CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="-")
    _add_detector_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("correlate", help="event CSV -> pattern forest snapshot")
    p.add_argument("--input", required=True)
    p.add_argument("--snapshot", default="-")
    p.add_argument("--resume", help="continue from an earlier snapshot")
    _add_model_flags(p, with_pthr=False)
    _add_common(p)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("predict", help="event CSV -> per-step rule stream (no aging)")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="-")
    p.add_argument("--constraints")
    _add_model_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    input_kind = dict(choices=("auto", "numeric", "events"), default="auto",
                      help="numeric streams or an event CSV (auto: by header)")

    p = sub.add_parser("run", help="full online pipeline")
    p.add_argument("--input", required=True)
    p.add_argument("--input-kind", **input_kind)
    p.add_argument("--outdir", required=True)
    _add_detector_flags(p)
    _add_model_flags(p)
    _add_run_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="parameter sweep -> result table CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--input-kind", **input_kind)
    p.add_argument("--output", required=True)
    p.add_argument("--grid-pthr", help="comma list, e.g. 0.5,0.6,0.7")
    p.add_argument("--grid-kmax")
    p.add_argument("--grid-m")
    p.add_argument("--grid-l")
    p.add_argument("--grid-detector")
    p.add_argument("--grid-aging", help="comma list of kind[:k], e.g. none,linear:0.3,exponential:0.1")
    _add_detector_flags(p)
    _add_model_flags(p)
    _add_run_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="synthetic planted-dependency data")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--T", type=int, default=10000)
    p.add_argument("--base-rates", help="comma list, one per stream (or a single value)")
    p.add_argument("--rule", action="append", type=_parse_planted, help="e.g. e1->e2:1:0.9 (repeatable)")
    p.add_argument("--numeric", action="store_true", help="also render numeric streams")
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--shift", type=float, default=8.0, help="level shift in noise sigmas")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("plotdata", help="result table -> figure-shaped CSVs")
    p.add_argument("--table", required=True)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except IngestError as exc:
        print(f"eventcast {args.command}: error: ingest stage: {exc}", file=sys.stderr)
        return 2
    except (PipelineError, ValueError, OSError) as exc:
        print(f"eventcast {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
