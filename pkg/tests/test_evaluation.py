import numpy as np
import pytest

from eventcast.correlation import EMPTY
from eventcast.detection import ShewhartState
from eventcast.evaluation import (PLOT_FAMILIES, PlantedRule, PrecisionReport, PrecisionTracker,
                                  SynthConfig, emit_plot_data, expand_grid, generate_synthetic,
                                  read_plot_data, read_table, run_sweep, score_step, write_table)
from eventcast.ingest import EventVector
from eventcast.pipeline import PipelineConfig
from eventcast.prediction import Prediction

from planted import graded_rules, single_rule

A, B, C = frozenset({0}), frozenset({1}), frozenset({2})
PLANTED = single_rule()


def pred(sym, h=1, p=0.9):
    return Prediction(h, sym, p, (A,))


def test_score_step_no_predictions():
    r = score_step(PrecisionReport(), [], EventVector(0, (1, 0, 0)))
    assert r.predictions == 0 and r.precision is None


def test_score_step_counts():
    r = score_step(PrecisionReport(), [pred(A), pred(frozenset({1, 2}))], EventVector(0, (1, 1, 0)))
    assert (r.true_positives, r.false_positives, r.false_negatives) == (2, 1, 0)
    assert r.precision == pytest.approx(2 / 3)


def test_score_step_symbol_granularity():
    r = PrecisionReport(granularity="symbol")
    score_step(r, [pred(frozenset({0, 1})), pred(C), pred(A)], EventVector(0, (1, 1, 0)), k_max=2)
    # realized symbols: {A}, {B}, {A,B}
    assert (r.true_positives, r.false_positives, r.false_negatives) == (2, 1, 1)
    r2 = score_step(PrecisionReport(granularity="symbol"), [pred(EMPTY)], EventVector(0, (0, 0)))
    assert r2.precision == 1.0


def test_predict_everything_precision_tracks_rate():
    rng = np.random.default_rng(1)
    r = PrecisionReport()
    everything = [pred(frozenset({0, 1, 2}))]
    for t in range(20000):
        score_step(r, everything, EventVector(t, tuple(int(x) for x in rng.random(3) < 0.3)))
    assert r.precision == pytest.approx(0.30, abs=0.01)
    assert r.recall == 1.0


def test_tracker_scores_only_at_target_step():
    tr = PrecisionTracker(l=2, window_length=2)
    tr.issue(0, [pred(A, h=2)])
    tr.score(1, EventVector(1, (1, 0)))
    assert tr.report.predictions == 0
    tr.score(2, EventVector(2, (1, 0)))
    assert tr.report.true_positives == 1
    tr.issue(2, [pred(B, h=1)])
    tr.score(3, EventVector(3, (1, 0)))
    rep = tr.finish({"m": 1})
    assert rep.false_positives == 1 and rep.labels == {"m": 1}
    assert [(w["start"], w["end"], w["precision"]) for w in rep.windows] == [(1, 2, 1.0), (3, 3, 0.0)]


def test_tracker_sliding_windows():
    tr = PrecisionTracker(window_length=3, sliding=True, stride=1)
    for t in range(5):
        tr.issue(t, [pred(A)])
        tr.score(t, EventVector(t, (t % 2, 0)))
    wins = tr.finish().windows
    assert [w["start"] for w in wins] == [0, 1, 2]
    assert all(w["true_positives"] + w["false_positives"] <= 3 for w in wins)


def test_tracker_rejects_bad_granularity():
    with pytest.raises(ValueError):
        PrecisionTracker(granularity="vibes")


def test_generator_silent_without_rates():
    res = generate_synthetic(SynthConfig(n=3, T=200, base_rates=0.0))
    assert all(ev.flags == (0, 0, 0) for ev in res.events)
    assert res.numeric is None and res.truth["firings"] == []


def test_generator_planted_frequency():
    res = generate_synthetic(PLANTED)
    E = np.array([ev.flags for ev in res.events])
    cause = E[:-1, 0] == 1
    assert cause.sum() > 1500
    assert E[1:, 1][cause].mean() == pytest.approx(0.9, abs=0.02)
    # B never fires spontaneously
    assert E[1:, 1][~cause].sum() == 0


def test_generator_deterministic_and_numeric_independent():
    a = generate_synthetic(PLANTED)
    b = generate_synthetic(SynthConfig(**{**PLANTED.__dict__, "numeric_mode": True}))
    assert a.events == b.events and a.truth == b.truth
    c = generate_synthetic(SynthConfig(**{**PLANTED.__dict__, "seed": 8}))
    assert c.events != a.events


def test_generator_numeric_shift_is_detected():
    cfg = SynthConfig(n=1, T=3000, base_rates=(0.005,), numeric_mode=True, seed=3)
    res = generate_synthetic(cfg)
    det = ShewhartState(L=3.0, warmup=50)
    flags = [det.step(cv.values[0]) for cv in res.numeric]
    shifts = [ev.t for ev in res.events if ev.flags[0] and ev.t >= 50]
    assert len(shifts) > 5
    assert all(flags[t] for t in shifts)


def test_generator_validation():
    with pytest.raises(ValueError):
        SynthConfig(n=2, base_rates=(0.1,))
    with pytest.raises(ValueError):
        SynthConfig(n=2, planted_rules=(PlantedRule(A, 2),))
    with pytest.raises(ValueError):
        PlantedRule(A, 1, delay=0)


@pytest.fixture(scope="module")
def planted_events():
    return generate_synthetic(SynthConfig(**{**PLANTED.__dict__, "T": 4000})).events


def test_sweep_single_row(planted_events):
    rows = run_sweep({"p_thr": [0.5]}, planted_events)
    assert len(rows) == 1 and rows[0]["error"] is None
    assert rows[0]["precision"] > 0.85


def test_sweep_monotone_in_threshold():
    events = generate_synthetic(graded_rules(T=2500, seed=3)).events
    grid = {"p_thr": [0.5, 0.6, 0.7, 0.8]}
    rows = run_sweep(grid, events)
    counts = [r["predictions"] for r in rows]
    precs = [r["precision"] for r in rows if r["precision"] is not None]
    assert counts == sorted(counts, reverse=True)
    assert precs == sorted(precs)
    assert run_sweep(grid, events) == rows


def test_sweep_records_failures_and_continues(planted_events):
    base = PipelineConfig(aging="linear", aging_k=0.5, aging_n=2, mem=1)
    rows = run_sweep({"aging": [("linear", 0.5), ("linear", 1.7)]}, planted_events[:50], base)
    assert rows[0]["error"] is None
    assert rows[1]["error"] and rows[1]["precision"] is None


def test_expand_grid():
    combos = expand_grid({"p_thr": [0.5, 0.6], "aging": ["none", ("exponential", 0.1)]})
    assert len(combos) == 4
    assert combos[1] == {"p_thr": 0.5, "aging": "exponential", "aging_k": 0.1}
    for bad in ({}, {"p_thr": []}, {"colour": [1]}):
        with pytest.raises(ValueError):
            expand_grid(bad)


def _fake_rows():
    rows = []
    for det in ("shewhart", "cusum"):
        for thr in (0.5, 0.7):
            rows.append({"detector": det, "m": 1, "l": 1, "k_max": 1, "p_thr": thr, "aging": "none",
                         "aging_k": 0.0, "precision": thr / 2 + (det == "cusum") * 0.1})
    return rows


def test_plot_data_shapes_and_round_trip(tmp_path):
    rows = _fake_rows()
    paths = emit_plot_data(rows, tmp_path)
    assert set(paths) == set(PLOT_FAMILIES)
    lines = paths["precision_vs_pthr"].read_text().splitlines()
    assert lines[0].split(",")[-3:] == ["p_thr", "cusum", "shewhart"]
    assert len(lines) == 3  # one row per p_thr value
    back = read_plot_data(paths["precision_vs_pthr"], ("detector",))
    got = sorted((r["series"], r["p_thr"], r["precision"]) for r in back)
    assert got == sorted((r["detector"], r["p_thr"], r["precision"]) for r in rows)


def test_plot_data_single_point(tmp_path):
    paths = emit_plot_data(_fake_rows()[:1], tmp_path)
    for path in paths.values():
        assert len(path.read_text().splitlines()) == 2
    with pytest.raises(ValueError):
        emit_plot_data([], tmp_path)


def test_table_round_trip(tmp_path, planted_events):
    rows = run_sweep({"p_thr": [0.5, 0.9], "m": [1, 2]}, planted_events[:500])
    write_table(rows, tmp_path / "t.csv")
    assert read_table(tmp_path / "t.csv") == rows
