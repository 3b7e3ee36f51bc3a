"""The ten acceptance criteria, each printing one PASS/FAIL line."""

import json
import math
import random
import time

import numpy as np
import pytest

from eventcast.aging import AgingPolicy, RulePool, merge_rule_probability
from eventcast.cli import main
from eventcast.correlation import EMPTY, PatternForest, node_budget
from eventcast.detection import CusumState, ShewhartState
from eventcast.evaluation import generate_synthetic, run_sweep
from eventcast.ingest import EventVector
from eventcast.pipeline import PipelineConfig, run_pipeline
from eventcast.prediction import Prediction
from eventcast.ptl import BlkConstraint, OccConstraint, ProbTemporalRule, prune_predictions

from oracles import brute_counts, cusum_trace, naive_pool
from planted import graded_rules, single_rule

A, B, C = frozenset({0}), frozenset({1}), frozenset({2})


@pytest.fixture
def verdict(record_property):
    def emit(number, ok, text):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {text}"
        print(line)
        record_property("acceptance", line)
        assert ok, line
    return emit


def feed(active_sets, n, **kw):
    f = PatternForest(**kw)
    for t, a in enumerate(active_sets):
        f.update(EventVector(t, tuple(int(i in a) for i in range(n))))
    return f


def test_1_forest_oracle_equivalence(verdict):
    rng = random.Random(2024)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        n = rng.randint(1, 5)
        k = rng.randint(1, min(2, n))
        depth = rng.randint(2, 4)
        m = rng.randint(1, depth - 1)
        rate = rng.uniform(0.05, 0.6)
        stream = [frozenset(i for i in range(n) if rng.random() < rate) for _ in range(rng.randint(1, 200))]
        f = feed(stream, n, m=m, l=depth - m, k_max=k)
        mismatches += f.counts() != brute_counts(stream, k, depth)
    elapsed = time.perf_counter() - start
    verdict(1, mismatches == 0 and elapsed < 60,
            f"forest counts equal brute force on 1000 streams ({mismatches} mismatches, {elapsed:.1f}s)")


def test_2_worked_examples(verdict):
    f = feed([{0}, {1}, set(), {2}, {2}], 3, m=2, l=1)
    prior = f.prior_probability(C)
    path = f.path_probability([A, B, EMPTY])
    policy = AgingPolicy("linear", 0.8, 5)
    weights = (policy.weight(1), policy.weight(3))
    merged = merge_rule_probability([(8, 0.8), (10, 0.3)], policy, 10)
    ok = (prior == 2 / 5 and path == 1.0 and weights == pytest.approx((1.8, 1.0), abs=1e-12)
          and abs(merged - 1.34 / 2.8) <= 1e-9)
    verdict(2, ok, f"prior={prior} path={path} weights={weights} merged={merged:.6f}")


def test_3_node_budget(verdict):
    values = (node_budget(3, 2), node_budget(10, 1))
    powers = all(node_budget(n, n) == 2 ** n for n in range(1, 13))
    rng = random.Random(3)
    within = True
    for _ in range(200):
        n = rng.randint(1, 6)
        k = rng.randint(1, n)
        stream = [frozenset(i for i in range(n) if rng.random() < 0.5) for _ in range(rng.randint(1, 100))]
        f = feed(stream, n, m=1, l=1, k_max=k)
        within &= len(f.trees) <= node_budget(n, k)
        within &= all(len(node.children) <= node_budget(n, k) for _, node in f.iter_nodes())
    verdict(3, values == (7, 11) and powers and within,
            f"budget(3,2),budget(10,1)={values}; budget(n,n)=2^n: {powers}; forests within budget: {within}")


def test_4_cusum(verdict):
    s = CusumState(mu=0.0, k_pos=0.5, thresh_pos=4.0)
    flags, Ps = [], []
    for _ in range(5):
        flags.append(s.step(1.5))
        Ps.append(s.P)
    first = flags.index(1) + 1 if 1 in flags else None
    rng = np.random.default_rng(4)
    symmetric = 0
    for _ in range(100):
        xs = rng.normal(0, 2, rng.integers(1, 300))
        k, h = rng.uniform(0, 1), rng.uniform(0.5, 6)
        up, _, _ = cusum_trace(xs, 0.0, k, 1.0, h, 1e9)
        down, _, _ = cusum_trace(-xs, 0.0, 1.0, k, 1e9, h)
        a = CusumState(mu=0.0, k_pos=k, thresh_pos=h, k_neg=1.0, thresh_neg=1e9)
        b = CusumState(mu=0.0, k_neg=k, thresh_neg=h, k_pos=1.0, thresh_pos=1e9)
        mine_up = [a.step(x) and a.last_signal for x in xs]
        mine_down = [b.step(-x) and b.last_signal for x in xs]
        symmetric += (mine_up == up and [-v for v in mine_down] == up and [-v for v in down] == up)
    verdict(4, first == 5 and Ps[4] == 0.0 and symmetric == 100,
            f"first flag at step {first}, P after flag {Ps[4]}; mirror symmetry {symmetric}/100")


def test_5_shewhart(verdict):
    rng = np.random.default_rng(5)
    quiet = True
    for trial in range(200):
        warmup = int(rng.integers(2, 80))
        scale = 10.0 ** rng.uniform(-6, 6)
        xs = rng.standard_cauchy(warmup) * scale if trial % 2 else rng.normal(0, scale, warmup)
        s = ShewhartState(warmup=warmup)
        quiet &= not any(s.step(float(x)) for x in xs)
    hits = 0
    for _ in range(500):
        xs = rng.normal(0, 1, 150)
        xs[100] += 8.0
        s = ShewhartState(L=3.0, warmup=50)
        flags = [s.step(float(x)) for x in xs]
        hits += flags[100] == 1
    constant = all(not any(ShewhartState(warmup=2).step(c) for _ in range(300))
                   for c in (0.0, 1.0, -7.25, 1e12))
    rate = hits / 500
    verdict(5, quiet and rate >= 0.99 and constant,
            f"silent in warm-up: {quiet}; 8-sigma shift flagged in {rate:.1%} of 500 trials; "
            f"constant streams silent: {constant}")


def test_6_planted_rule_recovery(verdict):
    events = generate_synthetic(single_rule()).events
    start = time.perf_counter()
    res = run_pipeline(PipelineConfig(m=1, l=1, k_max=1, p_thr=0.5), events)
    elapsed = time.perf_counter() - start
    target = None
    for line in res.rule_lines:
        rec = json.loads(line)
        if rec["body"] == [{"offset": 0, "events": ["e1"]}] and rec["head"]["events"] == ["e2"]:
            target = rec
    p = target["p"] if target else float("nan")
    precision = res.report.precision
    ok = target is not None and target["horizon"] == 1 and abs(p - 0.9) <= 0.05 \
        and precision is not None and precision >= 0.85 and elapsed < 10
    verdict(6, ok, f"e1 -> e2 : [1, {p:.4f}], precision {precision:.4f}, {elapsed:.1f}s")


def test_7_threshold_monotonicity(verdict):
    events = generate_synthetic(graded_rules()).events
    grid = [round(0.1 * i, 1) for i in range(1, 10)]
    rows = run_sweep({"p_thr": grid}, events)
    counts = [r["predictions"] for r in rows]
    precs = [r["precision"] for r in rows]
    ok = (all(r["error"] is None for r in rows) and None not in precs
          and counts == sorted(counts, reverse=True) and precs == sorted(precs))
    verdict(7, ok, "counts " + ",".join(map(str, counts)) + "; precision "
            + ",".join(f"{p:.3f}" for p in precs if p is not None))


def test_8_constraint_pruning(verdict):
    blk = [Prediction(1, A, 0.9, (A,)), Prediction(1, B, 0.9, (A,))]
    history = [EventVector(t, (1, 0)) for t in range(3)]
    blk_ok = prune_predictions(blk, [BlkConstraint(A, 4)], history) == blk[1:]
    occ_hist = [EventVector(0, (0, 1)), EventVector(1, (1, 0)), EventVector(2, (0, 0))]
    occ_preds = [Prediction(1, A, 0.9, (EMPTY,)), Prediction(2, frozenset({0, 1}), 0.5, (EMPTY,)),
                 Prediction(1, B, 0.4, (EMPTY,))]
    occ_ok = prune_predictions(occ_preds, [OccConstraint(A, 0, 1)], occ_hist) == occ_preds[2:]
    rng = random.Random(8)
    idem = 0
    for _ in range(100):
        preds = [Prediction(rng.randint(1, 3), frozenset(i for i in range(3) if rng.random() < 0.5),
                            rng.random(), (A,)) for _ in range(rng.randint(0, 20))]
        hist = [EventVector(t, tuple(int(rng.random() < 0.5) for _ in range(3))) for t in range(rng.randint(0, 15))]
        cons = [BlkConstraint(A, rng.randint(1, 4)), OccConstraint(B, 0, rng.randint(0, 4)),
                BlkConstraint(EMPTY, 2)]
        once = prune_predictions(preds, cons, hist)
        idem += prune_predictions(once, cons, hist) == once and all(p in preds for p in once)
    verdict(8, blk_ok and occ_ok and idem == 100,
            f"BLK prune: {blk_ok}; OCC prune: {occ_ok}; idempotent on {idem}/100 random sets")


def test_9_aging_identities(verdict):
    rng = random.Random(9)
    mean_err = 0.0
    for _ in range(100):
        ps = [rng.random() for _ in range(rng.randint(1, 10))]
        got = merge_rule_probability(list(enumerate(ps)), AgingPolicy("exponential", 0.0), len(ps) - 1)
        mean_err = max(mean_err, abs(got - sum(ps) / len(ps)))
    endpoints = all(math.isclose(AgingPolicy("linear", k, n).weight(1) + AgingPolicy("linear", k, n).weight(n),
                                 2.0, abs_tol=1e-12)
                    for k in (0, 0.3, 0.5, 0.8, 1) for n in (2, 5, 17))
    replay = 0
    for _ in range(100):
        mem = rng.randint(1, 6)
        policy = rng.choice([AgingPolicy(), AgingPolicy("exponential", rng.uniform(0, 2)),
                             AgingPolicy("linear", rng.uniform(0, 0.95), max(2, mem + rng.randint(0, 3)))])
        pool = RulePool(mem=mem, policy=policy)
        stream, same = [], True
        for t in range(rng.randint(1, 40)):
            new = [ProbTemporalRule(((0, A),), h, 1, rng.random()) for h in (A, B, C) if rng.random() < 0.4]
            stream += [(t, r.identity, r.p) for r in new]
            pool.update(new, t)
            want = naive_pool(stream, t, mem, policy.weight)
            got = {k: e.merged_p for k, e in pool.entries.items()}
            same &= set(got) == set(want) and all(abs(got[k] - want[k]) <= 1e-12 for k in want)
        replay += same
    verdict(9, mean_err <= 1e-12 and endpoints and replay == 100,
            f"k=0 merge vs mean max error {mean_err:.1e}; linear endpoints sum to 2: {endpoints}; "
            f"pool replay matches recomputation {replay}/100")


def test_10_end_to_end_determinism(verdict, tmp_path):
    data = tmp_path / "data"
    assert main(["synth", "--n", "3", "--T", "2000", "--base-rates", "0.1,0.05,0", "--rule", "e1->e3:1:0.8",
                 "--rule", "e2->e3:2:0.6", "--numeric", "--seed", "10", "--outdir", str(data)]) == 0
    cfg = tmp_path / "run.cfg"
    cfg.write_text("detector = shewhart\nm = 2\nl = 2\nk_max = 2\np_thr = 0.3\naging = linear\n"
                   "aging_k = 0.5\nmem = 4\nseed = 10\nsnapshot_every = 500\n")
    outs = []
    for name in ("a", "b"):
        assert main(["run", "--input", str(data / "numeric.csv"), "--config", str(cfg),
                     "--outdir", str(tmp_path / name)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted((tmp_path / name).iterdir())})
    same = outs[0] == outs[1] and len(outs[0]) == 4
    verdict(10, same, f"two runs byte-identical across {sorted(outs[0])}: {same}")
