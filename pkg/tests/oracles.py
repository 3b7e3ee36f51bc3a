"""Brute-force reference implementations used as test oracles.

Nothing here imports the code under test beyond plain data types, so each
oracle stays independent of the path it checks.
"""

from collections import Counter
from itertools import combinations, product


def step_symbols(active, k_max):
    active = sorted(active)
    if not active:
        return [frozenset()]
    return [frozenset(c) for size in range(1, min(k_max, len(active)) + 1)
            for c in combinations(active, size)]


def brute_counts(active_sets, k_max, depth):
    """Occurrences of every symbol tuple (len <= depth) as a contiguous run of steps."""
    per_step = [step_symbols(a, k_max) for a in active_sets]
    counts = Counter()
    for end in range(len(per_step)):
        for d in range(1, min(depth, end + 1) + 1):
            for tup in product(*per_step[end - d + 1:end + 1]):
                counts[tup] += 1
    return counts


def brute_predictions(active_sets, k_max, m, l, p_thr):
    """Re-scan the whole history and compute the forecast set from scratch.

    Returns ``{(horizon, symbol): (p, context)}`` using the same policy as the
    implementation: longest context, then higher p, then drop below p_thr.
    """
    if not active_sets:
        return {}
    depth = m + l
    now = brute_counts(active_sets, k_max, depth)
    before = brute_counts(active_sets[:-1], k_max, depth)
    per_step = [step_symbols(a, k_max) for a in active_sets]
    window = per_step[-m:]
    contexts = set()
    for length in range(1, len(window) + 1):
        for ctx in product(*window[-length:]):
            if now.get(ctx, 0) > 0:
                contexts.add(ctx)
    best = {}
    for ctx in contexts:
        for key in now:
            if len(key) <= len(ctx) or key[:len(ctx)] != ctx or len(key) - len(ctx) > l:
                continue
            p = 1.0
            for j in range(len(ctx) + 1, len(key) + 1):
                num = now.get(key[:j], 0)
                den = before.get(key[:j - 1], 0)
                p *= min(1.0, num / den) if num else 0.0
            if p == 0.0:
                continue
            h = len(key) - len(ctx)
            sym = key[-1]
            cand = (len(ctx), p)
            old = best.get((h, sym))
            if old is None or cand > (len(old[1]), old[0]):
                best[(h, sym)] = (p, ctx)
    return {k: v for k, v in best.items() if v[0] >= p_thr}


def cusum_trace(xs, mu, k_pos, k_neg, h_pos, h_neg):
    """Two-sided tabular CUSUM written out directly; returns (flags, P, N) lists."""
    P = N = 0.0
    flags, Ps, Ns = [], [], []
    for x in xs:
        P = max(0.0, P + (x - mu - k_pos))
        N = min(0.0, N + (x - mu + k_neg))
        f = 0
        if P > h_pos:
            f, P = 1, 0.0
        elif N < -h_neg:
            f, N = -1, 0.0
        flags.append(f)
        Ps.append(P)
        Ns.append(N)
    return flags, Ps, Ns


def naive_blk(history_active, symbol, limit):
    def holds(a):
        return (not a) if not symbol else symbol <= a
    for i in range(len(history_active)):
        for j in range(i + limit, len(history_active) + 1):
            if all(holds(a) for a in history_active[i:j]) and j - i >= limit:
                return False
    return True


def naive_occ(history_active, symbol, lo, hi):
    holds = [((not a) if not symbol else symbol <= a) for a in history_active]
    return lo <= sum(holds) <= hi


def naive_pool(stream, t, mem, weight):
    """Merged probabilities from scratch: stream is [(t, identity, p)]."""
    acc = {}
    for s, ident, p in stream:
        if t - mem < s <= t:
            acc.setdefault(ident, []).append((s, p))
    out = {}
    for ident, ex in acc.items():
        ws = [weight(t - s + 1) for s, _ in ex]
        out[ident] = sum(w * p for w, (_, p) in zip(ws, ex)) / sum(ws)
    return out
