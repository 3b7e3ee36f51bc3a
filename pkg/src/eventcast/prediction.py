"""Partial-matching forecasts over a pattern forest.

Contexts are the symbol tuples stored in the forest that match some suffix
(of length 1..m) of the recent steps, one symbol chosen per step. From each
context the forest is walked up to ``l`` levels deeper; the probability of a
chain is the product of its one-step edge probabilities.

When several contexts forecast the same symbol at the same horizon, the one
backed by the longest context is kept (ties go to the higher probability)
and only then is ``p_thr`` applied. Raising ``p_thr`` can therefore only
remove forecasts.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_event_matrix, check_probability
from .correlation import PatternForest, symbol_key, symbols_for_step
from .ingest import EventVector
from .ptl import ProbTemporalRule


@dataclass(frozen=True)
class Prediction:
    horizon: int
    symbol: frozenset
    p: float
    context: tuple

    def sort_key(self) -> tuple:
        return (self.horizon, symbol_key(self.symbol), len(self.context),
                tuple(symbol_key(s) for s in self.context))


def _window_steps(forest: PatternForest, window, m: int) -> list:
    if window is None:
        steps = list(forest.window)
    else:
        steps = [tuple(w) if not hasattr(w, "flags") else symbols_for_step(w, forest.k_max)
                 for w in window]
    return steps[-m:] if m > 0 else []


def match_suffixes(forest: PatternForest, window=None, m: Optional[int] = None) -> list:
    """Forest paths equal to one symbol choice per step over a suffix of ``window``.

    ``window`` is a sequence of per-step symbol collections (oldest first); it
    defaults to the forest's own recent steps.
    """
    m = forest.m if m is None else m
    steps = _window_steps(forest, window, m)
    found = []
    for length in range(1, len(steps) + 1):
        for path in product(*steps[-length:]):
            node = forest.node(path)
            if node is not None and node.count > 0:
                found.append(tuple(path))
    found.sort(key=lambda c: (len(c), tuple(symbol_key(s) for s in c)))
    return found


def _better(new: Prediction, old: Prediction) -> bool:
    if len(new.context) != len(old.context):
        return len(new.context) > len(old.context)
    if new.p != old.p:
        return new.p > old.p
    return new.sort_key() < old.sort_key()


def predict(forest: PatternForest, window=None, m: Optional[int] = None,
            l: Optional[int] = None, p_thr: float = 0.0) -> list:
    """Forecasts for the next ``l`` steps, filtered by ``p_thr``.

    Returns a list sorted by horizon then symbol; at most one forecast per
    ``(horizon, symbol)``.
    """
    check_probability(p_thr, "p_thr")
    m = forest.m if m is None else m
    l = forest.l if l is None else l
    if forest.t == 0:
        return []
    best: dict = {}

    def extend(path, node, p, depth, context):
        if depth == l:
            return
        for child in node.sorted_children():
            if child.count == 0:
                continue
            ext = path + (child.symbol,)
            q = p * forest.path_probability(ext)
            if q == 0.0:
                continue
            cand = Prediction(horizon=depth + 1, symbol=child.symbol, p=q, context=context)
            key = (cand.horizon, cand.symbol)
            if key not in best or _better(cand, best[key]):
                best[key] = cand
            extend(ext, child, q, depth + 1, context)

    for context in match_suffixes(forest, window, m):
        if len(context) + 1 > forest.depth:
            continue
        extend(context, forest.node(context), 1.0, 0, context)
    return sorted((pr for pr in best.values() if pr.p >= p_thr), key=Prediction.sort_key)


def predicted_events(preds: Iterable[Prediction]) -> dict:
    """Per-event view: horizon -> set of event indices contained in any forecast symbol."""
    out: dict = {}
    for pr in preds:
        out.setdefault(pr.horizon, set()).update(pr.symbol)
    return {h: frozenset(s) for h, s in out.items()}


def prediction_to_rule(pr: Prediction, t: Optional[int] = None, p: Optional[float] = None) -> ProbTemporalRule:
    k = len(pr.context)
    body = tuple((i - (k - 1), sym) for i, sym in enumerate(pr.context))
    return ProbTemporalRule(body=body, head=pr.symbol, horizon=pr.horizon,
                            p=pr.p if p is None else p, extracted_at=t)


def emit_rules(predictions: Iterable[Prediction], t: Optional[int] = None) -> list:
    rules = [prediction_to_rule(pr, t) for pr in predictions]
    return sorted(rules, key=ProbTemporalRule.sort_key)


class PatternForecaster(BaseEstimator):
    """Online variable-order forecaster over binary event streams.

    Parameters
    ----------
    m : int
        Longest context, in steps.
    l : int
        Forecast horizon, in steps.
    k_max : int
        Largest event subset treated as one symbol.
    p_thr : float
        Forecasts below this probability are dropped.
    """

    def __init__(self, m=1, l=1, k_max=1, p_thr=0.5):
        self.m = m
        self.l = l
        self.k_max = k_max
        self.p_thr = p_thr

    def fit(self, E, y=None):
        E = check_event_matrix(E)
        self.n_features_in_ = E.shape[1]
        self.forest_ = PatternForest(m=self.m, l=self.l, k_max=self.k_max, n=self.n_features_in_)
        return self.partial_fit(E)

    def partial_fit(self, E, y=None):
        if not hasattr(self, "forest_"):
            return self.fit(E)
        E = check_event_matrix(E, n_features=self.n_features_in_)
        for row in E:
            self.forest_.update(EventVector(t=self.forest_.t, flags=tuple(int(v) for v in row)))
        return self

    def predict_next(self) -> list:
        """Forecasts issued from the current state of the forest."""
        check_is_fitted(self, "forest_")
        return predict(self.forest_, p_thr=self.p_thr)

    def predict_rules(self) -> list:
        check_is_fitted(self, "forest_")
        return emit_rules(self.predict_next(), t=self.forest_.t - 1)

    def forecast(self, E) -> np.ndarray:
        """Stream ``E`` in and return per-event forecasts after each row.

        The result has shape ``(steps, l, n)``; ``out[i, h-1, j] == 1`` means
        event j was forecast, after seeing row i, to fire h steps later.
        """
        check_is_fitted(self, "forest_")
        E = check_event_matrix(E, n_features=self.n_features_in_)
        out = np.zeros((E.shape[0], self.l, self.n_features_in_), dtype=np.int8)
        for i, row in enumerate(E):
            self.partial_fit(row.reshape(1, -1))
            for h, events in predicted_events(self.predict_next()).items():
                for j in events:
                    out[i, h - 1, j] = 1
        return out
