"""Time-based forgetting for repeatedly extracted rules.

A rule extracted ``a`` steps ago has recency index ``i = a + 1`` (the current
step is ``i = 1``). Its weight is

* ``none``:         1
* ``linear``:       ``-(2k / (n - 1)) * (i - 1) + k + 1``  for ``1 <= i <= n``
* ``exponential``:  ``exp(-k * i)``

and the pooled probability of a rule is the weight-averaged probability of
its extractions inside the memory window ``(t - mem, t]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .ptl import ProbTemporalRule, rule_to_json

AGING_KINDS = ("none", "linear", "exponential")


@dataclass(frozen=True)
class AgingPolicy:
    kind: str = "none"
    k: float = 0.0
    n_window: Optional[int] = None

    def __post_init__(self):
        if self.kind not in AGING_KINDS:
            raise ValueError(f"aging kind must be one of {AGING_KINDS}, got {self.kind!r}")
        if self.kind == "linear":
            if not 0.0 <= self.k <= 1.0:
                raise ValueError(f"linear aging needs k in [0, 1], got {self.k}")
            if self.n_window is None or self.n_window < 2:
                raise ValueError("linear aging needs n_window >= 2")
        if self.kind == "exponential" and not self.k >= 0.0:
            raise ValueError(f"exponential aging needs k >= 0, got {self.k}")

    def weight(self, i: int) -> float:
        if self.kind == "linear":
            return linear_weight(i, self)
        if self.kind == "exponential":
            return exponential_weight(i, self)
        return 1.0


def linear_weight(i: int, policy: AgingPolicy) -> float:
    n = policy.n_window
    if not 1 <= i <= n:
        raise ValueError(f"recency index {i} outside 1..{n}")
    return -(2.0 * policy.k / (n - 1)) * (i - 1) + policy.k + 1.0


def exponential_weight(i: int, policy: AgingPolicy) -> float:
    return math.exp(-policy.k * i)


@dataclass
class PoolEntry:
    rule: ProbTemporalRule  # latest extraction, kept for output
    extractions: list = field(default_factory=list)  # [(extracted_at, p)], oldest first
    merged_p: Optional[float] = None


def merge_rule_probability(entry, policy: AgingPolicy, t: int) -> float:
    """Weighted mean of an entry's extraction probabilities at step ``t``.

    ``entry`` may be a :class:`PoolEntry` or a plain list of ``(step, p)``.
    """
    extractions = entry.extractions if isinstance(entry, PoolEntry) else list(entry)
    if not extractions:
        raise ValueError("cannot merge an empty entry")
    num = den = 0.0
    for step, p in extractions:
        w = policy.weight(t - step + 1)
        num += w * p
        den += w
    if den == 0.0:
        raise ValueError(f"aging weights sum to zero at t={t}")
    return num / den


class RulePool:
    """Rules keyed by identity with their extraction history inside ``(t - mem, t]``."""

    def __init__(self, mem: int = 1, policy: Optional[AgingPolicy] = None):
        if mem < 1:
            raise ValueError("memory window must be >= 1")
        self.mem = mem
        self.policy = policy or AgingPolicy()
        if self.policy.kind == "linear" and self.policy.n_window < mem:
            raise ValueError(f"linear aging n_window={self.policy.n_window} is shorter than mem={mem}")
        self.entries: dict = {}
        self.t: Optional[int] = None

    def __len__(self):
        return len(self.entries)

    def __contains__(self, rule):
        return rule.identity in self.entries

    def update(self, new_rules: Iterable[ProbTemporalRule], t: int) -> "RulePool":
        if self.t is not None and t < self.t:
            raise ValueError(f"pool time went backwards: {t} < {self.t}")
        self.t = t
        for rule in new_rules:
            entry = self.entries.get(rule.identity)
            if entry is None:
                entry = self.entries[rule.identity] = PoolEntry(rule=rule)
            entry.rule = rule
            entry.extractions.append((t, rule.p))
        oldest = t - self.mem + 1
        for key in list(self.entries):
            entry = self.entries[key]
            entry.extractions = [(s, p) for s, p in entry.extractions if s >= oldest]
            if not entry.extractions:
                del self.entries[key]
                continue
            weights = [self.policy.weight(t - s + 1) for s, _ in entry.extractions]
            if sum(weights) == 0.0:
                # linear aging with k = 1 gives weight 0 at i = n
                entry.merged_p = None
            else:
                entry.merged_p = merge_rule_probability(entry, self.policy, t)
        return self

    def merged_probability(self, rule: ProbTemporalRule) -> Optional[float]:
        entry = self.entries.get(rule.identity)
        return None if entry is None else entry.merged_p

    def snapshot_lines(self, names=None) -> list:
        lines = []
        for entry in sorted(self.entries.values(), key=lambda e: e.rule.sort_key()):
            lines.append(rule_to_json(entry.rule, names, merged_p=entry.merged_p,
                                      extraction_count=len(entry.extractions), t=self.t))
        return lines


def pool_update(pool: RulePool, new_rules: Iterable[ProbTemporalRule], t: int) -> RulePool:
    return pool.update(new_rules, t)
