"""Probabilistic temporal rules and BLK / OCC integrity constraints.

Rule text grammar (whitespace is free)::

    rule    := body "->" symbol ":" "[" INT "," FLOAT "]"
    body    := term ("&" term)*
    term    := symbol ["@" INT]          # offset <= 0, defaults to 0
    symbol  := NAME | "{" [NAME ("," NAME)*] "}" | "∅"

``A@-1 & C -> B : [1, 0.9]`` reads: if A held one step ago and C holds now,
then B holds one step ahead with probability 0.9. Event names are resolved
against a list of stream names; ``e1 .. en`` always work.

Constraint file lines::

    BLK(A) < 4           # A may not hold on 4 or more consecutive steps
    OCC(A) [0,1]         # A holds on between 0 and 1 steps in total
    OCC(A,B) [0,3] window=100

A colon before ``<`` / ``[`` is accepted, and ``#`` starts a comment.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .correlation import EMPTY, active_set, symbol_key


class RuleSyntaxError(ValueError):
    def __init__(self, message: str, text: str = "", pos: Optional[int] = None):
        self.pos = pos
        if pos is not None:
            message = f"{message} at position {pos}: {text!r}"
        super().__init__(message)


def default_names(n: int) -> list:
    return [f"e{i + 1}" for i in range(n)]


def _name_of(i: int, names: Optional[Sequence[str]]) -> str:
    if names is not None and i < len(names):
        return names[i]
    return f"e{i + 1}"


def _index_of(name: str, names: Optional[Sequence[str]]) -> int:
    if names is not None and name in names:
        return list(names).index(name)
    m = re.fullmatch(r"[es](\d+)", name)
    if m and int(m.group(1)) >= 1:
        return int(m.group(1)) - 1
    raise KeyError(name)


def symbol_to_text(symbol, names: Optional[Sequence[str]] = None) -> str:
    members = [_name_of(i, names) for i in sorted(symbol)]
    if len(members) == 1:
        return members[0]
    return "{" + ",".join(members) + "}"


def symbol_events(symbol, names: Optional[Sequence[str]] = None) -> list:
    return [_name_of(i, names) for i in sorted(symbol)]


@dataclass(frozen=True)
class ProbTemporalRule:
    body: tuple  # ((offset, symbol), ...), offsets strictly increasing, last one 0
    head: frozenset
    horizon: int
    p: float
    extracted_at: Optional[int] = None

    def __post_init__(self):
        if not self.body:
            raise ValueError("rule body must not be empty")
        offsets = [o for o, _ in self.body]
        if any(b <= a for a, b in zip(offsets, offsets[1:])) or offsets[-1] != 0:
            raise ValueError(f"body offsets must be strictly increasing and end at 0, got {offsets}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"probability {self.p} outside [0, 1]")

    @property
    def identity(self) -> tuple:
        """What makes two extractions 'the same rule': body, head and horizon."""
        return (self.body, self.head, self.horizon)

    def sort_key(self) -> tuple:
        return (self.horizon, symbol_key(self.head), len(self.body),
                tuple((o, symbol_key(s)) for o, s in self.body))

    def to_record(self, names: Optional[Sequence[str]] = None) -> dict:
        return {
            "body": [{"offset": o, "events": symbol_events(s, names)} for o, s in self.body],
            "head": {"events": symbol_events(self.head, names)},
            "horizon": self.horizon,
            "p": self.p,
            "extracted_at": self.extracted_at,
        }

    @classmethod
    def from_record(cls, rec: dict, names: Optional[Sequence[str]] = None) -> "ProbTemporalRule":
        body = tuple((int(b["offset"]), frozenset(_index_of(e, names) for e in b["events"]))
                     for b in rec["body"])
        head = frozenset(_index_of(e, names) for e in rec["head"]["events"])
        return cls(body=body, head=head, horizon=int(rec["horizon"]), p=float(rec["p"]),
                   extracted_at=rec.get("extracted_at"))


def rule_to_json(rule: ProbTemporalRule, names=None, **extra) -> str:
    rec = rule.to_record(names)
    rec.update(extra)
    return json.dumps(rec, separators=(",", ":"))


def format_rule(rule: ProbTemporalRule, names: Optional[Sequence[str]] = None) -> str:
    terms = []
    for offset, sym in rule.body:
        text = symbol_to_text(sym, names)
        terms.append(text if offset == 0 else f"{text}@{offset}")
    return f"{' & '.join(terms)} -> {symbol_to_text(rule.head, names)} : [{rule.horizon}, {rule.p!r}]"


_TOKEN = re.compile(r"\s*(?:(?P<arrow>->)|(?P<punct>[{}\[\],:&@∅])|(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
                    r"|(?P<name>[A-Za-z_][A-Za-z0-9_.]*))")


class _Parser:
    def __init__(self, text: str, names):
        self.text = text
        self.names = names
        self.tokens = []
        pos = 0
        stripped = text.rstrip()
        while pos < len(stripped):
            m = _TOKEN.match(stripped, pos)
            if not m or m.end() == pos:
                pos += len(stripped[pos:]) - len(stripped[pos:].lstrip())
                raise RuleSyntaxError("unexpected character", text, pos)
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.text))

    def take(self, value=None, kind=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value) or (kind is not None and tok[0] != kind):
            want = value or kind
            raise RuleSyntaxError(f"expected {want!r}", self.text, tok[2])
        self.i += 1
        return tok

    def event(self):
        _, name, pos = self.take(kind="name")
        try:
            return _index_of(name, self.names)
        except KeyError:
            raise RuleSyntaxError(f"unknown event name {name!r}", self.text, pos) from None

    def symbol(self):
        kind, value, pos = self.peek()
        if value == "∅":
            self.take()
            return EMPTY
        if value == "{":
            self.take()
            members = []
            if self.peek()[1] != "}":
                members.append(self.event())
                while self.peek()[1] == ",":
                    self.take(",")
                    members.append(self.event())
            self.take("}")
            return frozenset(members)
        if kind == "name":
            return frozenset([self.event()])
        raise RuleSyntaxError("expected an event symbol", self.text, pos)

    def integer(self):
        _, value, pos = self.take(kind="num")
        try:
            return int(value)
        except ValueError:
            raise RuleSyntaxError(f"expected an integer, got {value!r}", self.text, pos) from None

    def rule(self) -> ProbTemporalRule:
        terms = []
        while True:
            sym = self.symbol()
            offset = 0
            if self.peek()[1] == "@":
                self.take("@")
                pos = self.peek()[2]
                offset = self.integer()
                if offset > 0:
                    raise RuleSyntaxError("body offsets must be <= 0", self.text, pos)
            terms.append((offset, sym))
            if self.peek()[1] != "&":
                break
            self.take("&")
        self.take(kind="arrow")
        head = self.symbol()
        self.take(":")
        self.take("[")
        pos = self.peek()[2]
        horizon = self.integer()
        if horizon < 1:
            raise RuleSyntaxError("horizon must be >= 1", self.text, pos)
        self.take(",")
        _, pvalue, ppos = self.take(kind="num")
        p = float(pvalue)
        if not 0.0 <= p <= 1.0:
            raise RuleSyntaxError(f"probability {p} outside [0, 1]", self.text, ppos)
        self.take("]")
        if self.peek()[0] is not None:
            raise RuleSyntaxError("trailing input", self.text, self.peek()[2])
        offsets = [o for o, _ in terms]
        if any(b <= a for a, b in zip(offsets, offsets[1:])) or offsets[-1] != 0:
            raise RuleSyntaxError("body offsets must be strictly increasing and end at 0", self.text, 0)
        return ProbTemporalRule(body=tuple(terms), head=head, horizon=horizon, p=p)


def parse_rule(text: str, names: Optional[Sequence[str]] = None) -> ProbTemporalRule:
    """Parse the textual rule notation (see module docstring)."""
    return _Parser(text, names).rule()


# -- integrity constraints ------------------------------------------------------


@dataclass(frozen=True)
class BlkConstraint:
    """``BLK(symbol) < limit``: no run of ``limit`` or more consecutive active steps."""

    symbol: frozenset
    limit: int

    def __post_init__(self):
        if self.limit < 1:
            raise ValueError("BLK limit must be >= 1")


@dataclass(frozen=True)
class OccConstraint:
    """``OCC(symbol) [min_occ, max_occ]`` over the history (or its last ``window`` steps)."""

    symbol: frozenset
    min_occ: int
    max_occ: int
    window: Optional[int] = None

    def __post_init__(self):
        if self.min_occ < 0 or self.max_occ < self.min_occ:
            raise ValueError(f"need 0 <= min_occ <= max_occ, got [{self.min_occ}, {self.max_occ}]")
        if self.window is not None and self.window < 1:
            raise ValueError("OCC window must be >= 1")


Constraint = Union[BlkConstraint, OccConstraint]


def symbol_active(symbol, ev) -> bool:
    """A symbol holds at a step iff all its events are flagged there (∅: none are)."""
    active = active_set(ev)
    if not symbol:
        return not active
    return symbol <= active


def check_blk(history: Sequence, c: BlkConstraint) -> bool:
    run = 0
    for ev in history:
        run = run + 1 if symbol_active(c.symbol, ev) else 0
        if run >= c.limit:
            return False
    return True


def check_occ(history: Sequence, c: OccConstraint) -> bool:
    steps = history[-c.window:] if c.window is not None else history
    count = sum(1 for ev in steps if symbol_active(c.symbol, ev))
    return c.min_occ <= count <= c.max_occ


def _trailing_run(history: Sequence, symbol) -> int:
    run = 0
    for ev in reversed(history):
        if not symbol_active(symbol, ev):
            break
        run += 1
    return run


def violates(pred_symbol, horizon: int, constraints: Iterable[Constraint], history: Sequence) -> bool:
    """Would realizing ``pred_symbol`` ``horizon`` steps ahead break a constraint?

    The steps in between are assumed to make no constrained symbol active, so
    they break any BLK run and add no OCC occurrences. Only violations the
    realized step itself causes count: a constraint the history already
    breaks does not veto unrelated predictions.
    """
    for c in constraints:
        if not symbol_active(c.symbol, pred_symbol):
            continue
        if isinstance(c, BlkConstraint):
            run = (_trailing_run(history, c.symbol) if horizon == 1 else 0) + 1
            if run >= c.limit:
                return True
        else:
            past = history
            if c.window is not None:
                # hypothetical step is the newest step of the window
                past = history[max(0, len(history) - c.window + horizon):]
            count = sum(1 for ev in past if symbol_active(c.symbol, ev)) + 1
            if count > c.max_occ:
                return True
    return False


def prune_predictions(preds: Iterable, constraints: Sequence[Constraint], history: Sequence) -> list:
    """Drop predictions whose realization would violate a constraint."""
    preds = list(preds)
    if not constraints:
        return preds
    return [p for p in preds if not violates(p.symbol, p.horizon, constraints, history)]


_CONSTRAINT = re.compile(
    r"^(?P<kind>BLK|OCC)\s*\(\s*(?P<events>[^)]*)\)\s*:?\s*"
    r"(?:<\s*(?P<limit>\d+)|\[\s*(?P<lo>\d+)\s*,\s*(?P<hi>\d+)\s*\])"
    r"(?:\s+window\s*=\s*(?P<window>\d+))?\s*$")


def parse_constraint(line: str, names: Optional[Sequence[str]] = None) -> Constraint:
    m = _CONSTRAINT.match(line.strip())
    if not m:
        raise RuleSyntaxError(f"malformed constraint {line.strip()!r}")
    events = [e.strip() for e in m.group("events").split(",") if e.strip()]
    try:
        symbol = frozenset(_index_of(e, names) for e in events)
    except KeyError as exc:
        raise RuleSyntaxError(f"unknown event name {exc.args[0]!r} in {line.strip()!r}") from None
    if m.group("kind") == "BLK":
        if m.group("limit") is None:
            raise RuleSyntaxError(f"BLK needs '< limit': {line.strip()!r}")
        return BlkConstraint(symbol, int(m.group("limit")))
    if m.group("lo") is None:
        raise RuleSyntaxError(f"OCC needs '[min,max]': {line.strip()!r}")
    window = int(m.group("window")) if m.group("window") else None
    return OccConstraint(symbol, int(m.group("lo")), int(m.group("hi")), window)


def format_constraint(c: Constraint, names: Optional[Sequence[str]] = None) -> str:
    events = ",".join(_name_of(i, names) for i in sorted(c.symbol))
    if isinstance(c, BlkConstraint):
        return f"BLK({events}) < {c.limit}"
    text = f"OCC({events}) [{c.min_occ},{c.max_occ}]"
    return text + (f" window={c.window}" if c.window is not None else "")


def read_constraints(path, names: Optional[Sequence[str]] = None) -> list:
    out = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(parse_constraint(line, names))
        except RuleSyntaxError as exc:
            raise RuleSyntaxError(f"{path}:{lineno}: {exc}") from None
    return out
