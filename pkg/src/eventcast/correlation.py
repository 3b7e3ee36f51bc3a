"""Variable-order pattern forest over event-subset symbols.

Every step contributes a set of *symbols*: all non-empty subsets of the
active events with at most ``k_max`` members, or the single empty symbol
when nothing fired. The forest stores one frequency tree per root symbol;
the node reached by the path ``(s_1, ..., s_d)`` counts how many times that
symbol tuple has occurred as a contiguous run of steps, for every depth
``d <= m + l``.

Each node also remembers its count as of the previous step, so the
one-step conditional ``N_v(t) / N_u(t-1)`` can be read off without keeping a
history log.
"""

from __future__ import annotations

from collections import deque
from itertools import combinations
from math import comb
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from ._validation import check_positive_int

EMPTY = frozenset()


class ForestError(ValueError):
    pass


def symbol_key(symbol) -> tuple:
    """Canonical sort key: empty symbol first, then by size, then members."""
    return (len(symbol), tuple(sorted(symbol)))


def format_symbol(symbol) -> str:
    return "{" + ",".join(str(i + 1) for i in sorted(symbol)) + "}"


def parse_symbol(token: str) -> frozenset:
    token = token.strip()
    if not (token.startswith("{") and token.endswith("}")):
        raise ForestError(f"bad symbol token {token!r}")
    inner = token[1:-1].strip()
    if not inner:
        return EMPTY
    return frozenset(int(x) - 1 for x in inner.split(","))


def active_set(ev) -> frozenset:
    """Active event indices of an EventVector, flag sequence, or index set."""
    if isinstance(ev, (set, frozenset)):
        return frozenset(ev)
    flags = getattr(ev, "flags", ev)
    return frozenset(i for i, f in enumerate(flags) if f)


def symbols_for_step(ev, k_max: int = 1) -> tuple:
    """Symbols contributed by one event vector, in canonical order.

    >>> symbols_for_step((0, 0, 0))
    (frozenset(),)
    >>> len(symbols_for_step((1, 1, 1), k_max=2))
    6
    """
    check_positive_int(k_max, "k_max")
    active = sorted(active_set(ev))
    if not active:
        return (EMPTY,)
    out = []
    for size in range(1, min(k_max, len(active)) + 1):
        out.extend(frozenset(c) for c in combinations(active, size))
    return tuple(out)


def node_budget(n: int, k_max: int) -> int:
    """Number of distinct symbols (empty one included): sum of C(n, i) for i <= k_max."""
    check_positive_int(n, "n")
    check_positive_int(k_max, "k_max")
    if k_max > n:
        raise ValueError(f"k_max={k_max} exceeds n={n}")
    return sum(comb(n, i) for i in range(k_max + 1))


def tree_node_bound(n: int, k_max: int, height: int) -> int:
    """Nodes in a full tree of the given height over the whole symbol alphabet."""
    b = node_budget(n, k_max)
    return sum(b ** i for i in range(height + 1))


class PatternNode:
    __slots__ = ("symbol", "count", "prev_count", "stamp", "children")

    def __init__(self, symbol, count=0):
        self.symbol = symbol
        self.count = count
        self.prev_count = count
        self.stamp = -1  # step at which count last changed
        self.children = {}

    def bump(self, step: int) -> None:
        if self.stamp != step:
            self.prev_count = self.count
            self.stamp = step
        self.count += 1

    def child(self, symbol) -> "PatternNode":
        node = self.children.get(symbol)
        if node is None:
            node = self.children[symbol] = PatternNode(symbol)
        return node

    def sorted_children(self) -> list:
        return [self.children[s] for s in sorted(self.children, key=symbol_key)]

    def __repr__(self):
        return f"PatternNode({format_symbol(self.symbol)}, count={self.count})"


class PatternForest:
    """Frequency trees of symbol sequences up to length ``m + l``.

    Feed event vectors in step order with :meth:`update`; ``t`` is the number
    of steps seen and also the step index the next vector must carry.
    """

    def __init__(self, m: int = 1, l: int = 1, k_max: int = 1, n: Optional[int] = None):
        self.m = check_positive_int(m, "m")
        self.l = check_positive_int(l, "l")
        self.k_max = check_positive_int(k_max, "k_max")
        self.n = n
        self.t = 0
        self.trees: dict = {}
        self.window: deque = deque(maxlen=self.m + self.l)  # symbol tuples per step
        self.active_window: deque = deque(maxlen=self.m + self.l)

    @property
    def depth(self) -> int:
        return self.m + self.l

    def update(self, ev) -> "PatternForest":
        step = getattr(ev, "t", self.t)
        if step != self.t:
            raise ForestError(f"out-of-order step: got t={step}, expected t={self.t}")
        flags = getattr(ev, "flags", None)
        if flags is not None:
            if self.n is None:
                self.n = len(flags)
            elif len(flags) != self.n:
                raise ForestError(f"event vector has length {len(flags)}, expected {self.n}")
        active = active_set(ev)
        self.active_window.append(active)
        self.window.append(symbols_for_step(active, self.k_max))
        steps = list(self.window)
        for start in range(len(steps)):
            for sym in steps[start]:
                root = self.trees.get(sym)
                if root is None:
                    root = self.trees[sym] = PatternNode(sym)
                self._bump_paths(root, steps[start + 1:], step)
        self.t += 1
        return self

    def _bump_paths(self, node: PatternNode, rest: list, step: int) -> None:
        if not rest:
            node.bump(step)
            return
        head, tail = rest[0], rest[1:]
        for sym in head:
            self._bump_paths(node.child(sym), tail, step)

    def fit_stream(self, events: Iterable) -> "PatternForest":
        for ev in events:
            self.update(ev)
        return self

    def lagged_count(self, node: PatternNode) -> int:
        """Count of ``node`` as it stood before the most recent update."""
        if node.stamp == self.t - 1:
            return node.prev_count
        return node.count

    def node(self, path: Sequence) -> Optional[PatternNode]:
        if not path:
            return None
        node = self.trees.get(frozenset(path[0]))
        for sym in path[1:]:
            if node is None:
                return None
            node = node.children.get(frozenset(sym))
        return node

    def prior_probability(self, root) -> float:
        if self.t == 0:
            raise ForestError("prior probability is undefined before the first step")
        node = self.trees.get(frozenset(root))
        return 0.0 if node is None else node.count / self.t

    def path_probability(self, path: Sequence) -> float:
        """``N_v(t) / N_u(t-1)`` for the final node v of ``path`` and its parent u."""
        if len(path) < 2:
            raise ForestError("path probability needs at least two symbols; use prior_probability")
        if len(path) > self.depth:
            raise ForestError(f"path length {len(path)} exceeds m + l = {self.depth}")
        parent = self.node(path[:-1])
        if parent is None:
            return 0.0
        node = parent.children.get(frozenset(path[-1]))
        if node is None or node.count == 0:
            return 0.0
        denom = self.lagged_count(parent)
        if denom == 0:
            raise ForestError(f"inconsistent forest: node count {node.count} under a parent with no history")
        return min(1.0, node.count / denom)

    def iter_nodes(self) -> Iterator[tuple]:
        """Yield ``(path, node)`` depth-first in canonical symbol order."""
        def walk(node, path):
            path = path + (node.symbol,)
            yield path, node
            for child in node.sorted_children():
                yield from walk(child, path)

        for sym in sorted(self.trees, key=symbol_key):
            yield from walk(self.trees[sym], ())

    def counts(self) -> dict:
        return {path: node.count for path, node in self.iter_nodes()}

    def n_nodes(self) -> int:
        return sum(1 for _ in self.iter_nodes())

    # -- snapshot text format -------------------------------------------------

    def dumps(self) -> str:
        lines = [
            "# eventcast pattern forest v1",
            f"# n={self.n if self.n is not None else 0} m={self.m} l={self.l} k_max={self.k_max} t={self.t}",
            "# window " + " ".join(format_symbol(a) for a in self.active_window),
        ]
        for path, node in self.iter_nodes():
            lines.append("\t".join([
                str(len(path)),
                format_symbol(path[0]),
                " ".join(format_symbol(s) for s in path),
                str(node.count),
                str(self.lagged_count(node)),
            ]))
        return "\n".join(lines) + "\n"

    def dump(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "PatternForest":
        lines = text.splitlines()
        if len(lines) < 3 or not lines[0].startswith("# eventcast pattern forest"):
            raise ForestError("not a pattern forest snapshot")
        params = dict(kv.split("=") for kv in lines[1][2:].split())
        forest = cls(m=int(params["m"]), l=int(params["l"]), k_max=int(params["k_max"]),
                     n=int(params["n"]) or None)
        forest.t = int(params["t"])
        window = lines[2][len("# window"):].split()
        for token in window:
            active = parse_symbol(token)
            forest.active_window.append(active)
            forest.window.append(symbols_for_step(active, forest.k_max))
        for lineno, line in enumerate(lines[3:], start=4):
            if not line.strip():
                continue
            try:
                depth, _root, path_text, count, prev = line.split("\t")
                path = [parse_symbol(tok) for tok in path_text.split()]
                count, prev = int(count), int(prev)
            except ValueError as exc:
                raise ForestError(f"line {lineno}: {exc}") from None
            if len(path) != int(depth):
                raise ForestError(f"line {lineno}: depth does not match path")
            node = forest.trees.get(path[0])
            if node is None:
                node = forest.trees[path[0]] = PatternNode(path[0])
            for sym in path[1:]:
                node = node.child(sym)
            node.count = count
            node.prev_count = prev
            node.stamp = forest.t - 1 if prev != count else -1
        return forest

    @classmethod
    def load(cls, path) -> "PatternForest":
        return cls.loads(Path(path).read_text(encoding="utf-8"))
