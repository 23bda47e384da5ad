"""Query construction and one-hop history selection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .kgstore import SCOPES, Quadruple, TemporalKG

OBJECT = "object"
SUBJECT = "subject"
DIRECTIONS = (OBJECT, SUBJECT)
DEFAULT_L = 50
DEFAULT_SCOPE = "train+valid+test"


@dataclass(frozen=True)
class Query:
    """A prediction task ``(anchor, relation, ?, time)`` or its mirror.

    For object prediction the anchor is the subject and ``gold`` the
    object; for subject prediction the anchor is the object.
    """

    direction: str
    anchor: int
    relation: int
    time: int
    gold: int
    split: str = "test"
    ordinal: int = 0

    @property
    def subject(self) -> int | None:
        return self.anchor if self.direction == OBJECT else None

    @property
    def object(self) -> int | None:
        return self.anchor if self.direction == SUBJECT else None

    def as_fact(self) -> Quadruple:
        if self.direction == OBJECT:
            return Quadruple(self.anchor, self.relation, self.gold, self.time)
        return Quadruple(self.gold, self.relation, self.anchor, self.time)


@dataclass(frozen=True)
class HistoryWindow:
    facts: tuple[Quadruple, ...]
    capacity: int = DEFAULT_L

    def __len__(self):
        return len(self.facts)

    def __iter__(self):
        return iter(self.facts)


def _directions(directions) -> tuple[str, ...]:
    if isinstance(directions, str):
        directions = (OBJECT, SUBJECT) if directions == "both" else (directions,)
    out = tuple(directions)
    for d in out:
        if d not in DIRECTIONS:
            raise ValueError(f"unknown direction {d!r}")
    return out


def query_from_fact(fact, direction: str, split: str = "test", ordinal: int = 0) -> Query:
    s, r, o, t = (int(x) for x in fact)
    if direction == OBJECT:
        return Query(OBJECT, s, r, t, o, split, ordinal)
    if direction == SUBJECT:
        return Query(SUBJECT, o, r, t, s, split, ordinal)
    raise ValueError(f"unknown direction {direction!r}")


def count_queries(tkg: TemporalKG, split: str, directions="both") -> int:
    return len(tkg.array(split)) * len(_directions(directions))


def query_at(tkg: TemporalKG, split: str, ordinal: int, directions="both") -> Query:
    """The ``ordinal``-th query that :func:`build_queries` would emit."""
    dirs = _directions(directions)
    row, k = divmod(ordinal, len(dirs))
    return query_from_fact(tkg.array(split)[row], dirs[k], split, ordinal)


def iter_queries(tkg: TemporalKG, split: str, directions="both") -> Iterator[Query]:
    dirs = _directions(directions)
    ordinal = 0
    for fact in tkg.array(split).tolist():
        for d in dirs:
            yield query_from_fact(fact, d, split, ordinal)
            ordinal += 1


def build_queries(tkg: TemporalKG, split: str, directions="both") -> list[Query]:
    """One query per fact and requested direction, object direction first."""
    return list(iter_queries(tkg, split, directions))


class HistoryIndex:
    """Per-anchor positions into a time-sorted scope, for fast lookups."""

    def __init__(self, tkg: TemporalKG, scope: str = DEFAULT_SCOPE):
        if scope not in SCOPES:
            raise KeyError(f"unknown scope {scope!r}")
        self.scope = scope
        self.facts = tkg.scope_array(scope)
        self._groups = {}
        n = tkg.num_entities
        for direction, col in ((OBJECT, 0), (SUBJECT, 2)):
            keys = self.facts[:, col]
            order = np.argsort(keys, kind="stable")
            starts = np.searchsorted(keys[order], np.arange(n + 1), side="left")
            self._groups[direction] = (order, starts)

    @classmethod
    def for_kg(cls, tkg: TemporalKG, scope: str = DEFAULT_SCOPE) -> "HistoryIndex":
        key = ("history_index", scope)
        if key not in tkg._cache:
            tkg._cache[key] = cls(tkg, scope)
        return tkg._cache[key]

    def positions(self, q: Query, L: int) -> np.ndarray:
        order, starts = self._groups[q.direction]
        group = order[starts[q.anchor]:starts[q.anchor + 1]]
        end = int(np.searchsorted(self.facts[group, 3], q.time, side="left"))
        return group[max(0, end - L):end] if L > 0 else group[:0]

    def window(self, q: Query, L: int = DEFAULT_L) -> HistoryWindow:
        rows = self.facts[self.positions(q, L)].tolist()
        return HistoryWindow(tuple(Quadruple(*r) for r in rows), L)


def select_history(tkg: TemporalKG, q: Query, L: int = DEFAULT_L, scope: str = DEFAULT_SCOPE) -> HistoryWindow:
    """The ``L`` most recent facts before ``q.time`` sharing the query anchor.

    Matching facts have the anchor as subject (object prediction) or as
    object (subject prediction); the result is in ascending time order.
    """
    if L < 0:
        raise ValueError("L must be non-negative")
    return HistoryIndex.for_kg(tkg, scope).window(q, L)


def select_histories(tkg: TemporalKG, queries: Iterable[Query], L: int = DEFAULT_L, scope: str = DEFAULT_SCOPE):
    index = HistoryIndex.for_kg(tkg, scope)
    return [index.window(q, L) for q in queries]
