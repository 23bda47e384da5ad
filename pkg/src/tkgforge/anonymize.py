"""Anonymous temporal structures: relative timestamps and abstract IDs.

Three ID strategies are supported:

* ``FID`` ranks entities (and relations) of one sample by frequency.
* ``GID`` keeps the dataset ids, shared by every sample of a dataset.
* ``RID`` draws a seeded random bijection per sample.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .history import OBJECT, HistoryWindow, Query
from .kgstore import TemporalKG

FID, GID, RID = "FID", "GID", "RID"
STRATEGIES = (FID, GID, RID)
PLACEHOLDER = "?"

_MASK64 = (1 << 64) - 1
_SPLIT_CODES = {"train": 0, "valid": 1, "test": 2}


class TemporalLeakError(ValueError):
    pass


class MappingDomainError(LookupError):
    pass


def normalize_strategy(strategy: str) -> str:
    s = strategy.upper()
    if s not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    return s


@dataclass(frozen=True)
class AnonymizationMapping:
    strategy: str
    entity_map: Mapping[int, int]
    relation_map: Mapping[int, int]
    seed: int | None = None
    scope: str = "per-sample"

    @property
    def inverse_entity_map(self) -> dict[int, int]:
        return {v: k for k, v in self.entity_map.items()}

    @property
    def inverse_relation_map(self) -> dict[int, int]:
        return {v: k for k, v in self.relation_map.items()}

    def entity(self, e: int) -> int:
        try:
            return self.entity_map[e]
        except KeyError:
            raise MappingDomainError(f"entity {e} not covered by {self.strategy} mapping") from None

    def relation(self, r: int) -> int:
        try:
            return self.relation_map[r]
        except KeyError:
            raise MappingDomainError(f"relation {r} not covered by {self.strategy} mapping") from None


class _IdentityMap(Mapping):
    """Identity on ``range(n)`` without materializing a dict."""

    def __init__(self, n: int):
        self.n = n

    def __getitem__(self, key):
        if isinstance(key, (int, np.integer)) and 0 <= key < self.n:
            return int(key)
        raise KeyError(key)

    def __contains__(self, key):
        return isinstance(key, (int, np.integer)) and 0 <= key < self.n

    def __iter__(self):
        return iter(range(self.n))

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if isinstance(other, _IdentityMap):
            return self.n == other.n
        return Mapping.__eq__(self, other)

    def __repr__(self):
        return f"identity(0..{self.n - 1})"


@dataclass(frozen=True)
class AnonymizedFactLine:
    rel_time: int
    subject: int | None
    relation: int
    object: int | None

    def render(self) -> str:
        s = PLACEHOLDER if self.subject is None else self.subject
        o = PLACEHOLDER if self.object is None else self.object
        return f"{self.rel_time}:[{s},{self.relation},{o}]"


def relativize_timestamp(t: int, t_q: int) -> int:
    """Number of timestamps between ``t`` and the query time ``t_q``."""
    if t > t_q:
        raise TemporalLeakError(f"fact time {t} is after query time {t_q}")
    return t_q - t


def _entity_occurrences(q: Query, h: HistoryWindow):
    for f in h.facts:
        yield f.subject, f.time
        yield f.object, f.time
    yield q.anchor, q.time


def _relation_occurrences(q: Query, h: HistoryWindow):
    for f in h.facts:
        yield f.relation, f.time
    yield q.relation, q.time


def _frequency_ranks(occurrences) -> dict[int, int]:
    # count desc, then latest occurrence, then first appearance
    stats = {}
    for pos, (item, t) in enumerate(occurrences):
        if item in stats:
            c, last, first = stats[item]
            stats[item] = (c + 1, max(last, t), first)
        else:
            stats[item] = (1, t, pos)
    order = sorted(stats, key=lambda k: (-stats[k][0], -stats[k][1], stats[k][2]))
    return {item: rank for rank, item in enumerate(order)}


def frequency_order(occurrences) -> list[int]:
    """Items of ``(item, time)`` occurrences ordered by the FID ranking rule."""
    ranks = _frequency_ranks(occurrences)
    return sorted(ranks, key=ranks.get)


def assign_fid(q: Query, h: HistoryWindow) -> AnonymizationMapping:
    return AnonymizationMapping(
        FID,
        _frequency_ranks(_entity_occurrences(q, h)),
        _frequency_ranks(_relation_occurrences(q, h)),
    )


def assign_gid(tkg: TemporalKG) -> AnonymizationMapping:
    key = ("gid_mapping",)
    if key not in tkg._cache:
        tkg._cache[key] = AnonymizationMapping(
            GID, _IdentityMap(tkg.num_entities), _IdentityMap(tkg.num_relations), scope="global"
        )
    return tkg._cache[key]


def _distinct(items) -> list[int]:
    return list(dict.fromkeys(items))


def rid_rng(seed: int, q: Query, dataset: str = "") -> np.random.Generator:
    """Generator keyed by the run seed and the query's identity."""
    key = (
        zlib.crc32(dataset.encode("utf-8")),
        _SPLIT_CODES.get(q.split, 3),
        q.ordinal,
        0 if q.direction == OBJECT else 1,
    )
    return np.random.default_rng(np.random.SeedSequence(seed & _MASK64, spawn_key=key))


def assign_rid(
    q: Query, h: HistoryWindow, seed: int, dataset: str = "", id_range: int | None = None
) -> AnonymizationMapping:
    """Random bijection of the sample's entities and relations.

    IDs are ``0..k-1`` unless ``id_range`` is given, in which case ``k``
    distinct IDs are drawn from ``0..id_range-1``.
    """
    entities = _distinct(e for e, _ in _entity_occurrences(q, h))
    relations = _distinct(r for r, _ in _relation_occurrences(q, h))
    rng = rid_rng(seed, q, dataset)

    def draw(k):
        if id_range is None:
            return rng.permutation(k).tolist()
        if id_range < k:
            raise ValueError(f"id_range {id_range} smaller than {k} items")
        return rng.choice(id_range, size=k, replace=False).tolist()

    return AnonymizationMapping(
        RID,
        dict(zip(entities, draw(len(entities)))),
        dict(zip(relations, draw(len(relations)))),
        seed=seed,
    )


def assign(
    strategy: str, q: Query, h: HistoryWindow, tkg: TemporalKG | None = None, seed: int = 0, **rid_kwargs
) -> AnonymizationMapping:
    strategy = normalize_strategy(strategy)
    if strategy == FID:
        return assign_fid(q, h)
    if strategy == RID:
        return assign_rid(q, h, seed, dataset=tkg.name if tkg is not None else "", **rid_kwargs)
    if tkg is None:
        raise ValueError("GID needs the dataset")
    return assign_gid(tkg)


def apply(
    mapping: AnonymizationMapping, q: Query, h: HistoryWindow
) -> tuple[AnonymizedFactLine, list[AnonymizedFactLine]]:
    """Anonymize a query and its history; returns ``(query_line, history_lines)``."""
    lines = [
        AnonymizedFactLine(
            relativize_timestamp(f.time, q.time),
            mapping.entity(f.subject),
            mapping.relation(f.relation),
            mapping.entity(f.object),
        )
        for f in h.facts
    ]
    anchor = mapping.entity(q.anchor)
    rel = mapping.relation(q.relation)
    if q.direction == OBJECT:
        query_line = AnonymizedFactLine(0, anchor, rel, None)
    else:
        query_line = AnonymizedFactLine(0, None, rel, anchor)
    return query_line, lines


def sample_entities(q: Query, h: HistoryWindow) -> list[int]:
    """Distinct entities of a query and its history, in appearance order."""
    return _distinct(e for e, _ in _entity_occurrences(q, h))


def sample_relations(q: Query, h: HistoryWindow) -> list[int]:
    return _distinct(r for r, _ in _relation_occurrences(q, h))
