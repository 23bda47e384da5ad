"""Rendering anonymized queries into input/output samples and corpora."""
from __future__ import annotations

import hashlib
import json
import math
import os
import zlib
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import anonymize
from .anonymize import GID, AnonymizationMapping, normalize_strategy
from .history import DEFAULT_L, DEFAULT_SCOPE, HistoryIndex, HistoryWindow, Query, count_queries, query_at
from .kgstore import TemporalKG

ENTITY_HEADER = "Entity:"
RELATION_HEADER = "Relation:"
HISTORY_HEADER = "History:"
QUERY_HEADER = "Query:"
ANSWER_HEADER = "Answer:"
NONE_ANSWER = "None"

GENERAL, SPECIFIC = "general", "specific"
SFT, ICL = "sft", "icl"
DEFAULT_CONTEXT_TOKENS = 1024
DEFAULT_CHARS_PER_TOKEN = 4.0


class RenderError(ValueError):
    pass


@dataclass
class Sample:
    input_text: str
    output_text: str
    stage: str = GENERAL
    mode: str = SFT
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        meta = dict(self.meta)
        inv = meta.get("inverse_entity_map")
        if inv is not None:
            meta["inverse_entity_map"] = {str(k): v for k, v in inv.items()}
        meta["stage"] = self.stage
        meta["mode"] = self.mode
        return {"input": self.input_text, "output": self.output_text, "meta": meta}

    @classmethod
    def from_dict(cls, d: dict) -> "Sample":
        meta = dict(d.get("meta", {}))
        stage = meta.pop("stage", GENERAL)
        mode = meta.pop("mode", SFT)
        inv = meta.get("inverse_entity_map")
        if inv is not None:
            meta["inverse_entity_map"] = {int(k): v for k, v in inv.items()}
        return cls(d["input"], d["output"], stage, mode, meta)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)


@dataclass(frozen=True)
class ContextBudget:
    """Prompt length limit, in tokens.

    Without a ``token_counter`` the token count is estimated as
    ``ceil(chars / chars_per_token)``.
    """

    tokens: int = DEFAULT_CONTEXT_TOKENS
    chars_per_token: float = DEFAULT_CHARS_PER_TOKEN
    token_counter: Callable[[str], int] | None = None

    def measure(self, text: str) -> int:
        if self.token_counter is not None:
            return self.token_counter(text)
        return math.ceil(len(text) / self.chars_per_token)

    def fits(self, text: str) -> bool:
        return self.measure(text) <= self.tokens


def answer_token(q: Query, mapping: AnonymizationMapping) -> str:
    if q.gold in mapping.entity_map:
        return str(mapping.entity_map[q.gold])
    return NONE_ANSWER


def _compose(history: Sequence[str], query: str, entity_block=None, relation_block=None) -> str:
    parts = []
    if entity_block is not None:
        parts += [ENTITY_HEADER, *entity_block]
    if relation_block is not None:
        parts += [RELATION_HEADER, *relation_block]
    parts += [HISTORY_HEADER, *history, QUERY_HEADER, query, ANSWER_HEADER]
    return "\n".join(parts) + "\n"


def _fit(history: list[str], query: str, entity_block, relation_block, budget: ContextBudget | None):
    """Drop the oldest history lines until the prompt fits ``budget``."""
    text = _compose(history, query, entity_block, relation_block)
    if budget is None or budget.fits(text):
        return text, 0
    if budget.token_counter is None:
        limit = budget.tokens * budget.chars_per_token
        excess = len(text) - limit
        dropped = 0
        while excess > 0 and dropped < len(history):
            excess -= len(history[dropped]) + 1
            dropped += 1
    else:
        lo, hi = 0, len(history)
        # smallest drop count that fits; fitting is monotone in drops
        while lo < hi:
            mid = (lo + hi) // 2
            if budget.fits(_compose(history[mid:], query, entity_block, relation_block)):
                hi = mid
            else:
                lo = mid + 1
        dropped = lo
    return _compose(history[dropped:], query, entity_block, relation_block), dropped


def _meta(q: Query, mapping: AnonymizationMapping, dataset: str, tkg_entities: int | None) -> dict:
    meta = {
        "dataset": dataset,
        "split": q.split,
        "ordinal": q.ordinal,
        "direction": q.direction,
        "strategy": mapping.strategy,
        "seed": mapping.seed,
        "query": [q.anchor, q.relation, q.time, q.gold],
    }
    if mapping.strategy == GID:
        meta["inverse_entity_map"] = None
        meta["num_entities"] = tkg_entities if tkg_entities is not None else len(mapping.entity_map)
    else:
        meta["inverse_entity_map"] = mapping.inverse_entity_map
    return meta


def render_general(
    q: Query,
    h: HistoryWindow,
    mapping: AnonymizationMapping,
    *,
    dataset: str = "",
    mode: str = SFT,
    budget: ContextBudget | None = None,
    num_entities: int | None = None,
) -> Sample:
    """Render history and query lines; no scenario information."""
    query_line, lines = anonymize.apply(mapping, q, h)
    text, dropped = _fit([l.render() for l in lines], query_line.render(), None, None, budget)
    meta = _meta(q, mapping, dataset, num_entities)
    if dropped:
        meta["truncated_lines"] = dropped
    return Sample(text, answer_token(q, mapping), GENERAL, mode, meta)


def mapping_blocks(q: Query, h: HistoryWindow, mapping: AnonymizationMapping, entity_names, relation_names):
    """``id:name`` lines for the sample's entities and relations, by id."""

    def block(items, lookup, names, kind):
        rows = []
        for item in items:
            try:
                name = names[item]
            except (IndexError, KeyError):
                raise RenderError(f"no surface name for {kind} {item}") from None
            rows.append((lookup(item), name))
        return [f"{i}:{name}" for i, name in sorted(rows)]

    ents = block(anonymize.sample_entities(q, h), mapping.entity, entity_names, "entity")
    rels = block(anonymize.sample_relations(q, h), mapping.relation, relation_names, "relation")
    return ents, rels


def render_specific(
    q: Query,
    h: HistoryWindow,
    mapping: AnonymizationMapping,
    names,
    *,
    dataset: str = "",
    mode: str = SFT,
    budget: ContextBudget | None = None,
) -> Sample:
    """Like :func:`render_general` with entity and relation mapping blocks.

    ``names`` is a :class:`TemporalKG` or an ``(entity_names,
    relation_names)`` pair indexable by dataset id.
    """
    if isinstance(names, TemporalKG):
        entity_names, relation_names = names.entity_names, names.relation_names
        num_entities = names.num_entities
        dataset = dataset or names.name
    else:
        entity_names, relation_names = names
        num_entities = len(entity_names)
    ents, rels = mapping_blocks(q, h, mapping, entity_names, relation_names)
    query_line, lines = anonymize.apply(mapping, q, h)
    text, dropped = _fit([l.render() for l in lines], query_line.render(), ents, rels, budget)
    meta = _meta(q, mapping, dataset, num_entities)
    if dropped:
        meta["truncated_lines"] = dropped
    return Sample(text, answer_token(q, mapping), SPECIFIC, mode, meta)


def render_sample(
    tkg: TemporalKG,
    q: Query,
    h: HistoryWindow,
    stage: str,
    strategy: str,
    seed: int = 0,
    *,
    mode: str = SFT,
    budget: ContextBudget | None = None,
    rid_id_range: int | None = None,
) -> tuple[Sample, AnonymizationMapping]:
    kwargs = {"id_range": rid_id_range} if normalize_strategy(strategy) == anonymize.RID else {}
    mapping = anonymize.assign(strategy, q, h, tkg, seed, **kwargs)
    if stage == GENERAL:
        s = render_general(q, h, mapping, dataset=tkg.name, mode=mode, budget=budget, num_entities=tkg.num_entities)
    elif stage == SPECIFIC:
        s = render_specific(q, h, mapping, tkg, dataset=tkg.name, mode=mode, budget=budget)
    else:
        raise ValueError(f"unknown stage {stage!r}")
    return s, mapping


@dataclass
class CorpusManifest:
    counts: dict[str, int]
    stage: str
    mode: str
    strategy: str
    seed: int
    L: int
    context_tokens: int
    chars_per_token: float
    split: str
    directions: str
    content_hash: str = ""
    generated_at: str = ""
    config: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CorpusManifest":
        return cls(**json.loads(text))


def _dataset_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed & ((1 << 64) - 1), spawn_key=(zlib.crc32(name.encode()), 1)))


def corpus_hash(samples: Iterable[Sample]) -> str:
    h = hashlib.sha256()
    for s in samples:
        h.update(s.to_json().encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def build_corpus(
    datasets: Sequence[tuple[TemporalKG, int | None]],
    stage: str = GENERAL,
    strategy: str = anonymize.RID,
    L: int = DEFAULT_L,
    seed: int = 0,
    *,
    split: str = "train",
    directions="both",
    mode: str = SFT,
    budget: ContextBudget | None = ContextBudget(),
    scope: str = DEFAULT_SCOPE,
    shuffle: bool = True,
    rid_id_range: int | None = None,
) -> tuple[CorpusManifest, list[Sample]]:
    """Sample, render and interleave queries from several datasets.

    A count of ``None`` takes every query of the split. Sampling is
    uniform without replacement and seeded per dataset.
    """
    strategy = normalize_strategy(strategy)
    tagged = []
    counts = {}
    for tkg, count in datasets:
        available = count_queries(tkg, split, directions)
        if count is None:
            ordinals = np.arange(available)
        else:
            if count > available:
                raise ValueError(f"{tkg.name}: requested {count} samples but only {available} {split} queries exist")
            ordinals = np.sort(_dataset_rng(seed, tkg.name).choice(available, size=count, replace=False))
        index = HistoryIndex.for_kg(tkg, scope)
        for ordinal in ordinals.tolist():
            q = query_at(tkg, split, ordinal, directions)
            sample, _ = render_sample(
                tkg, q, index.window(q, L), stage, strategy, seed, mode=mode, budget=budget, rid_id_range=rid_id_range
            )
            tagged.append(sample)
        counts[tkg.name] = counts.get(tkg.name, 0) + len(ordinals)
    if shuffle and tagged:
        order = np.random.default_rng(np.random.SeedSequence(seed & ((1 << 64) - 1), spawn_key=(0,))).permutation(len(tagged))
        tagged = [tagged[i] for i in order]
    manifest = CorpusManifest(
        counts=counts,
        stage=stage,
        mode=mode,
        strategy=strategy,
        seed=seed,
        L=L,
        context_tokens=budget.tokens if budget else 0,
        chars_per_token=budget.chars_per_token if budget else 0.0,
        split=split,
        directions=directions if isinstance(directions, str) else ",".join(directions),
        content_hash=corpus_hash(tagged),
        generated_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    return manifest, tagged


def export_jsonl(samples: Iterable[Sample], path: str | os.PathLike, manifest: CorpusManifest | None = None) -> Path:
    """Write one JSON object per line; the manifest goes to a sidecar file."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for s in samples:
                f.write(s.to_json())
                f.write("\n")
        if manifest is not None:
            manifest_path(path).write_text(manifest.to_json(), encoding="utf-8")
    except OSError as e:
        raise OSError(f"cannot write corpus to {path}: {e}") from e
    return path


def manifest_path(path: str | os.PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def read_jsonl(path: str | os.PathLike) -> list[Sample]:
    with open(path, encoding="utf-8") as f:
        return [Sample.from_dict(json.loads(line)) for line in f if line.strip()]
