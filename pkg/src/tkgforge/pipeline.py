"""Scoring runs, predictions files and evaluation of predictions."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .evaluate import ABSTAINED, SCORED, UNSCORED, GoldIndex, QueryResult, build_report, time_aware_filter
from .history import DEFAULT_L, DEFAULT_SCOPE, HistoryIndex, Query, iter_queries
from .kgstore import TemporalKG
from .samples import GENERAL, ICL, NONE_ANSWER, ContextBudget, render_sample
from .scorers import EndpointError, frequency_score, rank_entities, rank_predictions

logger = logging.getLogger(__name__)


class PredictionMismatchError(ValueError):
    """Predictions do not belong to the dataset they are evaluated on."""


@dataclass
class PredictionRecord:
    dataset: str
    split: str
    ordinal: int
    direction: str
    anchor: int
    relation: int
    time: int
    gold: int
    predictions: list = field(default_factory=list)
    status: str = SCORED
    abstentions: int = 0
    invalid: int = 0
    duplicates: int = 0
    error: str | None = None

    @classmethod
    def for_query(cls, dataset: str, q: Query, **kw) -> "PredictionRecord":
        return cls(dataset, q.split, q.ordinal, q.direction, q.anchor, q.relation, q.time, q.gold, **kw)

    def query(self) -> Query:
        return Query(self.direction, self.anchor, self.relation, self.time, self.gold, self.split, self.ordinal)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionRecord":
        d = dict(d)
        d["predictions"] = [[int(e), float(s)] for e, s in d.get("predictions", [])]
        return cls(**d)


def write_predictions(records: Iterable[PredictionRecord], path: str | os.PathLike, append: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a" if append else "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            f.write(r.to_json() + "\n")
    return path


def read_predictions(path: str | os.PathLike) -> list[PredictionRecord]:
    with open(path, encoding="utf-8") as f:
        return [PredictionRecord.from_dict(json.loads(line)) for line in f if line.strip()]


def run_frequency(
    tkg: TemporalKG,
    split: str = "test",
    L: int = DEFAULT_L,
    directions="both",
    scope: str = DEFAULT_SCOPE,
    slots: str = "answer",
) -> list[PredictionRecord]:
    """Frequency baseline predictions for every query of ``split``."""
    index = HistoryIndex.for_kg(tkg, scope)
    records = []
    for q in iter_queries(tkg, split, directions):
        ranked = rank_entities(frequency_score(q, index.window(q, L), slots))
        preds = [[e, s] for e, s in ranked.entries]
        records.append(PredictionRecord.for_query(tkg.name, q, predictions=preds, status=SCORED if preds else ABSTAINED))
    return records


def run_scorer(
    tkg: TemporalKG,
    scorer,
    split: str = "test",
    *,
    stage: str = GENERAL,
    strategy: str = "GID",
    L: int = DEFAULT_L,
    seed: int = 0,
    directions="both",
    scope: str = DEFAULT_SCOPE,
    mode: str = ICL,
    budget: ContextBudget | None = ContextBudget(),
    batch_size: int = 256,
    limit: int | None = None,
    sink: Callable[[list[PredictionRecord]], None] | None = None,
) -> list[PredictionRecord]:
    """Render each query, score it with ``scorer`` and rank the answers.

    ``scorer`` needs a ``score_many(samples)`` method returning, per sample,
    either ``(token, score)`` pairs or an :class:`EndpointError`. Completed
    batches are handed to ``sink`` so partial runs can be persisted.
    """
    index = HistoryIndex.for_kg(tkg, scope)
    records = []
    batch = []

    def flush():
        samples = [s for _, s, _ in batch]
        outcomes = scorer.score_many(samples)
        done = []
        for (q, _, mapping), raw in zip(batch, outcomes):
            if isinstance(raw, EndpointError):
                rec = PredictionRecord.for_query(tkg.name, q, status=UNSCORED, error=str(raw))
            else:
                ranked = rank_predictions(raw, mapping, tkg.num_entities)
                top = raw[0][0].strip() if raw else None
                status = ABSTAINED if top == NONE_ANSWER or not raw else SCORED
                rec = PredictionRecord.for_query(
                    tkg.name,
                    q,
                    predictions=[[e, s] for e, s in ranked.entries],
                    status=status,
                    abstentions=ranked.abstentions,
                    invalid=ranked.invalid,
                    duplicates=ranked.duplicates,
                )
            done.append(rec)
        records.extend(done)
        if sink is not None:
            sink(done)
        batch.clear()

    for n, q in enumerate(iter_queries(tkg, split, directions)):
        if limit is not None and n >= limit:
            break
        sample, mapping = render_sample(tkg, q, index.window(q, L), stage, strategy, seed, mode=mode, budget=budget)
        batch.append((q, sample, mapping))
        if len(batch) >= batch_size:
            flush()
    if batch:
        flush()
    return records


def evaluate_predictions(
    records: Sequence[PredictionRecord],
    tkg: TemporalKG,
    metadata: dict | None = None,
    gold_index: GoldIndex | None = None,
    timestamp: bool = True,
):
    """Time-aware filtered ranks for ``records`` against ``tkg``."""
    for r in records:
        ids = [r.anchor, r.gold] + [e for e, _ in r.predictions]
        if any(not 0 <= e < tkg.num_entities for e in ids) or not 0 <= r.relation < tkg.num_relations:
            raise PredictionMismatchError(
                f"prediction for {r.dataset}/{r.split}#{r.ordinal} has ids outside {tkg.name} "
                f"({tkg.num_entities} entities, {tkg.num_relations} relations)"
            )
    if gold_index is None:
        gold_index = GoldIndex.build(tkg, times={r.time for r in records})
    results = []
    for r in records:
        q = r.query()
        rank = time_aware_filter([e for e, _ in r.predictions], q, gold_index)
        results.append(QueryResult(r.dataset, r.split, r.ordinal, r.direction, r.gold, rank, r.status))
    meta = {"dataset": tkg.name}
    meta.update(metadata or {})
    return build_report(results, meta, timestamp=timestamp)
