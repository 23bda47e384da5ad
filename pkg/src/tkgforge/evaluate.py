"""Time-aware filtered Hits@k, run reports and multi-token ID statistics.

MRR is not reported: scorers return at most ten candidates, so there is
no full ranking to take a reciprocal rank from.
"""
from __future__ import annotations

import csv
import io
import json
import os
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from . import anonymize
from .history import DEFAULT_L, DEFAULT_SCOPE, OBJECT, SUBJECT, HistoryIndex, Query, iter_queries
from .kgstore import SPLITS, TemporalKG
from .samples import NONE_ANSWER, answer_token

KS = (1, 3, 10)
REPORT_SCHEMA_VERSION = 1


class GoldIndex:
    """True answers per ``(anchor, relation, direction, time)``."""

    def __init__(self, answers: dict):
        self._answers = answers

    @classmethod
    def build(cls, tkg: TemporalKG, splits: Sequence[str] = SPLITS, times: Iterable[int] | None = None) -> "GoldIndex":
        wanted = None if times is None else set(times)
        answers = defaultdict(set)
        for split in splits:
            for s, r, o, t in tkg.array(split).tolist():
                if wanted is not None and t not in wanted:
                    continue
                answers[(s, r, OBJECT, t)].add(o)
                answers[(o, r, SUBJECT, t)].add(s)
        return cls(dict(answers))

    def answers(self, anchor: int, relation: int, direction: str, time: int) -> set[int]:
        return self._answers.get((anchor, relation, direction, time), set())

    def for_query(self, q: Query) -> set[int]:
        return self.answers(q.anchor, q.relation, q.direction, q.time)

    def __len__(self):
        return len(self._answers)


def time_aware_filter(preds: Sequence[int], q: Query, gold_index: GoldIndex) -> int | None:
    """1-based rank of ``q.gold`` once other true answers are removed."""
    others = gold_index.for_query(q) - {q.gold}
    rank = 0
    for e in preds:
        if e in others:
            continue
        rank += 1
        if e == q.gold:
            return rank
    return None


def hits_at_k(ranks: Sequence[int | None], k: int) -> float:
    """Share of all queries (absent ranks included) ranked within ``k``."""
    if not ranks:
        return 0.0
    return sum(1 for r in ranks if r is not None and r <= k) / len(ranks)


SCORED, ABSTAINED, UNSCORED = "scored", "abstained", "unscored"


@dataclass
class QueryResult:
    dataset: str
    split: str
    ordinal: int
    direction: str
    gold: int
    rank: int | None
    status: str = SCORED


@dataclass
class MetricBlock:
    queries: int = 0
    hits: dict = field(default_factory=lambda: {k: 0 for k in KS})
    abstained: int = 0
    unscored: int = 0

    def add(self, r: QueryResult):
        self.queries += 1
        for k in KS:
            if r.rank is not None and r.rank <= k:
                self.hits[k] += 1
        if r.status == ABSTAINED:
            self.abstained += 1
        elif r.status == UNSCORED:
            self.unscored += 1

    def rate(self, k: int) -> float:
        return self.hits[k] / self.queries if self.queries else 0.0

    def to_dict(self) -> dict:
        d = {"queries": self.queries, "abstained": self.abstained, "unscored": self.unscored}
        for k in KS:
            d[f"hits@{k}_count"] = self.hits[k]
            d[f"hits@{k}"] = self.rate(k)
        return d


@dataclass
class EvalReport:
    overall: MetricBlock
    by_dataset: dict[str, MetricBlock]
    by_direction: dict[str, MetricBlock]
    results: list[QueryResult]
    metadata: dict = field(default_factory=dict)
    created_at: str = ""

    def h(self, k: int) -> float:
        return self.overall.rate(k)

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "created_at": self.created_at,
            "metadata": self.metadata,
            "overall": self.overall.to_dict(),
            "by_dataset": {k: v.to_dict() for k, v in sorted(self.by_dataset.items())},
            "by_direction": {k: v.to_dict() for k, v in sorted(self.by_direction.items())},
            "queries": [asdict(r) for r in self.results],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_markdown(self) -> str:
        names = sorted(self.by_dataset)
        head = "| Model | " + " | ".join(f"{n} H@1 | {n} H@3 | {n} H@10" for n in names) + " |"
        sep = "|---|" + "---|" * (3 * len(names))
        model = self.metadata.get("scorer", "model")
        cells = []
        for n in names:
            b = self.by_dataset[n]
            cells += [f"{100 * b.rate(k):.1f}" for k in KS]
        return "\n".join([head, sep, f"| {model} | " + " | ".join(cells) + " |"]) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "name", "queries", "abstained", "unscored", "hits@1", "hits@3", "hits@10"])
        rows = [("overall", "all", self.overall)]
        rows += [("dataset", k, v) for k, v in sorted(self.by_dataset.items())]
        rows += [("direction", k, v) for k, v in sorted(self.by_direction.items())]
        for g, n, b in rows:
            w.writerow([g, n, b.queries, b.abstained, b.unscored] + [f"{b.rate(k):.6f}" for k in KS])
        return buf.getvalue()

    def write(self, out_dir: str | os.PathLike, stem: str = "report") -> dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "json": out_dir / f"{stem}.json",
            "md": out_dir / f"{stem}.md",
            "csv": out_dir / f"{stem}.csv",
        }
        paths["json"].write_text(self.to_json(), encoding="utf-8")
        paths["md"].write_text(self.to_markdown(), encoding="utf-8")
        paths["csv"].write_text(self.to_csv(), encoding="utf-8")
        return paths


def build_report(results: Iterable[QueryResult], metadata: dict | None = None, timestamp: bool = True) -> EvalReport:
    results = list(results)
    overall = MetricBlock()
    by_dataset = defaultdict(MetricBlock)
    by_direction = defaultdict(MetricBlock)
    for r in results:
        overall.add(r)
        by_dataset[r.dataset].add(r)
        by_direction[r.direction].add(r)
    created = datetime.now(timezone.utc).isoformat(timespec="seconds") if timestamp else ""
    return EvalReport(overall, dict(by_dataset), dict(by_direction), results, dict(metadata or {}), created)


class DigitChunkOracle:
    """A decimal ID is one token iff it has at most ``max_digits`` digits.

    Matches tokenizers that split numbers into chunks of up to three digits.
    """

    source = "digit-chunk heuristic"

    def __init__(self, max_digits: int = 3):
        self.max_digits = max_digits

    def single_token(self, text: str) -> bool:
        if text == NONE_ANSWER:
            return True
        return text.isdigit() and len(text) <= self.max_digits


class VocabularyOracle:
    """Single-token check against an explicit tokenizer vocabulary.

    Reads a HuggingFace ``tokenizer.json`` (``model.vocab``), a JSON object
    of token to id, or a plain text file with one token per line. Byte-level
    and sentencepiece space markers are also accepted as prefixes.
    """

    source = "external vocabulary file"
    SPACE_MARKERS = ("", "Ġ", "▁", " ")

    def __init__(self, vocab: Iterable[str], allow_space_prefix: bool = False):
        self.vocab = set(vocab)
        self.allow_space_prefix = allow_space_prefix

    @classmethod
    def from_file(cls, path: str | os.PathLike, allow_space_prefix: bool = False) -> "VocabularyOracle":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".json":
            data = json.loads(text)
            if "model" in data and "vocab" in data["model"]:
                data = data["model"]["vocab"]
            return cls(data.keys() if isinstance(data, dict) else data, allow_space_prefix)
        return cls((line.rstrip("\n") for line in text.splitlines() if line), allow_space_prefix)

    def single_token(self, text: str) -> bool:
        if text == NONE_ANSWER:
            return True
        markers = self.SPACE_MARKERS if self.allow_space_prefix else ("",)
        return any(m + text in self.vocab for m in markers)


@dataclass(frozen=True)
class MultiTokenStats:
    dataset: str
    split: str
    strategy: str
    num_queries: int
    num_multi_token: int
    oracle: str

    @property
    def fraction(self) -> float:
        return self.num_multi_token / self.num_queries if self.num_queries else 0.0

    @property
    def percentage(self) -> float:
        return 100.0 * self.fraction

    def to_dict(self) -> dict:
        d = asdict(self)
        d["percentage"] = self.percentage
        return d


def multi_token_stats(
    tkg: TemporalKG,
    split: str = "valid",
    strategy: str = anonymize.GID,
    L: int = DEFAULT_L,
    oracle=None,
    *,
    seed: int = 0,
    directions="both",
    scope: str = DEFAULT_SCOPE,
) -> MultiTokenStats:
    """Count queries whose answer ID is not a single token."""
    oracle = oracle or DigitChunkOracle()
    strategy = anonymize.normalize_strategy(strategy)
    index = HistoryIndex.for_kg(tkg, scope) if strategy != anonymize.GID else None
    n = multi = 0
    for q in iter_queries(tkg, split, directions):
        if strategy == anonymize.GID:
            mapping = anonymize.assign_gid(tkg)
        else:
            mapping = anonymize.assign(strategy, q, index.window(q, L), tkg, seed)
        n += 1
        if not oracle.single_token(answer_token(q, mapping)):
            multi += 1
    return MultiTokenStats(tkg.name, split, strategy, n, multi, getattr(oracle, "source", type(oracle).__name__))
