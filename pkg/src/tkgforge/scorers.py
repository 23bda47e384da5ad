"""Candidate scoring: frequency baseline, completion endpoints, ranking."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import httpx

from .anonymize import GID, AnonymizationMapping, frequency_order
from .history import OBJECT, HistoryWindow, Query
from .samples import NONE_ANSWER, Sample

logger = logging.getLogger(__name__)

TOP_N = 10


class EndpointError(RuntimeError):
    """The completion endpoint failed after exhausting retries."""


class CapabilityError(EndpointError):
    """The endpoint does not return token log-probabilities."""


@dataclass(frozen=True)
class RankedPredictions:
    entries: tuple[tuple[int, float], ...] = ()
    abstentions: int = 0
    invalid: int = 0
    duplicates: int = 0

    @property
    def entities(self) -> list[int]:
        return [e for e, _ in self.entries]

    def __len__(self):
        return len(self.entries)


def frequency_score(q: Query, h: HistoryWindow, slots: str = "answer") -> list[tuple[int, int]]:
    """Rank entities by how often they fill the answer slot in the history.

    Ties go to the most recent occurrence, then to first appearance.
    ``slots="both"`` counts subject and object positions instead.
    """
    occ = []
    for f in h.facts:
        if slots == "both":
            occ += [(f.subject, f.time), (f.object, f.time)]
        elif slots == "answer":
            occ.append((f.object if q.direction == OBJECT else f.subject, f.time))
        else:
            raise ValueError(f"unknown slots mode {slots!r}")
    counts = {}
    for e, _ in occ:
        counts[e] = counts.get(e, 0) + 1
    return [(e, counts[e]) for e in frequency_order(occ)]


def normalize_answer(token: str) -> str:
    return token.strip()


def parse_entity_id(token: str) -> int | None:
    """Canonical non-negative decimal integer, else ``None``."""
    s = normalize_answer(token)
    if not s or not s.isascii() or not s.isdigit():
        return None
    if len(s) > 1 and s[0] == "0":
        return None
    return int(s)


def rank_predictions(
    raw: Iterable[tuple[str, float]],
    mapping: AnonymizationMapping,
    num_entities: int,
    top_n: int = TOP_N,
) -> RankedPredictions:
    """Keep the first ``top_n`` distinct valid entities of ``raw``.

    ``raw`` is stably re-sorted by score. Answers are translated from
    abstract IDs to dataset entity ids; "None", non-numeric tokens and IDs
    outside the mapping are dropped and counted.
    """
    inverse = None if mapping.strategy == GID else mapping.inverse_entity_map
    seen = set()
    entries = []
    abstentions = invalid = duplicates = 0
    for token, score in sorted(raw, key=lambda x: -x[1]):
        if normalize_answer(token) == NONE_ANSWER:
            abstentions += 1
            continue
        aid = parse_entity_id(token)
        if aid is None:
            invalid += 1
            continue
        if inverse is None:
            entity = aid if aid < num_entities else None
        else:
            entity = inverse.get(aid)
            if entity is not None and entity >= num_entities:
                entity = None
        if entity is None:
            invalid += 1
            continue
        if entity in seen:
            duplicates += 1
            continue
        seen.add(entity)
        if len(entries) < top_n:
            entries.append((entity, float(score)))
    return RankedPredictions(tuple(entries), abstentions, invalid, duplicates)


def rank_entities(scored: Sequence[tuple[int, float]], top_n: int = TOP_N) -> RankedPredictions:
    """Ranking for scorers that already emit dataset entity ids."""
    seen = set()
    entries = []
    for e, s in scored:
        if e in seen:
            continue
        seen.add(e)
        entries.append((int(e), float(s)))
        if len(entries) == top_n:
            break
    return RankedPredictions(tuple(entries))


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str = "default"
    token_env: str | None = "TKG_API_KEY"
    top_logprobs: int = 20
    timeout: float = 60.0
    max_in_flight: int = 8
    retries: int = 3
    backoff: float = 0.5
    replay_path: str | None = None

    def __post_init__(self):
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.top_logprobs < TOP_N:
            logger.warning("top_logprobs=%d is below %d; fewer candidates than ranked slots", self.top_logprobs, TOP_N)

    @property
    def completions_url(self) -> str:
        return self.base_url.rstrip("/") + "/completions"


def completion_request(prompt: str, cfg: EndpointConfig) -> dict:
    return {
        "model": cfg.model,
        "prompt": prompt,
        "max_tokens": 1,
        "logprobs": cfg.top_logprobs,
        "temperature": 0,
    }


def parse_top_logprobs(response: dict) -> list[tuple[str, float]]:
    """First-position ``(token, probability)`` pairs, most probable first."""
    try:
        logprobs = response["choices"][0].get("logprobs")
    except (KeyError, IndexError, TypeError, AttributeError):
        raise CapabilityError(f"malformed completion response: {str(response)[:200]}") from None
    top = (logprobs or {}).get("top_logprobs") or []
    if not top or not top[0]:
        raise CapabilityError("endpoint returned no top log-probabilities")
    first = top[0]
    if isinstance(first, list):
        pairs = [(d["token"], d["logprob"]) for d in first]
    else:
        pairs = list(first.items())
    out = [(normalize_answer(tok), math.exp(lp) if lp is not None else 0.0) for tok, lp in pairs]
    out = [(t, p if math.isfinite(p) else 0.0) for t, p in out if t]
    out.sort(key=lambda x: -x[1])
    return out


def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class CompletionScorer:
    """Scores samples against a completions endpoint with one generated step.

    Requests are retried on transport errors, timeouts, 429 and 5xx
    responses. With ``cfg.replay_path`` every exchange is appended to a
    JSON-lines log readable by :class:`ReplayScorer`.
    """

    def __init__(self, cfg: EndpointConfig, transport: httpx.BaseTransport | None = None):
        self.cfg = cfg
        headers = {}
        token = os.environ.get(cfg.token_env) if cfg.token_env else None
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(
            timeout=cfg.timeout,
            headers=headers,
            transport=transport,
            limits=httpx.Limits(max_connections=cfg.max_in_flight),
        )
        self._log_lock = threading.Lock()

    def close(self):
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _post(self, payload: dict) -> dict:
        attempts = self.cfg.retries + 1
        last = None
        for attempt in range(attempts):
            try:
                resp = self._client.post(self.cfg.completions_url, json=payload)
            except httpx.TransportError as e:
                last = f"{type(e).__name__}: {e}"
            else:
                if resp.status_code == 200:
                    return resp.json()
                last = f"HTTP {resp.status_code}: {resp.text[:200]}"
                if resp.status_code != 429 and resp.status_code < 500:
                    raise EndpointError(last)
            if attempt + 1 < attempts:
                time.sleep(self.cfg.backoff * (2**attempt))
        raise EndpointError(f"{self.cfg.completions_url}: giving up after {attempts} attempts ({last})")

    def score_prompt(self, prompt: str) -> list[tuple[str, float]]:
        payload = completion_request(prompt, self.cfg)
        response = self._post(payload)
        if self.cfg.replay_path:
            record = {"prompt_sha256": prompt_key(prompt), "request": payload, "response": response}
            with self._log_lock, open(self.cfg.replay_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")
        return parse_top_logprobs(response)

    def score(self, sample: Sample) -> list[tuple[str, float]]:
        return self.score_prompt(sample.input_text)

    def score_many(self, samples: Sequence[Sample]) -> list[list[tuple[str, float]] | EndpointError]:
        """Score in parallel; failures come back in place as exceptions."""

        def one(s):
            try:
                return self.score(s)
            except EndpointError as e:
                return e

        with ThreadPoolExecutor(max_workers=self.cfg.max_in_flight) as pool:
            return list(pool.map(one, samples))


def llm_score(sample: Sample, cfg: EndpointConfig, transport: httpx.BaseTransport | None = None):
    with CompletionScorer(cfg, transport) as scorer:
        return scorer.score(sample)


class ReplayScorer:
    """Serves responses recorded by :class:`CompletionScorer`, offline."""

    def __init__(self, path: str | os.PathLike):
        self.responses = {}
        with open(Path(path), encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    rec = json.loads(line)
                    self.responses[rec["prompt_sha256"]] = rec["response"]

    def score_prompt(self, prompt: str) -> list[tuple[str, float]]:
        try:
            return parse_top_logprobs(self.responses[prompt_key(prompt)])
        except KeyError:
            raise EndpointError("prompt not present in replay log") from None

    def score(self, sample: Sample):
        return self.score_prompt(sample.input_text)

    def score_many(self, samples):
        out = []
        for s in samples:
            try:
                out.append(self.score(s))
            except EndpointError as e:
                out.append(e)
        return out
