import json

import pytest

from conftest import DATA
from oracles import mock_dry_run, summarize
from tkgforge.kgstore import load_dataset
from tkgforge.mock_endpoint import MockCompletionServer, mock_transport
from tkgforge.pipeline import (
    PredictionMismatchError,
    evaluate_predictions,
    read_predictions,
    run_frequency,
    run_scorer,
    write_predictions,
)
from tkgforge.scorers import CompletionScorer, EndpointConfig
from tkgforge.synthetic import random_tkg

MINI_RANKS = [None, None, None, None, 6, 1, None, None, 3, 1, 6, 2, 1, 1, 4, 3, 1, 1, None, None, 3, 2, 2, 5, 5, 4, 1, 1, None, None]


@pytest.fixture
def mini():
    return load_dataset(DATA / "mini", "mini")


def test_oracle_agrees_with_pinned_ranks():
    assert [rank for _, rank, _ in mock_dry_run(DATA / "mini", num_entities=15)] == MINI_RANKS


@pytest.mark.parametrize("strategy", ["GID", "RID", "FID"])
@pytest.mark.parametrize("stage", ["general", "specific"])
def test_mock_run_matches_oracle(mini, strategy, stage):
    cfg = EndpointConfig("http://mock/v1", backoff=0.0)
    with CompletionScorer(cfg, mock_transport()) as scorer:
        records = run_scorer(mini, scorer, "test", stage=stage, strategy=strategy, seed=3, batch_size=7)
    report = evaluate_predictions(records, mini)
    assert [r.rank for r in report.results] == MINI_RANKS
    n, hits, empty = summarize(mock_dry_run(DATA / "mini", num_entities=15))
    assert report.overall.queries == n == 30
    assert report.overall.hits == hits == {1: 8, 3: 14, 10: 20}
    assert report.overall.abstained == empty == 1
    assert all(len(r.predictions) <= 10 for r in records)
    if strategy == "GID":
        # the mock's out-of-range id and junk token are filtered
        assert all(r.invalid >= 1 for r in records)


def test_predictions_round_trip(tmp_path, mini):
    records = run_frequency(mini, "test")
    path = write_predictions(records, tmp_path / "p.jsonl")
    assert read_predictions(path) == records


def test_frequency_run_counts(mini):
    records = run_frequency(mini, "valid")
    assert len(records) == 2 * 10
    assert all(r.status in ("scored", "abstained") for r in records)


def test_evaluate_rejects_foreign_predictions(t1):
    big = random_tkg(1, num_entities=40)
    with pytest.raises(PredictionMismatchError):
        evaluate_predictions(run_frequency(big, "test"), t1)


def test_sink_receives_batches(mini):
    seen = []
    with CompletionScorer(EndpointConfig("http://mock/v1"), mock_transport()) as scorer:
        run_scorer(mini, scorer, "test", batch_size=8, sink=lambda recs: seen.append(len(recs)))
    assert seen == [8, 8, 8, 6]


def test_live_http_mock_server(mini, tmp_path):
    with MockCompletionServer() as server:
        cfg = EndpointConfig(server.base_url, max_in_flight=4, replay_path=str(tmp_path / "log.jsonl"))
        with CompletionScorer(cfg) as scorer:
            records = run_scorer(mini, scorer, "test", strategy="GID")
        assert server.requests == 30
    report = evaluate_predictions(records, mini)
    assert [r.rank for r in report.results] == MINI_RANKS
    assert len((tmp_path / "log.jsonl").read_text().splitlines()) == 30
    rec = json.loads((tmp_path / "log.jsonl").read_text().splitlines()[0])
    assert rec["request"]["max_tokens"] == 1


def test_unreachable_endpoint_marks_unscored(mini):
    with MockCompletionServer() as server:
        url = server.base_url
    cfg = EndpointConfig(url, retries=1, backoff=0.0, timeout=2)
    with CompletionScorer(cfg) as scorer:
        records = run_scorer(mini, scorer, "test", limit=4)
    assert [r.status for r in records] == ["unscored"] * 4
    report = evaluate_predictions(records, mini)
    assert report.overall.unscored == 4 and report.h(10) == 0.0
