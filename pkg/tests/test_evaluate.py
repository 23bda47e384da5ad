import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tkgforge.evaluate import (
    DigitChunkOracle,
    GoldIndex,
    QueryResult,
    VocabularyOracle,
    build_report,
    hits_at_k,
    multi_token_stats,
    time_aware_filter,
)
from tkgforge.history import OBJECT, SUBJECT, Query, build_queries
from tkgforge.kgstore import SPLITS, TemporalKG
from tkgforge.synthetic import random_tkg


def brute_force_filtered_rank(preds, gold, true_answers):
    """Raw rank minus the other true answers ranked above the gold."""
    if gold not in preds:
        return None
    raw = preds.index(gold) + 1
    removed = len([e for e in preds[: raw - 1] if e in true_answers and e != gold])
    return raw - removed


def index_of(pairs):
    return GoldIndex({(0, 0, OBJECT, 5): set(pairs)})


Q = Query(OBJECT, 0, 0, 5, 1)


def test_filter_examples():
    assert time_aware_filter([3, 1], Q, index_of({1, 3})) == 1
    assert time_aware_filter([1, 4, 5], Q, index_of({1, 4})) == 1
    assert time_aware_filter([2, 4], Q, index_of({1})) is None
    assert time_aware_filter([2, 3, 1], Q, index_of({1})) == 3


def test_hits_examples():
    assert hits_at_k([1, None], 1) == 0.5
    assert hits_at_k([2, 3, 11], 3) == pytest.approx(2 / 3)
    assert hits_at_k([2, 3, 11], 10) == pytest.approx(2 / 3)
    assert hits_at_k([2, 3, 11], 1) == 0
    assert hits_at_k([None, None], 10) == 0
    assert hits_at_k([], 1) == 0.0


def test_gold_index_covers_every_split():
    tkg = random_tkg(3)
    index = GoldIndex.build(tkg)
    for split in SPLITS:
        for q in build_queries(tkg, split):
            assert q.gold in index.for_query(q)


def test_gold_index_time_restriction():
    tkg = random_tkg(3)
    times = {q.time for q in build_queries(tkg, "test")}
    small = GoldIndex.build(tkg, times=times)
    full = GoldIndex.build(tkg)
    for q in build_queries(tkg, "test"):
        assert small.for_query(q) == full.for_query(q)
    assert len(small) < len(full)


def test_filter_matches_brute_force_randomized():
    rng = random.Random(1234)
    for _ in range(1000):
        n = rng.randint(1, 12)
        preds = rng.sample(range(15), k=min(n, 15))
        gold = rng.randrange(15)
        true_answers = set(rng.sample(range(15), k=rng.randint(0, 6))) | {gold}
        q = Query(rng.choice([OBJECT, SUBJECT]), 2, 1, 7, gold)
        index = GoldIndex({(2, 1, q.direction, 7): true_answers})
        got = time_aware_filter(preds, q, index)
        assert got == brute_force_filtered_rank(preds, gold, true_answers)
        if got is not None:
            assert got <= preds.index(gold) + 1


@settings(max_examples=200, deadline=None)
@given(ranks=st.lists(st.one_of(st.none(), st.integers(1, 15)), max_size=60))
def test_hits_monotone(ranks):
    h = [hits_at_k(ranks, k) for k in (1, 3, 10)]
    assert 0 <= h[0] <= h[1] <= h[2] <= 1


def fixture_results(t1):
    from tkgforge.pipeline import evaluate_predictions, run_frequency

    return evaluate_predictions(run_frequency(t1, "test"), t1, {"scorer": "frequency"}, timestamp=False)


def test_report_on_fixture(t1):
    report = fixture_results(t1)
    assert [(r.direction, r.gold, r.rank) for r in report.results] == [(OBJECT, 1, 1), (SUBJECT, 0, 1)]
    assert report.h(1) == report.h(3) == report.h(10) == 1.0
    d = report.to_dict()
    assert d["overall"]["queries"] == 2
    assert d["by_direction"]["object"]["hits@1"] == 1.0
    assert not any("mrr" in key.lower() for key in d["overall"])


def test_empty_report():
    report = build_report([], {})
    assert report.overall.queries == 0
    assert report.h(1) == report.h(10) == 0.0
    assert report.to_markdown().startswith("| Model |")
    assert report.to_csv().splitlines()[1] == "overall,all,0,0,0,0.000000,0.000000,0.000000"


def test_report_counts_abstained_and_unscored():
    results = [
        QueryResult("d", "test", 0, OBJECT, 1, 1),
        QueryResult("d", "test", 1, SUBJECT, 1, None, "abstained"),
        QueryResult("d", "test", 2, OBJECT, 1, None, "unscored"),
        QueryResult("e", "test", 0, OBJECT, 1, 4),
    ]
    report = build_report(results)
    assert report.overall.queries == 4
    assert (report.overall.abstained, report.overall.unscored) == (1, 1)
    assert report.h(1) == 0.25 and report.h(10) == 0.5
    assert report.by_dataset["e"].rate(3) == 0.0
    assert report.by_dataset["e"].rate(10) == 1.0


def test_report_deterministic_modulo_timestamp(t1):
    a = json.loads(fixture_results(t1).to_json())
    b = json.loads(fixture_results(t1).to_json())
    a.pop("created_at"), b.pop("created_at")
    assert a == b


def test_report_write(tmp_path, t1):
    paths = fixture_results(t1).write(tmp_path)
    assert json.loads(paths["json"].read_text())["schema_version"] == 1
    assert paths["md"].read_text().startswith("| Model | t1 H@1")
    assert paths["csv"].read_text().splitlines()[1].startswith("overall,all,2")


def test_digit_chunk_oracle():
    o = DigitChunkOracle()
    assert o.single_token("0") and o.single_token("999") and o.single_token("None")
    assert not o.single_token("1000")


def test_vocabulary_oracle_files(tmp_path):
    txt = tmp_path / "vocab.txt"
    txt.write_text("1\n12\nĠ345\n")
    o = VocabularyOracle.from_file(txt)
    assert o.single_token("12") and not o.single_token("345") and not o.single_token("3")
    assert VocabularyOracle.from_file(txt, allow_space_prefix=True).single_token("345")
    tok = tmp_path / "tokenizer.json"
    tok.write_text(json.dumps({"model": {"vocab": {"7": 0, "77": 1}}}))
    o = VocabularyOracle.from_file(tok)
    assert o.single_token("77") and not o.single_token("777")


def test_multi_token_fixture(t1):
    stats = multi_token_stats(t1, "test", "GID", 50, DigitChunkOracle())
    assert (stats.num_queries, stats.num_multi_token, stats.percentage) == (2, 0, 0.0)


@pytest.mark.parametrize("strategy", ["GID", "FID", "RID"])
def test_multi_token_synthetic(strategy):
    tkg = random_tkg(7, num_entities=3000, num_times=12, facts_per_time=60, zipf=0.4)
    oracle = DigitChunkOracle(max_digits=3)
    stats = multi_token_stats(tkg, "valid", strategy, 50, oracle)
    qs = build_queries(tkg, "valid")
    assert stats.num_queries == len(qs)
    if strategy == "GID":
        assert stats.num_multi_token == sum(q.gold >= 1000 for q in qs)
        assert stats.num_multi_token > 0
    else:
        # per-sample ids stay below 1000 when a sample has < 1000 entities
        assert stats.num_multi_token == 0
