import json
import shutil

import pytest

from conftest import DATA
from tkgforge.cli import main, read_config
from tkgforge.mock_endpoint import MockCompletionServer
from tkgforge.samples import read_jsonl


def test_ingest_prints_counts(capsys):
    assert main(["ingest", str(DATA / "t1")]) == 0
    out = capsys.readouterr().out
    assert "entities     4" in out and "4/0/1" in out


def test_ingest_unknown_expectation_warns(caplog):
    assert main(["ingest", str(DATA / "t1"), "--expect", "nosuch"]) == 0
    assert "no reference stats" in caplog.text


def test_ingest_reference_mismatch_fails(capsys):
    assert main(["ingest", str(DATA / "t1"), "--expect", "icews14"]) == 1
    assert "MISMATCH" in capsys.readouterr().out


def test_ingest_corrupt_line(tmp_path, capsys):
    d = tmp_path / "bad"
    shutil.copytree(DATA / "t1", d)
    (d / "test.txt").write_text("0\t0\t1\t2\n0\tzero\t1\t2\n")
    assert main(["ingest", str(d)]) == 1
    assert "test.txt:2" in capsys.readouterr().err


def test_ingest_missing_dataset(capsys):
    assert main(["ingest", "/nonexistent/ds"]) == 1


def test_build_samples_all(tmp_path):
    out = tmp_path / "c"
    assert main(["build-samples", "--dataset", str(DATA / "t1"), "--strategy", "fid", "--out", str(out)]) == 0
    samples = read_jsonl(out / "samples.jsonl")
    manifest = json.loads((out / "samples.jsonl.manifest.json").read_text())
    assert len(samples) == 8 and manifest["counts"] == {"t1": 8}
    assert manifest["config"]["L"] == 50 and manifest["context_tokens"] == 1024


def test_build_samples_count_zero(tmp_path):
    out = tmp_path / "c"
    assert main(["build-samples", "--dataset", str(DATA / "t1"), "--count", "0", "--out", str(out)]) == 0
    assert (out / "samples.jsonl").read_text() == ""


def test_build_samples_mixture_by_name(tmp_path):
    out = tmp_path / "c"
    args = ["build-samples", "--data-root", str(DATA), "--datasets", "mini:40,t1:5", "--seed", "7", "--out", str(out)]
    assert main(args) == 0
    manifest = json.loads((out / "samples.jsonl.manifest.json").read_text())
    assert manifest["counts"] == {"mini": 40, "t1": 5}
    first = (out / "samples.jsonl").read_bytes()
    assert main(args) == 0
    assert (out / "samples.jsonl").read_bytes() == first


def test_build_samples_specific_test_split(tmp_path):
    out = tmp_path / "c"
    args = ["build-samples", "--dataset", str(DATA / "mini"), "--stage", "specific", "--strategy", "gid",
            "--split", "test", "--out", str(out)]
    assert main(args) == 0
    assert len(read_jsonl(out / "samples.jsonl")) == 2 * 15


def test_build_samples_too_many(tmp_path, capsys):
    assert main(["build-samples", "--dataset", str(DATA / "t1"), "--count", "100", "--out", str(tmp_path)]) == 1
    assert "t1" in capsys.readouterr().err


def test_run_and_eval_frequency(tmp_path, capsys):
    pred = tmp_path / "pred.jsonl"
    assert main(["run", "--dataset", str(DATA / "t1"), "--split", "test", "--out", str(pred)]) == 0
    assert len(pred.read_text().splitlines()) == 2
    assert main(["eval", str(pred), "--dataset", str(DATA / "t1"), "--out", str(tmp_path / "rep")]) == 0
    report = json.loads((tmp_path / "rep" / "report.json").read_text())
    assert [q["rank"] for q in report["queries"]] == [1, 1]
    assert report["metadata"]["scorer"] == "frequency"
    assert "| frequency | 100.0 | 100.0 | 100.0 |" in capsys.readouterr().out


def test_eval_mismatched_dataset(tmp_path):
    pred = tmp_path / "pred.jsonl"
    assert main(["run", "--dataset", str(DATA / "mini"), "--out", str(pred)]) == 0
    assert main(["eval", str(pred), "--dataset", str(DATA / "t1"), "--out", str(tmp_path / "r")]) == 1


def test_run_llm_against_mock_is_deterministic(tmp_path):
    outputs = []
    with MockCompletionServer() as server:
        for i in range(2):
            pred = tmp_path / f"p{i}.jsonl"
            args = ["run", "--dataset", str(DATA / "mini"), "--scorer", "llm", "--endpoint", server.base_url,
                    "--strategy", "rid", "--seed", "5", "--out", str(pred)]
            assert main(args) == 0
            outputs.append(pred.read_bytes())
    assert outputs[0] == outputs[1]
    assert main(["eval", str(tmp_path / "p0.jsonl"), "--dataset", str(DATA / "mini"), "--out", str(tmp_path / "r")]) == 0
    report = json.loads((tmp_path / "r" / "report.json").read_text())
    assert report["overall"]["hits@1_count"] == 8


def test_run_endpoint_down(tmp_path):
    with MockCompletionServer() as server:
        url = server.base_url
    pred = tmp_path / "p.jsonl"
    args = ["run", "--dataset", str(DATA / "t1"), "--scorer", "llm", "--endpoint", url, "--retries", "0",
            "--out", str(pred)]
    assert main(args) == 2
    lines = [json.loads(l) for l in pred.read_text().splitlines()]
    assert len(lines) == 2 and {l["status"] for l in lines} == {"unscored"}


def test_run_replay(tmp_path):
    log = tmp_path / "log.jsonl"
    with MockCompletionServer() as server:
        assert main(["run", "--dataset", str(DATA / "mini"), "--scorer", "llm", "--endpoint", server.base_url,
                     "--replay-log", str(log), "--out", str(tmp_path / "live.jsonl")]) == 0
    assert main(["run", "--dataset", str(DATA / "mini"), "--scorer", "replay", "--replay-from", str(log),
                 "--out", str(tmp_path / "replayed.jsonl")]) == 0
    assert (tmp_path / "live.jsonl").read_bytes() == (tmp_path / "replayed.jsonl").read_bytes()


def test_stats_command(capsys):
    assert main(["stats", "--dataset", str(DATA / "t1"), "--split", "test"]) == 0
    out = capsys.readouterr().out
    assert "# Queries" in out and "0.0%" in out


def test_config_file_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# corpus settings\nseed = 7\nL = 1\nstrategy = fid\ncount = 3\n")
    out = tmp_path / "c"
    assert main(["--config", str(cfg), "build-samples", "--dataset", str(DATA / "t1"), "--count", "2",
                 "--out", str(out)]) == 0
    manifest = json.loads((out / "samples.jsonl.manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["L"] == 1 and manifest["strategy"] == "FID"
    assert manifest["counts"] == {"t1": 2}


def test_read_config_rejects_garbage(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("seed 7\n")
    with pytest.raises(ValueError):
        read_config(p)
    assert main(["--config", str(p), "stats", "--dataset", str(DATA / "t1")]) == 1
