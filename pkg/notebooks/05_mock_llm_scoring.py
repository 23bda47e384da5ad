# coding: utf-8
"""Scoring prompts against a completions endpoint.

Starts the bundled deterministic mock server, scores every test query of
``mini`` with one generation step and evaluates the ranked answers. Swap
``server.base_url`` for a real OpenAI-compatible endpoint to score a model.
"""
# %%
import tempfile
from pathlib import Path

from tkgforge import evaluate_predictions, load_dataset, run_scorer
from tkgforge.mock_endpoint import MockCompletionServer, mock_top_tokens
from tkgforge.scorers import CompletionScorer, EndpointConfig, ReplayScorer

mini = load_dataset(Path(__file__).resolve().parents[1] / "tests" / "data" / "mini", "mini")
log = Path(tempfile.mkdtemp()) / "replay.jsonl"

# %% [markdown]
# The mock answers with the history's answer-slot IDs, newest first, plus
# noise: a "None", a whitespace variant, junk and an out-of-range ID.

# %%
prompt = "History:\n2:[0,0,1]\n1:[0,1,3]\nQuery:\n0:[0,0,?]\nAnswer:\n"
print(mock_top_tokens(prompt, 8))

# %%
with MockCompletionServer() as server:
    cfg = EndpointConfig(server.base_url, max_in_flight=4, replay_path=str(log))
    with CompletionScorer(cfg) as scorer:
        records = run_scorer(mini, scorer, "test", stage="general", strategy="RID", seed=5)

report = evaluate_predictions(records, mini, {"scorer": "mock"})
print(report.to_markdown())
print({k: v for k, v in report.overall.to_dict().items() if "count" in k or k == "abstained"})

# %% [markdown]
# The replay log lets the same run be re-scored offline.

# %%
replayed = run_scorer(mini, ReplayScorer(log), "test", stage="general", strategy="RID", seed=5)
assert [r.predictions for r in replayed] == [r.predictions for r in records]
