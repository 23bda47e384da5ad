# coding: utf-8
"""The frequency baseline with time-aware filtered Hits@k."""
# %%
from pathlib import Path

import numpy as np

from tkgforge import evaluate_predictions, load_dataset, run_frequency
from tkgforge.synthetic import random_tkg

mini = load_dataset(Path(__file__).resolve().parents[1] / "tests" / "data" / "mini", "mini")

# %% [markdown]
# For each query the baseline counts how often each entity filled the answer
# slot in the history and ranks by that count.

# %%
records = run_frequency(mini, "test", L=50)
print(records[4])
report = evaluate_predictions(records, mini, {"scorer": "frequency"})
print(report.to_markdown())
print(report.to_csv())

# %% [markdown]
# History length matters. On a larger synthetic graph with skewed entity
# popularity, compare a few window sizes.

# %%
tkg = random_tkg(3, num_entities=300, num_relations=12, num_times=120, facts_per_time=40, valid_times=10, test_times=10)
for L in (1, 5, 20, 50):
    rep = evaluate_predictions(run_frequency(tkg, "test", L=L), tkg, timestamp=False)
    print(L, np.round([100 * rep.h(k) for k in (1, 3, 10)], 1))
