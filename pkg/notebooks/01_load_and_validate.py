# coding: utf-8
"""Loading a temporal knowledge graph and checking it.

Walks through the on-disk format, the in-memory arrays and the statistics
check. Uses the small ``mini`` dataset bundled with the tests; point
``DATASET`` at a benchmark folder to look at a real one.
"""
# %%
from pathlib import Path

import numpy as np

from tkgforge import load_dataset, reference_stats, validate_statistics

DATASET = Path(__file__).resolve().parents[1] / "tests" / "data" / "mini"

# %% [markdown]
# Each split file holds one fact per line: subject, relation, object and
# timestamp as tab separated integers. ``stat.txt`` gives the entity and
# relation counts.

# %%
print((DATASET / "train.txt").read_text().splitlines()[:3])
tkg = load_dataset(DATASET, "mini")
print(tkg)

# %% [markdown]
# Splits are read-only ``(n, 4)`` int64 arrays sorted by time.

# %%
train = tkg.array("train")
print(train[:5])
print("timestamps per split:", {s: np.unique(tkg.array(s)[:, 3]).tolist() for s in ("train", "valid", "test")})

# %%
stats = tkg.stats()
print(stats)

# %% [markdown]
# Benchmark datasets have reference counts. ``mini`` has none, so we check
# it against its own statistics; a real ICEWS14 folder would be checked
# against ``reference_stats("icews14")``.

# %%
print(reference_stats("icews14"))
report = validate_statistics(tkg, stats)
print(report.format())
assert report.passed
