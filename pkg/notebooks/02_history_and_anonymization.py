# coding: utf-8
"""From a query to an anonymized prompt.

Builds the one-hop history of a query, assigns abstract IDs with the three
strategies and renders general and specific samples.
"""
# %%
from pathlib import Path

from tkgforge import build_queries, load_dataset, render_sample, select_history
from tkgforge.anonymize import assign_fid, assign_gid, assign_rid

t1 = load_dataset(Path(__file__).resolve().parents[1] / "tests" / "data" / "t1", "t1")

# %% [markdown]
# Every test fact gives two queries: predict the object, then the subject.

# %%
queries = build_queries(t1, "test")
for q in queries:
    print(q)
q = queries[0]

# %% [markdown]
# The history keeps the last L facts before the query time that share the
# anchor entity in the same slot.

# %%
h = select_history(t1, q, L=50)
for f in h.facts:
    print(t1.entity_names[f.subject], t1.relation_names[f.relation], t1.entity_names[f.object], f.time)

# %% [markdown]
# FID numbers entities by frequency in the window, GID keeps dataset ids and
# RID draws a seeded random bijection.

# %%
for m in (assign_fid(q, h), assign_gid(t1), assign_rid(q, h, seed=7, dataset="t1")):
    print(m.strategy, dict(m.entity_map) if m.entity_map is not None else "identity")

# %%
general, _ = render_sample(t1, q, h, "general", "FID", seed=7)
print(general.input_text + general.output_text)

# %% [markdown]
# The specific stage prefixes mapping blocks with the real names.

# %%
specific, _ = render_sample(t1, q, h, "specific", "RID", seed=7)
print(specific.input_text + specific.output_text)
