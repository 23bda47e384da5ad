"""Small hand-made and random temporal KGs for tests and demos."""
from __future__ import annotations

import numpy as np

from .kgstore import TemporalKG

# entities {0,1,2,3}, relations {0,1}
FIXTURE_T1_TRAIN = [(0, 0, 1, 0), (0, 0, 2, 1), (0, 1, 1, 1), (3, 0, 0, 1)]
FIXTURE_T1_TEST = [(0, 0, 1, 2)]
FIXTURE_T1_ENTITIES = ("Alpha", "Beta", "Gamma", "Delta")
FIXTURE_T1_RELATIONS = ("Consult", "Threaten")


def fixture_t1() -> TemporalKG:
    return TemporalKG.from_facts(
        "t1",
        train=FIXTURE_T1_TRAIN,
        test=FIXTURE_T1_TEST,
        entity_names=FIXTURE_T1_ENTITIES,
        relation_names=FIXTURE_T1_RELATIONS,
        granularity="1 step",
    )


def random_tkg(
    seed: int = 0,
    num_entities: int = 20,
    num_relations: int = 4,
    num_times: int = 30,
    facts_per_time: int = 8,
    valid_times: int = 3,
    test_times: int = 3,
    name: str = "synthetic",
    zipf: float | None = 1.3,
) -> TemporalKG:
    """Random TKG whose last timestamps form the valid and test splits.

    With ``zipf`` set, entities are drawn from a truncated Zipf law so that
    histories contain repeats, as in event datasets.
    """
    rng = np.random.default_rng(seed)
    if zipf:
        w = 1.0 / np.arange(1, num_entities + 1) ** zipf
        p = w / w.sum()
    else:
        p = None
    rows = []
    for t in range(num_times):
        n = facts_per_time
        s = rng.choice(num_entities, size=n, p=p)
        o = rng.choice(num_entities, size=n, p=p)
        r = rng.integers(0, num_relations, size=n)
        rows += [(int(a), int(b), int(c), t) for a, b, c in zip(s, r, o)]
    test_start = num_times - test_times
    valid_start = test_start - valid_times
    train = [f for f in rows if f[3] < valid_start]
    valid = [f for f in rows if valid_start <= f[3] < test_start]
    test = [f for f in rows if f[3] >= test_start]
    return TemporalKG.from_facts(
        name,
        train,
        valid,
        test,
        entity_names=[f"entity_{i}" for i in range(num_entities)],
        relation_names=[f"relation_{i}" for i in range(num_relations)],
        granularity="1 step",
    )
