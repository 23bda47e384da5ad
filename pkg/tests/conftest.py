from pathlib import Path

import numpy as np
import pytest

from tkgforge.history import OBJECT, SUBJECT, HistoryWindow, Query
from tkgforge.kgstore import Quadruple, load_dataset
from tkgforge.synthetic import fixture_t1

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"

F1 = Quadruple(0, 0, 1, 0)
F2 = Quadruple(0, 0, 2, 1)
F3 = Quadruple(0, 1, 1, 1)
F4 = Quadruple(3, 0, 0, 1)
F5 = Quadruple(0, 0, 1, 2)


@pytest.fixture
def t1_dir():
    return DATA / "t1"


@pytest.fixture
def t1(t1_dir):
    return load_dataset(t1_dir, "t1")


@pytest.fixture
def t1_mem():
    return fixture_t1()


def random_window(rng, n_ent=6, n_rel=3, max_len=8):
    direction = OBJECT if rng.random() < 0.5 else SUBJECT
    anchor = int(rng.integers(n_ent))
    t_q = int(rng.integers(1, 20))
    n = int(rng.integers(0, max_len + 1))
    times = np.sort(rng.integers(0, t_q, size=n))
    facts = []
    for t in times:
        other = int(rng.integers(n_ent))
        r = int(rng.integers(n_rel))
        f = (anchor, r, other, int(t)) if direction == OBJECT else (other, r, anchor, int(t))
        facts.append(Quadruple(*f))
    q = Query(direction, anchor, int(rng.integers(n_rel)), t_q, int(rng.integers(n_ent)), "train", int(rng.integers(1000)))
    return q, HistoryWindow(tuple(facts), max_len)
