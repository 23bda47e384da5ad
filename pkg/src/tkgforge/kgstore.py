"""Loading, validation and indexing of temporal KG datasets.

A dataset directory follows the layout shared by most extrapolation
benchmarks::

    train.txt  valid.txt  test.txt      s<TAB>r<TAB>o<TAB>t[<TAB>ignored...]
    entity2id.txt  relation2id.txt      name<TAB>id
    stat.txt                            num_entities num_relations  (optional)
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
SCOPES = {
    "train": ("train",),
    "train+valid": ("train", "valid"),
    "train+valid+test": ("train", "valid", "test"),
}


class DatasetError(Exception):
    """Base class for dataset loading problems."""


class DatasetLoadError(DatasetError):
    pass


class DatasetParseError(DatasetError):
    def __init__(self, path, lineno, msg):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {msg}")


class DatasetValidationError(DatasetParseError):
    pass


class Quadruple(NamedTuple):
    subject: int
    relation: int
    object: int
    time: int


@dataclass(frozen=True)
class DatasetStats:
    num_entities: int
    num_relations: int
    num_train: int
    num_valid: int
    num_test: int
    granularity: str = ""


# Published statistics of the standard benchmark releases.
REFERENCE_STATS = {
    "icews14": DatasetStats(7128, 230, 74845, 8514, 7371, "1 day"),
    "icews18": DatasetStats(23033, 256, 373018, 45995, 49545, "1 day"),
    "icews05-15": DatasetStats(10488, 251, 368868, 46302, 46159, "1 day"),
    "yago": DatasetStats(10623, 10, 161540, 19523, 20026, "1 year"),
    "gdelt": DatasetStats(7691, 240, 1734399, 238765, 305241, "15 min"),
    "wiki": DatasetStats(12554, 24, 539286, 67538, 63110, "1 year"),
}


def reference_stats(name: str) -> DatasetStats | None:
    return REFERENCE_STATS.get(name.lower())


def _as_fact_array(facts) -> np.ndarray:
    arr = np.asarray(list(facts) if not isinstance(facts, np.ndarray) else facts, dtype=np.int64)
    if arr.size == 0:
        arr = arr.reshape(0, 4)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError(f"facts must have shape (n, 4), got {arr.shape}")
    order = np.argsort(arr[:, 3], kind="stable")
    arr = np.ascontiguousarray(arr[order])
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TemporalKG:
    """An immutable temporal KG with train/valid/test splits.

    Facts of each split are held as an ``(n, 4)`` int64 array of
    ``(subject, relation, object, time)`` rows sorted by time; ties keep
    file order.
    """

    name: str
    entity_names: tuple[str, ...]
    relation_names: tuple[str, ...]
    splits: dict[str, np.ndarray]
    granularity: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_facts(
        cls,
        name: str,
        train: Iterable = (),
        valid: Iterable = (),
        test: Iterable = (),
        entity_names: Sequence[str] | None = None,
        relation_names: Sequence[str] | None = None,
        granularity: str = "",
        num_entities: int | None = None,
        num_relations: int | None = None,
    ) -> "TemporalKG":
        splits = {k: _as_fact_array(v) for k, v in zip(SPLITS, (train, valid, test))}
        if entity_names is None:
            if num_entities is None:
                num_entities = 1 + max(
                    (int(max(a[:, 0].max(), a[:, 2].max())) for a in splits.values() if len(a)),
                    default=-1,
                )
            entity_names = [f"e{i}" for i in range(num_entities)]
        if relation_names is None:
            if num_relations is None:
                num_relations = 1 + max(
                    (int(a[:, 1].max()) for a in splits.values() if len(a)), default=-1
                )
            relation_names = [f"r{i}" for i in range(num_relations)]
        tkg = cls(name, tuple(entity_names), tuple(relation_names), splits, granularity)
        tkg.check_ids()
        return tkg

    @property
    def num_entities(self) -> int:
        return len(self.entity_names)

    @property
    def num_relations(self) -> int:
        return len(self.relation_names)

    def array(self, split: str) -> np.ndarray:
        try:
            return self.splits[split]
        except KeyError:
            raise KeyError(f"unknown split {split!r}; expected one of {SPLITS}") from None

    def facts(self, split: str) -> list[Quadruple]:
        return [Quadruple(*map(int, row)) for row in self.array(split)]

    def scope_array(self, scope: str) -> np.ndarray:
        """Facts of all splits in ``scope``, stably sorted by time."""
        key = ("scope", scope)
        if key not in self._cache:
            try:
                parts = [self.splits[s] for s in SCOPES[scope]]
            except KeyError:
                raise KeyError(f"unknown scope {scope!r}; expected one of {tuple(SCOPES)}") from None
            self._cache[key] = _as_fact_array(np.concatenate(parts))
        return self._cache[key]

    def stats(self) -> DatasetStats:
        return DatasetStats(
            self.num_entities,
            self.num_relations,
            len(self.splits["train"]),
            len(self.splits["valid"]),
            len(self.splits["test"]),
            self.granularity,
        )

    def entity_id(self, name: str) -> int:
        if "entity_ids" not in self._cache:
            ids = {}
            for i, n in enumerate(self.entity_names):
                ids.setdefault(n, i)
            self._cache["entity_ids"] = ids
        return self._cache["entity_ids"][name]

    def relation_id(self, name: str) -> int:
        if "relation_ids" not in self._cache:
            ids = {}
            for i, n in enumerate(self.relation_names):
                ids.setdefault(n, i)
            self._cache["relation_ids"] = ids
        return self._cache["relation_ids"][name]

    def check_ids(self):
        for split, arr in self.splits.items():
            if not len(arr):
                continue
            bad = (
                (arr[:, [0, 2]] < 0).any(axis=1)
                | (arr[:, [0, 2]] >= self.num_entities).any(axis=1)
                | (arr[:, 1] < 0)
                | (arr[:, 1] >= self.num_relations)
                | (arr[:, 3] < 0)
            )
            if bad.any():
                row = arr[int(np.argmax(bad))]
                raise DatasetValidationError(split, "?", f"fact {tuple(map(int, row))} out of id range")

    def __eq__(self, other):
        if not isinstance(other, TemporalKG):
            return NotImplemented
        return (
            self.name == other.name
            and self.entity_names == other.entity_names
            and self.relation_names == other.relation_names
            and self.granularity == other.granularity
            and all(np.array_equal(self.splits[s], other.splits[s]) for s in SPLITS)
        )

    __hash__ = object.__hash__


def _read_name_map(path: Path) -> tuple[str, ...]:
    if not path.exists():
        raise DatasetLoadError(f"missing id map file: {path}")
    pairs = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            name, sep, idx = line.rpartition("\t")
            if not sep:
                raise DatasetParseError(path, lineno, "expected 'name<TAB>id'")
            try:
                i = int(idx)
            except ValueError:
                raise DatasetParseError(path, lineno, f"non-integer id {idx!r}") from None
            if i in pairs:
                raise DatasetParseError(path, lineno, f"duplicate id {i}")
            pairs[i] = name
    if sorted(pairs) != list(range(len(pairs))):
        raise DatasetLoadError(f"{path}: ids are not contiguous from 0")
    return tuple(pairs[i] for i in range(len(pairs)))


def _read_facts(path: Path, num_entities: int, num_relations: int, time_step: int = 1) -> np.ndarray:
    if not path.exists():
        raise DatasetLoadError(f"missing fact file: {path}")
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            cols = line.split("\t") if "\t" in line else line.split()
            if len(cols) < 4:
                raise DatasetParseError(path, lineno, f"expected 4 columns, got {len(cols)}")
            try:
                s, r, o, t = (int(c) for c in cols[:4])
            except ValueError:
                raise DatasetParseError(path, lineno, f"non-integer field in {line.strip()!r}") from None
            if not (0 <= s < num_entities and 0 <= o < num_entities):
                raise DatasetValidationError(path, lineno, f"entity id out of range [0, {num_entities})")
            if not 0 <= r < num_relations:
                raise DatasetValidationError(path, lineno, f"relation id out of range [0, {num_relations})")
            if t < 0:
                raise DatasetValidationError(path, lineno, "negative timestamp")
            rows.append((s, r, o, t))
    arr = np.array(rows, dtype=np.int64).reshape(-1, 4)
    if time_step != 1:
        if (arr[:, 3] % time_step).any():
            raise DatasetValidationError(path, "?", f"timestamps are not multiples of time step {time_step}")
        arr[:, 3] //= time_step
    return arr


def _detect_time_step(directory: Path) -> int:
    steps = []
    for split in SPLITS:
        path = directory / f"{split}.txt"
        with open(path, encoding="utf-8") as f:
            times = {int((line.split("\t") if "\t" in line else line.split())[3]) for line in f if line.strip()}
        steps.extend(times)
    return reduce(math.gcd, steps, 0) or 1


def load_dataset(directory: str | os.PathLike, name: str | None = None, time_step: int | str = 1) -> TemporalKG:
    """Load a dataset directory into a :class:`TemporalKG`.

    ``time_step`` divides every timestamp; pass ``"auto"`` to use the gcd of
    all timestamps (some releases store ICEWS days as multiples of 24).
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetLoadError(f"dataset directory not found: {directory}")
    name = name or directory.name
    entity_names = _read_name_map(directory / "entity2id.txt")
    relation_names = _read_name_map(directory / "relation2id.txt")

    stat = directory / "stat.txt"
    if stat.exists():
        nums = stat.read_text().split()
        if len(nums) >= 2 and (int(nums[0]), int(nums[1])) != (len(entity_names), len(relation_names)):
            raise DatasetLoadError(
                f"{stat}: declares {nums[0]} entities / {nums[1]} relations, "
                f"id maps hold {len(entity_names)} / {len(relation_names)}"
            )

    if time_step == "auto":
        for split in SPLITS:
            if not (directory / f"{split}.txt").exists():
                raise DatasetLoadError(f"missing fact file: {directory / f'{split}.txt'}")
        time_step = _detect_time_step(directory)
        logger.info("%s: detected time step %d", name, time_step)
    splits = {
        s: _as_fact_array(_read_facts(directory / f"{s}.txt", len(entity_names), len(relation_names), int(time_step)))
        for s in SPLITS
    }
    ref = reference_stats(name)
    return TemporalKG(name, entity_names, relation_names, splits, ref.granularity if ref else "")


def write_dataset(tkg: TemporalKG, directory: str | os.PathLike) -> Path:
    """Write ``tkg`` in the directory layout read by :func:`load_dataset`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for split in SPLITS:
        with open(directory / f"{split}.txt", "w", encoding="utf-8") as f:
            for s, r, o, t in tkg.array(split).tolist():
                f.write(f"{s}\t{r}\t{o}\t{t}\n")
    for fname, names in (("entity2id.txt", tkg.entity_names), ("relation2id.txt", tkg.relation_names)):
        with open(directory / fname, "w", encoding="utf-8") as f:
            for i, n in enumerate(names):
                f.write(f"{n}\t{i}\n")
    (directory / "stat.txt").write_text(f"{tkg.num_entities} {tkg.num_relations}\n")
    return directory


@dataclass(frozen=True)
class FieldCheck:
    field: str
    expected: object
    actual: object

    @property
    def ok(self) -> bool:
        return self.expected == self.actual


@dataclass(frozen=True)
class ValidationReport:
    dataset: str
    checks: tuple[FieldCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def mismatches(self) -> list[FieldCheck]:
        return [c for c in self.checks if not c.ok]

    def format(self) -> str:
        lines = [f"{self.dataset}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            mark = "ok  " if c.ok else "MISMATCH"
            lines.append(f"  {mark} {c.field:<14} actual={c.actual} expected={c.expected}")
        return "\n".join(lines)


def validate_statistics(tkg: TemporalKG, expected: DatasetStats, check_granularity: bool = False) -> ValidationReport:
    actual = tkg.stats()
    names = ["num_entities", "num_relations", "num_train", "num_valid", "num_test"]
    if check_granularity:
        names.append("granularity")
    checks = tuple(FieldCheck(n, getattr(expected, n), getattr(actual, n)) for n in names)
    return ValidationReport(tkg.name, checks)


def facts_before(tkg: TemporalKG, scope: str, t: int) -> list[Quadruple]:
    """All facts in ``scope`` with time strictly below ``t``, ordered by time."""
    arr = tkg.scope_array(scope)
    end = int(np.searchsorted(arr[:, 3], t, side="left"))
    return [Quadruple(*row) for row in arr[:end].tolist()]
