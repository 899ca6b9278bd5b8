"""Multi-run success metrics, stability buckets, and split validation.

best@k counts a task as solved if any of its first k runs (in sampling
order) succeeded; avg@k is the mean per-run success rate over the first k
runs. The prefix rule matters: best@1 must equal the first round's rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

CATEGORIES = ("Detection", "Localization", "RCA", "Mitigation")
OVERALL = "Overall"


class KOutOfRange(ValueError):
    pass


class WrongRunCount(ValueError):
    pass


@dataclass(frozen=True)
class TaskRef:
    task_id: str
    task_type: str


@dataclass
class ResultMatrix:
    """Rectangular boolean success matrix in run order."""

    tasks: list[TaskRef]
    runs: int
    cells: list[list[bool]]

    def __post_init__(self) -> None:
        if len(self.cells) != len(self.tasks):
            raise ValueError("one cell row per task required")
        for row in self.cells:
            if len(row) != self.runs:
                raise ValueError("matrix must be rectangular")
        ids = [t.task_id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise ValueError("task ids must be unique")

    @classmethod
    def from_dict(cls, obj: dict) -> "ResultMatrix":
        return cls(
            tasks=[TaskRef(t["id"], t["type"]) for t in obj["tasks"]],
            runs=int(obj["runs"]),
            cells=[[bool(c) for c in row] for row in obj["cells"]],
        )

    @classmethod
    def from_file(cls, path: Path | str) -> "ResultMatrix":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "tasks": [{"id": t.task_id, "type": t.task_type} for t in self.tasks],
            "runs": self.runs,
            "cells": [[bool(c) for c in row] for row in self.cells],
        }

    def restrict(self, task_ids: set[str]) -> "ResultMatrix":
        """Sub-matrix over the given task ids, preserving row order."""
        keep = [i for i, t in enumerate(self.tasks) if t.task_id in task_ids]
        missing = task_ids - {t.task_id for t in self.tasks}
        if missing:
            raise KeyError(f"tasks not in matrix: {sorted(missing)}")
        return ResultMatrix(
            tasks=[self.tasks[i] for i in keep],
            runs=self.runs,
            cells=[list(self.cells[i]) for i in keep],
        )


def _check_k(matrix: ResultMatrix, k: int) -> None:
    if not 1 <= k <= matrix.runs:
        raise KOutOfRange(f"k={k} outside 1..{matrix.runs}")


def _rate(solved: int, total: int) -> float:
    return 100.0 * solved / total if total else 0.0


def _by_category(matrix: ResultMatrix) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = {}
    for i, task in enumerate(matrix.tasks):
        groups.setdefault(task.task_type, []).append(i)
    return groups


def best_at_k(matrix: ResultMatrix, k: int) -> dict[str, float]:
    """Solved-by-any-of-the-first-k-runs rate, per category and overall (%)."""
    _check_k(matrix, k)
    solved = [any(row[:k]) for row in matrix.cells]
    rates = {
        category: _rate(sum(solved[i] for i in idx), len(idx))
        for category, idx in _by_category(matrix).items()
    }
    rates[OVERALL] = _rate(sum(solved), len(matrix.tasks))
    return rates


def avg_at_k(matrix: ResultMatrix, k: int) -> dict[str, float]:
    """Mean per-run success rate over the first k runs, per category (%)."""
    _check_k(matrix, k)
    groups = _by_category(matrix)
    rates = {}
    for category, idx in groups.items():
        successes = sum(matrix.cells[i][r] for i in idx for r in range(k))
        rates[category] = _rate(successes, len(idx) * k)
    total = sum(matrix.cells[i][r] for i in range(len(matrix.tasks)) for r in range(k))
    rates[OVERALL] = _rate(total, len(matrix.tasks) * k)
    return rates


def per_round_rates(matrix: ResultMatrix) -> dict[str, list[float]]:
    """Success rate of each individual run, per category and overall (%)."""
    groups = _by_category(matrix)
    out: dict[str, list[float]] = {}
    for category, idx in groups.items():
        out[category] = [
            _rate(sum(matrix.cells[i][r] for i in idx), len(idx)) for r in range(matrix.runs)
        ]
    out[OVERALL] = [
        _rate(sum(row[r] for row in matrix.cells), len(matrix.tasks))
        for r in range(matrix.runs)
    ]
    return out


STABILITY_RUNS = 5
STABILITY_BUCKETS = ("5/5", "3-4/5", "1-2/5", "0/5")


@dataclass(frozen=True)
class StabilityBuckets:
    counts: dict[str, int]

    def __post_init__(self) -> None:
        if set(self.counts) != set(STABILITY_BUCKETS):
            raise ValueError(f"buckets must be exactly {STABILITY_BUCKETS}")

    def total(self) -> int:
        return sum(self.counts.values())


def stability(matrix: ResultMatrix) -> StabilityBuckets:
    """Bucket tasks by success count over exactly five runs."""
    if matrix.runs != STABILITY_RUNS:
        raise WrongRunCount(f"stability needs {STABILITY_RUNS} runs, matrix has {matrix.runs}")
    counts = {bucket: 0 for bucket in STABILITY_BUCKETS}
    for row in matrix.cells:
        successes = sum(row)
        if successes == 5:
            counts["5/5"] += 1
        elif successes >= 3:
            counts["3-4/5"] += 1
        elif successes >= 1:
            counts["1-2/5"] += 1
        else:
            counts["0/5"] += 1
    return StabilityBuckets(counts)


def variance_gap(matrix: ResultMatrix, k: int) -> float:
    """best@k minus avg@k overall, in percentage points."""
    return best_at_k(matrix, k)[OVERALL] - avg_at_k(matrix, k)[OVERALL]


# ---------------------------------------------------------------------------
# split validation
# ---------------------------------------------------------------------------

@dataclass
class SplitSpec:
    d_all: list[str]
    evolver_train: list[str]
    obs_train: list[str]
    obs_test: list[str]
    evolver_test: list[str]
    fault_types: dict[str, str]
    train_fault_types: list[str] = field(default_factory=list)

    @classmethod
    def from_dict(cls, obj: dict) -> "SplitSpec":
        return cls(
            d_all=list(obj["d_all"]),
            evolver_train=list(obj["evolver_train"]),
            obs_train=list(obj["obs_train"]),
            obs_test=list(obj["obs_test"]),
            evolver_test=list(obj["evolver_test"]),
            fault_types=dict(obj["fault_types"]),
            train_fault_types=list(obj.get("train_fault_types", [])),
        )

    @classmethod
    def from_file(cls, path: Path | str) -> "SplitSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SplitReport:
    violations: list[str]
    counts: dict[str, int]

    @property
    def valid(self) -> bool:
        return not self.violations


def validate_split(spec: SplitSpec) -> SplitReport:
    """Check every nesting, disjointness, and fault-type invariant.

    Returns a violation list rather than raising; an empty list means the
    split is usable for leakage-free evaluation.
    """
    violations: list[str] = []
    d_all = set(spec.d_all)
    evolver_train = set(spec.evolver_train)
    obs_train = set(spec.obs_train)
    obs_test = set(spec.obs_test)
    evolver_test = set(spec.evolver_test)

    for name, ids in (
        ("d_all", spec.d_all),
        ("evolver_train", spec.evolver_train),
        ("obs_train", spec.obs_train),
        ("obs_test", spec.obs_test),
        ("evolver_test", spec.evolver_test),
    ):
        if len(set(ids)) != len(ids):
            violations.append(f"duplicate ids in {name}")

    if not obs_train <= evolver_train:
        violations.append("obs_train is not a subset of evolver_train")
    if not evolver_train <= d_all:
        violations.append("evolver_train is not a subset of d_all")
    if not obs_test <= d_all:
        violations.append("obs_test is not a subset of d_all")
    if not evolver_test <= obs_test:
        violations.append("nesting broken: evolver_test is not a subset of obs_test")
    if obs_train & obs_test:
        violations.append(
            f"obs_train and obs_test intersect: {sorted(obs_train & obs_test)[:3]}"
        )
    if evolver_train & evolver_test:
        violations.append("evolver_train and evolver_test intersect")

    missing_types = [t for t in d_all if t not in spec.fault_types]
    if missing_types:
        violations.append(f"tasks without a fault type: {sorted(missing_types)[:3]}")

    train_types = set(spec.train_fault_types) or {
        spec.fault_types[t] for t in obs_train if t in spec.fault_types
    }
    test_only_types = {
        ft for t, ft in spec.fault_types.items() if t in d_all and ft not in train_types
    }
    leaked = {
        spec.fault_types[t]
        for t in obs_train
        if t in spec.fault_types and spec.fault_types[t] in test_only_types
    }
    overlap = (train_types & test_only_types) | leaked
    if overlap:
        violations.append(f"fault-type overlap between train and test-only: {sorted(overlap)}")

    counts = {
        "obs_train": len(obs_train),
        "evolver_train": len(evolver_train),
        "obs_test": len(obs_test),
        "evolver_test": len(evolver_test),
        "obs_train_fault_types": len(
            {spec.fault_types[t] for t in obs_train if t in spec.fault_types}
        ),
    }
    return SplitReport(violations=violations, counts=counts)
