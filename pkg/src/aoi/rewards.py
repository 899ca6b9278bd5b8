"""Reward scoring, group-normalized advantages, and training-batch export.

Decision outputs are scored on six weighted dimensions (format is rule
based, the rest judge based); corrected plans on four. Rewards normalize
within a sampled group to advantages, and batches of (context, candidate,
reward, advantage) records are exported for an external trainer: the
gradient step itself is delegated through the updater callback and has no
implementation here.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from .backend import BackendSession, Prompt
from .envsim.commands import is_valid_command
from .evolution import CorrectedPlan, Seed, render_trajectory
from .model import FormatQuality, parse_decision

WEIGHT_TOLERANCE = 1e-9
HARD_PENALTY_REWARD = 0.09
DEFAULT_EPSILON = 1e-8


class ObserverDimension(Enum):
    FORMAT = "Format"
    SUMMARY = "Summary"
    ACTION = "Action"
    CONTEXT_INSTRUCTION = "ContextInstruction"
    CONTEXT_NAMESPACE = "ContextNamespace"
    CONFIDENCE = "Confidence"


class EvolverDimension(Enum):
    VALIDITY = "Validity"
    COMPLETENESS = "Completeness"
    CORRECTNESS = "Correctness"
    EFFECTIVENESS = "Effectiveness"


class ScoreBasis(Enum):
    RULE = "Rule"
    JUDGE = "Judge"


class MissingDimension(ValueError):
    pass


class GroupTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class RewardWeights:
    """Per-dimension weights; must sum to one."""

    weights: Mapping[Enum, float]

    def __post_init__(self) -> None:
        total = sum(self.weights.values())
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"dimension weights must sum to 1, got {total}")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("dimension weights must be non-negative")

    def __getitem__(self, dimension: Enum) -> float:
        return self.weights[dimension]


DEFAULT_OBSERVER_WEIGHTS = RewardWeights(
    {
        ObserverDimension.FORMAT: 0.10,
        ObserverDimension.SUMMARY: 0.15,
        ObserverDimension.ACTION: 0.10,
        ObserverDimension.CONTEXT_INSTRUCTION: 0.30,
        ObserverDimension.CONTEXT_NAMESPACE: 0.30,
        ObserverDimension.CONFIDENCE: 0.05,
    }
)

DEFAULT_EVOLVER_WEIGHTS = RewardWeights(
    {
        EvolverDimension.VALIDITY: 0.25,
        EvolverDimension.COMPLETENESS: 0.25,
        EvolverDimension.CORRECTNESS: 0.25,
        EvolverDimension.EFFECTIVENESS: 0.25,
    }
)


@dataclass(frozen=True)
class DimensionScore:
    dimension: Enum
    score: float  # raw 0..10
    basis: ScoreBasis

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 10.0:
            raise ValueError(f"raw scores live in [0, 10], got {self.score}")


@dataclass(frozen=True)
class ScoredCandidate:
    scores: tuple[DimensionScore, ...]
    hard_penalty: bool = False

    def score_map(self) -> dict[Enum, float]:
        return {s.dimension: s.score for s in self.scores}


def score_format(text: str) -> tuple[DimensionScore, bool]:
    """Rule-based format dimension: 10 clean, 5 repeated blocks, 0 + hard penalty."""
    _, quality = parse_decision(text)
    if quality is FormatQuality.CLEAN_SINGLE:
        raw = 10.0
    elif quality is FormatQuality.MULTIPLE_BLOCKS:
        raw = 5.0
    else:
        raw = 0.0
    return (
        DimensionScore(ObserverDimension.FORMAT, raw, ScoreBasis.RULE),
        quality is FormatQuality.PARSE_FAILURE,
    )


# judge prompt templates ship as versioned assets so deployments can pin
# or swap rubric wording without touching code
def _load_prompt_asset(name: str) -> dict:
    from importlib import resources

    text = resources.files("aoi").joinpath(f"data/prompts/{name}").read_text(encoding="utf-8")
    return json.loads(text)


_OBSERVER_JUDGE_ASSET = _load_prompt_asset("observer_judge.json")
_EVOLVER_JUDGE_ASSET = _load_prompt_asset("evolver_judge.json")

JUDGE_PROMPT_VERSION = _OBSERVER_JUDGE_ASSET["version"]
JUDGE_SYSTEM = _OBSERVER_JUDGE_ASSET["system"]

_JUDGE_CRITERIA = {
    dimension: _OBSERVER_JUDGE_ASSET["criteria"][dimension.value]
    for dimension in ObserverDimension
    if dimension is not ObserverDimension.FORMAT
}

_SCORE_PATTERN = re.compile(r"-?\d+(?:\.\d+)?")


def _parse_judge_score(text: str) -> float:
    match = _SCORE_PATTERN.search(text)
    if match is None:
        return 0.0
    return min(max(float(match.group()), 0.0), 10.0)


def score_observer(
    context: str,
    candidate: str,
    reference: str,
    session: BackendSession,
) -> ScoredCandidate:
    """Score a decision candidate on all six dimensions.

    On a format hard penalty the judge dimensions are skipped entirely; the
    aggregate reward is clamped to the penalty value regardless.
    """
    format_score, hard_penalty = score_format(candidate)
    if hard_penalty:
        return ScoredCandidate(scores=(format_score,), hard_penalty=True)
    scores = [format_score]
    for dimension, criterion in _JUDGE_CRITERIA.items():
        text = session.complete(
            Prompt(
                system=JUDGE_SYSTEM,
                messages=(
                    ("user", f"Criterion: {criterion}"),
                    ("user", f"Observation context:\n{context}"),
                    ("user", f"Reference decision:\n{reference}"),
                    ("user", f"Candidate decision:\n{candidate}"),
                ),
            )
        )
        scores.append(DimensionScore(dimension, _parse_judge_score(text), ScoreBasis.JUDGE))
    return ScoredCandidate(scores=tuple(scores))


def aggregate_reward(
    scores: Sequence[DimensionScore],
    weights: RewardWeights = DEFAULT_OBSERVER_WEIGHTS,
    hard_penalty: bool = False,
) -> float:
    """Weighted sum of normalized dimension scores, in [0, 1]."""
    if hard_penalty:
        return HARD_PENALTY_REWARD
    by_dimension = {s.dimension: s for s in scores}
    missing = [d for d in weights.weights if d not in by_dimension]
    if missing:
        raise MissingDimension(f"missing scores for {[d.value for d in missing]}")
    return sum(weights[d] * by_dimension[d].score / 10.0 for d in weights.weights)


def score_scored_candidate(
    candidate: ScoredCandidate, weights: RewardWeights = DEFAULT_OBSERVER_WEIGHTS
) -> float:
    return aggregate_reward(candidate.scores, weights, hard_penalty=candidate.hard_penalty)


EVOLVER_JUDGE_CRITERIA = {
    dimension: _EVOLVER_JUDGE_ASSET["criteria"][dimension.value]
    for dimension in EvolverDimension
}

VALIDITY_MECHANICAL_CAP = 2.0


def score_evolver(
    plan: CorrectedPlan,
    seed: Seed,
    session: BackendSession,
    weights: RewardWeights = DEFAULT_EVOLVER_WEIGHTS,
) -> float:
    """Four-dimension plan reward in [0, 1].

    Validity gets a mechanical pre-check: if any command fails to parse
    under the interpreter grammar, the judge's validity score is capped low.
    Plans that failed to parse at all score zero.
    """
    if plan.parse_failed or not plan.commands:
        return 0.0
    plan_text = "\n".join(f"{i}. {c}" for i, c in enumerate(plan.commands, start=1))
    mechanically_valid = all(is_valid_command(c) for c in plan.commands)
    scores = []
    for dimension, criterion in EVOLVER_JUDGE_CRITERIA.items():
        text = session.complete(
            Prompt(
                system=JUDGE_SYSTEM,
                messages=(
                    ("user", f"Criterion: {criterion}"),
                    ("user", f"Seed trajectory:\n{render_trajectory(seed.trajectory)}"),
                    ("user", f"Corrected plan:\n{plan_text}"),
                ),
            )
        )
        raw = _parse_judge_score(text)
        if dimension is EvolverDimension.VALIDITY and not mechanically_valid:
            raw = min(raw, VALIDITY_MECHANICAL_CAP)
        scores.append(DimensionScore(dimension, raw, ScoreBasis.JUDGE))
    return aggregate_reward(scores, weights)


# ---------------------------------------------------------------------------
# group-normalized advantages
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdvantageSet:
    rewards: tuple[float, ...]
    mean: float
    stddev: float
    epsilon: float
    advantages: tuple[float, ...]


def group_advantages(rewards: Sequence[float], epsilon: float = DEFAULT_EPSILON) -> AdvantageSet:
    """Normalize rewards within their sampling group.

    Uses the population standard deviation; shift-invariant in the rewards
    and zero-mean by construction.
    """
    if len(rewards) < 2:
        raise GroupTooSmall("advantage normalization needs at least 2 candidates")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    size = len(rewards)
    mean = sum(rewards) / size
    variance = sum((r - mean) ** 2 for r in rewards) / size
    stddev = math.sqrt(variance)
    advantages = tuple((r - mean) / (stddev + epsilon) for r in rewards)
    return AdvantageSet(
        rewards=tuple(rewards),
        mean=mean,
        stddev=stddev,
        epsilon=epsilon,
        advantages=advantages,
    )


# ---------------------------------------------------------------------------
# training step skeleton and batch export
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Group:
    context: str
    size: int
    candidates: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.size < 2:
            raise GroupTooSmall("groups need at least 2 candidates")
        if self.candidates and len(self.candidates) != self.size:
            raise ValueError("candidate count must match the group size")


@dataclass(frozen=True)
class TrainingRecord:
    group_id: str
    context: str
    candidate: str
    reward: float
    advantage: float
    dims: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class TrainingBatch:
    records: tuple[TrainingRecord, ...]
    format_version: int = 1

    def __post_init__(self) -> None:
        if self.records:
            mean = sum(r.advantage for r in self.records) / len(self.records)
            if abs(mean) >= 1e-9 * len(self.records):
                raise ValueError(f"per-group advantage mean must be ~0, got {mean}")


Scorer = Callable[[str, str], tuple[float, Mapping[str, float]]]
Updater = Callable[[TrainingBatch], None]

POLICY_SYSTEM = """Produce the next planning decision for the observation
context below, as a single JSON decision object."""


def grpo_step(
    group: Group,
    policy_session: BackendSession,
    scorer: Scorer,
    updater: Optional[Updater] = None,
    group_id: str = "group-1",
    epsilon: float = DEFAULT_EPSILON,
) -> TrainingBatch:
    """One group step: sample, score, normalize, hand to the updater.

    The updater callback is where a gradient step would live; the default
    is pure data generation.
    """
    candidates = list(group.candidates)
    if not candidates:
        prompt = Prompt(system=POLICY_SYSTEM, messages=(("user", group.context),))
        candidates = [policy_session.complete(prompt) for _ in range(group.size)]
    scored = [scorer(group.context, candidate) for candidate in candidates]
    rewards = [reward for reward, _ in scored]
    advantage_set = group_advantages(rewards, epsilon=epsilon)
    records = tuple(
        TrainingRecord(
            group_id=group_id,
            context=group.context,
            candidate=candidate,
            reward=reward,
            advantage=advantage,
            dims=dict(dims),
        )
        for candidate, (reward, dims), advantage in zip(
            candidates, scored, advantage_set.advantages
        )
    )
    batch = TrainingBatch(records=records)
    if updater is not None:
        updater(batch)
    return batch


def export_batches(batches: Sequence[TrainingBatch], path: Path | str) -> Path:
    """Write batches as line-delimited JSON with a stable field order."""
    if not batches:
        raise ValueError("no batches to export")
    path = Path(path)
    lines = []
    for batch in batches:
        for record in batch.records:
            lines.append(
                json.dumps(
                    {
                        "group_id": record.group_id,
                        "context": record.context,
                        "candidate": record.candidate,
                        "reward": record.reward,
                        "advantage": record.advantage,
                        "dims": dict(record.dims),
                    },
                    ensure_ascii=False,
                )
            )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_batch_records(path: Path | str) -> list[dict]:
    return [
        json.loads(line)
        for line in Path(path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
