"""Shared domain types: tasks, commands, decisions, trajectories.

Everything here is an immutable value (or a plain record finalized once),
safe to share between concurrently running task loops.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Optional


class TaskType(Enum):
    DETECTION = "Detection"
    LOCALIZATION = "Localization"
    RCA = "RCA"
    MITIGATION = "Mitigation"


class CommandClass(Enum):
    READ = "Read"
    WRITE = "Write"


class ActionType(Enum):
    PROBE = "Probe"
    EXECUTE = "Execute"
    SUBMIT = "Submit"


class Outcome(Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"
    TIMEOUT = "Timeout"


class FormatQuality(Enum):
    CLEAN_SINGLE = "CleanSingle"
    MULTIPLE_BLOCKS = "MultipleBlocks"
    PARSE_FAILURE = "ParseFailure"


class CommandError(ValueError):
    """Base class for command classification errors."""


class EmptyCommand(CommandError):
    """Raised for blank or whitespace-only command strings."""


class UnknownVerb(CommandError):
    """Raised for command strings outside the interpreter grammar."""


# Query verbs never mutate cluster state; mutating verbs always may.
READ_VERBS = frozenset({"get", "describe", "logs", "top", "events"})
WRITE_VERBS = frozenset({"apply", "delete", "scale", "patch", "rollout", "create", "exec"})


def classify_command(raw: str) -> CommandClass:
    """Classify a kubectl command string as Read or Write.

    Total over the interpreter grammar; anything outside it raises
    UnknownVerb rather than defaulting to Write (fail closed).
    """
    stripped = raw.strip()
    if not stripped:
        raise EmptyCommand("empty command string")
    tokens = stripped.split()
    if tokens[0] != "kubectl" or len(tokens) < 2:
        raise UnknownVerb(f"not a kubectl command: {stripped!r}")
    verb = tokens[1]
    if verb in READ_VERBS:
        return CommandClass.READ
    if verb in WRITE_VERBS:
        return CommandClass.WRITE
    raise UnknownVerb(f"unknown kubectl verb: {verb!r}")


@dataclass(frozen=True)
class Command:
    """A raw command string plus its Read/Write classification."""

    raw: str
    command_class: CommandClass

    @classmethod
    def parse(cls, raw: str) -> "Command":
        return cls(raw=raw.strip(), command_class=classify_command(raw))


@dataclass(frozen=True)
class TaskSpec:
    """An incident task and the payload its validator needs."""

    task_id: str
    task_type: TaskType
    fault_type: str
    namespace: str
    description: str
    ground_truth: Any = None


@dataclass(frozen=True)
class Verdict:
    success: bool
    detail: str = ""


@dataclass(frozen=True)
class DecisionOutput:
    """One structured planning decision: summary, action, targeting, confidence."""

    summary: str
    action: ActionType
    context_instruction: str
    context_namespace: tuple[str, ...]
    confidence: float
    submit_payload: Any = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        has_payload = self.submit_payload is not None
        if (self.action is ActionType.SUBMIT) != has_payload:
            raise ValueError("submit_payload must be present iff action is Submit")


# Fixed key order of the decision document; parsing and rendering agree on it.
DECISION_KEYS = (
    "summary",
    "action",
    "context_instruction",
    "context_namespace",
    "confidence",
    "submit_payload",
)

_ACTION_ALIASES = {
    "probe": ActionType.PROBE,
    "execute": ActionType.EXECUTE,
    "executor": ActionType.EXECUTE,
    "submit": ActionType.SUBMIT,
}


def _decode_decision(obj: dict) -> DecisionOutput:
    action_raw = obj.get("action")
    if not isinstance(action_raw, str) or action_raw.lower() not in _ACTION_ALIASES:
        raise ValueError(f"unusable action field: {action_raw!r}")
    namespace = obj.get("context_namespace", [])
    if isinstance(namespace, str):
        namespace = [namespace]
    if not isinstance(namespace, list) or not all(isinstance(n, str) for n in namespace):
        raise ValueError("context_namespace must be a list of strings")
    confidence = obj.get("confidence", 0.0)
    if not isinstance(confidence, (int, float)) or isinstance(confidence, bool):
        raise ValueError("confidence must be numeric")
    return DecisionOutput(
        summary=str(obj.get("summary", "")),
        action=_ACTION_ALIASES[action_raw.lower()],
        context_instruction=str(obj.get("context_instruction", "")),
        context_namespace=tuple(namespace),
        confidence=float(confidence),
        submit_payload=obj.get("submit_payload"),
    )


def _iter_json_objects(text: str) -> Iterable[dict]:
    decoder = json.JSONDecoder()
    idx = text.find("{")
    while idx != -1:
        try:
            obj, end = decoder.raw_decode(text, idx)
        except ValueError:
            idx = text.find("{", idx + 1)
            continue
        if isinstance(obj, dict):
            yield obj
            idx = text.find("{", end)
        else:
            idx = text.find("{", idx + 1)


def parse_decision(text: str) -> tuple[Optional[DecisionOutput], FormatQuality]:
    """Extract a decision document from model output.

    ParseFailure is a value, not an exception: reward scoring needs to see
    malformed outputs. Multiple JSON blocks decode the first one but are
    reported as MultipleBlocks.
    """
    blocks = list(_iter_json_objects(text))
    if not blocks:
        return None, FormatQuality.PARSE_FAILURE
    try:
        decision = _decode_decision(blocks[0])
    except (ValueError, TypeError):
        return None, FormatQuality.PARSE_FAILURE
    if len(blocks) == 1:
        return decision, FormatQuality.CLEAN_SINGLE
    return decision, FormatQuality.MULTIPLE_BLOCKS


def render_decision(decision: DecisionOutput) -> str:
    """Canonical JSON form of a decision; parse_decision round-trips it."""
    doc = {
        "summary": decision.summary,
        "action": decision.action.value,
        "context_instruction": decision.context_instruction,
        "context_namespace": list(decision.context_namespace),
        "confidence": decision.confidence,
        "submit_payload": decision.submit_payload,
    }
    return json.dumps(doc, ensure_ascii=False)


@dataclass(frozen=True)
class IterationRecord:
    """Per-iteration bookkeeping: the decision, raw-store keys, cached context."""

    index: int
    decision: DecisionOutput
    raw_output_refs: tuple[int, ...]
    compressed_context: str
    appended_summary: Optional[str] = None

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError("iteration index starts at 1")


@dataclass
class Trajectory:
    """Ordered (command, result) steps plus iteration records and an outcome.

    The outcome is set exactly once at finalization; steps and iterations
    are append-only until then.
    """

    task: TaskSpec
    steps: list[tuple[Command, str]] = field(default_factory=list)
    iterations: list[IterationRecord] = field(default_factory=list)
    outcome: Optional[Outcome] = None

    def add_step(self, command: Command, result: str) -> None:
        if self.outcome is not None:
            raise ValueError("trajectory already finalized")
        self.steps.append((command, result))

    def add_iteration(self, record: IterationRecord) -> None:
        if self.outcome is not None:
            raise ValueError("trajectory already finalized")
        if self.iterations and record.index <= self.iterations[-1].index:
            raise ValueError("iteration indices must be strictly increasing")
        self.iterations.append(record)

    def finalize(self, outcome: Outcome) -> None:
        if self.outcome is not None:
            raise ValueError("trajectory outcome already set")
        self.outcome = outcome

    def commands(self) -> list[str]:
        return [command.raw for command, _ in self.steps]


def trajectory_to_jsonl(trajectory: Trajectory) -> str:
    """Serialize a trajectory as line-delimited JSON, one record per line."""
    lines = [
        json.dumps(
            {
                "record": "task",
                "task_id": trajectory.task.task_id,
                "task_type": trajectory.task.task_type.value,
                "fault_type": trajectory.task.fault_type,
                "namespace": trajectory.task.namespace,
                "description": trajectory.task.description,
                "ground_truth": trajectory.task.ground_truth,
            },
            ensure_ascii=False,
        )
    ]
    for command, result in trajectory.steps:
        lines.append(
            json.dumps(
                {
                    "record": "step",
                    "command": command.raw,
                    "class": command.command_class.value,
                    "result": result,
                },
                ensure_ascii=False,
            )
        )
    for record in trajectory.iterations:
        lines.append(
            json.dumps(
                {
                    "record": "iteration",
                    "index": record.index,
                    "decision": json.loads(render_decision(record.decision)),
                    "raw_output_refs": list(record.raw_output_refs),
                    "compressed_context": record.compressed_context,
                    "appended_summary": record.appended_summary,
                },
                ensure_ascii=False,
            )
        )
    if trajectory.outcome is not None:
        lines.append(json.dumps({"record": "outcome", "outcome": trajectory.outcome.value}))
    return "\n".join(lines) + "\n"


def trajectory_from_jsonl(text: str) -> Trajectory:
    trajectory: Optional[Trajectory] = None
    pending_outcome: Optional[Outcome] = None
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        kind = obj.get("record")
        if kind == "task":
            task = TaskSpec(
                task_id=obj["task_id"],
                task_type=TaskType(obj["task_type"]),
                fault_type=obj["fault_type"],
                namespace=obj["namespace"],
                description=obj["description"],
                ground_truth=obj.get("ground_truth"),
            )
            trajectory = Trajectory(task=task)
        elif kind == "step":
            assert trajectory is not None, "step record before task record"
            command = Command(raw=obj["command"], command_class=CommandClass(obj["class"]))
            trajectory.add_step(command, obj["result"])
        elif kind == "iteration":
            assert trajectory is not None, "iteration record before task record"
            decision, quality = parse_decision(json.dumps(obj["decision"]))
            if decision is None or quality is not FormatQuality.CLEAN_SINGLE:
                raise ValueError("stored decision record failed to parse")
            trajectory.add_iteration(
                IterationRecord(
                    index=obj["index"],
                    decision=decision,
                    raw_output_refs=tuple(obj["raw_output_refs"]),
                    compressed_context=obj["compressed_context"],
                    appended_summary=obj.get("appended_summary"),
                )
            )
        elif kind == "outcome":
            pending_outcome = Outcome(obj["outcome"])
        else:
            raise ValueError(f"unknown trajectory record kind: {kind!r}")
    if trajectory is None:
        raise ValueError("no task record found")
    if pending_outcome is not None:
        trajectory.finalize(pending_outcome)
    return trajectory


def with_confidence(decision: DecisionOutput, confidence: float) -> DecisionOutput:
    """Copy of a decision with a different confidence value."""
    return replace(decision, confidence=confidence)
