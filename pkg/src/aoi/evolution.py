"""Closed-loop trajectory evolution.

A judge labels finished trajectories, the purifier distills success seeds
into minimal replayable command sequences, and the evolver turns failed
seeds into corrected plans (repair) or success seeds into diverse variants
(augmentation). Corrected plans render as a structured guidance block that
is prepended to the planner's system prompt on the next attempt.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

from .backend import BackendSession, Prompt
from .envsim.commands import is_valid_command
from .envsim.scenario import Scenario, build_env
from .memory import AgentRole
from .model import (
    ActionType,
    CommandClass,
    CommandError,
    Outcome,
    Trajectory,
    Verdict,
    classify_command,
    trajectory_from_jsonl,
    trajectory_to_jsonl,
)


class SeedLabel(Enum):
    SUCCESS = "Success"
    FAILED = "Failed"


class JudgeBasis(Enum):
    ENV_VERDICT = "EnvVerdict"
    LLM_JUDGE = "LlmJudge"


class NotASuccessSeed(ValueError):
    pass


class EmptyPlan(ValueError):
    pass


@dataclass(frozen=True)
class Seed:
    """A complete diagnosis trajectory labeled by outcome."""

    seed_id: str
    trajectory: Trajectory
    label: SeedLabel
    provenance: str = "self"

    @property
    def fault_type(self) -> str:
        return self.trajectory.task.fault_type

    @property
    def task_type(self) -> str:
        return self.trajectory.task.task_type.value


@dataclass(frozen=True)
class JudgeLabel:
    success: bool
    basis: JudgeBasis


@dataclass(frozen=True)
class CorrectedPlan:
    commands: tuple[str, ...]
    rationale: str
    source_seed: str
    candidate_index: int
    invalid_commands: tuple[str, ...] = ()
    parse_failed: bool = False


JUDGE_SYSTEM = """You label finished troubleshooting workflows. Given the
trajectory below, reply with the single word SUCCESS if the incident was
resolved or correctly answered, otherwise FAILURE."""


def judge(trajectory: Trajectory, session: Optional[BackendSession] = None) -> JudgeLabel:
    """Label a trajectory by outcome; the environment verdict is authoritative."""
    if trajectory.outcome is not None:
        return JudgeLabel(trajectory.outcome is Outcome.SUCCESS, JudgeBasis.ENV_VERDICT)
    if session is None:
        raise ValueError("trajectory has no recorded outcome and no judge backend was given")
    text = session.complete(
        Prompt(system=JUDGE_SYSTEM, messages=(("user", render_trajectory(trajectory)),))
    )
    verdict = "success" in text.strip().lower().split("\n")[0]
    return JudgeLabel(verdict, JudgeBasis.LLM_JUDGE)


def render_trajectory(trajectory: Trajectory, max_result_chars: int = 400) -> str:
    """Compact textual rendering of a trajectory for prompts."""
    task = trajectory.task
    lines = [
        f"Task ({task.task_type.value}) in {task.namespace}: {task.description}",
        "",
    ]
    for i, (command, result) in enumerate(trajectory.steps, start=1):
        clipped = result if len(result) <= max_result_chars else result[:max_result_chars] + "..."
        lines.append(f"step {i}: $ {command.raw}")
        lines.append(clipped)
    submission = final_submission(trajectory)
    if submission is not None:
        lines.append(f"final submission: {json.dumps(submission, ensure_ascii=False)}")
    if trajectory.outcome is not None:
        lines.append(f"outcome: {trajectory.outcome.value}")
    return "\n".join(lines)


def final_submission(trajectory: Trajectory) -> object:
    for record in reversed(trajectory.iterations):
        if record.decision.action is ActionType.SUBMIT:
            return record.decision.submit_payload
    return None


# ---------------------------------------------------------------------------
# purifier
# ---------------------------------------------------------------------------

def _is_failed_result(result: str) -> bool:
    return result.startswith("Error") or result.startswith("error:")


def _signature(raw: str) -> tuple[str, str]:
    tokens = raw.split()
    verb = tokens[1] if len(tokens) > 1 else ""
    target = tokens[2] if len(tokens) > 2 else ""
    return verb, target


def _command_namespace(raw: str) -> str:
    tokens = raw.split()
    for i, tok in enumerate(tokens):
        if tok in ("-n", "--namespace") and i + 1 < len(tokens):
            return tokens[i + 1]
        if tok.startswith("--namespace="):
            return tok.split("=", 1)[1]
    return ""


def _evidence_namespaces(trajectory: Trajectory) -> set[str]:
    chain = {trajectory.task.namespace}
    submission = final_submission(trajectory)
    blob = json.dumps(submission) if submission is not None else ""
    for record in trajectory.iterations:
        if record.appended_summary:
            blob += " " + record.appended_summary
        blob += " " + record.decision.summary
    for namespace in re.findall(r"[a-z0-9][a-z0-9-]*", blob):
        chain.add(namespace)
    return chain


def purify(seed: Seed, scenario: Optional[Scenario] = None) -> list[str]:
    """Strip redundancy from a success seed, keeping a replay-equivalent core.

    Drops consecutive duplicates, read commands whose results repeat earlier
    output byte for byte, failed commands that were later retried with the
    same shape, and read commands aimed at namespaces outside the submission
    evidence chain. When a scenario is supplied the pruned sequence is
    replayed; if the verdict changes the pruning falls back until it matches.
    """
    if seed.label is not SeedLabel.SUCCESS:
        raise NotASuccessSeed(f"seed {seed.seed_id} is labeled {seed.label.value}")
    steps = seed.trajectory.steps
    aggressive = _prune(steps, seed.trajectory, conservative=False)
    if scenario is None:
        return aggressive
    expected = seed.trajectory.outcome is Outcome.SUCCESS
    for candidate in (aggressive, _prune(steps, seed.trajectory, conservative=True)):
        verdict = replay(candidate, scenario, final_submission(seed.trajectory))
        if verdict.success == expected:
            return candidate
    return [command.raw for command, _ in steps]


def _prune(steps, trajectory: Trajectory, conservative: bool) -> list[str]:
    keep = [True] * len(steps)
    # (a) exact-duplicate consecutive commands
    for i in range(1, len(steps)):
        if steps[i][0].raw == steps[i - 1][0].raw:
            keep[i] = False
    if not conservative:
        # (b) read commands whose result repeats an earlier result verbatim
        for i in range(len(steps)):
            if not keep[i] or steps[i][0].command_class is not CommandClass.READ:
                continue
            if any(steps[j][1] == steps[i][1] for j in range(i)):
                keep[i] = False
        # (c) failed-then-retried originals: keep the succeeding retry
        for i in range(len(steps)):
            if not keep[i] or not _is_failed_result(steps[i][1]):
                continue
            sig = _signature(steps[i][0].raw)
            if any(
                _signature(steps[j][0].raw) == sig and not _is_failed_result(steps[j][1])
                for j in range(i + 1, len(steps))
            ):
                keep[i] = False
        # (d) reads outside the submission evidence chain
        evidence = _evidence_namespaces(trajectory)
        for i in range(len(steps)):
            if not keep[i] or steps[i][0].command_class is not CommandClass.READ:
                continue
            namespace = _command_namespace(steps[i][0].raw)
            if namespace and namespace not in evidence:
                keep[i] = False
    return [steps[i][0].raw for i in range(len(steps)) if keep[i]]


def replay(commands: list[str], scenario: Scenario, payload: object) -> Verdict:
    """Run a command list against a fresh environment and validate."""
    env = build_env(scenario)
    for raw in commands:
        try:
            role = (
                AgentRole.EXECUTOR
                if classify_command(raw) is CommandClass.WRITE
                else AgentRole.PROBE
            )
        except CommandError:
            continue
        env.execute(raw, role)
    return env.validate(scenario.task, payload)


# ---------------------------------------------------------------------------
# evolver
# ---------------------------------------------------------------------------

REPAIR_SYSTEM = """You repair failed incident-diagnosis command sequences.
Study the failed attempt, keep its valid reasoning steps, and produce an
improved complete command sequence that would resolve the incident.
Reply with a short rationale line, then the commands as a numbered list
(one kubectl command per line)."""

AUGMENT_SYSTEM = """You produce alternative versions of a successful
incident-diagnosis command sequence. Keep the core diagnostic logic but
vary command choices, exploration order, and supplementary checks.
Reply with a short rationale line, then the commands as a numbered list
(one kubectl command per line)."""


def evolve(
    seed: Seed,
    problem: str,
    session: BackendSession,
    reference: Optional[Seed] = None,
    group_size: int = 4,
) -> list[CorrectedPlan]:
    """Generate corrected plans (failed seed) or variants (success seed).

    Unparseable candidates are flagged rather than dropped so that reward
    scoring can assign them zero.
    """
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    repair_mode = seed.label is SeedLabel.FAILED
    sections = [f"Problem: {problem}", "", "Seed trajectory:", render_trajectory(seed.trajectory)]
    if repair_mode and reference is not None:
        sections.extend(
            [
                "",
                f"Reference successful trajectory (fault family {reference.fault_type}):",
                render_trajectory(reference.trajectory),
            ]
        )
    prompt = Prompt(
        system=REPAIR_SYSTEM if repair_mode else AUGMENT_SYSTEM,
        messages=(("user", "\n".join(sections)),),
    )
    plans = []
    for index in range(1, group_size + 1):
        text = session.complete(prompt)
        plans.append(parse_plan(text, source_seed=seed.seed_id, candidate_index=index))
    return plans


_NUMBERED_LINE = re.compile(r"^\s*\d+[.)]\s*(.+)$")


def parse_plan(text: str, source_seed: str, candidate_index: int) -> CorrectedPlan:
    """Parse a completion into a corrected plan; flag rather than fail."""
    commands: list[str] = []
    rationale_lines: list[str] = []
    try:
        obj = json.loads(text)
    except ValueError:
        obj = None
    if isinstance(obj, dict) and isinstance(obj.get("commands"), list):
        commands = [str(c).strip() for c in obj["commands"] if str(c).strip()]
        rationale_lines = [str(obj.get("rationale", ""))]
    else:
        for line in text.splitlines():
            match = _NUMBERED_LINE.match(line)
            candidate = match.group(1).strip() if match else line.strip()
            if candidate.startswith("$ "):
                candidate = candidate[2:].strip()
            if candidate.startswith("kubectl "):
                commands.append(candidate)
            elif line.strip() and not match:
                rationale_lines.append(line.strip())
    invalid = tuple(c for c in commands if not is_valid_command(c))
    return CorrectedPlan(
        commands=tuple(commands),
        rationale=" ".join(rationale_lines).strip(),
        source_seed=source_seed,
        candidate_index=candidate_index,
        invalid_commands=invalid,
        parse_failed=not commands,
    )


def gate_on_replay(
    plans: list[CorrectedPlan],
    scenario: Scenario,
    payload: object,
    enabled: bool = True,
) -> list[CorrectedPlan]:
    """Keep only plans whose command sequence replays to a success verdict.

    Used before augmentation variants enter a training corpus; disabled it
    passes everything through unchanged.
    """
    if not enabled:
        return list(plans)
    kept = []
    for plan in plans:
        if plan.parse_failed or plan.invalid_commands:
            continue
        if replay(list(plan.commands), scenario, payload).success:
            kept.append(plan)
    return kept


def pick_reference(seed: Seed, candidates: list[Seed]) -> Optional[Seed]:
    """Choose a success seed from a similar fault family, or same task type."""
    successes = [c for c in candidates if c.label is SeedLabel.SUCCESS and c.seed_id != seed.seed_id]
    family = seed.fault_type.split("-")[0]
    for candidate in successes:
        if candidate.fault_type.split("-")[0] == family:
            return candidate
    for candidate in successes:
        if candidate.task_type == seed.task_type:
            return candidate
    return None


PLAN_HEADER = "[Corrected Diagnostic Plan]"
PLAN_PREAMBLE = (
    "Based on analysis of the failed attempt,\n"
    "the following commands should be executed:"
)


def emit_plan_prompt(plan: CorrectedPlan) -> str:
    """Render a plan as the guidance block prepended to the planner prompt.

    The rendering is byte-stable and injective over command lists; the plan
    is guidance for the next attempt, not a rigid constraint.
    """
    if plan.parse_failed or not plan.commands:
        raise EmptyPlan(f"plan {plan.source_seed}#{plan.candidate_index} has no commands")
    lines = [PLAN_HEADER, PLAN_PREAMBLE]
    lines.extend(f"{i}. {command}" for i, command in enumerate(plan.commands, start=1))
    return "\n".join(lines)


def plan_to_dict(plan: CorrectedPlan) -> dict:
    return {
        "commands": list(plan.commands),
        "rationale": plan.rationale,
        "source_seed": plan.source_seed,
        "candidate_index": plan.candidate_index,
        "invalid_commands": list(plan.invalid_commands),
        "parse_failed": plan.parse_failed,
    }


# ---------------------------------------------------------------------------
# seed store
# ---------------------------------------------------------------------------

def save_seeds(seeds: list[Seed], directory: Path | str) -> None:
    """Write one trajectory file per seed plus a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = []
    for seed in seeds:
        filename = f"{seed.seed_id}.jsonl"
        (directory / filename).write_text(trajectory_to_jsonl(seed.trajectory), encoding="utf-8")
        manifest.append(
            {
                "id": seed.seed_id,
                "file": filename,
                "label": seed.label.value,
                "fault_type": seed.fault_type,
                "provenance": seed.provenance,
            }
        )
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )


def load_seeds(directory: Path | str) -> list[Seed]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    seeds = []
    for entry in manifest:
        trajectory = trajectory_from_jsonl(
            (directory / entry["file"]).read_text(encoding="utf-8")
        )
        seeds.append(
            Seed(
                seed_id=entry["id"],
                trajectory=trajectory,
                label=SeedLabel(entry["label"]),
                provenance=entry.get("provenance", "import"),
            )
        )
    return seeds
