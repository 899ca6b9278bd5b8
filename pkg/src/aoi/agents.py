"""The four agent behaviors.

The planner decides, the probe explores read-only with multi-round
budgets and a per-iteration result cache, the executor applies
whitelist-gated writes with two-stage error recovery, and the compressor
distills raw output into a budgeted context string. All of them are
stateless service functions over a per-run memory handle and environment;
nothing here survives across iterations except what lands in the stores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from fnmatch import fnmatchcase
from importlib import resources
from typing import Optional

from .backend import BackendSession, BackendUnavailable, Prompt, count_tokens
from .envsim.commands import CommandResult
from .envsim.scenario import ClusterEnv
from .memory import AgentRole, LongTermMemory, MemoryHandle, ShortTermContext, StoreId
from .model import (
    ActionType,
    CommandClass,
    CommandError,
    DecisionOutput,
    FormatQuality,
    TaskSpec,
    classify_command,
    parse_decision,
)

DEFAULT_PROBE_ROUNDS = 5
DEFAULT_BUDGET_TOKENS = 4096
DONE_SENTINEL = "DONE"

FALLBACK_INSTRUCTION = "Re-inspect the current namespace and gather fresh status output"


# ---------------------------------------------------------------------------
# whitelist
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WhitelistPattern:
    pattern: str
    description: str = ""

    def matches(self, command: str) -> bool:
        return fnmatchcase(command, self.pattern)


class Whitelist:
    def __init__(self, patterns: list[WhitelistPattern]) -> None:
        self.patterns = list(patterns)

    def matches(self, command: str) -> bool:
        return any(p.matches(command) for p in self.patterns)

    def __len__(self) -> int:
        return len(self.patterns)

    @classmethod
    def from_lines(cls, lines: list[str]) -> "Whitelist":
        patterns = []
        for line in lines:
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            patterns.append(WhitelistPattern(pattern=stripped))
        return cls(patterns)

    @classmethod
    def from_file(cls, path) -> "Whitelist":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_lines(fh.readlines())


def default_whitelist() -> Whitelist:
    text = resources.files("aoi").joinpath("data/whitelist.txt").read_text(encoding="utf-8")
    return Whitelist.from_lines(text.splitlines())


# ---------------------------------------------------------------------------
# audit trail
# ---------------------------------------------------------------------------

class AuditStage(Enum):
    FILTER = "filter"
    PREVERIFY = "preverify"
    EXECUTE = "execute"
    RECOVER = "recover"


@dataclass(frozen=True)
class AuditEntry:
    timestamp: int
    command: str
    allowed: bool
    stage: AuditStage
    detail: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "timestamp": self.timestamp,
                "command": self.command,
                "allowed": self.allowed,
                "stage": self.stage.value,
                "detail": self.detail,
            }
        )


def audit_jsonl(entries: list[AuditEntry]) -> str:
    return "\n".join(entry.to_json() for entry in entries) + "\n"


# ---------------------------------------------------------------------------
# planner (decision agent)
# ---------------------------------------------------------------------------

OBSERVER_SYSTEM = """You are the planning agent of an incident-response runtime.
You never touch the cluster yourself; you decide what should happen next.
Respond with exactly one JSON object with keys: summary, action,
context_instruction, context_namespace, confidence, submit_payload.
action is one of "Probe" (read-only exploration), "Execute" (gated
remediation), or "Submit" (final answer; put it in submit_payload).
confidence is a number in [0, 1]."""


def _observer_prompt(
    task: TaskSpec,
    history: LongTermMemory,
    context: ShortTermContext,
    task_queue: list[str],
    guidance: Optional[str],
) -> Prompt:
    system = OBSERVER_SYSTEM if not guidance else guidance + "\n\n" + OBSERVER_SYSTEM
    sections = [
        f"Task ({task.task_type.value}): {task.description}",
        f"Namespace: {task.namespace}",
    ]
    if task_queue:
        sections.append("Task queue:\n" + "\n".join(f"- {entry}" for entry in task_queue))
    if history.summaries:
        sections.append(
            "Summaries of earlier iterations:\n"
            + "\n".join(f"{i + 1}. {s}" for i, s in enumerate(history.summaries))
        )
    if context.content:
        sections.append("Compressed findings from the previous iteration:\n" + context.content)
    else:
        sections.append("No findings yet; this is the first look at the incident.")
    return Prompt(system=system, messages=(("user", "\n\n".join(sections)),))


def observer_decide(
    task: TaskSpec,
    history: LongTermMemory,
    context: ShortTermContext,
    task_queue: list[str],
    session: BackendSession,
    guidance: Optional[str] = None,
) -> DecisionOutput:
    """One planning step: prompt, parse, one reprompt, then a safe fallback.

    A second parse failure degrades to a generic Probe decision instead of
    crashing the run; reward scoring, not the control loop, is where bad
    formatting gets punished.
    """
    prompt = _observer_prompt(task, history, context, task_queue, guidance)
    text = session.complete(prompt)
    decision, quality = parse_decision(text)
    if quality is FormatQuality.PARSE_FAILURE:
        retry = Prompt(
            system=prompt.system,
            messages=prompt.messages
            + (
                ("assistant", text),
                ("user", "That was not a single valid JSON decision object. "
                         "Reply with exactly one JSON object and nothing else."),
            ),
        )
        text = session.complete(retry)
        decision, quality = parse_decision(text)
    if quality is FormatQuality.PARSE_FAILURE or decision is None:
        return DecisionOutput(
            summary="Planner output could not be parsed; falling back to inspection.",
            action=ActionType.PROBE,
            context_instruction=FALLBACK_INSTRUCTION,
            context_namespace=(task.namespace,),
            confidence=0.0,
        )
    return decision


# ---------------------------------------------------------------------------
# probe (read-only, multi-round)
# ---------------------------------------------------------------------------

PROBE_SYSTEM = """You translate a diagnostic instruction into read-only kubectl
commands (get, describe, logs, top, events). Reply with one command per
line, no commentary. Reply DONE when the instruction is fully covered."""


def extract_commands(text: str) -> tuple[list[str], bool]:
    """Pull kubectl command lines out of a completion; detect the DONE sentinel."""
    commands: list[str] = []
    done = False
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("$ "):
            stripped = stripped[2:].strip()
        if stripped == DONE_SENTINEL:
            done = True
        elif stripped.startswith("kubectl "):
            commands.append(stripped)
    return commands, done


def _execute_observed(env: ClusterEnv, raw: str, role: AgentRole) -> CommandResult:
    # one retry for transient environment failures; a second failure becomes
    # an observation rather than an exception
    try:
        return env.execute(raw, role)
    except Exception:  # noqa: BLE001 - transient infra failure path
        try:
            return env.execute(raw, role)
        except Exception as exc:  # noqa: BLE001
            return CommandResult(stdout=f"error: environment unavailable: {exc}", exit_code=125)


def probe_run(
    instruction: str,
    env: ClusterEnv,
    handle: MemoryHandle,
    session: BackendSession,
    k_max: int = DEFAULT_PROBE_ROUNDS,
) -> list[int]:
    """Multi-round read-only exploration; returns raw-store keys written.

    Write-class proposals are refused and reported back as observations;
    repeated commands inside one invocation are served from the baseline
    cache without touching the environment again.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if handle.role is not AgentRole.PROBE:
        raise PermissionError("probe_run requires a probe memory handle")
    # baseline cache lives and dies with this invocation, i.e. one iteration
    baseline_cache: dict[str, CommandResult] = {}
    observations: list[str] = []
    keys: list[int] = []
    for _ in range(k_max):
        messages: list[tuple[str, str]] = [("user", f"Instruction: {instruction}")]
        if observations:
            messages.append(("user", "Observations so far:\n" + "\n\n".join(observations)))
        text = session.complete(Prompt(system=PROBE_SYSTEM, messages=tuple(messages)))
        commands, done = extract_commands(text)
        if not commands and not done:
            break
        for raw in commands:
            try:
                command_class = classify_command(raw)
            except CommandError as exc:
                observations.append(f"$ {raw}\n(refused: {exc})")
                continue
            if command_class is CommandClass.WRITE:
                observations.append(
                    f"$ {raw}\n(refused: probe is read-only; write commands are not permitted)"
                )
                continue
            if raw in baseline_cache:
                result = baseline_cache[raw]
            else:
                result = _execute_observed(env, raw, AgentRole.PROBE)
                baseline_cache[raw] = result
                keys.append(handle.write(StoreId.RAW, f"$ {raw}\n{result.stdout}"))
            observations.append(f"$ {raw}\n{result.stdout}")
        if done:
            break
    return keys


# ---------------------------------------------------------------------------
# executor (gated writes, two-stage recovery)
# ---------------------------------------------------------------------------

EXECUTOR_PREVERIFY_SYSTEM = """Before remediating, you may run a single read-only
kubectl command to verify current state. Reply with one command, or SKIP."""

EXECUTOR_SYSTEM = """You translate a remediation instruction into kubectl write
commands (apply, delete, scale, patch, rollout, create, exec). Reply with
one command per line, no commentary."""

EXECUTOR_ANALYZE_SYSTEM = """A remediation command failed. Explain in one or two
sentences what went wrong, judging only from the output."""

EXECUTOR_CORRECT_SYSTEM = """Given the failure analysis, reply with exactly one
corrected kubectl command and nothing else."""


def executor_run(
    instruction: str,
    env: ClusterEnv,
    handle: MemoryHandle,
    session: BackendSession,
    whitelist: Whitelist,
    preverify: bool = True,
) -> tuple[list[int], list[AuditEntry]]:
    """Whitelist-filtered remediation; every command attempt is audited.

    Failed commands get at most one recovery cycle: the model analyzes the
    failure text, then emits one corrected command, which is re-filtered
    before execution. Blocked commands are skipped, never fatal.
    """
    if handle.role is not AgentRole.EXECUTOR:
        raise PermissionError("executor_run requires an executor memory handle")
    audit: list[AuditEntry] = []
    keys: list[int] = []
    observations: list[str] = []

    def record(command: str, allowed: bool, stage: AuditStage, detail: str = "") -> None:
        audit.append(AuditEntry(len(audit) + 1, command, allowed, stage, detail))

    def run_command(raw: str, stage: AuditStage) -> CommandResult:
        result = _execute_observed(env, raw, AgentRole.EXECUTOR)
        keys.append(handle.write(StoreId.RAW, f"$ {raw}\n{result.stdout}"))
        observations.append(f"$ {raw}\n{result.stdout}")
        record(raw, True, stage, f"exit={result.exit_code}")
        return result

    if preverify:
        text = session.complete(
            Prompt(
                system=EXECUTOR_PREVERIFY_SYSTEM,
                messages=(("user", f"Instruction: {instruction}"),),
            )
        )
        commands, _ = extract_commands(text)
        if commands:
            raw = commands[0]
            try:
                command_class = classify_command(raw)
            except CommandError as exc:
                record(raw, False, AuditStage.PREVERIFY, str(exc))
            else:
                if command_class is CommandClass.READ:
                    run_command(raw, AuditStage.PREVERIFY)
                else:
                    record(raw, False, AuditStage.PREVERIFY, "verification must be read-only")

    messages: list[tuple[str, str]] = [("user", f"Instruction: {instruction}")]
    if observations:
        messages.append(("user", "Verification output:\n" + "\n\n".join(observations)))
    text = session.complete(Prompt(system=EXECUTOR_SYSTEM, messages=tuple(messages)))
    commands, _ = extract_commands(text)
    for raw in commands:
        try:
            command_class = classify_command(raw)
        except CommandError as exc:
            record(raw, False, AuditStage.FILTER, str(exc))
            continue
        if command_class is CommandClass.WRITE and not whitelist.matches(raw):
            record(raw, False, AuditStage.FILTER, "no matching whitelist pattern")
            continue
        record(raw, True, AuditStage.FILTER)
        result = run_command(raw, AuditStage.EXECUTE)
        if result.exit_code != 0:
            _recover(raw, result, env, session, whitelist, record, run_command)
    return keys, audit


def _recover(raw, failed_result, env, session, whitelist, record, run_command) -> None:
    analysis = session.complete(
        Prompt(
            system=EXECUTOR_ANALYZE_SYSTEM,
            messages=(("user", f"$ {raw}\n{failed_result.stdout}"),),
        )
    )
    corrected_text = session.complete(
        Prompt(
            system=EXECUTOR_CORRECT_SYSTEM,
            messages=(
                ("user", f"Failed command: {raw}"),
                ("user", f"Output:\n{failed_result.stdout}"),
                ("user", f"Analysis: {analysis}"),
            ),
        )
    )
    corrected, _ = extract_commands(corrected_text)
    if not corrected:
        record(raw, False, AuditStage.RECOVER, "no corrected command produced")
        return
    candidate = corrected[0]
    try:
        command_class = classify_command(candidate)
    except CommandError as exc:
        record(candidate, False, AuditStage.RECOVER, str(exc))
        return
    if command_class is CommandClass.WRITE and not whitelist.matches(candidate):
        record(candidate, False, AuditStage.RECOVER, "no matching whitelist pattern")
        return
    run_command(candidate, AuditStage.RECOVER)


# ---------------------------------------------------------------------------
# compressor (dedup + budgeted semantic compression)
# ---------------------------------------------------------------------------

COMPRESSOR_SYSTEM = """Summarize the following diagnostic output. Preserve component
names, statuses, restart counts, and error messages exactly; drop repetition."""

TRUNCATION_FLAG = "\n[truncated to context budget]"


def dedup_lines(text: str) -> str:
    """Collapse consecutive duplicate lines into 'line xN'."""
    out: list[str] = []
    previous: Optional[str] = None
    run = 0
    for line in text.splitlines():
        if line == previous:
            run += 1
            continue
        if previous is not None:
            out.append(previous if run == 1 else f"{previous} x{run}")
        previous = line
        run = 1
    if previous is not None:
        out.append(previous if run == 1 else f"{previous} x{run}")
    return "\n".join(out)


def _truncate_to_budget(text: str, budget_tokens: int) -> str:
    flag_bytes = TRUNCATION_FLAG.encode("utf-8")
    keep = max(budget_tokens * 4 - len(flag_bytes), 0)
    clipped = text.encode("utf-8")[:keep].decode("utf-8", errors="ignore")
    return clipped + TRUNCATION_FLAG


def _windows(text: str, budget_tokens: int) -> list[str]:
    data = text.encode("utf-8")
    window = budget_tokens * 4
    overlap = (budget_tokens // 8) * 4
    step = max(window - overlap, 1)
    chunks = []
    for start in range(0, len(data), step):
        chunk = data[start:start + window].decode("utf-8", errors="ignore")
        chunks.append(chunk)
        if start + window >= len(data):
            break
    return chunks


def compressor_compress(
    entries: list[str],
    budget_tokens: int = DEFAULT_BUDGET_TOKENS,
    session: Optional[BackendSession] = None,
) -> str:
    """Distill raw outputs into a context string within the token budget.

    Stage one is rule-based line deduplication; if the result already fits,
    no model call happens. Stage two summarizes sliding windows through the
    backend and concatenates. Hard truncation is the flagged last resort,
    and also the fallback when the backend is unavailable.
    """
    if budget_tokens <= 0:
        raise ValueError("budget_tokens must be positive")
    text = "\n".join(entries)
    deduped = dedup_lines(text)
    if count_tokens(deduped) <= budget_tokens:
        return deduped
    if session is None:
        return _truncate_to_budget(deduped, budget_tokens)
    try:
        summaries = [
            session.complete(Prompt(system=COMPRESSOR_SYSTEM, messages=(("user", chunk),)))
            for chunk in _windows(deduped, budget_tokens)
        ]
    except BackendUnavailable:
        return _truncate_to_budget(deduped, budget_tokens)
    combined = "\n".join(summaries)
    if count_tokens(combined) <= budget_tokens:
        return combined
    return _truncate_to_budget(combined, budget_tokens)
