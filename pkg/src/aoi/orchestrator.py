"""The iteration loop: decide, interact, compress, cache.

Each iteration asks the planner for a decision, routes it to the probe or
executor, compresses that iteration's raw output into the context cached
for the next iteration, and appends the planner's summary to long-term
memory. Submission (or loop exhaustion, which submits a timeout marker)
ends the run with a validator verdict.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Union

from .agents import (
    AuditEntry,
    Whitelist,
    compressor_compress,
    default_whitelist,
    executor_run,
    observer_decide,
    probe_run,
)
from .backend import BackendSession, CompletionBackend
from .envsim.scenario import ClusterEnv, Scenario, build_env
from .envsim.validators import TIMEOUT_MARKER, MalformedSubmission
from .memory import (
    AgentRole,
    LongTermMemory,
    MemoryStores,
    ShortTermContext,
    StoreId,
)
from .model import (
    ActionType,
    Command,
    DecisionOutput,
    IterationRecord,
    Outcome,
    TaskSpec,
    Trajectory,
    Verdict,
)

Backends = Union[CompletionBackend, Mapping[str, CompletionBackend]]


class Termination(Enum):
    SUBMITTED = "Submitted"
    TIMEOUT = "Timeout"


@dataclass
class RunConfig:
    max_iterations: int = 15
    k_max: int = 5
    budget_tokens: int = 4096
    preverify: bool = True
    long_term_capacity: int = 10
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        for name in ("max_iterations", "k_max", "budget_tokens", "long_term_capacity", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class RunResult:
    trajectory: Trajectory
    verdict: Verdict
    iteration_count: int
    termination: Termination
    transcript: str
    stores: MemoryStores
    env: ClusterEnv
    executor_audit: list[AuditEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.termination is Termination.TIMEOUT and self.iteration_count < 1:
            raise ValueError("timeout requires at least one iteration")


def _backend_for(backends: Backends, role: str) -> CompletionBackend:
    if isinstance(backends, Mapping):
        return backends[role]
    return backends


class TranscriptWriter:
    """Accumulates the deterministic run transcript used for golden files."""

    def __init__(self, scenario: Scenario, run_index: int, seed: int) -> None:
        self.lines: list[str] = []
        self.lines.append(
            f"=== scenario: {scenario.scenario_id} | run {run_index} | seed {seed} ==="
        )
        self.lines.append(
            f"[init] fault injected: {scenario.fault.fault_type} "
            f"on namespace {scenario.task.namespace}"
        )
        self.lines.append(
            f"[init] task: {scenario.task.task_type.value}: {scenario.task.description}"
        )

    def observer(self, n: int, decision: DecisionOutput) -> None:
        prefix = f"[iter {n:02d} | observer]"
        self.lines.append(f"{prefix} summary: {decision.summary}")
        self.lines.append(
            f"{prefix} action={decision.action.value} confidence={decision.confidence:.2f}"
        )
        if decision.action is not ActionType.SUBMIT:
            self.lines.append(f"{prefix} instruction: {decision.context_instruction}")

    def command(self, n: int, role: str, command: str, stdout: str) -> None:
        self.lines.append(f"[iter {n:02d} | {role}] $ {command}")
        if stdout:
            self.lines.append(stdout)

    def compressor(self, n: int, token_count: int) -> None:
        self.lines.append(f"[iter {n:02d} | compressor] cached context ({token_count} tokens)")

    def validation(self, verdict: Verdict) -> None:
        self.lines.append(f"[validate] {verdict.detail}")

    def result(self, verdict: Verdict, termination: Termination, iterations: int) -> None:
        label = "success" if verdict.success else "failure"
        self.lines.append(
            f"[result] verdict={label} termination={termination.value} iterations={iterations}"
        )

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def route(
    decision: DecisionOutput,
    env: ClusterEnv,
    stores: MemoryStores,
    backends: Backends,
    cfg: RunConfig,
    whitelist: Whitelist,
    scenario_id: str,
    iteration: int,
) -> tuple[list[int], list[AuditEntry]]:
    """Dispatch a non-submit decision to its agent; nothing else touches env."""
    if decision.action is ActionType.PROBE:
        session = BackendSession(_backend_for(backends, "probe"), scenario_id, "probe", iteration)
        keys = probe_run(
            decision.context_instruction, env, stores.grant(AgentRole.PROBE), session,
            k_max=cfg.k_max,
        )
        return keys, []
    if decision.action is ActionType.EXECUTE:
        session = BackendSession(
            _backend_for(backends, "executor"), scenario_id, "executor", iteration
        )
        return executor_run(
            decision.context_instruction, env, stores.grant(AgentRole.EXECUTOR), session,
            whitelist, preverify=cfg.preverify,
        )
    raise ValueError("submit decisions are not routed to agents")


def run_task(
    scenario: Scenario,
    cfg: RunConfig,
    backends: Backends,
    env: Optional[ClusterEnv] = None,
    whitelist: Optional[Whitelist] = None,
    guidance: Optional[str] = None,
    run_index: int = 1,
) -> RunResult:
    task: TaskSpec = scenario.task
    env = env if env is not None else build_env(scenario, seed=cfg.seed)
    whitelist = whitelist if whitelist is not None else default_whitelist()
    stores = MemoryStores()
    observer_handle = stores.grant(AgentRole.OBSERVER)
    compressor_handle = stores.grant(AgentRole.COMPRESSOR)
    history = LongTermMemory(cfg.long_term_capacity)
    trajectory = Trajectory(task=task)
    transcript = TranscriptWriter(scenario, run_index, cfg.seed)
    executor_audit: list[AuditEntry] = []

    # seed the diagnostic task queue; the planner owns task state
    observer_handle.write(StoreId.TASK, f"diagnose: {task.description}")

    verdict: Optional[Verdict] = None
    termination = Termination.TIMEOUT
    iterations_used = cfg.max_iterations

    for n in range(1, cfg.max_iterations + 1):
        comp_entries = observer_handle.read_values(StoreId.COMP)
        context = ShortTermContext(comp_entries[-1].decode("utf-8") if comp_entries else "")
        task_queue = [entry.decode("utf-8") for entry in observer_handle.read_values(StoreId.TASK)]
        session = BackendSession(
            _backend_for(backends, "observer"), scenario.scenario_id, "observer", n
        )
        decision = observer_decide(task, history, context, task_queue, session, guidance)
        appended: Optional[str] = None
        if n > 1:
            history.append(decision.summary)
            appended = decision.summary
        transcript.observer(n, decision)

        if decision.action is ActionType.SUBMIT:
            try:
                verdict = env.validate(task, decision.submit_payload)
            except MalformedSubmission as exc:
                verdict = Verdict(False, f"malformed submission: {exc}")
            trajectory.add_iteration(
                IterationRecord(n, decision, (), "", appended_summary=appended)
            )
            termination = Termination.SUBMITTED
            iterations_used = n
            break

        log_start = len(env.execution_log)
        keys, audit = route(
            decision, env, stores, backends, cfg, whitelist, scenario.scenario_id, n
        )
        executor_audit.extend(audit)
        role_label = "probe" if decision.action is ActionType.PROBE else "executor"
        for entry in env.execution_log[log_start:]:
            transcript.command(n, role_label, entry.command, entry.stdout)
            trajectory.add_step(
                Command(raw=entry.command, command_class=entry.command_class), entry.stdout
            )

        key_set = set(keys)
        raw_entries = [
            value.decode("utf-8")
            for key, value in compressor_handle.read(StoreId.RAW)
            if key in key_set
        ]
        comp_session = BackendSession(
            _backend_for(backends, "compressor"), scenario.scenario_id, "compressor", n
        )
        compressed = compressor_compress(raw_entries, cfg.budget_tokens, comp_session)
        if not compressed:
            # keep the context strictly per-iteration even when nothing ran
            compressed = "(no new output this iteration)"
        compressor_handle.write(StoreId.COMP, compressed)
        transcript.compressor(n, ShortTermContext(compressed).token_count)
        trajectory.add_iteration(
            IterationRecord(n, decision, tuple(keys), compressed, appended_summary=appended)
        )
    if verdict is None:
        # loop exhausted without a submission: submit the timeout marker
        verdict = env.validate(task, TIMEOUT_MARKER)

    transcript.validation(verdict)
    transcript.result(verdict, termination, iterations_used)
    if termination is Termination.TIMEOUT:
        outcome = Outcome.TIMEOUT
    else:
        outcome = Outcome.SUCCESS if verdict.success else Outcome.FAILURE
    trajectory.finalize(outcome)
    return RunResult(
        trajectory=trajectory,
        verdict=verdict,
        iteration_count=iterations_used,
        termination=termination,
        transcript=transcript.text(),
        stores=stores,
        env=env,
        executor_audit=executor_audit,
    )


@dataclass
class SuiteResult:
    task_ids: list[str]
    task_types: list[str]
    runs: int
    cells: list[list[bool]]
    results: list[list[RunResult]]

    def matrix_dict(self) -> dict:
        return {
            "tasks": [
                {"id": task_id, "type": task_type}
                for task_id, task_type in zip(self.task_ids, self.task_types)
            ],
            "runs": self.runs,
            "cells": self.cells,
        }


def run_suite(
    scenarios: list[Scenario],
    cfg: RunConfig,
    backends: Backends,
    runs_per_task: int = 1,
    whitelist: Optional[Whitelist] = None,
    guidance: Optional[str] = None,
) -> SuiteResult:
    """Independent runs per task with derived seeds; failures never abort.

    The success matrix is collected in run order; run r of any task uses
    seed cfg.seed + r so suites are reproducible while runs differ.
    """
    if runs_per_task < 1:
        raise ValueError("runs_per_task must be >= 1")
    whitelist = whitelist if whitelist is not None else default_whitelist()

    def one_run(scenario: Scenario, run_index: int) -> RunResult:
        run_cfg = RunConfig(
            max_iterations=cfg.max_iterations,
            k_max=cfg.k_max,
            budget_tokens=cfg.budget_tokens,
            preverify=cfg.preverify,
            long_term_capacity=cfg.long_term_capacity,
            seed=cfg.seed + run_index,
            workers=1,
        )
        return run_task(
            scenario, run_cfg, backends, whitelist=whitelist, guidance=guidance,
            run_index=run_index + 1,
        )

    jobs = [(scenario, r) for scenario in scenarios for r in range(runs_per_task)]
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            flat = list(pool.map(lambda job: _safe_run(one_run, *job), jobs))
    else:
        flat = [_safe_run(one_run, *job) for job in jobs]

    results: list[list[RunResult]] = []
    cells: list[list[bool]] = []
    for i, scenario in enumerate(scenarios):
        row = flat[i * runs_per_task:(i + 1) * runs_per_task]
        results.append([r for r in row if r is not None])
        cells.append([bool(r is not None and r.verdict.success) for r in row])
    return SuiteResult(
        task_ids=[s.task.task_id for s in scenarios],
        task_types=[s.task.task_type.value for s in scenarios],
        runs=runs_per_task,
        cells=cells,
        results=results,
    )


def _safe_run(fn, scenario, run_index) -> Optional[RunResult]:
    try:
        return fn(scenario, run_index)
    except Exception:  # noqa: BLE001 - per-run failures count as false cells
        return None
