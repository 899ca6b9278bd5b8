from __future__ import annotations

import pytest

from aoi.backend import ScriptedBackend
from aoi.envsim import PodStatus, build_env, load_scenario
from aoi.envsim.commands import CommandResult
from aoi.memory import AgentRole, MemoryOp, StoreId
from aoi.model import ActionType, DecisionOutput, Outcome
from aoi.orchestrator import RunConfig, Termination, route, run_suite, run_task

from conftest import (
    GOLDEN_SCENARIO_ID,
    HOTEL_NS,
    RecordingBackend,
    probe_loop_script,
    submit_script,
)


def test_run_config_bounds():
    with pytest.raises(ValueError):
        RunConfig(max_iterations=0)
    with pytest.raises(ValueError):
        RunConfig(k_max=0)


def test_golden_scenario_submits_successfully(golden_scenario, golden_backend):
    result = run_task(golden_scenario, RunConfig(), golden_backend)
    assert result.termination is Termination.SUBMITTED
    assert result.iteration_count == 13
    assert result.iteration_count <= 15
    assert result.verdict.success
    ns = result.env.state.namespace(HOTEL_NS)
    running = [p for p in ns.pods.values() if p.status is PodStatus.RUNNING]
    assert len(running) == 12 and len(ns.pods) == 12
    assert result.trajectory.outcome is Outcome.SUCCESS


def test_golden_transcript_matches_byte_for_byte(golden_scenario, golden_backend,
                                                 golden_transcript):
    result = run_task(golden_scenario, RunConfig(), golden_backend)
    assert result.transcript == golden_transcript


def test_observer_never_touches_env_or_raw(golden_scenario, golden_backend):
    result = run_task(golden_scenario, RunConfig(), golden_backend)
    assert all(entry.role is not AgentRole.OBSERVER for entry in result.env.execution_log)
    raw_reads = [
        record
        for record in result.stores.audit_trail
        if record.role is AgentRole.OBSERVER and record.store is StoreId.RAW
    ]
    assert raw_reads == []


def test_pipeline_ordering_comp_write_precedes_next_observer_read(golden_scenario,
                                                                  golden_backend):
    result = run_task(golden_scenario, RunConfig(), golden_backend)
    trail = result.stores.audit_trail
    comp_writes = [r.timestamp for r in trail
                   if r.role is AgentRole.COMPRESSOR and r.store is StoreId.COMP and r.allowed]
    observer_comp_reads = [r.timestamp for r in trail
                           if r.role is AgentRole.OBSERVER and r.store is StoreId.COMP
                           and r.op is MemoryOp.READ]
    # iteration n writes context before the observer reads at n+1
    assert len(comp_writes) == 12  # every non-submit iteration cached a context
    for n, write_tick in enumerate(comp_writes, start=1):
        assert write_tick < observer_comp_reads[n]  # read of iteration n+1


def test_timeout_after_max_iterations():
    scenario = load_scenario("noop_detection_hotel_reservation-1")
    backend = ScriptedBackend(probe_loop_script(scenario.scenario_id, HOTEL_NS, 15))
    result = run_task(scenario, RunConfig(max_iterations=15), backend)
    assert result.termination is Termination.TIMEOUT
    assert result.iteration_count == 15
    assert not result.verdict.success
    assert result.trajectory.outcome is Outcome.TIMEOUT


def test_noop_submit_at_iteration_one():
    scenario = load_scenario("noop_detection_hotel_reservation-1")
    backend = ScriptedBackend(submit_script(scenario.scenario_id, "no anomaly"))
    result = run_task(scenario, RunConfig(), backend)
    assert result.termination is Termination.SUBMITTED
    assert result.iteration_count == 1
    assert result.verdict.success


def test_malformed_submission_becomes_failure_verdict():
    scenario = load_scenario("noop_detection_hotel_reservation-1")
    backend = ScriptedBackend(submit_script(scenario.scenario_id, "hard to say"))
    result = run_task(scenario, RunConfig(), backend)
    assert result.termination is Termination.SUBMITTED
    assert not result.verdict.success
    assert "malformed" in result.verdict.detail


def test_route_rejects_submit():
    scenario = load_scenario("noop_detection_hotel_reservation-1")
    env = build_env(scenario)
    decision = DecisionOutput("s", ActionType.SUBMIT, "", (), 0.9, submit_payload="x")
    from aoi.agents import default_whitelist
    from aoi.memory import MemoryStores

    with pytest.raises(ValueError):
        route(decision, env, MemoryStores(), ScriptedBackend({}), RunConfig(),
              default_whitelist(), scenario.scenario_id, 1)


def test_guidance_is_prepended_to_planner_prompt():
    scenario = load_scenario("noop_detection_hotel_reservation-1")
    backend = RecordingBackend(ScriptedBackend(submit_script(scenario.scenario_id, "no anomaly")))
    guidance = "[Corrected Diagnostic Plan]\n1. kubectl get pods -n test-hotel-reservation"
    run_task(scenario, RunConfig(), backend, guidance=guidance)
    observer_prompts = [p for k, p in backend.calls if k and k.role == "observer"]
    assert observer_prompts and observer_prompts[0].system.startswith(guidance)


def test_trajectory_steps_match_environment_log(golden_scenario, golden_backend):
    result = run_task(golden_scenario, RunConfig(), golden_backend)
    env_commands = [entry.command for entry in result.env.execution_log]
    assert result.trajectory.commands() == env_commands
    assert len(result.trajectory.iterations) == 13


def test_run_suite_matrix_shape_and_failure_capture():
    scenario = load_scenario("noop_detection_hotel_reservation-1")
    backend = ScriptedBackend(submit_script(scenario.scenario_id, "anomaly present"))  # wrong
    suite = run_suite([scenario], RunConfig(), backend, runs_per_task=1)
    assert suite.cells == [[False]]


def test_run_suite_is_deterministic():
    scenarios = [
        load_scenario("noop_detection_hotel_reservation-1"),
        load_scenario(GOLDEN_SCENARIO_ID),
    ]
    table = {}
    table.update(submit_script("noop_detection_hotel_reservation-1", "no anomaly"))
    from aoi.backend import load_script_table
    from conftest import data_path

    table.update(load_script_table(data_path("scripts/storageclass_mitigation.json")))
    backend = ScriptedBackend(table)

    def run_once():
        suite = run_suite(scenarios, RunConfig(seed=3), backend, runs_per_task=2)
        transcripts = [r.transcript for row in suite.results for r in row]
        audits = [r.stores.audit_jsonl() for row in suite.results for r in row]
        return suite.cells, transcripts, audits

    first = run_once()
    second = run_once()
    assert first == second
    assert first[0] == [[True, True], [True, True]]


def test_run_suite_worker_pool_preserves_order():
    scenario = load_scenario("noop_detection_hotel_reservation-1")
    backend = ScriptedBackend(submit_script(scenario.scenario_id, "no anomaly"))
    sequential = run_suite([scenario], RunConfig(workers=1), backend, runs_per_task=3)
    parallel = run_suite([scenario], RunConfig(workers=4), backend, runs_per_task=3)
    assert sequential.cells == parallel.cells == [[True, True, True]]


def test_information_flow_raw_reaches_planner_only_through_comp():
    """Any raw fragment visible to the planner must have passed the compressor.

    Raw outputs are tainted with unique markers; with a tiny budget the
    compressor truncates, so some markers never reach the comp store, and
    those must never show up in a planner prompt.
    """
    scenario = load_scenario(GOLDEN_SCENARIO_ID)
    env = build_env(scenario)
    markers = iter(f"TAINTMARK{n:04d}" for n in range(10000))

    class TaintedEnv:
        def __init__(self, inner):
            self.inner = inner
            self.scenario = inner.scenario
            self.state = inner.state
            self.execution_log = inner.execution_log
            self.applied: list[str] = []

        def execute(self, raw, role):
            result = self.inner.execute(raw, role)
            marker = next(markers)
            self.applied.append(marker)
            return CommandResult(result.stdout + f"\n{marker}", result.exit_code)

        def validate(self, task, payload):
            return self.inner.validate(task, payload)

        def mutation_count(self, role):
            return self.inner.mutation_count(role)

    from aoi.backend import load_script_table
    from conftest import data_path

    tainted = TaintedEnv(env)
    scripted = ScriptedBackend(load_script_table(data_path("scripts/storageclass_mitigation.json")))

    class SummarizingRouter:
        # scripted flows for the agents; window summaries echo a prefix so
        # some taint markers survive into comp and later ones get cut off
        def complete(self, prompt, key=None):
            if key is not None and key.role == "compressor":
                return prompt.messages[0][1][:120]
            return scripted.complete(prompt, key=key)

    backend = RecordingBackend(SummarizingRouter())
    result = run_task(scenario, RunConfig(budget_tokens=64), backend, env=tainted)

    raw_values = [
        value.decode("utf-8")
        for _, value in result.stores._entries[StoreId.RAW].items()
    ]
    comp_values = [
        value.decode("utf-8")
        for _, value in result.stores._entries[StoreId.COMP].items()
    ]
    observer_text = "\n".join(
        prompt.system + "\n" + "\n".join(content for _, content in prompt.messages)
        for key, prompt in backend.calls
        if key and key.role == "observer"
    )
    raw_markers = {m for m in tainted.applied if any(m in v for v in raw_values)}
    assert raw_markers, "taint markers should be present in the raw store"
    leaked = 0
    for marker in raw_markers:
        if marker in observer_text:
            assert any(marker in v for v in comp_values), f"{marker} bypassed the compressor"
            leaked += 1
    dropped = [m for m in raw_markers if all(m not in v for v in comp_values)]
    assert dropped, "budget should have squeezed some markers out of comp"
    for marker in dropped:
        assert marker not in observer_text
