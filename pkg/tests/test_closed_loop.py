"""End-to-end closed loop: fail, judge, repair, guide, succeed.

A scripted run submits the classic wrong localization answer (the
downstream symptom instead of the root cause), the failed trajectory is
judged and repaired into a corrected plan, and the plan block steers the
scripted second attempt to the right component.
"""

from __future__ import annotations

import json

from aoi.backend import BackendSession, CallKey, ScriptedBackend
from aoi.envsim import load_scenario
from aoi.evolution import (
    Seed,
    SeedLabel,
    emit_plan_prompt,
    evolve,
    judge,
    pick_reference,
)
from aoi.model import Outcome
from aoi.orchestrator import RunConfig, run_task

from conftest import RecordingBackend, decision_json

SCENARIO = "astronomy_shop_ad_service_failure-localization-1"
ASTRO = "astronomy-shop"


def _attempt_script(submission, probe_commands: list[str]) -> dict[CallKey, str]:
    table = {
        CallKey(SCENARIO, "observer", 1, 1): decision_json(
            summary="Starting localization of the astronomy-shop anomaly.",
            instruction="Survey workload health in the namespace",
            namespaces=(ASTRO,),
            confidence=0.3,
        ),
        CallKey(SCENARIO, "probe", 1, 1): "\n".join(probe_commands) + "\nDONE",
        CallKey(SCENARIO, "observer", 2, 1): decision_json(
            summary="Gathered pod status for the namespace.",
            action="Submit",
            instruction="",
            namespaces=(ASTRO,),
            confidence=0.8,
            payload=submission,
        ),
    }
    return table


def test_failed_localization_is_repaired_and_retried_to_success():
    scenario = load_scenario(SCENARIO)

    # attempt 1: shallow probe, submits the downstream symptom; fails
    first_backend = ScriptedBackend(
        _attempt_script(["product-catalog"], [f"kubectl get pods -n {ASTRO}"])
    )
    first = run_task(scenario, RunConfig(), first_backend)
    assert not first.verdict.success
    assert first.trajectory.outcome is Outcome.FAILURE

    # judge labels the finished trajectory from its environment verdict
    failed_seed = Seed("ad-failure-attempt-1", first.trajectory, SeedLabel.FAILED)
    label = judge(first.trajectory)
    assert not label.success

    # a success seed from the same task family serves as the repair reference
    reference_pool = [
        Seed("other-pod-failure", first.trajectory, SeedLabel.SUCCESS,
             provenance="expert record"),
    ]
    reference = pick_reference(failed_seed, reference_pool)
    assert reference is reference_pool[0]  # same fault family

    # the evolver proposes a deeper diagnostic path
    plan_text = "\n".join(
        [
            "Inspect the crashing workload directly before answering.",
            f"1. kubectl get pods -n {ASTRO}",
            f"2. kubectl describe pod ad -n {ASTRO}",
            f"3. kubectl logs ad -n {ASTRO}",
        ]
    )
    evolver_backend = ScriptedBackend(
        {CallKey("ad-failure-attempt-1", "evolver", 1, 1): plan_text}
    )
    plans = evolve(
        failed_seed,
        "localization submitted a downstream symptom instead of the root cause",
        BackendSession(evolver_backend, "ad-failure-attempt-1", "evolver", 1),
        reference=reference,
        group_size=1,
    )
    assert len(plans) == 1 and not plans[0].parse_failed
    assert not plans[0].invalid_commands
    guidance = emit_plan_prompt(plans[0])
    assert guidance.startswith("[Corrected Diagnostic Plan]")

    # attempt 2 follows the plan and submits the root cause; succeeds
    second_backend = RecordingBackend(
        ScriptedBackend(_attempt_script(["ad"], list(plans[0].commands)))
    )
    second = run_task(scenario, RunConfig(), second_backend, guidance=guidance)
    assert second.verdict.success
    assert second.trajectory.outcome is Outcome.SUCCESS

    # the guidance block reached the planner, and the plan's commands ran
    observer_prompts = [p for k, p in second_backend.calls if k and k.role == "observer"]
    assert all(p.system.startswith(guidance) for p in observer_prompts)
    executed = [e.command for e in second.env.execution_log]
    assert executed == list(plans[0].commands)
