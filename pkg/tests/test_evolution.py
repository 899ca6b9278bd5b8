from __future__ import annotations

import json
import random

import pytest

from aoi.backend import BackendSession, CallKey, ScriptedBackend
from aoi.envsim import load_scenario
from aoi.evolution import (
    CorrectedPlan,
    EmptyPlan,
    JudgeBasis,
    NotASuccessSeed,
    Seed,
    SeedLabel,
    emit_plan_prompt,
    evolve,
    gate_on_replay,
    judge,
    load_seeds,
    parse_plan,
    pick_reference,
    purify,
    replay,
    save_seeds,
)
from aoi.model import (
    ActionType,
    Command,
    DecisionOutput,
    IterationRecord,
    Outcome,
    TaskSpec,
    TaskType,
    Trajectory,
)
from aoi.orchestrator import RunConfig, run_task

from conftest import GOLDEN_SCENARIO_ID, HOTEL_NS, data_path

MITIGATION_COMMANDS = [
    "kubectl get pods -n test-hotel-reservation",
    "kubectl get pvc -n test-hotel-reservation",
    "kubectl apply -f storageclass.yaml",
    "kubectl delete pvc --all -n test-hotel-reservation",
    "kubectl rollout restart deployment --all -n test-hotel-reservation",
    "kubectl get pods -n test-hotel-reservation",
]


def make_trajectory(steps, outcome=Outcome.SUCCESS, payload="no anomaly",
                    task_type=TaskType.MITIGATION, fault="redeploy_without_PV",
                    namespace=HOTEL_NS) -> Trajectory:
    task = TaskSpec("seed-task", task_type, fault, namespace, "fix things", {})
    trajectory = Trajectory(task=task)
    for raw, result in steps:
        trajectory.add_step(Command.parse(raw), result)
    decision = DecisionOutput("done", ActionType.SUBMIT, "", (namespace,), 0.9,
                              submit_payload=payload)
    trajectory.add_iteration(IterationRecord(1, decision, (), ""))
    if outcome is not None:
        trajectory.finalize(outcome)
    return trajectory


def golden_seed() -> Seed:
    from aoi.backend import load_script_table

    scenario = load_scenario(GOLDEN_SCENARIO_ID)
    backend = ScriptedBackend(load_script_table(data_path("scripts/storageclass_mitigation.json")))
    result = run_task(scenario, RunConfig(), backend)
    return Seed("golden-seed", result.trajectory, SeedLabel.SUCCESS, provenance="self")


def test_judge_mirrors_env_verdict():
    trajectory = make_trajectory([], outcome=Outcome.SUCCESS)
    label = judge(trajectory)
    assert label.success and label.basis is JudgeBasis.ENV_VERDICT
    label = judge(make_trajectory([], outcome=Outcome.TIMEOUT))
    assert not label.success and label.basis is JudgeBasis.ENV_VERDICT


def test_judge_llm_path_for_imported_trajectories():
    trajectory = make_trajectory([], outcome=None)
    table = {CallKey("imported", "judge", 1, 1): "SUCCESS: problem was solved"}
    session = BackendSession(ScriptedBackend(table), "imported", "judge", 1)
    label = judge(trajectory, session)
    assert label.success and label.basis is JudgeBasis.LLM_JUDGE
    with pytest.raises(ValueError):
        judge(make_trajectory([], outcome=None))


def test_purify_requires_success_seed():
    seed = Seed("s", make_trajectory([], outcome=Outcome.FAILURE), SeedLabel.FAILED)
    with pytest.raises(NotASuccessSeed):
        purify(seed)


def test_purify_removes_consecutive_duplicates():
    steps = [
        ("kubectl get pods -n test-hotel-reservation", "out-a"),
        ("kubectl get pods -n test-hotel-reservation", "out-a"),
        ("kubectl get pvc -n test-hotel-reservation", "out-b"),
    ]
    seed = Seed("s", make_trajectory(steps), SeedLabel.SUCCESS)
    assert purify(seed) == [
        "kubectl get pods -n test-hotel-reservation",
        "kubectl get pvc -n test-hotel-reservation",
    ]


def test_purify_drops_reads_with_repeated_results():
    steps = [
        ("kubectl get pods -n test-hotel-reservation", "same output"),
        ("kubectl get pvc -n test-hotel-reservation", "pvc output"),
        ("kubectl get deployments -n test-hotel-reservation", "same output"),
    ]
    seed = Seed("s", make_trajectory(steps), SeedLabel.SUCCESS)
    assert "kubectl get deployments -n test-hotel-reservation" not in purify(seed)


def test_purify_keeps_succeeding_retry_drops_failed_original():
    steps = [
        ("kubectl apply -f storgeclass.yaml", 'error: the path "storgeclass.yaml" does not exist'),
        ("kubectl apply -f storageclass.yaml", "storageclass.storage.k8s.io/local-storage created"),
    ]
    seed = Seed("s", make_trajectory(steps), SeedLabel.SUCCESS)
    purified = purify(seed)
    assert purified == ["kubectl apply -f storageclass.yaml"]


def test_purify_drops_dead_end_namespace_reads():
    steps = [
        ("kubectl get pods -n other-namespace", "irrelevant"),
        ("kubectl get pods -n test-hotel-reservation", "relevant"),
    ]
    seed = Seed("s", make_trajectory(steps), SeedLabel.SUCCESS)
    purified = purify(seed)
    assert purified == ["kubectl get pods -n test-hotel-reservation"]


def test_purify_golden_trajectory_replays_to_same_verdict():
    scenario = load_scenario(GOLDEN_SCENARIO_ID)
    seed = golden_seed()
    purified = purify(seed, scenario=scenario)
    from aoi.evolution import final_submission

    verdict = replay(purified, scenario, final_submission(seed.trajectory))
    assert verdict.success
    assert len(purified) <= len(seed.trajectory.steps)


def test_purify_falls_back_when_pruning_breaks_replay():
    # a success trajectory whose every write matters and whose reads repeat:
    # dropping the second apply (same signature, both succeed) must not
    # change the verdict, and the replay check guards it
    scenario = load_scenario(GOLDEN_SCENARIO_ID)
    steps = []
    from aoi.envsim import build_env
    from aoi.memory import AgentRole

    env = build_env(scenario)
    for raw in MITIGATION_COMMANDS:
        role = AgentRole.EXECUTOR if raw.split()[1] in ("apply", "delete", "rollout") else AgentRole.PROBE
        steps.append((raw, env.execute(raw, role).stdout))
    trajectory = make_trajectory(steps, payload={"fixed": True})
    seed = Seed("replayable", trajectory, SeedLabel.SUCCESS)
    purified = purify(seed, scenario=scenario)
    assert replay(purified, scenario, {"fixed": True}).success


def test_evolve_repair_produces_group_size_plans():
    trajectory = make_trajectory(
        [("kubectl get pods -n test-hotel-reservation", "output")], outcome=Outcome.FAILURE
    )
    seed = Seed("failed-1", trajectory, SeedLabel.FAILED)
    table = {
        CallKey("failed-1", "evolver", 1, i): (
            f"plan variant {i}\n1. kubectl get pods -n test-hotel-reservation\n"
            f"2. kubectl describe pvc mongodb-geo-pvc -n test-hotel-reservation"
        )
        for i in range(1, 5)
    }
    session = BackendSession(ScriptedBackend(table), "failed-1", "evolver", 1)
    plans = evolve(seed, "pods keep crashing", session, group_size=4)
    assert len(plans) == 4
    assert all(len(p.commands) == 2 and not p.parse_failed for p in plans)
    assert [p.candidate_index for p in plans] == [1, 2, 3, 4]
    # repair never copies the failed sequence verbatim
    failed_commands = tuple(seed.trajectory.commands())
    assert all(p.commands != failed_commands for p in plans)


def test_evolve_single_candidate_scripted_exact():
    seed = Seed("s1", make_trajectory([], outcome=Outcome.FAILURE), SeedLabel.FAILED)
    table = {CallKey("s1", "evolver", 1, 1): "1. kubectl get pods -n ns"}
    session = BackendSession(ScriptedBackend(table), "s1", "evolver", 1)
    plans = evolve(seed, "problem", session, group_size=1)
    assert plans[0].commands == ("kubectl get pods -n ns",)


def test_evolve_augmentation_variants_differ_from_seed():
    steps = [(c, "ok") for c in MITIGATION_COMMANDS]
    seed = Seed("succ-1", make_trajectory(steps), SeedLabel.SUCCESS)
    table = {
        CallKey("succ-1", "evolver", 1, 1):
            "alternative order\n1. kubectl get pvc -n test-hotel-reservation\n"
            "2. kubectl apply -f storageclass.yaml\n"
            "3. kubectl delete pvc --all -n test-hotel-reservation\n"
            "4. kubectl rollout restart deployment --all -n test-hotel-reservation",
        CallKey("succ-1", "evolver", 1, 2):
            "with extra checks\n1. kubectl get events -n test-hotel-reservation\n"
            "2. kubectl apply -f storageclass.yaml\n"
            "3. kubectl delete pvc --all -n test-hotel-reservation\n"
            "4. kubectl rollout restart deployment --all -n test-hotel-reservation\n"
            "5. kubectl get pods -n test-hotel-reservation",
    }
    session = BackendSession(ScriptedBackend(table), "succ-1", "evolver", 1)
    plans = evolve(seed, "diversify", session, group_size=2)
    seed_commands = tuple(c for c, _ in steps)
    assert all(p.commands != seed_commands for p in plans)
    assert len({p.commands for p in plans}) == 2


def test_evolve_flags_unparseable_candidates():
    seed = Seed("s2", make_trajectory([], outcome=Outcome.FAILURE), SeedLabel.FAILED)
    table = {
        CallKey("s2", "evolver", 1, 1): "I am sorry, I cannot help with that.",
        CallKey("s2", "evolver", 1, 2): "1. kubectl get pods -n ns",
    }
    session = BackendSession(ScriptedBackend(table), "s2", "evolver", 1)
    plans = evolve(seed, "problem", session, group_size=2)
    assert len(plans) == 2  # flagged, not dropped
    assert plans[0].parse_failed and not plans[1].parse_failed


def test_parse_plan_json_form_and_invalid_flagging():
    text = json.dumps({"commands": ["kubectl get pods -n ns", "frob the widget"],
                       "rationale": "inspect first"})
    plan = parse_plan(text, "src", 1)
    assert plan.commands == ("kubectl get pods -n ns", "frob the widget")
    assert plan.invalid_commands == ("frob the widget",)
    assert plan.rationale == "inspect first"


def test_emit_plan_prompt_exact_format():
    plan = CorrectedPlan(
        commands=("kubectl get pods -n {namespace}", "kubectl describe pod {pod-name}"),
        rationale="", source_seed="s", candidate_index=1,
    )
    assert emit_plan_prompt(plan) == (
        "[Corrected Diagnostic Plan]\n"
        "Based on analysis of the failed attempt,\n"
        "the following commands should be executed:\n"
        "1. kubectl get pods -n {namespace}\n"
        "2. kubectl describe pod {pod-name}"
    )


def test_emit_plan_prompt_numbering_and_order():
    commands = tuple(f"kubectl get pods -n ns{i}" for i in range(10))
    plan = CorrectedPlan(commands=commands, rationale="", source_seed="s", candidate_index=1)
    lines = emit_plan_prompt(plan).splitlines()
    assert len(lines) == 13  # header + two fixed lines + 10 commands
    for i, command in enumerate(commands, start=1):
        assert lines[2 + i] == f"{i}. {command}"


def test_emit_plan_prompt_empty_raises():
    plan = CorrectedPlan(commands=(), rationale="", source_seed="s", candidate_index=1,
                         parse_failed=True)
    with pytest.raises(EmptyPlan):
        emit_plan_prompt(plan)


def test_emit_plan_prompt_injective_property():
    rng = random.Random(13)
    seen = {}
    for _ in range(300):
        commands = tuple(
            f"kubectl get pods -n ns-{rng.randrange(5)}" for _ in range(rng.randrange(1, 6))
        )
        plan = CorrectedPlan(commands=commands, rationale="", source_seed="s", candidate_index=1)
        rendered = emit_plan_prompt(plan)
        if rendered in seen:
            assert seen[rendered] == commands
        seen[rendered] = commands


def test_pick_reference_prefers_fault_family_then_task_type():
    failed = Seed("f", make_trajectory([], outcome=Outcome.FAILURE,
                                       fault="k8s_target_port-misconfig",
                                       task_type=TaskType.LOCALIZATION), SeedLabel.FAILED)
    same_family = Seed("a", make_trajectory([], fault="k8s_target_port-othercase",
                                            task_type=TaskType.RCA), SeedLabel.SUCCESS)
    same_type = Seed("b", make_trajectory([], fault="pod_failure",
                                          task_type=TaskType.LOCALIZATION), SeedLabel.SUCCESS)
    assert pick_reference(failed, [same_type, same_family]) is same_family
    assert pick_reference(failed, [same_type]) is same_type
    assert pick_reference(failed, []) is None


def test_gate_on_replay_filters_failing_plans():
    scenario = load_scenario(GOLDEN_SCENARIO_ID)
    good = CorrectedPlan(
        commands=(
            "kubectl apply -f storageclass.yaml",
            "kubectl delete pvc --all -n test-hotel-reservation",
            "kubectl rollout restart deployment --all -n test-hotel-reservation",
        ),
        rationale="", source_seed="s", candidate_index=1,
    )
    incomplete = CorrectedPlan(
        commands=("kubectl apply -f storageclass.yaml",),
        rationale="", source_seed="s", candidate_index=2,
    )
    kept = gate_on_replay([good, incomplete], scenario, payload={"fixed": True})
    assert kept == [good]
    assert gate_on_replay([good, incomplete], scenario, payload=None, enabled=False) == [
        good, incomplete,
    ]


def test_seed_store_round_trip(tmp_path):
    seeds = [
        golden_seed(),
        Seed("failed-a", make_trajectory([("kubectl get pods -n test-hotel-reservation", "x")],
                                         outcome=Outcome.FAILURE), SeedLabel.FAILED,
             provenance="expert record"),
    ]
    save_seeds(seeds, tmp_path)
    loaded = load_seeds(tmp_path)
    assert [s.seed_id for s in loaded] == ["golden-seed", "failed-a"]
    assert loaded[0].label is SeedLabel.SUCCESS
    assert loaded[0].trajectory.steps == seeds[0].trajectory.steps
    assert loaded[1].provenance == "expert record"
