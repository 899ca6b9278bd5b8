from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest

from aoi.cli import EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, main

from conftest import GOLDEN_SCENARIO_ID, data_path, decision_json


def run_cli(capsys, *argv) -> tuple[int, str, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_eval_prints_headline_report(capsys):
    code, out, _ = run_cli(capsys, "eval", "--matrix",
                           data_path("fixtures/benchmark_matrix.json"), "--k", "5")
    assert code == EXIT_OK
    assert "66.3" in out and "38.6" in out
    assert "100.0" in out and "53.6" in out and "30.8" in out and "46.2" in out
    assert "31.4, 41.9, 38.4, 40.7, 40.7" in out
    assert "5/5=14" in out and "0/5=29" in out


def test_split_check_ok(capsys):
    code, out, _ = run_cli(capsys, "split-check", "--spec",
                           data_path("fixtures/benchmark_split.json"))
    assert code == EXIT_OK
    assert "split ok" in out
    assert "obs_train: 23" in out and "evolver_test: 37" in out


def test_split_check_violation_exits_2(tmp_path, capsys):
    spec = json.loads(Path(data_path("fixtures/benchmark_split.json")).read_text())
    spec["obs_test"] = [t for t in spec["obs_test"] if t != spec["evolver_test"][0]]
    bad = tmp_path / "bad_split.json"
    bad.write_text(json.dumps(spec))
    code, out, _ = run_cli(capsys, "split-check", "--spec", str(bad))
    assert code == EXIT_VALIDATION
    assert "nesting broken" in out


def test_unknown_flag_exits_64(capsys):
    code, _, err = run_cli(capsys, "eval", "--matrix", "x.json", "--frobnicate")
    assert code == EXIT_USAGE


def test_missing_subcommand_exits_64(capsys):
    code, _, _ = run_cli(capsys)
    assert code == EXIT_USAGE


def test_replay_golden_scenario_against_golden_file(capsys):
    code, out, err = run_cli(
        capsys, "replay",
        "--scenario", GOLDEN_SCENARIO_ID,
        "--script", data_path("scripts/storageclass_mitigation.json"),
        "--golden", data_path("golden/storageclass_mitigation.transcript.txt"),
    )
    assert code == EXIT_OK
    assert "transcript matches golden file" in err


def test_replay_mismatched_golden_exits_2(tmp_path, capsys):
    wrong = tmp_path / "wrong.txt"
    wrong.write_text("something else entirely\n")
    code, _, err = run_cli(
        capsys, "replay",
        "--scenario", GOLDEN_SCENARIO_ID,
        "--script", data_path("scripts/storageclass_mitigation.json"),
        "--golden", str(wrong),
    )
    assert code == EXIT_VALIDATION
    assert "does not match" in err


def test_run_scripted_scenario(tmp_path, capsys):
    script = {
        "scenario_id": "noop_detection_hotel_reservation-1",
        "entries": [
            {
                "role": "observer", "iteration": 1, "round": 1,
                "completion": decision_json(
                    summary="healthy", action="Submit", instruction="",
                    confidence=0.9, payload="no anomaly",
                ),
            }
        ],
    }
    script_path = tmp_path / "script.json"
    script_path.write_text(json.dumps(script))
    out_path = tmp_path / "transcript.txt"
    code, out, _ = run_cli(
        capsys, "run",
        "--scenario", "noop_detection_hotel_reservation-1",
        "--script", str(script_path),
        "--transcript-out", str(out_path),
    )
    assert code == EXIT_OK
    assert "verdict=success" in out
    assert out_path.read_text().endswith("iterations=1\n")


def test_run_without_script_is_usage_error(capsys):
    code, _, err = run_cli(capsys, "run", "--scenario", GOLDEN_SCENARIO_ID)
    assert code == EXIT_USAGE
    assert "--script is required" in err


def test_suite_over_directory(tmp_path, capsys):
    scenario_dir = tmp_path / "scenarios"
    scenario_dir.mkdir()
    shutil.copy(data_path("scenarios/noop_detection_hotel_reservation-1.json"),
                scenario_dir / "noop.json")
    script = {
        "scenario_id": "noop_detection_hotel_reservation-1",
        "entries": [
            {
                "role": "observer", "iteration": 1, "round": 1,
                "completion": decision_json(
                    summary="healthy", action="Submit", instruction="",
                    confidence=0.9, payload="no anomaly",
                ),
            }
        ],
    }
    script_path = tmp_path / "script.json"
    script_path.write_text(json.dumps(script))
    matrix_path = tmp_path / "matrix.json"
    code, _, err = run_cli(
        capsys, "suite",
        "--scenarios", str(scenario_dir),
        "--script", str(script_path),
        "--runs", "2",
        "--out", str(matrix_path),
    )
    assert code == EXIT_OK
    matrix = json.loads(matrix_path.read_text())
    assert matrix["cells"] == [[True, True]]
    assert matrix["tasks"][0]["type"] == "Detection"
    assert "solved 1/1" in err


def test_score_clean_and_garbage_decisions(tmp_path, capsys):
    clean = tmp_path / "clean.json"
    clean.write_text(decision_json())
    code, out, _ = run_cli(capsys, "score", "--decision", str(clean))
    assert code == EXIT_OK
    assert "format score: 10/10" in out

    garbage = tmp_path / "garbage.txt"
    garbage.write_text("not a decision")
    code, out, _ = run_cli(capsys, "score", "--decision", str(garbage))
    assert code == EXIT_VALIDATION
    assert "0.09" in out


def test_score_plan_file(tmp_path, capsys):
    good = tmp_path / "plan.json"
    good.write_text(json.dumps({"commands": ["kubectl get pods -n ns"], "rationale": ""}))
    code, out, _ = run_cli(capsys, "score", "--plan", str(good))
    assert code == EXIT_OK
    assert "invalid: 0" in out

    bad = tmp_path / "bad_plan.json"
    bad.write_text(json.dumps({"commands": ["kubectl get pods -n ns", "frob it"]}))
    code, out, _ = run_cli(capsys, "score", "--plan", str(bad))
    assert code == EXIT_VALIDATION
    assert "invalid: frob it" in out


def test_export_batches_cli(tmp_path, capsys):
    records = [
        {"group_id": "g1", "context": "c", "candidate": "a", "reward": 0.2, "dims": {}},
        {"group_id": "g1", "context": "c", "candidate": "b", "reward": 0.8, "dims": {}},
    ]
    input_path = tmp_path / "records.json"
    input_path.write_text(json.dumps(records))
    out_path = tmp_path / "batches.jsonl"
    code, out, _ = run_cli(capsys, "export-batches", "--input", str(input_path),
                           "--out", str(out_path))
    assert code == EXIT_OK
    lines = [json.loads(l) for l in out_path.read_text().splitlines()]
    assert len(lines) == 2
    assert lines[0]["advantage"] == pytest.approx(-1.0, abs=1e-6)
    assert lines[1]["advantage"] == pytest.approx(1.0, abs=1e-6)


def test_purify_cli(tmp_path, capsys):
    from aoi.backend import ScriptedBackend, load_script_table
    from aoi.envsim import load_scenario
    from aoi.evolution import Seed, SeedLabel, save_seeds
    from aoi.orchestrator import RunConfig, run_task

    backend = ScriptedBackend(load_script_table(data_path("scripts/storageclass_mitigation.json")))
    result = run_task(load_scenario(GOLDEN_SCENARIO_ID), RunConfig(), backend)
    seed_dir = tmp_path / "seeds"
    save_seeds([Seed("golden", result.trajectory, SeedLabel.SUCCESS)], seed_dir)
    out_path = tmp_path / "purified.json"
    code, _, _ = run_cli(capsys, "purify", "--seeds", str(seed_dir), "--out", str(out_path))
    assert code == EXIT_OK
    purified = json.loads(out_path.read_text())
    assert "golden" in purified
    assert all(c.startswith("kubectl ") for c in purified["golden"])


def test_evolve_cli(tmp_path, capsys):
    from aoi.evolution import Seed, SeedLabel, save_seeds
    from test_evolution import make_trajectory
    from aoi.model import Outcome

    seed = Seed("broken", make_trajectory(
        [("kubectl get pods -n test-hotel-reservation", "output")], outcome=Outcome.FAILURE),
        SeedLabel.FAILED)
    seed_dir = tmp_path / "seeds"
    save_seeds([seed], seed_dir)
    script = {
        "scenario_id": "broken",
        "entries": [
            {"role": "evolver", "iteration": 1, "round": i,
             "completion": f"try again\n1. kubectl get pods -n test-hotel-reservation\n"
                           f"2. kubectl get events -n test-hotel-reservation"}
            for i in (1, 2)
        ],
    }
    script_path = tmp_path / "script.json"
    script_path.write_text(json.dumps(script))
    out_path = tmp_path / "plans.json"
    code, _, _ = run_cli(
        capsys, "evolve", "--seeds", str(seed_dir), "--seed-id", "broken",
        "--problem", "pods were crashing", "--group-size", "2",
        "--script", str(script_path), "--out", str(out_path),
    )
    assert code == EXIT_OK
    plans = json.loads(out_path.read_text())
    assert len(plans) == 2
    assert plans[0]["commands"][0] == "kubectl get pods -n test-hotel-reservation"
