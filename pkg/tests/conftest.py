from __future__ import annotations

import json
from importlib import resources
from typing import Callable, Optional

import pytest

from aoi.backend import CallKey, Prompt, ScriptedBackend, load_script_table
from aoi.envsim import Scenario, load_scenario

GOLDEN_SCENARIO_ID = "redeploy_without_PV-mitigation-1"
HOTEL_NS = "test-hotel-reservation"


def data_path(relative: str) -> str:
    return str(resources.files("aoi").joinpath(f"data/{relative}"))


class FakeBackend:
    """Duck-typed backend driven by a function; records every call."""

    def __init__(self, fn: Callable[[Prompt, Optional[CallKey]], str]) -> None:
        self.fn = fn
        self.calls: list[tuple[Optional[CallKey], Prompt]] = []

    def complete(self, prompt: Prompt, key: Optional[CallKey] = None) -> str:
        self.calls.append((key, prompt))
        return self.fn(prompt, key)


class RecordingBackend:
    """Wraps another backend and keeps (key, prompt) pairs for inspection."""

    def __init__(self, inner) -> None:
        self.inner = inner
        self.calls: list[tuple[Optional[CallKey], Prompt]] = []

    def complete(self, prompt: Prompt, key: Optional[CallKey] = None) -> str:
        self.calls.append((key, prompt))
        return self.inner.complete(prompt, key=key)


def decision_json(
    summary: str = "looking around",
    action: str = "Probe",
    instruction: str = "inspect the namespace",
    namespaces: tuple[str, ...] = (HOTEL_NS,),
    confidence: float = 0.4,
    payload=None,
) -> str:
    doc = {
        "summary": summary,
        "action": action,
        "context_instruction": instruction,
        "context_namespace": list(namespaces),
        "confidence": confidence,
        "submit_payload": payload,
    }
    return json.dumps(doc)


def probe_loop_script(scenario_id: str, namespace: str, iterations: int) -> dict[CallKey, str]:
    """Script table for a planner that probes forever (never submits)."""
    table: dict[CallKey, str] = {}
    for n in range(1, iterations + 1):
        table[CallKey(scenario_id, "observer", n, 1)] = decision_json(
            summary=f"still looking at iteration {n}",
            instruction="look at the pods again",
        )
        table[CallKey(scenario_id, "probe", n, 1)] = f"kubectl get pods -n {namespace}\nDONE"
    return table


def submit_script(scenario_id: str, payload, iteration: int = 1) -> dict[CallKey, str]:
    table: dict[CallKey, str] = {}
    for n in range(1, iteration):
        table[CallKey(scenario_id, "observer", n, 1)] = decision_json()
        table[CallKey(scenario_id, "probe", n, 1)] = "DONE"
    table[CallKey(scenario_id, "observer", iteration, 1)] = decision_json(
        summary="ready to answer",
        action="Submit",
        instruction="",
        confidence=0.9,
        payload=payload,
    )
    return table


@pytest.fixture
def golden_scenario() -> Scenario:
    return load_scenario(GOLDEN_SCENARIO_ID)


@pytest.fixture
def golden_backend() -> ScriptedBackend:
    table = load_script_table(data_path("scripts/storageclass_mitigation.json"))
    return ScriptedBackend(table)


@pytest.fixture
def golden_transcript() -> str:
    with open(data_path("golden/storageclass_mitigation.transcript.txt"), encoding="utf-8") as fh:
        return fh.read()
