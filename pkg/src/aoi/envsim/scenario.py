"""Scenario files, topology loading, and the per-run environment facade.

A scenario file bundles an initial topology reference, a fault spec, the
task (with ground truth), a manifest registry for `kubectl apply -f`, and
optional canned exec responses. Environments are built fresh per run;
every command execution is attributed to an agent role in the execution
log so isolation invariants can be audited after the fact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from ..memory import AgentRole
from ..model import Command, CommandClass, CommandError, TaskSpec, TaskType, Verdict
from .commands import CommandInterpreter, CommandResult
from .faults import FaultSpec, inject_fault
from .state import ClusterState, Deployment, NamespaceState, Pvc, Service, StorageClassResource
from .validators import validate


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    task: TaskSpec
    topology: dict
    fault: FaultSpec
    manifests: dict[str, dict] = field(default_factory=dict)
    exec_responses: list[dict] = field(default_factory=list)


@dataclass(frozen=True)
class ExecLogEntry:
    seq: int
    role: AgentRole
    command: str
    command_class: CommandClass
    stdout: str
    exit_code: int
    mutated: bool


def _data_dir() -> Path:
    return Path(str(resources.files("aoi").joinpath("data")))


def load_topology(name_or_obj) -> dict:
    if isinstance(name_or_obj, dict):
        return name_or_obj
    path = Path(name_or_obj)
    if not path.exists():
        path = _data_dir() / "topologies" / f"{name_or_obj}.json"
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def load_scenario(path_or_obj) -> Scenario:
    if isinstance(path_or_obj, dict):
        obj = path_or_obj
    else:
        path = Path(path_or_obj)
        if not path.exists():
            path = _data_dir() / "scenarios" / f"{path_or_obj}.json"
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    task_obj = obj["task"]
    task = TaskSpec(
        task_id=task_obj["task_id"],
        task_type=TaskType(task_obj["task_type"]),
        fault_type=task_obj["fault_type"],
        namespace=task_obj["namespace"],
        description=task_obj["description"],
        ground_truth=task_obj.get("ground_truth"),
    )
    fault_obj = obj["fault"]
    return Scenario(
        scenario_id=obj["scenario_id"],
        task=task,
        topology=load_topology(obj.get("topology_ref", obj.get("topology"))),
        fault=FaultSpec(fault_type=fault_obj["fault_type"], params=fault_obj.get("params", {})),
        manifests=obj.get("manifests", {}),
        exec_responses=obj.get("exec_responses", []),
    )


def packaged_scenarios() -> list[str]:
    return sorted(p.stem for p in (_data_dir() / "scenarios").glob("*.json"))


def build_state(topology: dict) -> ClusterState:
    state = ClusterState()
    for sc in topology.get("storage_classes", []):
        state.storage_classes[sc["name"]] = StorageClassResource(
            name=sc["name"], provisioner=sc.get("provisioner", "")
        )
    for ns_name, ns_obj in topology.get("namespaces", {}).items():
        ns = NamespaceState(name=ns_name)
        for dep_obj in ns_obj.get("deployments", []):
            replicas = int(dep_obj.get("replicas", 1))
            dep = Deployment(
                name=dep_obj["name"],
                replicas=replicas,
                desired_replicas=replicas,
                container_port=int(dep_obj.get("container_port", 80)),
                pvc_names=tuple(dep_obj.get("pvcs", [])),
                depends_on=tuple(dep_obj.get("depends_on", [])),
                crash_restarts=int(dep_obj.get("crash_restarts", 3)),
            )
            ns.deployments[dep.name] = dep
        for pvc_obj in ns_obj.get("pvcs", []):
            ns.pvcs[pvc_obj["name"]] = Pvc(
                name=pvc_obj["name"], storage_class=pvc_obj["storage_class"]
            )
            ns.pvc_templates[pvc_obj["name"]] = pvc_obj["storage_class"]
        services = ns_obj.get("services", "auto")
        if services == "auto":
            for dep in ns.deployments.values():
                ns.services[dep.name] = Service(
                    name=dep.name,
                    port=dep.container_port,
                    target_port=dep.container_port,
                    selector=dep.name,
                )
        else:
            for svc_obj in services:
                ns.services[svc_obj["name"]] = Service(
                    name=svc_obj["name"],
                    port=int(svc_obj["port"]),
                    target_port=int(svc_obj.get("target_port", svc_obj["port"])),
                    selector=svc_obj.get("selector", svc_obj["name"]),
                )
        state.namespaces[ns_name] = ns
    return state.reconcile()


class ClusterEnv:
    """One scenario instance: state, interpreter, and the attributed call log."""

    def __init__(self, scenario: Scenario, seed: int = 0) -> None:
        self.scenario = scenario
        self.seed = seed
        self.state = build_state(scenario.topology)
        self.state.manifests = dict(scenario.manifests)
        inject_fault(self.state, scenario.fault)
        self._interpreter = CommandInterpreter(self.state, scenario.exec_responses)
        self.execution_log: list[ExecLogEntry] = []

    def execute(self, raw: str, role: AgentRole) -> CommandResult:
        """Run one command as a role; failures become output, not exceptions."""
        try:
            command_class = Command.parse(raw).command_class
        except CommandError as exc:
            result = CommandResult(stdout=f"error: {exc}", exit_code=2)
            command_class = CommandClass.READ  # never reached the interpreter
            self._log(role, raw, command_class, result, mutated=False)
            return result
        result = self._interpreter.run(raw)
        mutated = command_class is CommandClass.WRITE and result.ok
        self._log(role, raw, command_class, result, mutated)
        return result

    def _log(self, role: AgentRole, raw: str, command_class: CommandClass,
             result: CommandResult, mutated: bool) -> None:
        self.execution_log.append(
            ExecLogEntry(
                seq=len(self.execution_log) + 1,
                role=role,
                command=raw,
                command_class=command_class,
                stdout=result.stdout,
                exit_code=result.exit_code,
                mutated=mutated,
            )
        )

    def validate(self, task: Optional[TaskSpec], payload: object) -> Verdict:
        return validate(self.state, task or self.scenario.task, payload)

    def mutation_count(self, role: AgentRole) -> int:
        return sum(1 for entry in self.execution_log if entry.role is role and entry.mutated)

    def calls_by_role(self, role: AgentRole) -> list[ExecLogEntry]:
        return [entry for entry in self.execution_log if entry.role is role]


def build_env(scenario: Scenario, seed: int = 0) -> ClusterEnv:
    return ClusterEnv(scenario, seed=seed)
