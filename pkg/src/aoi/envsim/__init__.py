"""Deterministic simulated cluster with fault injection and validators."""

from .commands import CommandInterpreter, CommandResult, is_valid_command
from .faults import FAULT_CATALOG, FaultSpec, TargetMissing, UnknownFault, inject_fault
from .scenario import (
    ClusterEnv,
    ExecLogEntry,
    Scenario,
    build_env,
    build_state,
    load_scenario,
    load_topology,
    packaged_scenarios,
)
from .state import ClusterState, PodStatus, PvcStatus
from .validators import TIMEOUT_MARKER, MalformedSubmission, validate

__all__ = [
    "CommandInterpreter",
    "CommandResult",
    "ClusterEnv",
    "ClusterState",
    "ExecLogEntry",
    "FAULT_CATALOG",
    "FaultSpec",
    "MalformedSubmission",
    "PodStatus",
    "PvcStatus",
    "Scenario",
    "TIMEOUT_MARKER",
    "TargetMissing",
    "UnknownFault",
    "build_env",
    "build_state",
    "inject_fault",
    "is_valid_command",
    "load_scenario",
    "load_topology",
    "packaged_scenarios",
    "validate",
]
