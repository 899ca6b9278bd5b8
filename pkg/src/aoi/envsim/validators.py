"""Per-task-type submission validators.

Detection compares the anomaly claim to the injected fault, localization
is an exact component-set match, root-cause analysis matches both the
system level and the fault label, and mitigation ignores the payload and
inspects cluster health directly.
"""

from __future__ import annotations

from ..model import TaskSpec, TaskType, Verdict
from .state import ClusterState, NamespaceState, PodStatus, PvcStatus
from .commands import service_ready_endpoints

# Submitted on loop exhaustion; every validator counts it as a failure.
TIMEOUT_MARKER = "timeout"

_POSITIVE_CLAIMS = frozenset({
    "yes", "anomaly", "anomalous", "anomaly present", "anomaly detected",
})
_NEGATIVE_CLAIMS = frozenset({
    "no", "none", "normal", "healthy", "no anomaly", "no anomaly detected",
})


class MalformedSubmission(ValueError):
    """Submission payload shape does not match the task type."""


def validate(state: ClusterState, task: TaskSpec, payload: object) -> Verdict:
    if isinstance(payload, str) and payload.strip().lower() == TIMEOUT_MARKER:
        return Verdict(False, "timed out without a submission")
    if task.task_type is TaskType.DETECTION:
        return _validate_detection(task, payload)
    if task.task_type is TaskType.LOCALIZATION:
        return _validate_localization(task, payload)
    if task.task_type is TaskType.RCA:
        return _validate_rca(task, payload)
    return _validate_mitigation(state, task)


def _validate_detection(task: TaskSpec, payload: object) -> Verdict:
    if not isinstance(payload, str):
        raise MalformedSubmission("detection expects a yes/no string")
    normalized = payload.strip().lower().rstrip(".!")
    if normalized in _POSITIVE_CLAIMS:
        claim = True
    elif normalized in _NEGATIVE_CLAIMS:
        claim = False
    else:
        raise MalformedSubmission(f"unrecognized detection claim {payload!r}")
    truth = bool((task.ground_truth or {}).get("anomalous"))
    return Verdict(claim == truth, f"claimed anomaly={claim}, injected anomaly={truth}")


def _validate_localization(task: TaskSpec, payload: object) -> Verdict:
    if isinstance(payload, str):
        payload = [payload]
    if not isinstance(payload, list) or not all(isinstance(c, str) for c in payload):
        raise MalformedSubmission("localization expects a list of component names")
    submitted = {c.strip() for c in payload}
    truth = set((task.ground_truth or {}).get("components", []))
    return Verdict(submitted == truth, f"submitted {sorted(submitted)}, expected {sorted(truth)}")


def _validate_rca(task: TaskSpec, payload: object) -> Verdict:
    if not isinstance(payload, dict):
        raise MalformedSubmission("root-cause analysis expects {system_level, fault_type}")
    try:
        level = str(payload["system_level"]).strip()
        fault = str(payload["fault_type"]).strip()
    except KeyError as exc:
        raise MalformedSubmission(f"missing field {exc}") from None
    truth = task.ground_truth or {}
    expected_level = str(truth.get("system_level", "")).strip()
    expected_fault = str(truth.get("fault_type", "")).strip()
    ok = level == expected_level and fault == expected_fault
    return Verdict(
        ok,
        f"submitted ({level}, {fault}), expected ({expected_level}, {expected_fault})",
    )


def _validate_mitigation(state: ClusterState, task: TaskSpec) -> Verdict:
    ns = state.namespace(task.namespace)
    if ns is None:
        return Verdict(False, f"namespace {task.namespace} missing")
    problems: list[str] = []
    running, total = _pod_health(ns, problems)
    healthy_services, total_services = _service_health(ns, problems)
    for pvc in ns.pvcs.values():
        if pvc.status is not PvcStatus.BOUND:
            problems.append(f"pvc {pvc.name} {pvc.status.value}")
    detail = (
        f"pod check: {running}/{total} Running; "
        f"service check: {healthy_services}/{total_services} endpoints healthy"
    )
    if problems:
        return Verdict(False, detail + "; " + "; ".join(sorted(problems)))
    return Verdict(True, detail)


def _pod_health(ns: NamespaceState, problems: list[str]) -> tuple[int, int]:
    running = 0
    total = 0
    for dep in ns.deployments.values():
        if dep.replicas < dep.desired_replicas:
            problems.append(f"deployment {dep.name} scaled below desired replicas")
        pods = [p for p in ns.pods.values() if p.deployment == dep.name]
        total += len(pods)
        for pod in pods:
            if pod.status is PodStatus.RUNNING and pod.ready:
                running += 1
            else:
                problems.append(f"pod {pod.name} {pod.status.value}")
    return running, total


def _service_health(ns: NamespaceState, problems: list[str]) -> tuple[int, int]:
    healthy = 0
    for svc in ns.services.values():
        ready, _ = service_ready_endpoints(ns, svc)
        if ready > 0 and not svc.degraded:
            healthy += 1
        else:
            problems.append(f"service {svc.name} unhealthy")
    return healthy, len(ns.services)
