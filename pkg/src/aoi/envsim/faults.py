"""Fault catalog and injection.

Eight fault families cover the four task categories without reimplementing
Kubernetes: storage-class loss, a no-op baseline, service target-port
misconfiguration, scale-to-zero, revoked datastore auth (pods crash with
auth errors), forced pod failure, container kills (elevated restarts), and
injected network delay (degraded service endpoints).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .state import ClusterState, NamespaceState


class UnknownFault(ValueError):
    pass


class TargetMissing(ValueError):
    pass


@dataclass(frozen=True)
class FaultSpec:
    fault_type: str
    params: dict = field(default_factory=dict)


def _require_namespace(state: ClusterState, params: dict) -> NamespaceState:
    name = params.get("namespace", "")
    ns = state.namespace(name)
    if ns is None:
        raise TargetMissing(f"namespace {name!r} does not exist")
    return ns


def _inject_noop(state: ClusterState, params: dict) -> None:
    _require_namespace(state, params)


def _inject_redeploy_without_pv(state: ClusterState, params: dict) -> None:
    ns = _require_namespace(state, params)
    sc_name = params.get("storage_class", "")
    if sc_name not in state.storage_classes:
        raise TargetMissing(f"storage class {sc_name!r} does not exist")
    del state.storage_classes[sc_name]
    for pvc in ns.pvcs.values():
        if pvc.storage_class == sc_name:
            pvc.provision_broken = True


def _inject_target_port_misconfig(state: ClusterState, params: dict) -> None:
    ns = _require_namespace(state, params)
    svc = ns.services.get(params.get("service", ""))
    if svc is None:
        raise TargetMissing(f"service {params.get('service')!r} does not exist")
    svc.target_port = int(params.get("wrong_port", svc.target_port + 1000))


def _inject_scale_pod_zero(state: ClusterState, params: dict) -> None:
    ns = _require_namespace(state, params)
    dep = ns.deployments.get(params.get("deployment", ""))
    if dep is None:
        raise TargetMissing(f"deployment {params.get('deployment')!r} does not exist")
    dep.replicas = 0


def _inject_revoke_auth(state: ClusterState, params: dict) -> None:
    ns = _require_namespace(state, params)
    targets = params.get("deployments", [])
    if not targets:
        raise TargetMissing("revoke_auth requires target deployments")
    for name in targets:
        dep = ns.deployments.get(name)
        if dep is None:
            raise TargetMissing(f"deployment {name!r} does not exist")
        dep.auth_broken = True


def _inject_pod_failure(state: ClusterState, params: dict) -> None:
    ns = _require_namespace(state, params)
    dep = ns.deployments.get(params.get("deployment", ""))
    if dep is None:
        raise TargetMissing(f"deployment {params.get('deployment')!r} does not exist")
    dep.force_crash = True


def _inject_container_kill(state: ClusterState, params: dict) -> None:
    ns = _require_namespace(state, params)
    dep = ns.deployments.get(params.get("deployment", ""))
    if dep is None:
        raise TargetMissing(f"deployment {params.get('deployment')!r} does not exist")
    dep.kill_restarts = int(params.get("restarts", 2))


def _inject_network_delay(state: ClusterState, params: dict) -> None:
    ns = _require_namespace(state, params)
    svc = ns.services.get(params.get("service", ""))
    if svc is None:
        raise TargetMissing(f"service {params.get('service')!r} does not exist")
    svc.degraded = True


FAULT_CATALOG = {
    "noop_detection": _inject_noop,
    "redeploy_without_PV": _inject_redeploy_without_pv,
    "k8s_target_port-misconfig": _inject_target_port_misconfig,
    "scale_pod_zero": _inject_scale_pod_zero,
    "revoke_auth": _inject_revoke_auth,
    "pod_failure": _inject_pod_failure,
    "container_kill": _inject_container_kill,
    "network_delay": _inject_network_delay,
}


def inject_fault(state: ClusterState, fault: FaultSpec) -> ClusterState:
    """Apply a fault's state mutation and reconcile its consequences."""
    injector = FAULT_CATALOG.get(fault.fault_type)
    if injector is None:
        raise UnknownFault(f"fault type {fault.fault_type!r} not in catalog")
    injector(state, fault.params)
    return state.reconcile()
