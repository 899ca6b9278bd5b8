"""Simulated cluster state: resources, naming, and the reconcile fixed point.

The model is intentionally small: pods belong to exactly one deployment,
a PVC binds iff its storage class exists and the claim was not created
while the class was absent, and pod health propagates along declared
deployment dependencies. reconcile() is idempotent and converges within
one pass per deployment.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional


class PodStatus(Enum):
    RUNNING = "Running"
    PENDING = "Pending"
    CRASHLOOPBACKOFF = "CrashLoopBackOff"
    TERMINATED = "Terminated"


class PvcStatus(Enum):
    BOUND = "Bound"
    PENDING = "Pending"


def _digest(*parts: object) -> str:
    return hashlib.sha256("/".join(str(p) for p in parts).encode("utf-8")).hexdigest()


@dataclass
class Pod:
    name: str
    deployment: str
    status: PodStatus
    ready: bool
    restarts: int


@dataclass
class Deployment:
    name: str
    replicas: int
    desired_replicas: int
    container_port: int
    pvc_names: tuple[str, ...] = ()
    depends_on: tuple[str, ...] = ()
    crash_restarts: int = 3  # restart count displayed while crash-looping
    generation: int = 1  # bumped by restarts; feeds pod name hashes
    force_crash: bool = False
    auth_broken: bool = False
    kill_restarts: int = 0


@dataclass
class Service:
    name: str
    port: int
    target_port: int
    selector: str  # deployment name
    degraded: bool = False


@dataclass
class Pvc:
    name: str
    storage_class: str
    status: PvcStatus = PvcStatus.PENDING
    provision_broken: bool = False


@dataclass
class StorageClassResource:
    name: str
    provisioner: str


@dataclass
class NamespaceState:
    name: str
    deployments: dict[str, Deployment] = field(default_factory=dict)
    services: dict[str, Service] = field(default_factory=dict)
    pvcs: dict[str, Pvc] = field(default_factory=dict)
    pods: dict[str, Pod] = field(default_factory=dict)
    # claim templates (name -> storage class) used when a restart recreates
    # PVCs that were deleted
    pvc_templates: dict[str, str] = field(default_factory=dict)


@dataclass
class ClusterState:
    namespaces: dict[str, NamespaceState] = field(default_factory=dict)
    storage_classes: dict[str, StorageClassResource] = field(default_factory=dict)
    manifests: dict[str, dict] = field(default_factory=dict)

    def namespace(self, name: str) -> Optional[NamespaceState]:
        return self.namespaces.get(name)

    def reconcile(self) -> "ClusterState":
        for ns in self.namespaces.values():
            self._bind_pvcs(ns)
            statuses = self._pod_statuses(ns)
            self._materialize_pods(ns, statuses)
        return self

    def _bind_pvcs(self, ns: NamespaceState) -> None:
        for pvc in ns.pvcs.values():
            if pvc.storage_class in self.storage_classes and not pvc.provision_broken:
                pvc.status = PvcStatus.BOUND
            else:
                pvc.status = PvcStatus.PENDING

    def _pod_statuses(self, ns: NamespaceState) -> dict[str, Optional[PodStatus]]:
        statuses: dict[str, Optional[PodStatus]] = {
            name: PodStatus.RUNNING for name in ns.deployments
        }
        # one pass per deployment bounds convergence of dependency chains
        for _ in range(len(ns.deployments) + 1):
            changed = False
            for dep in ns.deployments.values():
                new = self._deployment_status(ns, dep, statuses)
                if statuses[dep.name] != new:
                    statuses[dep.name] = new
                    changed = True
            if not changed:
                break
        return statuses

    def _deployment_status(
        self,
        ns: NamespaceState,
        dep: Deployment,
        statuses: dict[str, Optional[PodStatus]],
    ) -> Optional[PodStatus]:
        if dep.replicas <= 0:
            return None
        for pvc_name in dep.pvc_names:
            pvc = ns.pvcs.get(pvc_name)
            if pvc is None or pvc.status is not PvcStatus.BOUND:
                return PodStatus.PENDING
        if dep.force_crash or dep.auth_broken:
            return PodStatus.CRASHLOOPBACKOFF
        for upstream in dep.depends_on:
            if statuses.get(upstream) is not PodStatus.RUNNING:
                return PodStatus.CRASHLOOPBACKOFF
        return PodStatus.RUNNING

    def _materialize_pods(
        self, ns: NamespaceState, statuses: dict[str, Optional[PodStatus]]
    ) -> None:
        pods: dict[str, Pod] = {}
        for dep in ns.deployments.values():
            status = statuses[dep.name]
            if status is None:
                continue
            for index in range(dep.replicas):
                name = pod_name(ns.name, dep.name, dep.generation, index)
                if status is PodStatus.CRASHLOOPBACKOFF:
                    restarts = dep.crash_restarts
                elif status is PodStatus.RUNNING:
                    restarts = dep.kill_restarts
                else:
                    restarts = 0
                pods[name] = Pod(
                    name=name,
                    deployment=dep.name,
                    status=status,
                    ready=status is PodStatus.RUNNING,
                    restarts=restarts,
                )
        ns.pods = pods

    def snapshot(self) -> str:
        """Canonical JSON of the whole state, for determinism and purity checks."""
        doc = {
            "storage_classes": {
                name: sc.provisioner for name, sc in sorted(self.storage_classes.items())
            },
            "namespaces": {},
        }
        for ns_name, ns in sorted(self.namespaces.items()):
            doc["namespaces"][ns_name] = {
                "deployments": {
                    d.name: {
                        "replicas": d.replicas,
                        "desired": d.desired_replicas,
                        "port": d.container_port,
                        "pvcs": list(d.pvc_names),
                        "depends_on": list(d.depends_on),
                        "generation": d.generation,
                        "force_crash": d.force_crash,
                        "auth_broken": d.auth_broken,
                        "kill_restarts": d.kill_restarts,
                    }
                    for d in sorted(ns.deployments.values(), key=lambda d: d.name)
                },
                "services": {
                    s.name: {
                        "port": s.port,
                        "target_port": s.target_port,
                        "selector": s.selector,
                        "degraded": s.degraded,
                    }
                    for s in sorted(ns.services.values(), key=lambda s: s.name)
                },
                "pvcs": {
                    p.name: {
                        "storage_class": p.storage_class,
                        "status": p.status.value,
                        "provision_broken": p.provision_broken,
                    }
                    for p in sorted(ns.pvcs.values(), key=lambda p: p.name)
                },
                "pods": {
                    p.name: {
                        "deployment": p.deployment,
                        "status": p.status.value,
                        "ready": p.ready,
                        "restarts": p.restarts,
                    }
                    for p in sorted(ns.pods.values(), key=lambda p: p.name)
                },
            }
        return json.dumps(doc, sort_keys=True)


def pod_name(namespace: str, deployment: str, generation: int, index: int = 0) -> str:
    """kubectl-style pod name with deterministic replica-set and pod hashes."""
    rs_hash = _digest(namespace, deployment)[:9]
    suffix = _digest(namespace, deployment, generation, index)[:5]
    return f"{deployment}-{rs_hash}-{suffix}"


def restart_deployment(ns: NamespaceState, dep: Deployment) -> None:
    """Rolling restart: fresh pods, cleared crash state, recreated claims.

    Claims that were deleted come back from the namespace template with a
    clean provisioning history; claims that still exist are left untouched.
    """
    dep.generation += 1
    dep.force_crash = False
    dep.kill_restarts = 0
    for pvc_name in dep.pvc_names:
        if pvc_name not in ns.pvcs and pvc_name in ns.pvc_templates:
            ns.pvcs[pvc_name] = Pvc(name=pvc_name, storage_class=ns.pvc_templates[pvc_name])
