"""Restricted kubectl interpreter over the simulated cluster.

Read commands never mutate state; write commands mutate and then
reconcile. Failures come back as nonzero exit codes with kubectl-shaped
error text, never as exceptions, because agents must observe failures as
ordinary output.
"""

from __future__ import annotations

import json
import shlex
from dataclasses import dataclass

from ..model import CommandClass, CommandError, classify_command
from .state import (
    ClusterState,
    NamespaceState,
    Pod,
    PodStatus,
    PvcStatus,
    Service,
    StorageClassResource,
    restart_deployment,
)


@dataclass(frozen=True)
class CommandResult:
    stdout: str
    exit_code: int

    @property
    def ok(self) -> bool:
        return self.exit_code == 0


def _error(text: str, exit_code: int = 1) -> CommandResult:
    return CommandResult(stdout=text, exit_code=exit_code)


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = []
    for row in [headers] + rows:
        cells = [cell.ljust(widths[i] + 3) for i, cell in enumerate(row[:-1])]
        cells.append(row[-1])
        lines.append("".join(cells).rstrip())
    return "\n".join(lines)


def _split_namespace(tokens: list[str]) -> tuple[str, list[str]]:
    """Extract -n/--namespace from a token list; returns (namespace, rest)."""
    namespace = ""
    rest: list[str] = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok in ("-n", "--namespace"):
            if i + 1 >= len(tokens):
                raise ValueError(f"flag {tok} needs a value")
            namespace = tokens[i + 1]
            i += 2
        elif tok.startswith("--namespace="):
            namespace = tok.split("=", 1)[1]
            i += 1
        else:
            rest.append(tok)
            i += 1
    return namespace, rest


def is_valid_command(raw: str) -> bool:
    """Whether a string parses under the interpreter grammar."""
    try:
        classify_command(raw)
        shlex.split(raw)
    except (CommandError, ValueError):
        return False
    return True


def sorted_pods(ns: NamespaceState) -> list[Pod]:
    return sorted(ns.pods.values(), key=lambda p: p.name)


def resolve_pod(ns: NamespaceState, name: str) -> Pod | None:
    """Resolve an exact pod name, or a deployment name to its first pod."""
    if name in ns.pods:
        return ns.pods[name]
    candidates = [p for p in sorted_pods(ns) if p.deployment == name]
    return candidates[0] if candidates else None


def service_ready_endpoints(ns: NamespaceState, svc: Service) -> tuple[int, int]:
    """(ready, total) pods behind a service; ready requires a port match."""
    pods = [p for p in ns.pods.values() if p.deployment == svc.selector]
    dep = ns.deployments.get(svc.selector)
    port_ok = dep is not None and svc.target_port == dep.container_port
    ready = sum(1 for p in pods if p.status is PodStatus.RUNNING and port_ok)
    return ready, len(pods)


def namespace_events(state: ClusterState, ns: NamespaceState) -> list[list[str]]:
    events: list[list[str]] = []
    for pvc in sorted(ns.pvcs.values(), key=lambda p: p.name):
        if pvc.status is PvcStatus.PENDING:
            if pvc.storage_class not in state.storage_classes:
                msg = f'storageclass.storage.k8s.io "{pvc.storage_class}" not found'
            else:
                msg = f'claim predates storageclass "{pvc.storage_class}"; recreate the claim'
            events.append(["Warning", "ProvisioningFailed", f"persistentvolumeclaim/{pvc.name}", msg])
    for pod in sorted_pods(ns):
        if pod.status is PodStatus.PENDING:
            events.append(["Warning", "FailedScheduling",
                           f"pod/{pod.name}", "pod has unbound immediate PersistentVolumeClaims"])
        elif pod.status is PodStatus.CRASHLOOPBACKOFF:
            events.append(["Warning", "BackOff",
                           f"pod/{pod.name}", "Back-off restarting failed container"])
        elif pod.restarts > 0:
            events.append(["Warning", "Killing",
                           f"pod/{pod.name}", "container killed by external signal"])
    return events


def pod_logs(state: ClusterState, ns: NamespaceState, pod: Pod) -> list[str]:
    dep = ns.deployments[pod.deployment]
    if pod.status is PodStatus.CRASHLOOPBACKOFF:
        if dep.auth_broken:
            line = "Authentication failed for user 'admin' (code 18)"
            return [line, line, line, "fatal: datastore rejected credentials"]
        if dep.force_crash:
            return ["panic: service crashed unexpectedly", "restarting..."]
        broken = [u for u in dep.depends_on if _upstream_unhealthy(ns, u)]
        target = broken[0] if broken else (dep.depends_on[0] if dep.depends_on else "upstream")
        port = ns.deployments[target].container_port if target in ns.deployments else 0
        line = f"dial tcp {target}:{port}: connection refused"
        return [line, line, line, "fatal: dependency unavailable"]
    lines = [f"{dep.name} listening on :{dep.container_port}", "service ready"]
    if pod.restarts > 0:
        lines.insert(0, "container restarted by external signal")
    for upstream in dep.depends_on:
        svc = ns.services.get(upstream)
        if svc is not None and svc.degraded:
            timeout_line = f"upstream timeout after 3000ms contacting {upstream}:{svc.port}"
            lines.extend([timeout_line, timeout_line, timeout_line])
    return lines


def _upstream_unhealthy(ns: NamespaceState, name: str) -> bool:
    dep = ns.deployments.get(name)
    if dep is None or dep.replicas <= 0:
        return True
    pods = [p for p in ns.pods.values() if p.deployment == name]
    return not pods or any(p.status is not PodStatus.RUNNING for p in pods)


class CommandInterpreter:
    """Dispatches parsed kubectl commands against a ClusterState."""

    def __init__(self, state: ClusterState, exec_responses: list[dict] | None = None) -> None:
        self.state = state
        self.exec_responses = exec_responses or []

    def run(self, raw: str) -> CommandResult:
        try:
            command_class = classify_command(raw)
        except CommandError as exc:
            return _error(f"error: {exc}", exit_code=2)
        try:
            tokens = shlex.split(raw)
        except ValueError as exc:
            return _error(f"error: {exc}", exit_code=2)
        verb = tokens[1]
        args = tokens[2:]
        try:
            handler = getattr(self, f"_cmd_{verb}")
            result = handler(args)
        except ValueError as exc:
            return _error(f"error: {exc}")
        if command_class is CommandClass.WRITE and result.ok:
            self.state.reconcile()
        return result

    # -- helpers ---------------------------------------------------------

    def _namespace_or_error(self, name: str) -> NamespaceState | CommandResult:
        if not name:
            return _error("error: a namespace is required (use -n <namespace>)")
        ns = self.state.namespace(name)
        if ns is None:
            return _error(f'Error from server (NotFound): namespaces "{name}" not found')
        return ns

    # -- read verbs ------------------------------------------------------

    def _cmd_get(self, args: list[str]) -> CommandResult:
        namespace, rest = _split_namespace(args)
        if not rest:
            raise ValueError("get requires a resource kind")
        kind = rest[0]
        name = rest[1] if len(rest) > 1 else ""
        if kind in ("storageclass", "storageclasses", "sc"):
            return self._get_storage_classes(name)
        ns = self._namespace_or_error(namespace)
        if isinstance(ns, CommandResult):
            return ns
        if kind in ("pods", "pod", "po"):
            return self._get_pods(ns, name)
        if kind in ("deployments", "deployment", "deploy"):
            return self._get_deployments(ns, name)
        if kind in ("services", "service", "svc"):
            return self._get_services(ns, name)
        if kind in ("pvc", "persistentvolumeclaims", "persistentvolumeclaim"):
            return self._get_pvcs(ns, name)
        if kind in ("events", "event", "ev"):
            return self._get_events(ns)
        raise ValueError(f"unsupported resource kind {kind!r}")

    def _get_pods(self, ns: NamespaceState, name: str) -> CommandResult:
        pods = sorted_pods(ns)
        if name:
            pod = resolve_pod(ns, name)
            if pod is None:
                return _error(f'Error from server (NotFound): pods "{name}" not found')
            pods = [pod]
        if not pods:
            return CommandResult(f"No resources found in {ns.name} namespace.", 0)
        rows = [[p.name, f"{1 if p.ready else 0}/1", p.status.value, str(p.restarts)] for p in pods]
        return CommandResult(_table(["NAME", "READY", "STATUS", "RESTARTS"], rows), 0)

    def _get_deployments(self, ns: NamespaceState, name: str) -> CommandResult:
        deps = sorted(ns.deployments.values(), key=lambda d: d.name)
        if name:
            if name not in ns.deployments:
                return _error(f'Error from server (NotFound): deployments.apps "{name}" not found')
            deps = [ns.deployments[name]]
        rows = []
        for dep in deps:
            ready = sum(
                1 for p in ns.pods.values()
                if p.deployment == dep.name and p.status is PodStatus.RUNNING
            )
            rows.append([dep.name, f"{ready}/{dep.replicas}", str(dep.replicas)])
        return CommandResult(_table(["NAME", "READY", "REPLICAS"], rows), 0)

    def _get_services(self, ns: NamespaceState, name: str) -> CommandResult:
        svcs = sorted(ns.services.values(), key=lambda s: s.name)
        if name:
            if name not in ns.services:
                return _error(f'Error from server (NotFound): services "{name}" not found')
            svcs = [ns.services[name]]
        rows = [[s.name, str(s.port), str(s.target_port)] for s in svcs]
        return CommandResult(_table(["NAME", "PORT", "TARGETPORT"], rows), 0)

    def _get_pvcs(self, ns: NamespaceState, name: str) -> CommandResult:
        pvcs = sorted(ns.pvcs.values(), key=lambda p: p.name)
        if name:
            if name not in ns.pvcs:
                return _error(
                    f'Error from server (NotFound): persistentvolumeclaims "{name}" not found'
                )
            pvcs = [ns.pvcs[name]]
        if not pvcs:
            return CommandResult(f"No resources found in {ns.name} namespace.", 0)
        rows = [[p.name, p.status.value, p.storage_class] for p in pvcs]
        return CommandResult(_table(["NAME", "STATUS", "STORAGECLASS"], rows), 0)

    def _get_storage_classes(self, name: str) -> CommandResult:
        classes = sorted(self.state.storage_classes.values(), key=lambda s: s.name)
        if name:
            if name not in self.state.storage_classes:
                return _error(
                    f'Error from server (NotFound): storageclasses.storage.k8s.io "{name}" not found'
                )
            classes = [self.state.storage_classes[name]]
        if not classes:
            return CommandResult("No resources found", 0)
        rows = [[sc.name, sc.provisioner] for sc in classes]
        return CommandResult(_table(["NAME", "PROVISIONER"], rows), 0)

    def _get_events(self, ns: NamespaceState) -> CommandResult:
        events = namespace_events(self.state, ns)
        if not events:
            return CommandResult(f"No events found in {ns.name} namespace.", 0)
        return CommandResult(_table(["TYPE", "REASON", "OBJECT", "MESSAGE"], events), 0)

    def _cmd_events(self, args: list[str]) -> CommandResult:
        namespace, _ = _split_namespace(args)
        ns = self._namespace_or_error(namespace)
        if isinstance(ns, CommandResult):
            return ns
        return self._get_events(ns)

    def _cmd_describe(self, args: list[str]) -> CommandResult:
        namespace, rest = _split_namespace(args)
        if len(rest) < 2:
            raise ValueError("describe requires a resource kind and name")
        kind, name = rest[0], rest[1]
        ns = self._namespace_or_error(namespace)
        if isinstance(ns, CommandResult):
            return ns
        if kind in ("pod", "pods", "po"):
            return self._describe_pod(ns, name)
        if kind in ("pvc", "persistentvolumeclaim", "persistentvolumeclaims"):
            return self._describe_pvc(ns, name)
        if kind in ("service", "services", "svc"):
            return self._describe_service(ns, name)
        if kind in ("deployment", "deployments", "deploy"):
            return self._describe_deployment(ns, name)
        raise ValueError(f"unsupported resource kind {kind!r}")

    def _describe_pod(self, ns: NamespaceState, name: str) -> CommandResult:
        pod = resolve_pod(ns, name)
        if pod is None:
            return _error(f'Error from server (NotFound): pods "{name}" not found')
        dep = ns.deployments[pod.deployment]
        lines = [
            f"Name:           {pod.name}",
            f"Namespace:      {ns.name}",
            f"Controlled By:  Deployment/{pod.deployment}",
            f"Status:         {pod.status.value}",
            f"Ready:          {str(pod.ready).lower()}",
            f"Restarts:       {pod.restarts}",
        ]
        if dep.pvc_names:
            lines.append(f"Volumes:        {', '.join(dep.pvc_names)}")
        lines.append("Events:")
        if pod.status is PodStatus.PENDING:
            lines.append("  Warning  FailedScheduling  pod has unbound immediate PersistentVolumeClaims")
        elif pod.status is PodStatus.CRASHLOOPBACKOFF:
            lines.append("  Warning  BackOff  Back-off restarting failed container")
        elif pod.restarts > 0:
            lines.append("  Warning  Killing  container killed by external signal")
        else:
            lines.append("  <none>")
        return CommandResult("\n".join(lines), 0)

    def _describe_pvc(self, ns: NamespaceState, name: str) -> CommandResult:
        pvc = ns.pvcs.get(name)
        if pvc is None:
            return _error(f'Error from server (NotFound): persistentvolumeclaims "{name}" not found')
        lines = [
            f"Name:           {pvc.name}",
            f"Namespace:      {ns.name}",
            f"StorageClass:   {pvc.storage_class}",
            f"Status:         {pvc.status.value}",
            "Events:",
        ]
        if pvc.status is PvcStatus.PENDING:
            if pvc.storage_class not in self.state.storage_classes:
                lines.append(
                    "  Warning  ProvisioningFailed  "
                    f'storageclass.storage.k8s.io "{pvc.storage_class}" not found'
                )
            else:
                lines.append(
                    "  Warning  ProvisioningFailed  "
                    f'claim predates storageclass "{pvc.storage_class}"; recreate the claim'
                )
        else:
            lines.append("  <none>")
        return CommandResult("\n".join(lines), 0)

    def _describe_service(self, ns: NamespaceState, name: str) -> CommandResult:
        svc = ns.services.get(name)
        if svc is None:
            return _error(f'Error from server (NotFound): services "{name}" not found')
        ready, total = service_ready_endpoints(ns, svc)
        dep = ns.deployments.get(svc.selector)
        lines = [
            f"Name:          {svc.name}",
            f"Namespace:     {ns.name}",
            f"Selector:      app={svc.selector}",
            f"Port:          {svc.port}",
            f"TargetPort:    {svc.target_port}",
        ]
        if dep is not None:
            lines.append(f"ContainerPort: {dep.container_port}")
        lines.append(f"Endpoints:     {ready} ready / {total} pods")
        if svc.degraded:
            lines.append("Condition:     degraded network latency on endpoints")
        return CommandResult("\n".join(lines), 0)

    def _describe_deployment(self, ns: NamespaceState, name: str) -> CommandResult:
        dep = ns.deployments.get(name)
        if dep is None:
            return _error(f'Error from server (NotFound): deployments.apps "{name}" not found')
        ready = sum(
            1 for p in ns.pods.values()
            if p.deployment == dep.name and p.status is PodStatus.RUNNING
        )
        lines = [
            f"Name:          {dep.name}",
            f"Namespace:     {ns.name}",
            f"Replicas:      {dep.replicas} desired | {ready} ready",
            f"ContainerPort: {dep.container_port}",
        ]
        if dep.pvc_names:
            lines.append(f"Volumes:       {', '.join(dep.pvc_names)}")
        lines.append(f"Available:     {str(ready >= dep.replicas and dep.replicas > 0).lower()}")
        return CommandResult("\n".join(lines), 0)

    def _cmd_logs(self, args: list[str]) -> CommandResult:
        namespace, rest = _split_namespace(args)
        rest = [t for t in rest if not t.startswith("--tail")]
        if not rest:
            raise ValueError("logs requires a pod name")
        ns = self._namespace_or_error(namespace)
        if isinstance(ns, CommandResult):
            return ns
        pod = resolve_pod(ns, rest[0])
        if pod is None:
            return _error(f'Error from server (NotFound): pods "{rest[0]}" not found')
        if pod.status is PodStatus.PENDING:
            return _error(
                f'Error from server (BadRequest): container in pod "{pod.name}" is waiting to start'
            )
        return CommandResult("\n".join(pod_logs(self.state, ns, pod)), 0)

    def _cmd_top(self, args: list[str]) -> CommandResult:
        namespace, rest = _split_namespace(args)
        if not rest or rest[0] not in ("pods", "pod"):
            raise ValueError("top supports only pods")
        ns = self._namespace_or_error(namespace)
        if isinstance(ns, CommandResult):
            return ns
        rows = [[p.name, "120m", "64Mi"] for p in sorted_pods(ns)]
        if not rows:
            return CommandResult(f"No resources found in {ns.name} namespace.", 0)
        return CommandResult(_table(["NAME", "CPU(cores)", "MEMORY(bytes)"], rows), 0)

    # -- write verbs -----------------------------------------------------

    def _cmd_apply(self, args: list[str]) -> CommandResult:
        return self._apply_manifest(args)

    def _cmd_create(self, args: list[str]) -> CommandResult:
        if args and args[0] == "-f":
            return self._apply_manifest(args)
        raise ValueError("create supports only -f <manifest>")

    def _apply_manifest(self, args: list[str]) -> CommandResult:
        _, rest = _split_namespace(args)
        if len(rest) < 2 or rest[0] != "-f":
            raise ValueError("apply requires -f <manifest>")
        path = rest[1]
        manifest = self.state.manifests.get(path)
        if manifest is None:
            return _error(f'error: the path "{path}" does not exist')
        kind = manifest.get("kind")
        name = manifest.get("name", "")
        if kind == "StorageClass":
            existed = name in self.state.storage_classes
            self.state.storage_classes[name] = StorageClassResource(
                name=name, provisioner=manifest.get("provisioner", "")
            )
            verb = "configured" if existed else "created"
            return CommandResult(f"storageclass.storage.k8s.io/{name} {verb}", 0)
        if kind == "Service":
            ns = self.state.namespace(manifest.get("namespace", ""))
            if ns is None:
                return _error(
                    f'Error from server (NotFound): namespaces "{manifest.get("namespace")}" not found'
                )
            existed = name in ns.services
            svc = ns.services.get(name) or Service(
                name=name,
                port=int(manifest.get("port", 80)),
                target_port=int(manifest.get("target_port", 80)),
                selector=manifest.get("selector", name),
            )
            svc.port = int(manifest.get("port", svc.port))
            svc.target_port = int(manifest.get("target_port", svc.target_port))
            ns.services[name] = svc
            return CommandResult(f"service/{name} {'configured' if existed else 'created'}", 0)
        if kind == "Secret":
            ns = self.state.namespace(manifest.get("namespace", ""))
            if ns is None:
                return _error(
                    f'Error from server (NotFound): namespaces "{manifest.get("namespace")}" not found'
                )
            for dep_name in manifest.get("restores_auth", []):
                dep = ns.deployments.get(dep_name)
                if dep is not None:
                    dep.auth_broken = False
            return CommandResult(f"secret/{name} created", 0)
        return _error(f"error: unsupported manifest kind {kind!r}")

    def _cmd_delete(self, args: list[str]) -> CommandResult:
        namespace, rest = _split_namespace(args)
        if not rest:
            raise ValueError("delete requires a resource kind")
        kind = rest[0]
        target = rest[1] if len(rest) > 1 else ""
        if kind in ("storageclass", "sc"):
            if target not in self.state.storage_classes:
                return _error(
                    f'Error from server (NotFound): storageclasses.storage.k8s.io "{target}" not found'
                )
            del self.state.storage_classes[target]
            return CommandResult(f'storageclass.storage.k8s.io "{target}" deleted', 0)
        ns = self._namespace_or_error(namespace)
        if isinstance(ns, CommandResult):
            return ns
        if kind in ("pvc", "persistentvolumeclaim", "persistentvolumeclaims"):
            if target == "--all":
                names = sorted(ns.pvcs)
                if not names:
                    return CommandResult("No resources found", 0)
                for pvc_name in names:
                    del ns.pvcs[pvc_name]
                return CommandResult(
                    "\n".join(f'persistentvolumeclaim "{n}" deleted' for n in names), 0
                )
            if target not in ns.pvcs:
                return _error(
                    f'Error from server (NotFound): persistentvolumeclaims "{target}" not found'
                )
            del ns.pvcs[target]
            return CommandResult(f'persistentvolumeclaim "{target}" deleted', 0)
        if kind in ("pod", "pods", "po"):
            pod = resolve_pod(ns, target)
            if pod is None:
                return _error(f'Error from server (NotFound): pods "{target}" not found')
            dep = ns.deployments[pod.deployment]
            dep.generation += 1
            dep.kill_restarts = 0
            return CommandResult(f'pod "{pod.name}" deleted', 0)
        if kind in ("deployment", "deployments", "deploy"):
            if target not in ns.deployments:
                return _error(f'Error from server (NotFound): deployments.apps "{target}" not found')
            del ns.deployments[target]
            return CommandResult(f'deployment.apps "{target}" deleted', 0)
        if kind in ("service", "services", "svc"):
            if target not in ns.services:
                return _error(f'Error from server (NotFound): services "{target}" not found')
            del ns.services[target]
            return CommandResult(f'service "{target}" deleted', 0)
        raise ValueError(f"unsupported resource kind {kind!r}")

    def _cmd_scale(self, args: list[str]) -> CommandResult:
        namespace, rest = _split_namespace(args)
        replicas = None
        names: list[str] = []
        for tok in rest:
            if tok.startswith("--replicas="):
                replicas = int(tok.split("=", 1)[1])
            else:
                names.append(tok)
        if replicas is None or len(names) < 1:
            raise ValueError("scale requires a deployment and --replicas=<n>")
        kind_name = names[-1]
        if "/" in kind_name:
            _, name = kind_name.split("/", 1)
        else:
            name = kind_name
        if names[0] not in ("deployment", "deployments", "deploy") and "/" not in names[0]:
            raise ValueError("scale supports only deployments")
        ns = self._namespace_or_error(namespace)
        if isinstance(ns, CommandResult):
            return ns
        dep = ns.deployments.get(name)
        if dep is None:
            return _error(f'Error from server (NotFound): deployments.apps "{name}" not found')
        if replicas < 0:
            raise ValueError("replicas must be >= 0")
        dep.replicas = replicas
        return CommandResult(f"deployment.apps/{name} scaled", 0)

    def _cmd_rollout(self, args: list[str]) -> CommandResult:
        namespace, rest = _split_namespace(args)
        if not rest or rest[0] != "restart":
            raise ValueError("rollout supports only restart")
        ns = self._namespace_or_error(namespace)
        if isinstance(ns, CommandResult):
            return ns
        targets = rest[1:]
        if not targets:
            raise ValueError("rollout restart requires a deployment target")
        if targets == ["deployment", "--all"] or targets == ["deployments", "--all"]:
            lines = []
            for dep in ns.deployments.values():
                restart_deployment(ns, dep)
                lines.append(f"deployment.apps/{dep.name} restarted")
            return CommandResult("\n".join(lines), 0)
        if len(targets) == 1 and "/" in targets[0]:
            name = targets[0].split("/", 1)[1]
        elif len(targets) == 2 and targets[0] in ("deployment", "deployments", "deploy"):
            name = targets[1]
        else:
            raise ValueError("rollout restart target must be deployment <name> or deployment/<name>")
        dep = ns.deployments.get(name)
        if dep is None:
            return _error(f'Error from server (NotFound): deployments.apps "{name}" not found')
        restart_deployment(ns, dep)
        return CommandResult(f"deployment.apps/{name} restarted", 0)

    def _cmd_patch(self, args: list[str]) -> CommandResult:
        namespace, rest = _split_namespace(args)
        patch_doc = None
        names: list[str] = []
        i = 0
        while i < len(rest):
            tok = rest[i]
            if tok == "-p":
                if i + 1 >= len(rest):
                    raise ValueError("-p needs a value")
                patch_doc = rest[i + 1]
                i += 2
            elif tok.startswith("--type"):
                i += 2 if tok == "--type" else 1
            else:
                names.append(tok)
                i += 1
        if patch_doc is None or len(names) < 2:
            raise ValueError("patch requires a resource, a name, and -p <json>")
        kind, name = names[0], names[1]
        if kind not in ("service", "svc"):
            raise ValueError("patch supports only services")
        ns = self._namespace_or_error(namespace)
        if isinstance(ns, CommandResult):
            return ns
        svc = ns.services.get(name)
        if svc is None:
            return _error(f'Error from server (NotFound): services "{name}" not found')
        try:
            doc = json.loads(patch_doc)
            ports = doc["spec"]["ports"]
            target = ports[0]["targetPort"]
        except (ValueError, KeyError, IndexError, TypeError):
            return _error("error: unable to parse patch: expected spec.ports[0].targetPort")
        svc.target_port = int(target)
        return CommandResult(f"service/{name} patched", 0)

    def _cmd_exec(self, args: list[str]) -> CommandResult:
        namespace, rest = _split_namespace(args)
        if "--" not in rest:
            raise ValueError("exec requires -- <command>")
        split_at = rest.index("--")
        pod_tokens, command_tokens = rest[:split_at], rest[split_at + 1:]
        if not pod_tokens or not command_tokens:
            raise ValueError("exec requires a pod and a command")
        ns = self._namespace_or_error(namespace)
        if isinstance(ns, CommandResult):
            return ns
        pod = resolve_pod(ns, pod_tokens[-1])
        if pod is None:
            return _error(f'Error from server (NotFound): pods "{pod_tokens[-1]}" not found')
        command_text = " ".join(command_tokens)
        for responder in self.exec_responses:
            if responder.get("match", "") in command_text:
                return CommandResult(responder.get("output", ""), int(responder.get("exit_code", 0)))
        return _error("error: exec is not enabled for this pod")
