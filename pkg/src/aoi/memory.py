"""Per-run memory stores with role-scoped access enforcement.

Three stores back one task run: raw environment outputs, the diagnostic
task queue, and compressed context. Every read and write goes through a
role handle checked against a fixed access matrix; denials raise and are
recorded in the audit trail so the isolation invariants stay observable.

Timestamps in the audit trail are logical ticks, not wall-clock time, so
that two identical runs produce byte-identical audit logs.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .backend import count_tokens

DEFAULT_LONG_TERM_CAPACITY = 10
DEFAULT_RAW_ENTRY_CAP = 256 * 1024  # bytes


class StoreId(Enum):
    RAW = "raw"
    TASK = "task"
    COMP = "comp"


class AgentRole(Enum):
    OBSERVER = "observer"
    PROBE = "probe"
    EXECUTOR = "executor"
    COMPRESSOR = "compressor"


class MemoryOp(Enum):
    READ = "read"
    WRITE = "write"


# The full permission matrix. Unlisted (role, store) cells are empty:
#   observer   -> task read/write, comp read, no raw access
#   probe      -> raw write, task read
#   executor   -> raw write, task read
#   compressor -> raw read, comp write
ACCESS_MATRIX: dict[tuple[AgentRole, StoreId], frozenset[MemoryOp]] = {
    (AgentRole.OBSERVER, StoreId.RAW): frozenset(),
    (AgentRole.OBSERVER, StoreId.TASK): frozenset({MemoryOp.READ, MemoryOp.WRITE}),
    (AgentRole.OBSERVER, StoreId.COMP): frozenset({MemoryOp.READ}),
    (AgentRole.PROBE, StoreId.RAW): frozenset({MemoryOp.WRITE}),
    (AgentRole.PROBE, StoreId.TASK): frozenset({MemoryOp.READ}),
    (AgentRole.PROBE, StoreId.COMP): frozenset(),
    (AgentRole.EXECUTOR, StoreId.RAW): frozenset({MemoryOp.WRITE}),
    (AgentRole.EXECUTOR, StoreId.TASK): frozenset({MemoryOp.READ}),
    (AgentRole.EXECUTOR, StoreId.COMP): frozenset(),
    (AgentRole.COMPRESSOR, StoreId.RAW): frozenset({MemoryOp.READ}),
    (AgentRole.COMPRESSOR, StoreId.TASK): frozenset(),
    (AgentRole.COMPRESSOR, StoreId.COMP): frozenset({MemoryOp.WRITE}),
}


class PermissionDenied(PermissionError):
    """A role attempted a store operation its matrix cell does not allow."""


class EntryTooLarge(ValueError):
    """A raw-store write exceeded the configured per-entry cap."""


@dataclass(frozen=True)
class AuditRecord:
    timestamp: int  # logical tick within the owning MemoryStores
    role: AgentRole
    store: StoreId
    op: MemoryOp
    allowed: bool
    key: Optional[int] = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "timestamp": self.timestamp,
                "role": self.role.value,
                "store": self.store.value,
                "op": self.op.value,
                "allowed": self.allowed,
                "key": self.key,
            }
        )


class MemoryStores:
    """The three stores of a single task run plus the audit trail.

    One instance per run; runs are single-threaded, so no locking. Keys
    are monotonically increasing across all three stores, which makes
    cross-store ordering (compress-then-read) checkable from the audit
    trail alone.
    """

    def __init__(self, raw_entry_cap: int = DEFAULT_RAW_ENTRY_CAP) -> None:
        self.raw_entry_cap = raw_entry_cap
        self._entries: dict[StoreId, dict[int, bytes]] = {store: {} for store in StoreId}
        self._next_key = 1
        self._tick = 0
        self.audit_trail: list[AuditRecord] = []

    def grant(self, role: AgentRole) -> "MemoryHandle":
        return MemoryHandle(role=role, stores=self)

    def _record(self, role: AgentRole, store: StoreId, op: MemoryOp, allowed: bool,
                key: Optional[int] = None) -> None:
        self._tick += 1
        self.audit_trail.append(
            AuditRecord(timestamp=self._tick, role=role, store=store, op=op,
                        allowed=allowed, key=key)
        )

    def _check(self, role: AgentRole, store: StoreId, op: MemoryOp) -> None:
        if op not in ACCESS_MATRIX[(role, store)]:
            self._record(role, store, op, allowed=False)
            raise PermissionDenied(f"{role.value} may not {op.value} {store.value}")

    def read(self, role: AgentRole, store: StoreId) -> list[tuple[int, bytes]]:
        self._check(role, store, MemoryOp.READ)
        entries = list(self._entries[store].items())
        self._record(role, store, MemoryOp.READ, allowed=True)
        return entries

    def write(self, role: AgentRole, store: StoreId, entry: bytes) -> int:
        self._check(role, store, MemoryOp.WRITE)
        if not entry:
            raise ValueError("entry must be non-empty")
        if store is StoreId.RAW and len(entry) > self.raw_entry_cap:
            raise EntryTooLarge(f"raw entry of {len(entry)} bytes exceeds cap {self.raw_entry_cap}")
        key = self._next_key
        self._next_key += 1
        self._entries[store][key] = entry
        self._record(role, store, MemoryOp.WRITE, allowed=True, key=key)
        return key

    def audit_jsonl(self) -> str:
        return "\n".join(record.to_json() for record in self.audit_trail) + "\n"


@dataclass(frozen=True)
class MemoryHandle:
    """A role-bound capability over one run's stores."""

    role: AgentRole
    stores: MemoryStores

    def read(self, store: StoreId) -> list[tuple[int, bytes]]:
        return self.stores.read(self.role, store)

    def read_values(self, store: StoreId) -> list[bytes]:
        return [entry for _, entry in self.read(store)]

    def write(self, store: StoreId, entry: bytes | str) -> int:
        data = entry.encode("utf-8") if isinstance(entry, str) else entry
        return self.stores.write(self.role, store, data)


class LongTermMemory:
    """Bounded FIFO of iteration summaries; oldest summaries are evicted."""

    def __init__(self, capacity: int = DEFAULT_LONG_TERM_CAPACITY) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._summaries: deque[str] = deque(maxlen=capacity)

    def append(self, summary: str) -> None:
        self._summaries.append(summary)

    @property
    def summaries(self) -> list[str]:
        return list(self._summaries)

    def __len__(self) -> int:
        return len(self._summaries)


@dataclass(frozen=True)
class ShortTermContext:
    """The previous iteration's full compressed context."""

    content: str
    token_count: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "token_count", count_tokens(self.content))
