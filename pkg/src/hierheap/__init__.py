"""Hierarchical heaps for mutable state in nested fork/join programs."""

from __future__ import annotations

from .audit import AuditReport, audit_all, audit_disentanglement, audit_forwarding_chains, forwarding_chain
from .collector import Cell, CollectionReport, Collector, RootSet
from .context import HeapTask, current_task, in_heap
from .errors import ContractViolation, EntanglementError, HHError, StructuralError
from .heaps import READ, WRITE, HeapHierarchy, Mode, Role, RWLock, Superheap
from .memops import HookedMemOps, MasterHandle, MemOps
from .objects import (
    EMPTY_LAYOUT, REF_IMM, REF_MUT, SCALAR_IMM, SCALAR_MUT, FieldDescriptor, Kind, Mutability,
    ObjectLayout, ObjectStore, ObjRef,
)
from .runtime import Runtime, RuntimeConfig, Task
from .stats import IMPOSSIBLE, Locality, OpClass, OpClassKey, Stats, StatsReport

__all__ = [
    "AuditReport", "audit_all", "audit_disentanglement", "audit_forwarding_chains", "forwarding_chain",
    "Cell", "CollectionReport", "Collector", "RootSet",
    "HeapTask", "current_task", "in_heap",
    "ContractViolation", "EntanglementError", "HHError", "StructuralError",
    "READ", "WRITE", "HeapHierarchy", "Mode", "Role", "RWLock", "Superheap",
    "HookedMemOps", "MasterHandle", "MemOps",
    "EMPTY_LAYOUT", "REF_IMM", "REF_MUT", "SCALAR_IMM", "SCALAR_MUT", "FieldDescriptor", "Kind",
    "Mutability", "ObjectLayout", "ObjectStore", "ObjRef",
    "Runtime", "RuntimeConfig", "Task",
    "IMPOSSIBLE", "Locality", "OpClass", "OpClassKey", "Stats", "StatsReport",
]
