"""Static preparation: callee classification, aggregate lowering, call graph."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from ..errors import UnknownName
from .model import Module, Reg, Signature
from .types import ArrayType, IrType, StructType, flatten
from .validate import INTRINSICS, infer_register_types

STUB = "$stub"


class CalleeKind(Enum):
    DEFINED = "Defined"
    INTRINSIC = "Intrinsic"
    STUBBED = "StubbedExternal"
    NONRETURNING = "NonReturningExternal"


@dataclass(frozen=True)
class CalleeClass:
    kind: CalleeKind
    intrinsic: Optional[str] = None

    def __str__(self):
        return f"{self.kind.value}({self.intrinsic})" if self.intrinsic else self.kind.value


NONRETURNING_INTRINSICS = ("exit", "abort")


def classify_callee(m: Module, name: str, signature: Optional[Signature] = None) -> CalleeClass:
    """How a call to `name` is executed.

    Definitions win over everything; allow-listed library names run natively
    except exit/abort, which end the run; every other declaration is stubbed.
    """
    if m.has_function(name):
        return CalleeClass(CalleeKind.DEFINED)
    ext = m.external(name)
    if name in INTRINSICS:
        if name in NONRETURNING_INTRINSICS:
            return CalleeClass(CalleeKind.NONRETURNING, name)
        return CalleeClass(CalleeKind.INTRINSIC, name)
    if ext is not None:
        if ext.noreturn:
            return CalleeClass(CalleeKind.NONRETURNING)
        return CalleeClass(CalleeKind.STUBBED)
    raise UnknownName(f"unknown callee @{name}")


@dataclass(frozen=True)
class PrimAccess:
    op: str
    offset: int
    ty: IrType

    def __str__(self):
        return f"{self.op} {self.ty} @{self.offset}"


def lower_aggregate_access(op: str, ty: IrType, offset: int = 0) -> list[PrimAccess]:
    """Split a load/store of an aggregate into primitive accesses, ascending."""
    if not isinstance(ty, (ArrayType, StructType)):
        raise ValueError(f"{ty} is already primitive")
    return [PrimAccess(op, offset + o, t) for o, t in flatten(ty)]


class CallGraph:
    """Reflexive-transitive reachability between defined functions.

    Indirect calls conservatively reach every defined function whose
    signature matches the call's.
    """

    def __init__(self, m: Module):
        self.order = [f.name for f in m.functions]
        by_sig: dict[Signature, list[str]] = {}
        for f in m.functions:
            by_sig.setdefault(f.signature, []).append(f.name)
        self.edges: dict[str, set[str]] = {}
        for f in m.functions:
            out = set()
            types = None
            for ins in f.instructions():
                if ins.op == "call" and m.has_function(ins.callee):
                    out.add(ins.callee)
                elif ins.op == "icall":
                    if types is None:
                        types = infer_register_types(m, f)
                    out.update(by_sig.get(icall_signature(ins, types), ()))
            self.edges[f.name] = out
        self.reach: dict[str, frozenset[str]] = {}
        for name in self.order:
            seen = {name}
            stack = [name]
            while stack:
                for nxt in self.edges[stack.pop()]:
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
            self.reach[name] = frozenset(seen)

    def reaches(self, a: str, b: str) -> bool:
        return b in self.reach.get(a, frozenset((a,)))


def icall_signature(ins, types) -> Signature:
    return Signature(tuple(types[a.name] for a in ins.args[1:] if isinstance(a, Reg)), ins.ty)


def indirect_candidates(m: Module, caller: str, sig: Signature, cg: CallGraph) -> list[str]:
    """Possible callees for an indirect call in `caller`; the stub is always last."""
    out = [f.name for f in m.functions
           if f.signature == sig and not cg.reaches(f.name, caller)]
    out.append(STUB)
    return out


def pack_layout(items: list[tuple[int, int]]) -> tuple[list[int], int]:
    """Sequential packing of (size, align) items; returns offsets and total size."""
    offsets = []
    off = 0
    for size, align in items:
        off = (off + align - 1) // align * align
        offsets.append(off)
        off += size
    return offsets, off


def function_scope(m: Module, name: str, cg: CallGraph) -> list[str]:
    """Defined functions whose blocks count towards coverage of `name`."""
    return [f for f in cg.order if f in cg.reach[name]]
