"""Run results: how a run ended and what it executed."""

from __future__ import annotations

from array import array
from dataclasses import dataclass, field
from typing import Optional

from ..values import value_key
from .opcodes import FNV_OFFSET

NORMAL = "NormalReturn"
GRACEFUL = "GracefulExit"
TRAP = "Trap"
BUDGET = "BudgetExhausted"


@dataclass(frozen=True)
class ExitKind:
    tag: str
    values: tuple = ()  # flattened return value for NormalReturn
    code: Optional[int] = None  # exit code for GracefulExit
    trap: Optional[str] = None  # trap kind, or budget reason ("steps" / "timeout")
    detail: str = field(default="", compare=False)

    @property
    def succeeded(self) -> bool:
        return self.tag in (NORMAL, GRACEFUL)

    def key(self):
        return (self.tag, tuple(value_key(v) for v in self.values), self.code, self.trap)

    def __str__(self):
        if self.tag == NORMAL:
            return f"{NORMAL}({', '.join(map(repr, self.values))})"
        if self.tag == GRACEFUL:
            return f"{GRACEFUL}({self.code})"
        return f"{self.tag}({self.trap})"


def normal(values) -> ExitKind:
    return ExitKind(NORMAL, tuple(values))


def graceful(code) -> ExitKind:
    return ExitKind(GRACEFUL, code=code)


def trapped(kind, detail="") -> ExitKind:
    return ExitKind(TRAP, trap=kind, detail=detail)


def budget(reason) -> ExitKind:
    return ExitKind(BUDGET, trap=reason)


class Profile:
    """Block and branch-edge counters plus a running digest of the block trace.

    Branch ``i`` counts its true edge at ``2*i`` and its false edge at ``2*i+1``.
    """

    __slots__ = ("block_counts", "branch_counts", "steps", "trace_hash", "trace_len", "trace")

    def __init__(self, n_blocks: int, n_branches: int, record_trace: bool = False):
        self.block_counts = array("q", bytes(8 * n_blocks))
        self.branch_counts = array("q", bytes(16 * n_branches))
        self.steps = 0
        self.trace_hash = FNV_OFFSET
        self.trace_len = 0
        self.trace: Optional[list] = [] if record_trace else None

    @classmethod
    def for_program(cls, prog, record_trace=False) -> "Profile":
        return cls(prog.n_blocks, prog.n_branches, record_trace)

    def blocks_hit(self) -> set[int]:
        return {i for i, c in enumerate(self.block_counts) if c}

    def merge_into(self, acc: Optional[array]) -> array:
        """Add branch counts into an accumulator (created when None)."""
        if acc is None:
            return array("q", self.branch_counts)
        for i, c in enumerate(self.branch_counts):
            acc[i] += c
        return acc

    def trace_key(self):
        return (self.trace_hash, self.trace_len)
