"""In-memory IR: operands, instructions, functions and modules.

Registers are mutable (non-SSA) and typed by their definitions.  All objects
are frozen so a module can be shared freely once built.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

from .types import IrType, VoidType


@dataclass(frozen=True)
class Reg:
    name: str

    def __str__(self):
        return f"%{self.name}"


@dataclass(frozen=True)
class IntLit:
    value: int

    def __str__(self):
        return str(self.value)


@dataclass(frozen=True)
class FloatLit:
    value: float

    def __eq__(self, other):
        # nan literals compare equal so printed modules round-trip structurally
        return isinstance(other, FloatLit) and repr(self.value) == repr(other.value)

    def __hash__(self):
        return hash(repr(self.value))

    def __str__(self):
        r = repr(self.value)
        if r in ("inf", "-inf", "nan"):
            return r
        if "." not in r and "e" not in r:
            r += ".0"
        return r


@dataclass(frozen=True)
class Null:
    def __str__(self):
        return "null"


@dataclass(frozen=True)
class Sym:
    """Address of a global or defined function."""

    name: str

    def __str__(self):
        return f"@{self.name}"


Operand = Union[Reg, IntLit, FloatLit, Null, Sym]

BINOPS = ("add", "sub", "mul", "sdiv", "udiv", "srem", "urem",
          "and", "or", "xor", "shl", "lshr", "ashr")
FBINOPS = ("fadd", "fsub", "fmul", "fdiv")
ICMP_PREDS = ("eq", "ne", "slt", "sle", "sgt", "sge", "ult", "ule", "ugt", "uge")
FCMP_PREDS = ("oeq", "one", "olt", "ole", "ogt", "oge", "ord", "uno",
              "ueq", "une", "ult", "ule", "ugt", "uge")
CAST_KINDS = ("zext", "sext", "trunc", "sitofp", "uitofp", "fptosi", "fptoui",
              "fpext", "fptrunc", "ptrtoint", "inttoptr", "bitcast")
TERMINATORS = frozenset(("br", "jmp", "ret", "unreachable"))


@dataclass(frozen=True)
class Instr:
    op: str
    dst: Optional[str] = None
    args: tuple = ()
    ty: Optional[IrType] = None
    pred: Optional[str] = None
    labels: tuple[str, ...] = ()
    callee: Optional[str] = None
    scale: int = 1
    disp: int = 0
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)

    @property
    def is_terminator(self) -> bool:
        return self.op in TERMINATORS

    def uses(self) -> Iterator[str]:
        for a in self.args:
            if isinstance(a, Reg):
                yield a.name


@dataclass(frozen=True)
class Block:
    label: str
    instrs: tuple[Instr, ...]


@dataclass(frozen=True)
class Signature:
    params: tuple[IrType, ...]
    ret: IrType

    def __str__(self):
        return "(" + ", ".join(map(str, self.params)) + f") -> {self.ret}"


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[tuple[str, IrType], ...]
    ret: IrType
    blocks: tuple[Block, ...]

    @property
    def signature(self) -> Signature:
        return Signature(tuple(t for _, t in self.params), self.ret)

    def block(self, label: str) -> Block:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def instructions(self) -> Iterator[Instr]:
        for b in self.blocks:
            yield from b.instrs

    @property
    def returns_void(self) -> bool:
        return isinstance(self.ret, VoidType)


@dataclass(frozen=True)
class Global:
    name: str
    ty: IrType
    init: object = None  # constant tree: IntLit/FloatLit/Null/Sym/"zeroinit"/tuple


@dataclass(frozen=True)
class External:
    name: str
    params: tuple[IrType, ...]
    ret: IrType
    noreturn: bool = False

    @property
    def signature(self) -> Signature:
        return Signature(self.params, self.ret)


@dataclass(frozen=True)
class Module:
    globals: tuple[Global, ...] = ()
    functions: tuple[Function, ...] = ()
    externals: tuple[External, ...] = ()
    aliases: tuple[tuple[str, IrType], ...] = ()

    def function(self, name: str) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def has_function(self, name: str) -> bool:
        return any(f.name == name for f in self.functions)

    def external(self, name: str) -> Optional[External]:
        for e in self.externals:
            if e.name == name:
                return e
        return None

    def global_(self, name: str) -> Optional[Global]:
        for g in self.globals:
            if g.name == name:
                return g
        return None


def iter_sites(module: Module) -> Iterator[tuple[int, Function, Block, int, Instr]]:
    """Module-wide instruction numbering used for load, call and branch sites."""
    site = 0
    for f in module.functions:
        for b in f.blocks:
            for i, ins in enumerate(b.instrs):
                yield site, f, b, i, ins
                site += 1


def site_bases(module: Module) -> dict[str, int]:
    bases = {}
    n = 0
    for f in module.functions:
        bases[f.name] = n
        n += sum(len(b.instrs) for b in f.blocks)
    return bases
