"""IR type system and C-like data layout."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

# Primitive kind codes, shared with the interpreter kernels and the input format.
K_I1, K_I8, K_I16, K_I32, K_I64, K_F32, K_F64, K_PTR = range(8)
KIND_SIZE = (1, 1, 2, 4, 8, 4, 8, 8)
KIND_NAMES = ("i1", "i8", "i16", "i32", "i64", "f32", "f64", "ptr")
FLOAT_KINDS = frozenset((K_F32, K_F64))


class IrType:
    __slots__ = ()

    @property
    def is_primitive(self) -> bool:
        return isinstance(self, (IntType, FloatType, PtrType))


@dataclass(frozen=True)
class IntType(IrType):
    width: int

    def __post_init__(self):
        if self.width not in (1, 8, 16, 32, 64):
            raise ValueError(f"bad integer width {self.width}")

    def __str__(self):
        return f"i{self.width}"


@dataclass(frozen=True)
class FloatType(IrType):
    width: int

    def __post_init__(self):
        if self.width not in (32, 64):
            raise ValueError(f"bad float width {self.width}")

    def __str__(self):
        return f"f{self.width}"


@dataclass(frozen=True)
class PtrType(IrType):
    def __str__(self):
        return "ptr"


@dataclass(frozen=True)
class ArrayType(IrType):
    elem: IrType
    count: int

    def __str__(self):
        return f"[{self.count} x {self.elem}]"


@dataclass(frozen=True)
class StructType(IrType):
    fields: tuple[IrType, ...]

    def __str__(self):
        return "{" + ", ".join(str(f) for f in self.fields) + "}"


@dataclass(frozen=True)
class VoidType(IrType):
    def __str__(self):
        return "void"


I1, I8, I16, I32, I64 = (IntType(w) for w in (1, 8, 16, 32, 64))
F32, F64 = FloatType(32), FloatType(64)
PTR = PtrType()
VOID = VoidType()

PRIMITIVES = {str(t): t for t in (I1, I8, I16, I32, I64, F32, F64, PTR)}


def kind_of(ty: IrType) -> int:
    if isinstance(ty, IntType):
        return (1, 8, 16, 32, 64).index(ty.width)
    if isinstance(ty, FloatType):
        return K_F32 if ty.width == 32 else K_F64
    if isinstance(ty, PtrType):
        return K_PTR
    raise TypeError(f"{ty} is not primitive")


def type_of_kind(kind: int) -> IrType:
    return PRIMITIVES[KIND_NAMES[kind]]


def _align_up(n: int, a: int) -> int:
    return (n + a - 1) // a * a


@lru_cache(maxsize=None)
def _layout(ty: IrType) -> tuple[int, int, tuple[int, ...]]:
    # (size, alignment, field offsets)
    if isinstance(ty, IntType):
        n = 1 if ty.width == 1 else ty.width // 8
        return n, n, ()
    if isinstance(ty, FloatType):
        n = ty.width // 8
        return n, n, ()
    if isinstance(ty, PtrType):
        return 8, 8, ()
    if isinstance(ty, ArrayType):
        esize, ealign, _ = _layout(ty.elem)
        return esize * ty.count, ealign, ()
    if isinstance(ty, StructType):
        off = 0
        align = 1
        offsets = []
        for f in ty.fields:
            fsize, falign, _ = _layout(f)
            off = _align_up(off, falign)
            offsets.append(off)
            off += fsize
            align = max(align, falign)
        return _align_up(off, align), align, tuple(offsets)
    raise TypeError(f"type {ty} has no layout")


def size_of(ty: IrType) -> int:
    return _layout(ty)[0]


def align_of(ty: IrType) -> int:
    return _layout(ty)[1]


def field_offsets(ty: StructType) -> tuple[int, ...]:
    return _layout(ty)[2]


@lru_cache(maxsize=None)
def flatten(ty: IrType) -> tuple[tuple[int, IrType], ...]:
    """Primitive components of `ty` as (byte offset, type), ascending."""
    if ty.is_primitive:
        return ((0, ty),)
    if isinstance(ty, ArrayType):
        esize = size_of(ty.elem)
        inner = flatten(ty.elem)
        return tuple((i * esize + o, t) for i in range(ty.count) for o, t in inner)
    if isinstance(ty, StructType):
        out = []
        for base, f in zip(field_offsets(ty), ty.fields):
            out.extend((base + o, t) for o, t in flatten(f))
        return tuple(out)
    if isinstance(ty, VoidType):
        return ()
    raise TypeError(f"cannot flatten {ty}")


def flat_kinds(ty: IrType) -> tuple[int, ...]:
    return tuple(kind_of(t) for _, t in flatten(ty))
