"""Byte encoding of primitive values and float32 rounding."""

from __future__ import annotations

import math
import struct

from .ir.types import K_F32, K_F64, K_I1, KIND_SIZE

_STRUCTS = tuple(struct.Struct(f) for f in ("<B", "<B", "<H", "<I", "<Q", "<f", "<d", "<Q"))
_F32 = _STRUCTS[K_F32]
MASKS = (1, 0xFF, 0xFFFF, 0xFFFFFFFF, 0xFFFFFFFFFFFFFFFF, 0, 0, 0xFFFFFFFFFFFFFFFF)
WIDTHS = (1, 8, 16, 32, 64, 32, 64, 64)


def to_f32(x: float) -> float:
    """Round a double to the nearest float32, as a C cast would."""
    try:
        return _F32.unpack(_F32.pack(x))[0]
    except OverflowError:
        return math.copysign(math.inf, x)


def pack_value(kind: int, v) -> bytes:
    if kind == K_F32:
        return _F32.pack(to_f32(v))
    if kind == K_F64:
        return _STRUCTS[K_F64].pack(v)
    return _STRUCTS[kind].pack(v & MASKS[kind])


def unpack_value(kind: int, b) -> object:
    v = _STRUCTS[kind].unpack(bytes(b))[0]
    if kind == K_I1:
        return v & 1
    return v


def is_float_kind(kind: int) -> bool:
    return kind == K_F32 or kind == K_F64


def kind_size(kind: int) -> int:
    return KIND_SIZE[kind]


def value_key(v):
    """Comparable form of a register value (floats by bit pattern)."""
    if isinstance(v, float):
        return ("f", struct.pack("<d", v).hex())
    return v


def sext(v: int, width: int) -> int:
    sign = 1 << (width - 1)
    return (v & (sign - 1)) - (v & sign)
