import random

import pytest
from hypothesis import given, settings, strategies as st

from igen.errors import TrapSignal
from igen.ir.types import I32, K_F64, K_I8, K_I16, K_I32, K_I64, ArrayType
from igen.ir.model import IntLit
from igen.memory import (DEFAULT_ALIGN, DEFAULT_REGION, MASK40, MemoryPool, decode, encode,
                         function_address, function_index, initializer_bytes)

from oracles import SCALAR_KINDS, ValueSource, random_trace, trace_mismatches

# write 1; read three untouched cells (2, 3, 4); write a fifth; read everything
WRITE_READ_TRACE = ([("w", 0, K_I32, 1)] + [("r", 4 * i, K_I32, None) for i in (1, 2, 3)]
                    + [("w", 16, K_I32, 5)] + [("r", 4 * i, K_I32, None) for i in range(5)])


class Counting:
    """Generator that hands out 2, 3, 4, ..."""

    def __init__(self):
        self.next = 2

    def __call__(self, kind):
        v = self.next
        self.next += 1
        return v


@given(st.integers(0, (1 << 24) - 1), st.integers(0, MASK40))
def test_pointer_split_round_trip(index, offset):
    raw = encode(index, offset)
    assert raw < 1 << 64
    assert decode(raw) == (index, offset)


@given(st.integers(0, 10_000))
def test_function_addresses(i):
    assert function_index(function_address(i)) == i
    assert function_index(function_address(i) + 1) == -1


def test_write_read_trace_values():
    pool = MemoryPool()
    p = pool.create_object()
    gen = Counting()
    pool.write(p, K_I32, 1)
    assert [pool.read(p + 4 * i, K_I32, gen) for i in (1, 2, 3)] == [2, 3, 4]
    pool.write(p + 16, K_I32, 5)
    assert [pool.read(p + 4 * i, K_I32, gen) for i in range(5)] == [1, 2, 3, 4, 5]
    assert gen.next == 5  # no further draws once initialised
    rec = pool.objects[1]
    seg = rec.segment
    i0 = rec.anchor - seg.lo
    assert bytes(seg.init[i0:i0 + 20]) == b"\x01" * 20
    assert bytes(seg.smask[i0:i0 + 20]) == b"\x00" * 4 + b"\x01" * 12 + b"\x00" * 4


def test_write_read_trace_against_oracle():
    out, gi, _ = trace_mismatches(WRITE_READ_TRACE)
    assert out == []
    [obj] = gi.objects
    assert [(off - obj.anchor_offset, len(b)) for off, b in obj.runs] == [(4, 12)]
    assert obj.alloc_size - obj.anchor_offset == 20


@pytest.mark.parametrize("seed", range(40))
def test_random_traces_against_oracle(seed):
    rng = random.Random(seed)
    out, _, _ = trace_mismatches(random_trace(rng, rng.randrange(1, 200)), seed)
    assert out == []


_op = st.tuples(st.sampled_from("rw"), st.integers(-40, 40), st.sampled_from(SCALAR_KINDS),
                st.integers(0, 2**64 - 1))


@settings(max_examples=150, deadline=None)
@given(st.lists(_op, min_size=1, max_size=60), st.integers(0, 2**32))
def test_shadow_rule_property(raw_ops, seed):
    ops = []
    for op, off, kind, v in raw_ops:
        if op == "w" and kind == K_F64:
            v = float(v % 1000)
        elif op == "w" and kind not in (K_I8, K_I16, K_I32, K_I64):
            v = float(v % 97)
        ops.append((op, off, kind, v if op == "w" else None))
    out, _, rec = trace_mismatches(ops, seed)
    assert out == []
    seg = rec.segment
    assert all(seg.init[i] for i in range(len(seg.smask)) if seg.smask[i])


def test_straddling_read_generates_only_fresh_bytes():
    pool = MemoryPool()
    p = pool.create_object()
    pool.write(p, K_I8, 0x11)
    src = ValueSource(1)
    v = pool.read(p, K_I32, src)
    assert v & 0xFF == 0x11
    assert src.calls == [K_I8] * 3


def test_write_never_touches_shadow():
    pool = MemoryPool()
    p = pool.create_object()
    pool.write(p, K_I64, 7)
    seg = pool.objects[1].segment
    assert not any(seg.smask) and not any(seg.shadow)
    assert pool.objects[1].used_extent() == (pool.objects[1].anchor, pool.objects[1].anchor + 8)


def test_global_initializer_is_program_written():
    pool = MemoryPool()
    base = pool.register_global("g", 4, 4, initializer_bytes(I32, IntLit(7), None))
    assert pool.read(base, K_I32, Counting()) == 7
    rec = pool.global_by_name["g"]
    assert rec.shadow_bytes(0, 4) == (bytes(4), bytes(4))
    assert rec.region_size == 4


def test_global_packing_and_initializer_layout():
    pool = MemoryPool()
    a = pool.register_global("a", 1, 1)
    b = pool.register_global("b", 8, 8)
    assert decode(b)[1] % 8 == 0 and decode(b)[1] - decode(a)[1] == 8
    data = initializer_bytes(ArrayType(I32, 3), (IntLit(1), IntLit(2), IntLit(3)), None)
    assert data == b"\x01\0\0\0\x02\0\0\0\x03\0\0\0"
    assert initializer_bytes(ArrayType(I32, 2), "zeroinit", None) == bytes(8)


def test_user_heap_is_untracked():
    pool = MemoryPool()
    h = pool.heap.alloc(16)
    pool.write(h, K_I64, 9)
    assert pool.read(h, K_I64, Counting()) == 9
    assert pool.live_object_count() == 0
    assert pool.resolve(h, 8)[0] == "user"
    assert pool.resolve(h + 12, 8)[0] == "invalid"


def test_invalid_accesses_trap():
    pool = MemoryPool()
    with pytest.raises(TrapSignal) as ei:
        pool.read(0, K_I32, Counting())
    assert ei.value.kind == "NullDeref"
    p = pool.create_object()
    with pytest.raises(TrapSignal) as ei:
        pool.read(p + DEFAULT_REGION, K_I32, Counting())
    assert ei.value.kind == "InvalidAccess"


def test_new_objects_are_aligned_and_centered():
    pool = MemoryPool()
    for _ in range(3):
        p = pool.create_object()
        index, off = decode(p)
        assert index == pool.live_object_count()
        assert off % DEFAULT_ALIGN == 0 and off == DEFAULT_REGION // 2
    p = pool.create_object(alignment=64)
    assert decode(p)[1] % 64 == 0


def test_globals_must_precede_objects():
    pool = MemoryPool()
    pool.create_object()
    with pytest.raises(ValueError):
        pool.register_global("late", 4, 4)
