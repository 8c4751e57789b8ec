"""Object memory: virtual pointers, the generation pool and the replay image.

A virtual pointer keeps the object index in its top 24 bits and the byte
offset inside the object's region in the low 40.  Index 0 is never an object,
so raw 0 is null and small raws are the user heap (malloc/alloca), which lives
below 2**40 and is not tracked for inputs.

Generation-time objects keep three byte arrays side by side: ``data`` (what
the program sees), ``shadow`` (the initial input, filled only by reads of
untouched bytes) and ``init`` (which bytes have been touched at all).
``smask`` marks the shadow bytes.  All four are windows over the region that
grow on demand, so a 1 MiB region costs nothing until it is used.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import PoolExhausted, TrapSignal
from .ir.types import K_I8, K_PTR, KIND_SIZE
from .values import pack_value, unpack_value

OFFSET_BITS = 40
MASK40 = (1 << OFFSET_BITS) - 1
MAX_INDEX = (1 << 24) - 1
GLOBAL_SEGMENT = MAX_INDEX
FUNCTION_SEGMENT = MAX_INDEX - 1
LAST_OBJECT_INDEX = FUNCTION_SEGMENT - 1

DEFAULT_REGION = 1 << 20
DEFAULT_ALIGN = 16
GLOBAL_ARENA_BASE = 0x10000
HEAP_BASE = 0x10000000
HEAP_LIMIT = 256 << 20
NULL_GUARD = 0x1000
FILL_BYTE = 0xAB
_GROW = 4096


def encode(index: int, offset: int) -> int:
    return (index << OFFSET_BITS) | (offset & MASK40)


def decode(raw: int) -> tuple[int, int]:
    return raw >> OFFSET_BITS, raw & MASK40


def offset_between(raw: int, base: int) -> int:
    """Signed offset of `raw` from `base` within one object's 40-bit offset space."""
    d = (raw - base) & MASK40
    return d - (1 << OFFSET_BITS) if d >> (OFFSET_BITS - 1) else d


def function_address(findex: int) -> int:
    return encode(FUNCTION_SEGMENT, (findex + 1) * 16)


def function_index(raw: int) -> int:
    """Defined-function index for a function address, or -1."""
    if raw >> OFFSET_BITS != FUNCTION_SEGMENT:
        return -1
    off = raw & MASK40
    if off % 16 or off == 0:
        return -1
    return off // 16 - 1


def invalid_kind(raw: int) -> str:
    return "NullDeref" if raw < NULL_GUARD else "InvalidAccess"


class Segment:
    """Byte window [lo, lo+len(data)) over an address region."""

    __slots__ = ("lo", "data", "init", "shadow", "smask")

    def __init__(self, lo=0, size=0, tracked=True, fill=0):
        self.lo = lo
        self.data = bytearray([fill]) * size if fill else bytearray(size)
        self.init = bytearray(size) if tracked else None
        self.shadow = bytearray(size) if tracked else None
        self.smask = bytearray(size) if tracked else None

    @property
    def hi(self):
        return self.lo + len(self.data)

    def ensure(self, lo: int, hi: int, limit: int) -> None:
        """Grow the window to cover [lo, hi) without passing [0, limit)."""
        cur_lo, cur_hi = self.lo, self.hi
        if lo >= cur_lo and hi <= cur_hi:
            return
        if cur_lo == cur_hi:
            new_lo = max(0, (lo - _GROW) // _GROW * _GROW)
            new_hi = min(limit, -(-(hi + _GROW) // _GROW) * _GROW)
        else:
            span = max(_GROW, cur_hi - cur_lo)
            new_lo = cur_lo if lo >= cur_lo else max(0, min(lo, cur_lo - span) // _GROW * _GROW)
            new_hi = cur_hi if hi <= cur_hi else min(limit, -(-max(hi, cur_hi + span) // _GROW) * _GROW)
        pre = cur_lo - new_lo if cur_lo != cur_hi else 0
        if cur_lo == cur_hi:
            size = new_hi - new_lo
            self.lo = new_lo
            self.data = bytearray(size)
            self.init = bytearray(size)
            self.shadow = bytearray(size)
            self.smask = bytearray(size)
            return
        post = new_hi - cur_hi
        for name in ("data", "init", "shadow", "smask"):
            old = getattr(self, name)
            setattr(self, name, bytearray(pre) + old + bytearray(post))
        self.lo = new_lo


@dataclass(eq=False)
class ObjectRecord:
    index: int  # object id (table index); for generated objects also the pointer index
    region_size: int
    anchor: int  # offset of the user-visible pointer inside the region
    alignment: int
    kind: str  # "generated" | "global"
    segment: Segment
    region_start: int = 0  # where the region begins in the segment's address space
    base_raw: int = 0  # raw pointer to region offset 0
    site: Optional[int] = None  # fresh-pointer request that created it
    name: Optional[str] = None
    ptr_slots: dict = field(default_factory=dict)  # object offset -> True for generated pointers

    def raw_at(self, off: int) -> int:
        return self.base_raw + off

    @property
    def anchor_raw(self) -> int:
        return self.base_raw + self.anchor

    def _init_slice(self):
        seg = self.segment
        a = self.region_start - seg.lo
        return seg.init, max(0, a), max(0, min(len(seg.init), a + self.region_size))

    def used_extent(self) -> tuple[int, int]:
        """Smallest [lo, hi) covering every touched byte; (0, 0) if untouched."""
        init, a, b = self._init_slice()
        lo = init.find(1, a, b)
        if lo < 0:
            return 0, 0
        hi = init.rfind(1, a, b) + 1
        shift = self.segment.lo - self.region_start
        return lo + shift, hi + shift

    def shadow_bytes(self, lo: int, hi: int) -> tuple[bytes, bytes]:
        seg = self.segment
        a = self.region_start + lo - seg.lo
        b = self.region_start + hi - seg.lo
        return bytes(seg.shadow[a:b]), bytes(seg.smask[a:b])


class UserHeap:
    """Bump allocator for program-owned memory (malloc, alloca).

    Addresses are never reused, so a replay that repeats the same sequence of
    allocations sees the same addresses.
    """

    def __init__(self, base=HEAP_BASE, limit=HEAP_LIMIT):
        self.base = base
        self.limit = limit
        self.bump = base
        self.data = bytearray()
        self.starts: list[int] = []
        self.sizes: dict[int, int] = {}

    def alloc(self, n: int, align: int = DEFAULT_ALIGN) -> int:
        n = max(int(n), 1)
        addr = (self.bump + align - 1) // align * align
        if addr + n > self.base + self.limit:
            return 0
        end = addr + n - self.base
        if end > len(self.data):
            self.data.extend(bytes([FILL_BYTE]) * (end - len(self.data)))
        self.bump = addr + n
        self.starts.append(addr)
        self.sizes[addr] = n
        return addr

    def free(self, addr: int) -> bool:
        if addr not in self.sizes:
            return False
        del self.sizes[addr]
        i = bisect.bisect_left(self.starts, addr)
        del self.starts[i]
        return True

    def find(self, addr: int, n: int) -> int:
        """Offset into ``data`` if [addr, addr+n) lies in one live block, else -1."""
        i = bisect.bisect_right(self.starts, addr) - 1
        if i < 0:
            return -1
        start = self.starts[i]
        if addr + n <= start + self.sizes[start]:
            return addr - self.base
        return -1

    def owns(self, addr: int) -> bool:
        return self.find(addr, 1) >= 0


class _GlobalTable:
    def __init__(self):
        self.starts: list[int] = []
        self.records: list[ObjectRecord] = []

    def add(self, start, rec):
        self.starts.append(start)
        self.records.append(rec)

    def lookup(self, off: int, n: int):
        i = bisect.bisect_right(self.starts, off) - 1
        while i >= 0:
            rec = self.records[i]
            if off + n <= rec.region_start + rec.region_size and off >= rec.region_start:
                return rec
            if rec.region_size:
                return None
            i -= 1  # zero-sized globals share a start with their successor
        return None


class MemoryPool:
    """Generation-time memory.

    ``segs`` maps pointer index to the segment of every generated object; the
    interpreter reads fully initialised bytes from it directly and calls back
    into the pool only for everything else.
    """

    def __init__(self, region_size: int = DEFAULT_REGION, arena_base: int = GLOBAL_ARENA_BASE):
        self.region_size = region_size
        self.objects: list[Optional[ObjectRecord]] = [None]
        self.segs: dict[int, Segment] = {}
        self.heap = UserHeap()
        self.arena = Segment(arena_base, 0)
        self.arena_base = arena_base
        self.globals = _GlobalTable()
        self.global_by_name: dict[str, ObjectRecord] = {}
        self.sealed = False

    # -- objects ---------------------------------------------------------
    def register_global(self, name: str, size: int, alignment: int,
                        init: Optional[bytes] = None) -> int:
        if name in self.global_by_name:
            raise ValueError(f"global @{name} registered twice")
        if self.sealed:
            raise ValueError("globals must be registered before objects are created")
        arena = self.arena
        start = (arena.hi + alignment - 1) // alignment * alignment
        grow = start + size - arena.hi
        for attr in ("data", "init", "shadow", "smask"):
            getattr(arena, attr).extend(bytes(grow))
        rec = ObjectRecord(len(self.objects), size, 0, alignment, "global", arena,
                           region_start=start, base_raw=encode(GLOBAL_SEGMENT, start), name=name)
        self.objects.append(rec)
        self.globals.add(start, rec)
        self.global_by_name[name] = rec
        if init is not None:
            self.write_bytes(rec.base_raw, init)
        return rec.base_raw

    def create_object(self, alignment: int = DEFAULT_ALIGN, site: Optional[int] = None) -> int:
        self.sealed = True
        index = len(self.objects)
        if index > LAST_OBJECT_INDEX:
            raise PoolExhausted("object indices exhausted")
        alignment = max(alignment, DEFAULT_ALIGN)
        anchor = -(-(self.region_size // 2) // alignment) * alignment
        seg = Segment(anchor, 0)
        rec = ObjectRecord(index, self.region_size, anchor, alignment, "generated", seg,
                           base_raw=encode(index, 0), site=site)
        self.objects.append(rec)
        self.segs[index] = seg
        return rec.anchor_raw

    def object_of(self, raw: int) -> Optional[tuple[ObjectRecord, int]]:
        """(record, offset in object) for any raw inside a live object's region."""
        index, off = decode(raw)
        if index == GLOBAL_SEGMENT:
            rec = self.globals.lookup(off, 1)
            if rec is None:
                # one past the end still belongs to the global
                rec = self.globals.lookup(off - 1, 1) if off else None
            return (rec, off - rec.region_start) if rec else None
        if 0 < index < len(self.objects):
            rec = self.objects[index]
            if rec.kind == "generated" and off <= rec.region_size:
                return rec, off
        return None

    def resolve(self, raw: int, size: int):
        """Classify an access: ("runtime", rec, off), ("user", None, heap off) or ("invalid", kind, None)."""
        index, off = decode(raw)
        if index == 0:
            h = self.heap.find(raw, size)
            if h >= 0:
                return "user", None, h
            return "invalid", invalid_kind(raw), None
        if index == GLOBAL_SEGMENT:
            rec = self.globals.lookup(off, size)
            if rec is not None:
                return "runtime", rec, off - rec.region_start
            return "invalid", "InvalidAccess", None
        if index < len(self.objects) and index != FUNCTION_SEGMENT:
            rec = self.objects[index]
            if rec.kind == "generated" and off + size <= rec.region_size:
                return "runtime", rec, off
        return "invalid", "InvalidAccess", None

    # -- accesses --------------------------------------------------------
    def _locate(self, raw: int, n: int):
        cls, rec, off = self.resolve(raw, n)
        if cls == "invalid":
            raise TrapSignal(rec, f"{n}-byte access at {raw:#x}")
        if cls == "user":
            return None, off
        seg = rec.segment
        pos = rec.region_start + off
        if rec.kind == "generated":
            seg.ensure(pos, pos + n, rec.region_size)
        return rec, pos - seg.lo

    def read(self, raw: int, kind: int, gen: Callable[[int], object]):
        """Typed read; untouched runtime bytes get a generated value (see module doc)."""
        n = KIND_SIZE[kind]
        rec, i = self._locate(raw, n)
        if rec is None:
            return unpack_value(kind, self.heap.data[i:i + n])
        seg = rec.segment
        init = seg.init
        fresh = [k for k in range(i, i + n) if not init[k]]
        if fresh:
            if len(fresh) == n:
                v = gen(kind)
                b = pack_value(kind, v)
                seg.data[i:i + n] = b
                seg.shadow[i:i + n] = b
                if kind == K_PTR:
                    rec.ptr_slots[seg.lo + i - rec.region_start] = True
            else:
                # straddles bytes the program already touched: generate byte by byte
                for k in fresh:
                    b = gen(K_I8) & 0xFF
                    seg.data[k] = b
                    seg.shadow[k] = b
            for k in fresh:
                init[k] = 1
                seg.smask[k] = 1
        return unpack_value(kind, seg.data[i:i + n])

    def write(self, raw: int, kind: int, value) -> None:
        self.write_bytes(raw, pack_value(kind, value))

    def write_bytes(self, raw: int, b: bytes) -> None:
        n = len(b)
        if n == 0:
            return
        rec, i = self._locate(raw, n)
        if rec is None:
            self.heap.data[i:i + n] = b
            return
        seg = rec.segment
        seg.data[i:i + n] = b
        seg.init[i:i + n] = b"\x01" * n

    def read_byte(self, raw: int, gen) -> int:
        return self.read(raw, K_I8, gen)

    # -- snapshot ---------------------------------------------------------
    def snapshot_extents(self) -> dict[int, tuple[int, int, int]]:
        out = {}
        for rec in self.objects[1:]:
            if rec.kind == "global":
                out[rec.index] = (0, rec.region_size, rec.alignment)
            else:
                lo, hi = rec.used_extent()
                out[rec.index] = (lo, hi, rec.alignment)
        return out

    def live_object_count(self) -> int:
        return len(self.objects) - 1


class ReplayMemory:
    """Memory restored from an input: plain byte arrays, no bookkeeping."""

    def __init__(self, arena_base: int):
        self.segs: dict[int, Segment] = {}
        self.heap = UserHeap()
        self.arena = Segment(arena_base, 0, tracked=False)
        self.arena_base = arena_base
        self.globals = _GlobalTable()
        self.global_by_name: dict[str, ObjectRecord] = {}

    def add_global(self, name: str, size: int, alignment: int) -> ObjectRecord:
        arena = self.arena
        start = (arena.hi + alignment - 1) // alignment * alignment
        arena.data.extend(bytes(start + size - arena.hi))
        rec = ObjectRecord(len(self.global_by_name) + 1, size, 0, alignment, "global", arena,
                           region_start=start, base_raw=encode(GLOBAL_SEGMENT, start), name=name)
        self.globals.add(start, rec)
        self.global_by_name[name] = rec
        return rec

    def add_object(self, slot: int, base: int, size: int) -> int:
        """Allocate [base, base+size) in pointer index `slot`; returns the raw base."""
        self.segs[slot] = Segment(base, size, tracked=False)
        return encode(slot, base)

    def _locate(self, raw: int, n: int):
        index, off = decode(raw)
        if index == 0:
            h = self.heap.find(raw, n)
            if h >= 0:
                return self.heap.data, h
            raise TrapSignal(invalid_kind(raw), f"{n}-byte access at {raw:#x}")
        if index == GLOBAL_SEGMENT:
            if self.globals.lookup(off, n) is not None:
                return self.arena.data, off - self.arena.lo
        else:
            seg = self.segs.get(index)
            if seg is not None and seg.lo <= off and off + n <= seg.hi:
                return seg.data, off - seg.lo
        raise TrapSignal("InvalidAccess", f"{n}-byte access at {raw:#x} outside the restored image")

    def read(self, raw: int, kind: int, gen=None):
        n = KIND_SIZE[kind]
        buf, i = self._locate(raw, n)
        return unpack_value(kind, buf[i:i + n])

    def write(self, raw: int, kind: int, value) -> None:
        self.write_bytes(raw, pack_value(kind, value))

    def write_bytes(self, raw: int, b: bytes) -> None:
        if not b:
            return
        buf, i = self._locate(raw, len(b))
        buf[i:i + len(b)] = b

    def read_byte(self, raw: int, gen=None) -> int:
        buf, i = self._locate(raw, 1)
        return buf[i]


def initializer_bytes(ty, init, sym_addr: Callable[[str], int]) -> bytes:
    """Byte image of a global initializer; `sym_addr` resolves @names to raws."""
    from .ir.model import FloatLit, IntLit, Null, Sym
    from .ir.types import FLOAT_KINDS, ArrayType, StructType, field_offsets, kind_of, size_of
    from .values import MASKS

    buf = bytearray(size_of(ty))

    def fill(t, c, at):
        if c is None or c == "zeroinit":
            return
        if isinstance(t, ArrayType):
            esz = size_of(t.elem)
            for i, e in enumerate(c):
                fill(t.elem, e, at + i * esz)
            return
        if isinstance(t, StructType):
            for ft, off, e in zip(t.fields, field_offsets(t), c):
                fill(ft, e, at + off)
            return
        k = kind_of(t)
        if isinstance(c, Sym):
            v = sym_addr(c.name)
        elif isinstance(c, Null):
            v = 0
        elif isinstance(c, (IntLit, FloatLit)):
            v = c.value
        else:
            raise ValueError(f"bad constant {c!r} for {t}")
        if k not in FLOAT_KINDS:
            v = int(v) & MASKS[k]
        b = pack_value(k, v)
        buf[at:at + len(b)] = b

    fill(ty, init, 0)
    return bytes(buf)
