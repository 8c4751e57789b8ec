"""Binary input files.

Layout (little-endian, sizes and offsets 64-bit)::

    header      "IGIN" u32 version  u64 module_hash  str entry
    callees     u32 n, n * str                          (str = u32 len + utf-8)
    objects     u32 n, n * object
      object    u32 id  u8 kind  [str name if global]  u64 alloc_size
                i64 anchor_offset  u32 alignment  u32 nruns
                nruns * (u64 offset  u64 len  bytes)
    relocs      u32 n, n * (u8 holder_kind  u32 holder_id  u64 position
                            u8 kind  u32 target  i64 target_offset)
    args        u32 n, n * (u8 kind  value)
    stream      u32 n, n * (u8 tag  value)               (callee tag: u32)

Offsets inside an object are relative to the start of its allocation.
Pointer cells, pointer arguments, pointer stream entries and callee entries
hold zeros; the relocation entry naming them is authoritative.  A data
relocation targets an object id (0 = null) plus an offset from that object's
allocation start; a function relocation targets a callee-table index.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

from .errors import DumpError, FormatError, HashMismatch, UnknownCallee
from .genrt import TAG_CALLEE
from .ir.prepare import STUB
from .ir.types import K_PTR, KIND_SIZE, align_of, size_of
from .memory import (GLOBAL_SEGMENT, MemoryPool, ReplayMemory, decode,
                     encode, function_address, function_index, initializer_bytes,
                     offset_between)
from .values import pack_value, unpack_value

MAGIC = b"IGIN"
VERSION = 1
OBJ_GENERATED, OBJ_GLOBAL = 0, 1
HOLDER_OBJECT, HOLDER_ARGS, HOLDER_STREAM = 0, 1, 2
RELOC_DATA, RELOC_FUNCTION = 0, 1
CALLEE_SIZE = 4
REPLAY_ARENA_BASE = 0x40000
REPLAY_BYTE_BASE = 0x1000
_M64 = 0xFFFFFFFFFFFFFFFF


@dataclass
class ObjectEntry:
    id: int
    kind: int
    alloc_size: int
    anchor_offset: int
    alignment: int
    runs: list = field(default_factory=list)  # [(offset, bytes)]
    name: Optional[str] = None


@dataclass(frozen=True)
class Reloc:
    holder_kind: int
    holder_id: int
    position: int
    kind: int
    target: int
    target_offset: int


@dataclass
class GeneratedInput:
    module_hash: int
    entry: str
    callees: list
    objects: list
    relocs: list
    args: list  # [(kind, value)], pointers as 0
    stream: list  # [(tag, value)], pointers and callees as 0

    def payload_bytes(self) -> int:
        """Bytes of actual input data: shadow runs plus scalar args and stream values."""
        n = sum(len(b) for o in self.objects for _, b in o.runs)
        n += sum(KIND_SIZE[k] for k, _ in self.args if k != K_PTR)
        n += sum(KIND_SIZE[t] for t, _ in self.stream if t not in (K_PTR, TAG_CALLEE))
        return n

    def object(self, oid: int) -> Optional[ObjectEntry]:
        for o in self.objects:
            if o.id == oid:
                return o
        return None


# -- encoding -----------------------------------------------------------------

def _str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def _value_bytes(tag: int, v) -> bytes:
    if tag == TAG_CALLEE:
        return bytes(CALLEE_SIZE)
    if tag == K_PTR:
        return bytes(8)
    return pack_value(tag, v)


def encode_input(gi: GeneratedInput) -> bytes:
    out = [MAGIC, struct.pack("<IQ", VERSION, gi.module_hash), _str(gi.entry)]
    out.append(struct.pack("<I", len(gi.callees)))
    out.extend(_str(c) for c in gi.callees)
    out.append(struct.pack("<I", len(gi.objects)))
    for o in gi.objects:
        out.append(struct.pack("<IB", o.id, o.kind))
        if o.kind == OBJ_GLOBAL:
            out.append(_str(o.name))
        out.append(struct.pack("<QqII", o.alloc_size, o.anchor_offset, o.alignment, len(o.runs)))
        for off, b in o.runs:
            out.append(struct.pack("<QQ", off, len(b)))
            out.append(bytes(b))
    out.append(struct.pack("<I", len(gi.relocs)))
    for r in gi.relocs:
        out.append(struct.pack("<BIQBIq", r.holder_kind, r.holder_id, r.position,
                               r.kind, r.target, r.target_offset))
    out.append(struct.pack("<I", len(gi.args)))
    for k, v in gi.args:
        out.append(struct.pack("<B", k) + _value_bytes(k, v))
    out.append(struct.pack("<I", len(gi.stream)))
    for t, v in gi.stream:
        out.append(struct.pack("<B", t) + _value_bytes(t, v))
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise FormatError("truncated file")
        b = self.data[self.pos:self.pos + n]
        self.pos += n
        return b

    def unpack(self, fmt: str):
        s = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(s))

    def u32(self) -> int:
        return self.unpack("<I")[0]

    def str(self) -> str:
        n = self.u32()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError("bad string") from e

    def value(self, tag: int):
        if tag == TAG_CALLEE:
            self.take(CALLEE_SIZE)
            return 0
        if not 0 <= tag < len(KIND_SIZE):
            raise FormatError(f"bad value tag {tag}")
        return unpack_value(tag, self.take(KIND_SIZE[tag]))


def decode_input(data: bytes) -> GeneratedInput:
    r = _Reader(bytes(data))
    if r.take(4) != MAGIC:
        raise FormatError("bad magic")
    version, mhash = r.unpack("<IQ")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    entry = r.str()
    callees = [r.str() for _ in range(r.u32())]
    objects = []
    for _ in range(r.u32()):
        oid, kind = r.unpack("<IB")
        if kind not in (OBJ_GENERATED, OBJ_GLOBAL):
            raise FormatError(f"object {oid}: bad kind {kind}")
        name = r.str() if kind == OBJ_GLOBAL else None
        size, anchor, align, nruns = r.unpack("<QqII")
        runs = []
        for _ in range(nruns):
            off, n = r.unpack("<QQ")
            runs.append((off, r.take(n)))
        objects.append(ObjectEntry(oid, kind, size, anchor, align, runs, name))
    relocs = [Reloc(*r.unpack("<BIQBIq")) for _ in range(r.u32())]
    args = []
    for _ in range(r.u32()):
        k = r.unpack("<B")[0]
        if k == TAG_CALLEE:
            raise FormatError("callee tag in args")
        args.append((k, r.value(k)))
    stream = []
    for _ in range(r.u32()):
        t = r.unpack("<B")[0]
        stream.append((t, r.value(t)))
    if r.pos != len(r.data):
        raise FormatError("trailing bytes")
    return GeneratedInput(mhash, entry, callees, objects, relocs, args, stream)


# -- verification -------------------------------------------------------------

def verify(data: bytes) -> list[str]:
    """Structural diagnostics for an input file; empty when it is well formed."""
    try:
        gi = decode_input(data)
    except FormatError as e:
        return [str(e)]
    diags = []
    ids = {}
    for o in gi.objects:
        if o.id == 0 or o.id in ids:
            diags.append(f"object {o.id}: duplicate or reserved id")
        ids[o.id] = o
        if o.alignment == 0 or o.alignment & (o.alignment - 1):
            diags.append(f"object {o.id}: alignment {o.alignment} is not a power of two")
        elif o.kind == OBJ_GENERATED and o.anchor_offset % o.alignment:
            diags.append(f"object {o.id}: anchor not aligned")
        end = 0
        for i, (off, b) in enumerate(o.runs):
            if not b:
                diags.append(f"object {o.id}: empty run")
            if i and off < end:
                diags.append(f"object {o.id}: overlapping runs")
            if off + len(b) > o.alloc_size:
                diags.append(f"object {o.id}: run outside allocation")
            end = max(end, off + len(b))
    covered = set()
    for i, r in enumerate(gi.relocs):
        key = (r.holder_kind, r.holder_id, r.position)
        if key in covered:
            diags.append(f"reloc #{i}: duplicate holder")
        covered.add(key)
        if r.kind == RELOC_DATA:
            if r.target != 0 and r.target not in ids:
                diags.append(f"reloc #{i}: missing target")
        elif r.kind == RELOC_FUNCTION:
            if r.target >= len(gi.callees):
                diags.append(f"reloc #{i}: missing target")
        else:
            diags.append(f"reloc #{i}: bad kind")
        if r.holder_kind == HOLDER_OBJECT:
            o = ids.get(r.holder_id)
            if o is None:
                diags.append(f"reloc #{i}: missing holder")
            elif not any(off <= r.position and r.position + 8 <= off + len(b) for off, b in o.runs):
                diags.append(f"reloc #{i}: holder cell outside stored runs")
        elif r.holder_kind == HOLDER_ARGS:
            if r.position >= len(gi.args) or gi.args[r.position][0] != K_PTR:
                diags.append(f"reloc #{i}: holder is not a pointer argument")
        elif r.holder_kind == HOLDER_STREAM:
            want = TAG_CALLEE if r.kind == RELOC_FUNCTION else K_PTR
            if r.position >= len(gi.stream) or gi.stream[r.position][0] != want:
                diags.append(f"reloc #{i}: holder is not a matching stream entry")
        else:
            diags.append(f"reloc #{i}: bad holder kind")
    for i, (k, _) in enumerate(gi.args):
        if k == K_PTR and (HOLDER_ARGS, 0, i) not in covered:
            diags.append(f"arg {i}: pointer without relocation")
    for i, (t, _) in enumerate(gi.stream):
        if t in (K_PTR, TAG_CALLEE) and (HOLDER_STREAM, 0, i) not in covered:
            diags.append(f"stream {i}: pointer without relocation")
    return diags


# -- dumping from a generation pool ---------------------------------------------

def _alloc_start(rec, lo: int) -> int:
    """Allocation start in region offsets: `lo` rounded down so the anchor stays aligned."""
    return rec.anchor + (lo - rec.anchor) // rec.alignment * rec.alignment


def _runs(mask: bytes, data: bytes):
    out = []
    i, n = 0, len(mask)
    while i < n:
        j = mask.find(1, i)
        if j < 0:
            break
        k = mask.find(0, j)
        if k < 0:
            k = n
        out.append((j, data[j:k]))
        i = k
    return out


def dump(pool: MemoryPool, args: list, stream: list, entry: str, module_hash: int) -> GeneratedInput:
    """Build the input record for a finished generation attempt.

    `args` is [(kind, value)] and `stream` the runtime's StreamEntry list.
    """
    records = pool.objects[1:]

    def target_of(raw):
        if raw == 0:
            return None
        hit = pool.object_of(raw)
        if hit is None:
            raise DumpError(f"pointer {raw:#x} does not point into a live object")
        return hit

    # which objects are referenced by stored pointers
    refs = []
    for rec in records:
        for p in rec.ptr_slots:
            raw = int.from_bytes(rec.shadow_bytes(p, p + 8)[0], "little")
            refs.append(target_of(raw))
    for k, v in args:
        if k == K_PTR:
            refs.append(target_of(v))
    for e in stream:
        if e.tag == K_PTR:
            refs.append(target_of(e.value))
    referenced = {hit[0].index for hit in refs if hit is not None}

    extents = {}
    objects = []
    for rec in records:
        if rec.kind == "global":
            mask = rec.shadow_bytes(0, rec.region_size)[1]
            if rec.index not in referenced and 1 not in mask:
                continue
            start, hi = 0, rec.region_size
            entry_obj = ObjectEntry(rec.index, OBJ_GLOBAL, rec.region_size, 0, rec.alignment, name=rec.name)
        else:
            lo, hi = rec.used_extent()
            if lo == hi:
                if rec.index not in referenced:
                    continue
                lo = hi = rec.anchor
            start = _alloc_start(rec, lo)
            entry_obj = ObjectEntry(rec.index, OBJ_GENERATED, hi - start, rec.anchor - start, rec.alignment)
        extents[rec.index] = start
        data, mask = rec.shadow_bytes(start, hi)
        data = bytearray(data)
        for p in rec.ptr_slots:
            data[p - start:p - start + 8] = bytes(8)
        entry_obj.runs = _runs(mask, bytes(data))
        objects.append(entry_obj)

    def reloc(holder_kind, holder_id, pos, raw):
        hit = target_of(raw)
        if hit is None:
            return Reloc(holder_kind, holder_id, pos, RELOC_DATA, 0, 0)
        rec, off = hit
        return Reloc(holder_kind, holder_id, pos, RELOC_DATA, rec.index, off - extents[rec.index])

    relocs = []
    for rec in records:
        if rec.index not in extents:
            continue
        for p in sorted(rec.ptr_slots):
            raw = int.from_bytes(rec.shadow_bytes(p, p + 8)[0], "little")
            relocs.append(reloc(HOLDER_OBJECT, rec.index, p - extents[rec.index], raw))
    out_args = []
    for i, (k, v) in enumerate(args):
        if k == K_PTR:
            relocs.append(reloc(HOLDER_ARGS, 0, i, v))
            v = 0
        out_args.append((k, v))
    callees: list[str] = []
    out_stream = []
    for i, e in enumerate(stream):
        v = e.value
        if e.tag == K_PTR:
            relocs.append(reloc(HOLDER_STREAM, 0, i, v))
            v = 0
        elif e.tag == TAG_CALLEE:
            if v not in callees:
                callees.append(v)
            relocs.append(Reloc(HOLDER_STREAM, 0, i, RELOC_FUNCTION, callees.index(v), 0))
            v = 0
        out_stream.append((e.tag, v))
    return GeneratedInput(module_hash, entry, callees, objects, relocs, out_args, out_stream)


# -- loading ------------------------------------------------------------------

@dataclass
class LoadedImage:
    input: GeneratedInput
    mem: ReplayMemory
    args: list  # register values
    stream: list  # [(tag, value)] with callees as function index / -1
    new_base: dict  # object id -> raw address of its allocation start
    slot_offset: int
    byte_base: int


def replay_memory_for(module, arena_base: int) -> tuple[ReplayMemory, dict]:
    """Replay memory with the module's globals laid out and initialised."""
    mem = ReplayMemory(arena_base)
    for g in module.globals:
        mem.add_global(g.name, size_of(g.ty), align_of(g.ty))
    fidx = {f.name: i for i, f in enumerate(module.functions)}

    def sym_addr(name):
        if name in mem.global_by_name:
            return mem.global_by_name[name].base_raw
        return function_address(fidx[name])

    for g in module.globals:
        if g.init is not None:
            mem.write_bytes(mem.global_by_name[g.name].base_raw, initializer_bytes(g.ty, g.init, sym_addr))
    return mem, sym_addr


def load(data, prepared, slot_offset: int = 0, byte_base: int = REPLAY_BYTE_BASE,
         arena_base: int = REPLAY_ARENA_BASE) -> LoadedImage:
    """Restore an input for `prepared` at freshly chosen addresses.

    Object K lands in pointer index K + slot_offset with its allocation
    starting at `byte_base` (rounded up to the object's alignment).
    """
    gi = data if isinstance(data, GeneratedInput) else decode_input(data)
    if gi.module_hash != prepared.hash:
        raise HashMismatch("input does not match module")
    resolved = []
    for name in gi.callees:
        if name == STUB:
            resolved.append(-1)
        elif name in prepared.program.func_index:
            resolved.append(prepared.program.func_index[name])
        else:
            raise UnknownCallee(f"unknown callee {name}")
    mem, _ = replay_memory_for(prepared.module, arena_base)
    new_base = {}
    for o in gi.objects:
        if o.kind == OBJ_GLOBAL:
            g = mem.global_by_name.get(o.name)
            if g is None:
                raise FormatError(f"object {o.id}: unknown global {o.name}")
            new_base[o.id] = g.base_raw
        else:
            slot = o.id + slot_offset
            if slot >= GLOBAL_SEGMENT - 1 or slot <= 0:
                raise FormatError(f"object {o.id}: no pointer slot")
            base = -(-byte_base // o.alignment) * o.alignment
            new_base[o.id] = mem.add_object(slot, base, o.alloc_size)
        for off, b in o.runs:
            if off + len(b) > o.alloc_size:
                raise FormatError(f"object {o.id}: run outside allocation")
            mem.write_bytes(new_base[o.id] + off, b)
    args = [v for _, v in gi.args]
    stream = [(t, v) for t, v in gi.stream]
    for i, r in enumerate(gi.relocs):
        if r.kind == RELOC_FUNCTION:
            if r.holder_kind != HOLDER_STREAM or r.target >= len(resolved):
                raise FormatError(f"reloc #{i}: bad function relocation")
            stream[r.position] = (TAG_CALLEE, resolved[r.target])
            continue
        if r.target == 0:
            value = 0
        elif r.target in new_base:
            value = (new_base[r.target] + r.target_offset) & _M64
        else:
            raise FormatError(f"reloc #{i}: missing target")
        if r.holder_kind == HOLDER_OBJECT:
            if r.holder_id not in new_base:
                raise FormatError(f"reloc #{i}: missing holder")
            mem.write(new_base[r.holder_id] + r.position, K_PTR, value)
        elif r.holder_kind == HOLDER_ARGS:
            args[r.position] = value
        elif r.holder_kind == HOLDER_STREAM:
            stream[r.position] = (K_PTR, value)
        else:
            raise FormatError(f"reloc #{i}: bad holder")
    return LoadedImage(gi, mem, args, stream, new_base, slot_offset, byte_base)


def redump(image: LoadedImage, prepared) -> bytes:
    """Re-encode a freshly loaded image from its memory contents.

    Runs are read back from the relocated memory and every pointer cell is
    mapped back to (object, offset) through the image's own address map, so a
    byte-identical result shows that loading lost and invented nothing.
    """
    gi = image.input
    mem = image.mem
    base_to_id = {}
    global_ids = {}
    for o in gi.objects:
        if o.kind == OBJ_GLOBAL:
            global_ids[o.name] = o.id
        else:
            base_to_id[o.id + image.slot_offset] = o.id

    def unmap(raw):
        if raw == 0:
            return 0, 0
        index, off = decode(raw)
        if index == GLOBAL_SEGMENT:
            hit = mem.globals.lookup(off, 1) or mem.globals.lookup(off - 1, 1)
            if hit is None or hit.name not in global_ids:
                raise DumpError(f"pointer {raw:#x} does not map to an object")
            return global_ids[hit.name], off - hit.region_start
        oid = base_to_id.get(index)
        if oid is None:
            raise DumpError(f"pointer {raw:#x} does not map to an object")
        return oid, offset_between(raw, image.new_base[oid])

    cells = {}
    for r in gi.relocs:
        if r.holder_kind == HOLDER_OBJECT:
            cells.setdefault(r.holder_id, []).append(r.position)
    objects = []
    relocs = []
    for o in gi.objects:
        runs = []
        for off, b in o.runs:
            buf = bytearray(len(b))
            for i in range(len(b)):
                buf[i] = mem.read_byte(image.new_base[o.id] + off + i)
            runs.append((off, buf))
        for pos in cells.get(o.id, ()):
            raw = int.from_bytes(bytes(mem.read_byte(image.new_base[o.id] + pos + i) for i in range(8)), "little")
            t, toff = unmap(raw)
            relocs.append(Reloc(HOLDER_OBJECT, o.id, pos, RELOC_DATA, t, toff))
            for off, buf in runs:
                if off <= pos < off + len(buf):
                    buf[pos - off:pos - off + 8] = bytes(8)
        objects.append(ObjectEntry(o.id, o.kind, o.alloc_size, o.anchor_offset, o.alignment,
                                   [(off, bytes(buf)) for off, buf in runs], o.name))
    args = []
    for i, ((k, _), v) in enumerate(zip(gi.args, image.args)):
        if k == K_PTR:
            t, toff = unmap(v)
            relocs.append(Reloc(HOLDER_ARGS, 0, i, RELOC_DATA, t, toff))
            v = 0
        args.append((k, v))
    callees = []
    stream = []
    names = {i: f.name for i, f in enumerate(prepared.module.functions)}
    for i, (t, v) in enumerate(image.stream):
        if t == K_PTR:
            tt, toff = unmap(v)
            relocs.append(Reloc(HOLDER_STREAM, 0, i, RELOC_DATA, tt, toff))
            v = 0
        elif t == TAG_CALLEE:
            name = STUB if v < 0 else names[v]
            if name not in callees:
                callees.append(name)
            relocs.append(Reloc(HOLDER_STREAM, 0, i, RELOC_FUNCTION, callees.index(name), 0))
            v = 0
        stream.append((t, v))
    return encode_input(GeneratedInput(gi.module_hash, gi.entry, callees, objects, relocs, args, stream))


def pointer_cells(image: LoadedImage) -> list[tuple[Reloc, int, int]]:
    """(relocation, value found in the image, expected value) for every relocation."""
    out = []
    for r in image.input.relocs:
        if r.kind == RELOC_FUNCTION:
            continue
        expected = 0 if r.target == 0 else (image.new_base[r.target] + r.target_offset) & _M64
        if r.holder_kind == HOLDER_OBJECT:
            found = image.mem.read(image.new_base[r.holder_id] + r.position, K_PTR)
        elif r.holder_kind == HOLDER_ARGS:
            found = image.args[r.position]
        else:
            found = image.stream[r.position][1]
        out.append((r, found, expected))
    return out


__all__ = ["GeneratedInput", "ObjectEntry", "Reloc", "LoadedImage", "encode_input", "decode_input",
           "dump", "load", "redump", "verify", "pointer_cells", "replay_memory_for",
           "encode", "function_index"]
