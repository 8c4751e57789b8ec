"""Independent reference models used to cross-check the implementation."""

import random

from igen.ir.types import K_F32, K_F64, K_I8, K_I16, K_I32, K_I64, KIND_SIZE
from igen.values import pack_value

SCALAR_KINDS = (K_I8, K_I16, K_I32, K_I64, K_F32, K_F64)


class ValueSource:
    """Deterministic stand-in for the value generator; two instances with one seed agree."""

    def __init__(self, seed):
        self.rng = random.Random(seed)
        self.calls = []

    def __call__(self, kind):
        self.calls.append(kind)
        if kind in (K_F32, K_F64):
            return self.rng.uniform(-1e3, 1e3)
        return self.rng.getrandbits(8 * KIND_SIZE[kind])


class TripletOracle:
    """Byte-by-byte model of one object: program array, input shadow, initialized set.

    Positions are plain integers (offsets from the object's anchor).
    """

    def __init__(self):
        self.array = {}
        self.shadow = {}
        self.init = set()

    def write(self, pos, data: bytes):
        for i, b in enumerate(data):
            self.array[pos + i] = b
            self.init.add(pos + i)

    def read(self, pos, kind, gen) -> bytes:
        n = KIND_SIZE[kind]
        cells = range(pos, pos + n)
        fresh = [c for c in cells if c not in self.init]
        if len(fresh) == n:
            data = pack_value(kind, gen(kind))
            for c, b in zip(cells, data):
                self.array[c] = self.shadow[c] = b
        else:
            for c in fresh:
                b = gen(K_I8) & 0xFF
                self.array[c] = self.shadow[c] = b
        self.init.update(cells)
        return bytes(self.array[c] for c in cells)

    def extent(self):
        return (min(self.init), max(self.init) + 1) if self.init else (0, 0)


def random_trace(rng: random.Random, n_ops: int, span: int = 48):
    """[(op, offset, kind, value)] over a window of `span` bytes either side of the anchor."""
    ops = []
    for _ in range(n_ops):
        kind = rng.choice(SCALAR_KINDS)
        off = rng.randrange(-span, span)
        if rng.random() < 0.4:
            ops.append(("w", off, kind, rng.getrandbits(8 * KIND_SIZE[kind])
                        if kind not in (K_F32, K_F64) else rng.uniform(-5, 5)))
        else:
            ops.append(("r", off, kind, None))
    return ops


def trace_mismatches(ops, seed=0, args_extra=()):
    """Run `ops` against a fresh pool object and the oracle; list every disagreement.

    Checks read results, the dumped runs (byte-exact against the oracle's shadow)
    and that the dumped allocation covers the touched extent.
    """
    from igen.inputfmt import dump
    from igen.ir.types import K_PTR
    from igen.memory import MemoryPool
    from igen.values import unpack_value

    pool = MemoryPool()
    anchor = pool.create_object()
    rec = pool.objects[1]
    model = TripletOracle()
    g_impl, g_model = ValueSource(seed), ValueSource(seed)
    out = []
    for i, (op, off, kind, value) in enumerate(ops):
        if op == "w":
            pool.write(anchor + off, kind, value)
            model.write(off, pack_value(kind, value))
        else:
            got = pack_value(kind, pool.read(anchor + off, kind, g_impl))
            want = model.read(off, kind, g_model)
            if kind in (K_F32, K_F64):
                want = pack_value(kind, unpack_value(kind, want))
            if got != want:
                out.append(f"op {i}: read {got.hex()} expected {want.hex()}")
    if g_impl.calls != g_model.calls:
        out.append("generator call sequences differ")
    gi = dump(pool, [(K_PTR, anchor)] + list(args_extra), [], "f", 0)
    [entry] = gi.objects
    shadow = {}
    for start, data in entry.runs:
        for j, b in enumerate(data):
            shadow[start + j - entry.anchor_offset] = b
    if shadow != model.shadow:
        extra = sorted(set(shadow) - set(model.shadow))
        missing = sorted(set(model.shadow) - set(shadow))
        wrong = sorted(k for k in set(shadow) & set(model.shadow) if shadow[k] != model.shadow[k])
        out.append(f"shadow differs: extra={extra} missing={missing} wrong={wrong}")
    lo, hi = model.extent()
    a_lo, a_hi = -entry.anchor_offset, entry.alloc_size - entry.anchor_offset
    if model.init and not (a_lo <= lo and hi == a_hi and lo - a_lo < entry.alignment):
        out.append(f"allocation [{a_lo},{a_hi}) does not fit touched extent [{lo},{hi})")
    if entry.anchor_offset % entry.alignment:
        out.append("anchor is not aligned within the allocation")
    # shadow bytes are always a subset of touched bytes
    if not set(model.shadow) <= model.init:
        out.append("oracle shadow escapes the initialized set")
    return out, gi, rec
