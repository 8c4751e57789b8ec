# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled interpreter loop.

Same contract and semantics as ``_kernel_py.execute``.  Registers live in C
arrays; loads and stores of fully initialised bytes in object segments go
straight to the segment's bytearray through a small cache that is dropped
whenever the host is called (host calls may grow or replace segments).
"""

import sys
import time

from cpython.bytearray cimport PyByteArray_AS_STRING, PyByteArray_GET_SIZE
from libc.math cimport INFINITY, NAN, copysign, isinf
from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport free, malloc, realloc
from libc.string cimport memchr, memcpy, memset

from ..errors import BudgetSignal, ExitSignal, TrapSignal
from ..ir.model import ICMP_PREDS
from . import opcodes as _O

if sys.byteorder != "little":
    raise ImportError("compiled kernel assumes a little-endian host")

cdef enum:
    IBIN = 1
    FBIN = 2
    ICMP = 3
    PCMP = 4
    FCMP = 5
    GEP = 6
    LOADI = 7
    LOADF = 8
    STOREI = 9
    STOREF = 10
    SELI = 11
    SELF = 12
    CASTII = 13
    CASTIF = 14
    CASTFI = 15
    CASTFF = 16
    MOVI = 17
    MOVF = 18
    BITIF = 19
    BR = 20
    JMP = 21
    RET = 22
    UNREACH = 23
    CALL = 24
    XCALL = 25
    ICALL = 26
    ALLOCA = 27
    BITFI = 28

cdef enum:
    ADD = 0
    SUB = 1
    MUL = 2
    SDIV = 3
    UDIV = 4
    SREM = 5
    UREM = 6
    AND = 7
    OR = 8
    XOR = 9
    SHL = 10
    LSHR = 11
    ASHR = 12

cdef enum:
    EQ = 0
    NE = 1
    SLT = 2
    SLE = 3
    SGT = 4
    SGE = 5
    ULT = 6
    ULE = 7
    UGT = 8
    UGE = 9

cdef enum:
    OEQ = 0
    ONE = 1
    OLT = 2
    OLE = 3
    OGT = 4
    OGE = 5
    ORD = 6
    UNO = 7
    UEQ = 8
    UNE = 9
    FULT = 10
    FULE = 11
    FUGT = 12
    FUGE = 13

assert _O.BITFI == BITFI and _O.ASHR == ASHR and _O.UGE == UGE and _O.FUGE == FUGE

cdef uint64_t FNV_PRIME = 0x100000001B3
cdef uint64_t M40 = (1 << 40) - 1
cdef int MAX_DEPTH = _O.MAX_DEPTH
cdef int KSIZE[8]
KSIZE[:] = [1, 1, 2, 4, 8, 4, 8, 8]
cdef int NCACHE = 8


cdef struct SegC:
    int64_t idx
    unsigned char* data
    unsigned char* init
    int64_t lo
    int64_t n


cdef struct Frame:
    int cur
    int64_t pc
    int64_t ibase
    int64_t fbase
    int64_t cs


cdef inline uint64_t wmask(int w) nogil:
    return 0xFFFFFFFFFFFFFFFF if w >= 64 else ((<uint64_t>1) << w) - 1


cdef inline int64_t sext(uint64_t v, int w) nogil:
    if w >= 64:
        return <int64_t>v
    cdef uint64_t s = (<uint64_t>1) << (w - 1)
    return <int64_t>((v & (s - 1))) - <int64_t>(v & s)


cdef inline double f32(double x) nogil:
    return <double>(<float>x)


cdef inline double fdiv(double a, double b) nogil:
    if b == 0.0:
        if a != a or a == 0.0:
            return NAN
        return copysign(INFINITY, a) * copysign(1.0, b)
    return a / b


cdef inline bint fcmp(int p, double a, double b) nogil:
    if a != a or b != b:
        return p == UNO or p >= UEQ
    if p == OEQ or p == UEQ:
        return a == b
    if p == ONE or p == UNE:
        return a != b
    if p == OLT or p == FULT:
        return a < b
    if p == OLE or p == FULE:
        return a <= b
    if p == OGT or p == FUGT:
        return a > b
    if p == OGE or p == FUGE:
        return a >= b
    return p == ORD


cdef inline bint icmp(int p, uint64_t a, uint64_t b, int w) nogil:
    cdef int64_t sa, sb
    if p == EQ:
        return a == b
    if p == NE:
        return a != b
    if p <= SGE:
        sa = sext(a, w)
        sb = sext(b, w)
        if p == SLT:
            return sa < sb
        if p == SLE:
            return sa <= sb
        if p == SGT:
            return sa > sb
        return sa >= sb
    if p == ULT:
        return a < b
    if p == ULE:
        return a <= b
    if p == UGT:
        return a > b
    return a >= b


cdef uint64_t ibin(int op, uint64_t a, uint64_t b, int w) except? 0xDEADBEEF:
    cdef uint64_t m = wmask(w)
    cdef int64_t sa, sb
    cdef uint64_t q, ua, ub
    if op == ADD:
        return (a + b) & m
    if op == SUB:
        return (a - b) & m
    if op == MUL:
        return (a * b) & m
    if op == AND:
        return a & b
    if op == OR:
        return a | b
    if op == XOR:
        return a ^ b
    if op == SHL:
        return (a << (b % <uint64_t>w)) & m
    if op == LSHR:
        return a >> (b % <uint64_t>w)
    if op == ASHR:
        return (<uint64_t>(sext(a, w) >> <int>(b % <uint64_t>w))) & m
    if b == 0:
        raise TrapSignal("DivByZero")
    if op == UDIV:
        return a // b
    if op == UREM:
        return a % b
    sa = sext(a, w)
    sb = sext(b, w)
    # magnitudes as unsigned so INT_MIN / -1 wraps like the reference
    ua = (<uint64_t>0 - <uint64_t>sa) if sa < 0 else <uint64_t>sa
    ub = (<uint64_t>0 - <uint64_t>sb) if sb < 0 else <uint64_t>sb
    q = ua // ub
    if (sa < 0) != (sb < 0):
        q = <uint64_t>0 - q
    if op == SDIV:
        return q & m
    return (<uint64_t>sa - q * <uint64_t>sb) & m


cdef inline uint64_t fptoint(double v, bint signed, int w) nogil:
    cdef double top
    if v != v:
        return 0
    if signed:
        top = <double>((<uint64_t>1) << (w - 1))
        if v >= top:
            return ((<uint64_t>1) << (w - 1)) - 1
        if v < -top:
            return (<uint64_t>0 - ((<uint64_t>1) << (w - 1))) & wmask(w)
        return (<uint64_t>(<int64_t>v)) & wmask(w)
    if w >= 64:
        if v >= 18446744073709551616.0:
            return 0xFFFFFFFFFFFFFFFF
    elif v >= <double>((<uint64_t>1) << w):
        return wmask(w)
    if v <= 0.0:
        return 0
    return <uint64_t>v


cdef inline object box_i(uint64_t v):
    return v


cdef class _Regs:
    """Growable int and float register stacks."""
    cdef uint64_t* i
    cdef double* f
    cdef int64_t icap
    cdef int64_t fcap

    def __cinit__(self):
        self.icap = 1024
        self.fcap = 1024
        self.i = <uint64_t*>malloc(self.icap * sizeof(uint64_t))
        self.f = <double*>malloc(self.fcap * sizeof(double))
        if self.i == NULL or self.f == NULL:
            raise MemoryError()

    def __dealloc__(self):
        free(self.i)
        free(self.f)

    cdef int reserve(self, int64_t ni, int64_t nf) except -1:
        cdef void* p
        if ni > self.icap:
            while self.icap < ni:
                self.icap *= 2
            p = realloc(self.i, self.icap * sizeof(uint64_t))
            if p == NULL:
                raise MemoryError()
            self.i = <uint64_t*>p
        if nf > self.fcap:
            while self.fcap < nf:
                self.fcap *= 2
            p = realloc(self.f, self.fcap * sizeof(double))
            if p == NULL:
                raise MemoryError()
            self.f = <double*>p
        return 0


cdef class _Templates:
    cdef uint64_t** it
    cdef double** ft
    cdef int64_t* ni
    cdef int64_t* nf
    cdef int n

    def __cinit__(self, itemps, ftemps):
        cdef int k, j
        self.n = len(itemps)
        self.it = <uint64_t**>malloc(max(1, self.n) * sizeof(uint64_t*))
        self.ft = <double**>malloc(max(1, self.n) * sizeof(double*))
        self.ni = <int64_t*>malloc(max(1, self.n) * sizeof(int64_t))
        self.nf = <int64_t*>malloc(max(1, self.n) * sizeof(int64_t))
        for k in range(self.n):
            self.it[k] = NULL
            self.ft[k] = NULL
        for k in range(self.n):
            it = itemps[k]
            ft = ftemps[k]
            self.ni[k] = len(it)
            self.nf[k] = len(ft)
            self.it[k] = <uint64_t*>malloc(max(1, len(it)) * sizeof(uint64_t))
            self.ft[k] = <double*>malloc(max(1, len(ft)) * sizeof(double))
            for j in range(len(it)):
                self.it[k][j] = <uint64_t>(int(it[j]) & 0xFFFFFFFFFFFFFFFF)
            for j in range(len(ft)):
                self.ft[k][j] = <double>ft[j]

    def __dealloc__(self):
        cdef int k
        if self.it != NULL:
            for k in range(self.n):
                free(self.it[k])
                free(self.ft[k])
        free(self.it)
        free(self.ft)
        free(self.ni)
        free(self.nf)


cdef inline void drop_cache(SegC* cache) nogil:
    cdef int k
    for k in range(NCACHE):
        cache[k].idx = -1


cdef inline SegC* lookup(SegC* cache, dict segs, int64_t idx):
    cdef SegC* c = &cache[idx & (NCACHE - 1)]
    if c.idx == idx:
        return c
    seg = segs.get(idx)
    if seg is None:
        return NULL
    data = seg.data
    init = seg.init
    c.idx = idx
    c.data = <unsigned char*>PyByteArray_AS_STRING(data)
    c.n = PyByteArray_GET_SIZE(data)
    c.init = NULL if init is None else <unsigned char*>PyByteArray_AS_STRING(init)
    c.lo = seg.lo
    return c


cdef inline void record_block(uint64_t* th, int64_t* tl, int64_t* bc, list trace, int64_t blk):
    bc[blk] += 1
    th[0] = (th[0] ^ <uint64_t>blk) * FNV_PRIME
    tl[0] += 1
    if trace is not None:
        trace.append(blk)


def execute(prog, host, int fidx, args, itemps, ftemps, prof, int64_t step_budget, double deadline):
    """Run function `fidx` to completion and return its flattened result."""
    cdef const long long[::1] codev = prog.code
    cdef const long long* code = &codev[0]
    cdef long long[::1] bcv = prof.block_counts
    cdef long long[::1] brv = prof.branch_counts
    cdef int64_t* bc = <int64_t*>&bcv[0] if bcv.shape[0] else NULL
    cdef int64_t* brc = <int64_t*>&brv[0] if brv.shape[0] else NULL
    cdef list trace = prof.trace
    cdef uint64_t th = prof.trace_hash
    cdef int64_t tl = prof.trace_len
    cdef int64_t steps = prof.steps
    cdef dict segs = host.segs
    cdef list funcs = prog.funcs
    cdef list callsites = prog.callsites
    cdef list rets = prog.rets
    cdef _Templates T = _Templates(itemps, ftemps)
    cdef _Regs R = _Regs()
    cdef SegC cache[8]
    cdef Frame* frames = <Frame*>malloc((MAX_DEPTH + 1) * sizeof(Frame))
    cdef int depth = 0
    cdef int cur = fidx
    cdef int64_t pc, i, blk, ibase = 0, fbase = 0, o, n, disp, bi
    cdef int op, k, w
    cdef uint64_t a, b, raw, v, idx
    cdef double x, y
    cdef float fv
    cdef uint64_t* ir
    cdef double* fr
    cdef SegC* c
    cdef int64_t target, cs, nib, nfb
    cdef uint64_t* nir
    cdef double* nfr
    cdef bint isf
    monotonic = time.monotonic
    wants_ptr_cmp = host.wants_ptr_cmp
    alloca_stack = []
    allocas = []
    if frames == NULL:
        raise MemoryError()
    drop_cache(cache)

    f = funcs[fidx]
    try:
        R.reserve(T.ni[cur], T.nf[cur])
        ir = R.i
        fr = R.f
        memcpy(ir, T.it[cur], T.ni[cur] * sizeof(uint64_t))
        memcpy(fr, T.ft[cur], T.nf[cur] * sizeof(double))
        for (isf, s), val in zip(f.param_slots, args):
            if isf:
                fr[<int64_t>s] = <double>val
            else:
                ir[<int64_t>s] = <uint64_t>(int(val) & 0xFFFFFFFFFFFFFFFF)
        pc = f.entry_pc
        blk = f.entry_block
        record_block(&th, &tl, bc, trace, blk)
        while True:
            steps += 1
            if steps > step_budget:
                raise BudgetSignal("steps")
            if (steps & 0xFFFF) == 0 and monotonic() > deadline:
                raise BudgetSignal("timeout")
            i = pc * 8
            op = <int>code[i]
            pc += 1
            if op == LOADI or op == LOADF:
                raw = ir[code[i + 2]] + <uint64_t>code[i + 5]
                k = <int>code[i + 3]
                n = KSIZE[k]
                c = lookup(cache, segs, <int64_t>(raw >> 40))
                if c != NULL:
                    o = <int64_t>(raw & M40) - c.lo
                    if o >= 0 and o + n <= c.n and (c.init == NULL or memchr(c.init + o, 0, n) == NULL):
                        if op == LOADI:
                            v = 0
                            memcpy(&v, c.data + o, n)
                            ir[code[i + 1]] = (v & 1) if k == 0 else v
                        elif n == 8:
                            memcpy(&x, c.data + o, 8)
                            fr[code[i + 1]] = x
                        else:
                            memcpy(&fv, c.data + o, 4)
                            fr[code[i + 1]] = <double>fv
                        continue
                val = host.load(raw, k, code[i + 4])
                drop_cache(cache)
                if op == LOADI:
                    ir[code[i + 1]] = <uint64_t>val
                else:
                    fr[code[i + 1]] = <double>val
            elif op == IBIN:
                ir[code[i + 1]] = ibin(<int>code[i + 4], ir[code[i + 2]], ir[code[i + 3]], <int>code[i + 5])
            elif op == GEP:
                disp = code[i + 5]
                if code[i + 3] >= 0:
                    disp += sext(ir[code[i + 3]], <int>code[i + 6]) * code[i + 4]
                ir[code[i + 1]] = ir[code[i + 2]] + <uint64_t>disp
            elif op == BR:
                bi = code[i + 6]
                if ir[code[i + 1]] & 1:
                    brc[2 * bi] += 1
                    pc = code[i + 2]
                    blk = code[i + 4]
                else:
                    brc[2 * bi + 1] += 1
                    pc = code[i + 3]
                    blk = code[i + 5]
                record_block(&th, &tl, bc, trace, blk)
            elif op == ICMP:
                ir[code[i + 1]] = 1 if icmp(<int>code[i + 4], ir[code[i + 2]], ir[code[i + 3]], <int>code[i + 5]) else 0
            elif op == JMP:
                pc = code[i + 1]
                blk = code[i + 2]
                record_block(&th, &tl, bc, trace, blk)
            elif op == STOREI or op == STOREF:
                raw = ir[code[i + 2]] + <uint64_t>code[i + 4]
                k = <int>code[i + 3]
                n = KSIZE[k]
                c = lookup(cache, segs, <int64_t>(raw >> 40))
                if c != NULL:
                    o = <int64_t>(raw & M40) - c.lo
                    if o >= 0 and o + n <= c.n:
                        if op == STOREI:
                            v = ir[code[i + 1]]
                            memcpy(c.data + o, &v, n)
                        elif n == 8:
                            x = fr[code[i + 1]]
                            memcpy(c.data + o, &x, 8)
                        else:
                            fv = <float>fr[code[i + 1]]
                            memcpy(c.data + o, &fv, 4)
                        if c.init != NULL:
                            memset(c.init + o, 1, n)
                        continue
                if op == STOREI:
                    host.store(raw, k, box_i(ir[code[i + 1]]))
                else:
                    host.store(raw, k, fr[code[i + 1]])
                drop_cache(cache)
            elif op == FBIN:
                x = fr[code[i + 2]]
                y = fr[code[i + 3]]
                k = <int>code[i + 4]
                if k == 0:
                    x = x + y
                elif k == 1:
                    x = x - y
                elif k == 2:
                    x = x * y
                else:
                    x = fdiv(x, y)
                fr[code[i + 1]] = f32(x) if code[i + 5] == 32 else x
            elif op == FCMP:
                ir[code[i + 1]] = 1 if fcmp(<int>code[i + 4], fr[code[i + 2]], fr[code[i + 3]]) else 0
            elif op == MOVI:
                ir[code[i + 1]] = ir[code[i + 2]]
            elif op == MOVF:
                fr[code[i + 1]] = fr[code[i + 2]]
            elif op == PCMP:
                a = ir[code[i + 2]]
                b = ir[code[i + 3]]
                k = <int>code[i + 4]
                if wants_ptr_cmp:
                    host.ptr_cmp(box_i(a), box_i(b), ICMP_PREDS[k])
                    drop_cache(cache)
                ir[code[i + 1]] = 1 if icmp(k, a, b, 64) else 0
            elif op == SELI:
                ir[code[i + 1]] = ir[code[i + 3]] if ir[code[i + 2]] & 1 else ir[code[i + 4]]
            elif op == SELF:
                fr[code[i + 1]] = fr[code[i + 3]] if ir[code[i + 2]] & 1 else fr[code[i + 4]]
            elif op == CASTII:
                v = ir[code[i + 2]]
                if code[i + 3]:
                    v = <uint64_t>sext(v, <int>code[i + 4])
                ir[code[i + 1]] = v & wmask(<int>code[i + 5])
            elif op == CASTIF:
                v = ir[code[i + 2]]
                if code[i + 3]:
                    x = <double>sext(v, <int>code[i + 4])
                else:
                    x = <double>v
                fr[code[i + 1]] = f32(x) if code[i + 5] == 32 else x
            elif op == CASTFI:
                ir[code[i + 1]] = fptoint(fr[code[i + 2]], code[i + 3] != 0, <int>code[i + 4])
            elif op == CASTFF:
                x = fr[code[i + 2]]
                fr[code[i + 1]] = f32(x) if code[i + 3] == 32 else x
            elif op == BITIF:
                v = ir[code[i + 2]]
                if code[i + 3] == 32:
                    memcpy(&fv, &v, 4)
                    fr[code[i + 1]] = <double>fv
                else:
                    memcpy(&x, &v, 8)
                    fr[code[i + 1]] = x
            elif op == BITFI:
                x = fr[code[i + 2]]
                v = 0
                if code[i + 3] == 32:
                    fv = <float>x
                    memcpy(&v, &fv, 4)
                else:
                    memcpy(&v, &x, 8)
                ir[code[i + 1]] = v
            elif op == RET:
                k = <int>code[i + 1]
                if k < 0:
                    vals = []
                else:
                    vals = [fr[s] if isf else box_i(ir[s]) for isf, s in rets[k]]
                if allocas:
                    host.release(allocas)
                    drop_cache(cache)
                if depth == 0:
                    return vals
                depth -= 1
                cur = frames[depth].cur
                pc = frames[depth].pc
                ibase = frames[depth].ibase
                fbase = frames[depth].fbase
                cs = frames[depth].cs
                allocas = alloca_stack.pop()
                ir = R.i + ibase
                fr = R.f + fbase
                for (isf, s), val in zip(callsites[cs][1], vals):
                    if isf:
                        fr[<int64_t>s] = <double>val
                    else:
                        ir[<int64_t>s] = <uint64_t>val
            elif op == CALL or op == ICALL:
                cs = code[i + 2]
                if op == ICALL:
                    target = host.icall(code[i + 3], box_i(ir[code[i + 1]]), code[i + 4])
                    drop_cache(cache)
                    if target < 0:
                        vals = host.icall_stub(code[i + 3], code[i + 4])
                        drop_cache(cache)
                        for (isf, s), val in zip(callsites[cs][1], vals):
                            if isf:
                                fr[<int64_t>s] = <double>val
                            else:
                                ir[<int64_t>s] = <uint64_t>val
                        continue
                else:
                    target = code[i + 1]
                if depth >= MAX_DEPTH:
                    raise TrapSignal("StackOverflow", f"call depth exceeds {MAX_DEPTH}")
                frames[depth].cur = cur
                frames[depth].pc = pc
                frames[depth].ibase = ibase
                frames[depth].fbase = fbase
                frames[depth].cs = cs
                depth += 1
                alloca_stack.append(allocas)
                allocas = []
                nib = ibase + T.ni[cur]
                nfb = fbase + T.nf[cur]
                R.reserve(nib + T.ni[target], nfb + T.nf[target])
                ir = R.i + ibase
                fr = R.f + fbase
                nir = R.i + <int64_t>nib
                nfr = R.f + <int64_t>nfb
                memcpy(nir, T.it[target], T.ni[target] * sizeof(uint64_t))
                memcpy(nfr, T.ft[target], T.nf[target] * sizeof(double))
                f = funcs[target]
                for (isf, s), (isf2, s2) in zip(callsites[cs][0], f.param_slots):
                    if isf:
                        nfr[<int64_t>s2] = fr[<int64_t>s]
                    else:
                        nir[<int64_t>s2] = ir[<int64_t>s]
                ibase = nib
                fbase = nfb
                ir = nir
                fr = nfr
                cur = <int>target
                pc = f.entry_pc
                blk = f.entry_block
                record_block(&th, &tl, bc, trace, blk)
            elif op == XCALL:
                cs = code[i + 2]
                argv = [fr[s] if isf else box_i(ir[s]) for isf, s in callsites[cs][0]]
                vals = host.xcall(code[i + 1], argv, code[i + 3])
                drop_cache(cache)
                if host.charge:
                    steps += host.charge
                    host.charge = 0
                for (isf, s), val in zip(callsites[cs][1], vals):
                    if isf:
                        fr[<int64_t>s] = <double>val
                    else:
                        ir[<int64_t>s] = <uint64_t>val
            elif op == ALLOCA:
                val = host.alloca(code[i + 2], code[i + 3])
                drop_cache(cache)
                allocas.append(val)
                ir[code[i + 1]] = <uint64_t>val
            elif op == UNREACH:
                raise ExitSignal(None)
            else:
                raise TrapSignal("InvalidOpcode", str(op))
    finally:
        free(frames)
        prof.steps = steps
        prof.trace_hash = th
        prof.trace_len = tl
