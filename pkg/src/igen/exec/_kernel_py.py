"""Reference interpreter loop in plain Python.

Selected when the compiled kernel is not built or IGEN_PURE_PYTHON=1.  The
compiled kernel mirrors this file opcode for opcode; both must produce the
same profiles, traces and memory effects.
"""

import math
import struct
import time

from ..errors import BudgetSignal, ExitSignal, TrapSignal
from ..ir.model import ICMP_PREDS
from .opcodes import (ADD, ALLOCA, AND, ASHR, BITFI, BITIF, BR, CALL, CASTFF,
                      CASTFI, CASTIF, CASTII, FADD, FBIN, FCMP, FMUL,
                      FNV_PRIME, FSUB, GEP, IBIN, ICALL, ICMP, JMP, LOADF,
                      LOADI, LSHR, MAX_DEPTH, MOVF, MOVI, MUL, OEQ, OGE, OGT,
                      OLE, OLT, ONE, OR, ORD, PCMP, RET, SDIV, SELF, SELI, SHL,
                      SLE, SLT, SGT, STOREF, STOREI, SUB, UDIV, UEQ,
                      ULE, ULT, UGT, UNE, UNO, UNREACH, UREM, XCALL, XOR,
                      EQ, NE, FULT, FULE, FUGT, FUGE)

M64 = 0xFFFFFFFFFFFFFFFF
MASK40 = (1 << 40) - 1
MASK = {1: 1, 8: 0xFF, 16: 0xFFFF, 32: 0xFFFFFFFF, 64: M64}
KSIZE = (1, 1, 2, 4, 8, 4, 8, 8)
ONES = [b"\x01" * n for n in range(9)]
_F32 = struct.Struct("<f")
_F64 = struct.Struct("<d")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_inf = math.inf
_nan = math.nan
_copysign = math.copysign


def _f32(x):
    try:
        return _F32.unpack(_F32.pack(x))[0]
    except OverflowError:
        return _copysign(_inf, x)


def _sext(v, w):
    s = 1 << (w - 1)
    return (v & (s - 1)) - (v & s)


def _fdiv(a, b):
    try:
        return a / b
    except ZeroDivisionError:
        if a != a or a == 0.0:
            return _nan
        return _copysign(_inf, a) * _copysign(1.0, b)


def _fcmp(p, a, b):
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


def _icmp(p, a, b, w):
    if p == EQ:
        return a == b
    if p == NE:
        return a != b
    if p >= ULT:
        if p == ULT:
            return a < b
        if p == ULE:
            return a <= b
        if p == UGT:
            return a > b
        return a >= b
    a = _sext(a, w)
    b = _sext(b, w)
    if p == SLT:
        return a < b
    if p == SLE:
        return a <= b
    if p == SGT:
        return a > b
    return a >= b


def _ibin(bop, a, b, w):
    m = MASK[w]
    if bop == ADD:
        return (a + b) & m
    if bop == SUB:
        return (a - b) & m
    if bop == MUL:
        return (a * b) & m
    if bop == AND:
        return a & b
    if bop == OR:
        return a | b
    if bop == XOR:
        return a ^ b
    if bop == SHL:
        return (a << (b % w)) & m
    if bop == LSHR:
        return a >> (b % w)
    if bop == ASHR:
        return (_sext(a, w) >> (b % w)) & m
    if b == 0:
        raise TrapSignal("DivByZero")
    if bop == UDIV:
        return a // b
    if bop == UREM:
        return a % b
    sa = _sext(a, w)
    sb = _sext(b, w)
    q = abs(sa) // abs(sb)
    if (sa < 0) != (sb < 0):
        q = -q
    if bop == SDIV:
        return q & m
    return (sa - q * sb) & m


def _fptoint(v, signed, w):
    if v != v:
        return 0
    if signed:
        top = float(1 << (w - 1))
        if v >= top:
            return (1 << (w - 1)) - 1
        if v < -top:
            return (-(1 << (w - 1))) & MASK[w]
        return int(v) & MASK[w]
    if v >= float(1 << w):
        return MASK[w]
    if v <= -1.0:
        return 0
    return int(v)


def execute(prog, host, fidx, args, itemps, ftemps, prof, step_budget, deadline):
    """Run function `fidx` to completion and return its flattened result.

    Raises the control-flow signals from igen.errors for every other ending.
    """
    code = prog.code.tolist()
    funcs = prog.funcs
    callsites = prog.callsites
    rets = prog.rets
    bc = prof.block_counts
    brc = prof.branch_counts
    trace = prof.trace
    th = prof.trace_hash
    tl = prof.trace_len
    steps = prof.steps
    segs = host.segs
    monotonic = time.monotonic

    f = funcs[fidx]
    ir = list(itemps[fidx])
    fr = list(ftemps[fidx])
    for (isf, s), v in zip(f.param_slots, args):
        if isf:
            fr[s] = v
        else:
            ir[s] = v
    frames = []
    allocas = []
    cur = fidx
    pc = f.entry_pc
    blk = f.entry_block
    bc[blk] += 1
    th = ((th ^ blk) * FNV_PRIME) & M64
    tl += 1
    if trace is not None:
        trace.append(blk)
    try:
        while True:
            steps += 1
            if steps > step_budget:
                raise BudgetSignal("steps")
            if not steps & 0xFFFF and monotonic() > deadline:
                raise BudgetSignal("timeout")
            i = pc * 8
            op = code[i]
            pc += 1
            if op == LOADI:
                raw = (ir[code[i + 2]] + code[i + 5]) & M64
                k = code[i + 3]
                n = KSIZE[k]
                seg = segs.get(raw >> 40)
                if seg is not None:
                    o = (raw & MASK40) - seg.lo
                    data = seg.data
                    if o >= 0 and o + n <= len(data):
                        init = seg.init
                        if init is None or init.find(0, o, o + n) < 0:
                            v = int.from_bytes(data[o:o + n], "little")
                            ir[code[i + 1]] = v & 1 if k == 0 else v
                            continue
                ir[code[i + 1]] = host.load(raw, k, code[i + 4])
            elif op == IBIN:
                ir[code[i + 1]] = _ibin(code[i + 4], ir[code[i + 2]], ir[code[i + 3]], code[i + 5])
            elif op == GEP:
                off = code[i + 5]
                x = code[i + 3]
                if x >= 0:
                    off += _sext(ir[x], code[i + 6]) * code[i + 4]
                ir[code[i + 1]] = (ir[code[i + 2]] + off) & M64
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
                bc[blk] += 1
                th = ((th ^ blk) * FNV_PRIME) & M64
                tl += 1
                if trace is not None:
                    trace.append(blk)
            elif op == ICMP:
                ir[code[i + 1]] = 1 if _icmp(code[i + 4], ir[code[i + 2]], ir[code[i + 3]], code[i + 5]) else 0
            elif op == JMP:
                pc = code[i + 1]
                blk = code[i + 2]
                bc[blk] += 1
                th = ((th ^ blk) * FNV_PRIME) & M64
                tl += 1
                if trace is not None:
                    trace.append(blk)
            elif op == LOADF:
                raw = (ir[code[i + 2]] + code[i + 5]) & M64
                k = code[i + 3]
                n = KSIZE[k]
                seg = segs.get(raw >> 40)
                if seg is not None:
                    o = (raw & MASK40) - seg.lo
                    data = seg.data
                    if o >= 0 and o + n <= len(data):
                        init = seg.init
                        if init is None or init.find(0, o, o + n) < 0:
                            fr[code[i + 1]] = (_F64 if n == 8 else _F32).unpack_from(data, o)[0]
                            continue
                fr[code[i + 1]] = host.load(raw, k, code[i + 4])
            elif op == STOREI or op == STOREF:
                raw = (ir[code[i + 2]] + code[i + 4]) & M64
                k = code[i + 3]
                v = fr[code[i + 1]] if op == STOREF else ir[code[i + 1]]
                n = KSIZE[k]
                seg = segs.get(raw >> 40)
                if seg is not None:
                    o = (raw & MASK40) - seg.lo
                    data = seg.data
                    if o >= 0 and o + n <= len(data):
                        if op == STOREF:
                            data[o:o + n] = (_F64 if n == 8 else _F32).pack(v)
                        else:
                            data[o:o + n] = v.to_bytes(n, "little")
                        init = seg.init
                        if init is not None:
                            init[o:o + n] = ONES[n]
                        continue
                host.store(raw, k, v)
            elif op == FBIN:
                a = fr[code[i + 2]]
                b = fr[code[i + 3]]
                fop = code[i + 4]
                if fop == FADD:
                    r = a + b
                elif fop == FSUB:
                    r = a - b
                elif fop == FMUL:
                    r = a * b
                else:
                    r = _fdiv(a, b)
                fr[code[i + 1]] = _f32(r) if code[i + 5] == 32 else r
            elif op == FCMP:
                ir[code[i + 1]] = 1 if _fcmp(code[i + 4], fr[code[i + 2]], fr[code[i + 3]]) else 0
            elif op == MOVI:
                ir[code[i + 1]] = ir[code[i + 2]]
            elif op == MOVF:
                fr[code[i + 1]] = fr[code[i + 2]]
            elif op == PCMP:
                a = ir[code[i + 2]]
                b = ir[code[i + 3]]
                p = code[i + 4]
                if host.wants_ptr_cmp:
                    host.ptr_cmp(a, b, ICMP_PREDS[p])
                ir[code[i + 1]] = 1 if _icmp(p, a, b, 64) else 0
            elif op == SELI:
                ir[code[i + 1]] = ir[code[i + 3]] if ir[code[i + 2]] & 1 else ir[code[i + 4]]
            elif op == SELF:
                fr[code[i + 1]] = fr[code[i + 3]] if ir[code[i + 2]] & 1 else fr[code[i + 4]]
            elif op == CASTII:
                v = ir[code[i + 2]]
                if code[i + 3]:
                    v = _sext(v, code[i + 4])
                ir[code[i + 1]] = v & MASK[code[i + 5]]
            elif op == CASTIF:
                v = ir[code[i + 2]]
                if code[i + 3]:
                    v = _sext(v, code[i + 4])
                r = float(v)
                fr[code[i + 1]] = _f32(r) if code[i + 5] == 32 else r
            elif op == CASTFI:
                ir[code[i + 1]] = _fptoint(fr[code[i + 2]], code[i + 3], code[i + 4])
            elif op == CASTFF:
                v = fr[code[i + 2]]
                fr[code[i + 1]] = _f32(v) if code[i + 3] == 32 else v
            elif op == BITIF:
                v = ir[code[i + 2]]
                if code[i + 3] == 32:
                    fr[code[i + 1]] = _F32.unpack(_U32.pack(v))[0]
                else:
                    fr[code[i + 1]] = _F64.unpack(_U64.pack(v))[0]
            elif op == BITFI:
                v = fr[code[i + 2]]
                if code[i + 3] == 32:
                    ir[code[i + 1]] = _U32.unpack(_F32.pack(v))[0]
                else:
                    ir[code[i + 1]] = _U64.unpack(_F64.pack(v))[0]
            elif op == RET:
                d = code[i + 1]
                vals = [] if d < 0 else [fr[s] if isf else ir[s] for isf, s in rets[d]]
                if allocas:
                    host.release(allocas)
                if not frames:
                    return vals
                cur, pc, ir, fr, cs, allocas = frames.pop()
                for (isf, s), v in zip(callsites[cs][1], vals):
                    if isf:
                        fr[s] = v
                    else:
                        ir[s] = v
            elif op == CALL or op == ICALL:
                cs = code[i + 2]
                if op == ICALL:
                    target = host.icall(code[i + 3], ir[code[i + 1]], code[i + 4])
                    if target < 0:
                        vals = host.icall_stub(code[i + 3], code[i + 4])
                        for (isf, s), v in zip(callsites[cs][1], vals):
                            if isf:
                                fr[s] = v
                            else:
                                ir[s] = v
                        continue
                else:
                    target = code[i + 1]
                if len(frames) >= MAX_DEPTH:
                    raise TrapSignal("StackOverflow", f"call depth exceeds {MAX_DEPTH}")
                argv = [fr[s] if isf else ir[s] for isf, s in callsites[cs][0]]
                frames.append((cur, pc, ir, fr, cs, allocas))
                cur = target
                f = funcs[target]
                ir = list(itemps[target])
                fr = list(ftemps[target])
                for (isf, s), v in zip(f.param_slots, argv):
                    if isf:
                        fr[s] = v
                    else:
                        ir[s] = v
                allocas = []
                pc = f.entry_pc
                blk = f.entry_block
                bc[blk] += 1
                th = ((th ^ blk) * FNV_PRIME) & M64
                tl += 1
                if trace is not None:
                    trace.append(blk)
            elif op == XCALL:
                cs = code[i + 2]
                argv = [fr[s] if isf else ir[s] for isf, s in callsites[cs][0]]
                vals = host.xcall(code[i + 1], argv, code[i + 3])
                if host.charge:
                    steps += host.charge
                    host.charge = 0
                for (isf, s), v in zip(callsites[cs][1], vals):
                    if isf:
                        fr[s] = v
                    else:
                        ir[s] = v
            elif op == ALLOCA:
                a = host.alloca(code[i + 2], code[i + 3])
                allocas.append(a)
                ir[code[i + 1]] = a
            elif op == UNREACH:
                raise ExitSignal(None)
            else:
                raise TrapSignal("InvalidOpcode", str(op))
    finally:
        prof.steps = steps
        prof.trace_hash = th
        prof.trace_len = tl

