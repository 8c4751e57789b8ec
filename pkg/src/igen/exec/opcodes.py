"""Flat instruction encoding shared by both interpreter kernels.

Every instruction is WIDTH int64 words: the opcode followed by up to seven
operands.  Register operands are slot numbers in the int or float register
file of the current frame; literals were moved into constant slots.
"""

WIDTH = 8

IBIN = 1      # dst, x, y, binop, width
FBIN = 2      # dst, x, y, fop, width
ICMP = 3      # dst, x, y, pred, width
PCMP = 4      # dst, x, y, pred, site
FCMP = 5      # dst, x, y, pred
GEP = 6       # dst, base, idx|-1, scale, disp, idx width
LOADI = 7     # dst, addr, kind, site, disp
LOADF = 8     # dst, addr, kind, site, disp
STOREI = 9    # val, addr, kind, disp
STOREF = 10   # val, addr, kind, disp
SELI = 11     # dst, cond, a, b
SELF = 12     # dst, cond, a, b
CASTII = 13   # dst, src, signed, from width, to width
CASTIF = 14   # dst, src, signed, from width, to width
CASTFI = 15   # dst, src, signed, to width
CASTFF = 16   # dst, src, to width
MOVI = 17     # dst, src
MOVF = 18     # dst, src
BITIF = 19    # dst, src, width
BR = 20       # cond, true pc, false pc, true block, false block, branch index
JMP = 21      # pc, block
RET = 22      # return descriptor index or -1
UNREACH = 23
CALL = 24     # function, callsite
XCALL = 25    # external, callsite, site
ICALL = 26    # fp, callsite, icall index, site
ALLOCA = 27   # dst, size, align
BITFI = 28    # dst, src, width

NAMES = {v: k for k, v in dict(globals()).items() if k.isupper() and isinstance(v, int) and k != "WIDTH"}

# binop codes are positions in igen.ir.model.BINOPS / FBINOPS,
# predicate codes positions in ICMP_PREDS / FCMP_PREDS.
ADD, SUB, MUL, SDIV, UDIV, SREM, UREM, AND, OR, XOR, SHL, LSHR, ASHR = range(13)
FADD, FSUB, FMUL, FDIV = range(4)
EQ, NE, SLT, SLE, SGT, SGE, ULT, ULE, UGT, UGE = range(10)
OEQ, ONE, OLT, OLE, OGT, OGE, ORD, UNO, UEQ, UNE, FULT, FULE, FUGT, FUGE = range(14)

MAX_DEPTH = 10_000
DEADLINE_MASK = 0xFFFF
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
