"""Compile a validated module into the flat code the kernels execute."""

from __future__ import annotations

from array import array
from dataclasses import dataclass, field
from typing import Optional

from ..errors import IgenError
from ..ir.model import (BINOPS, FBINOPS, FCMP_PREDS, ICMP_PREDS,
                        FloatLit, Function, IntLit, Module, Null, Reg, Sym)
from ..ir.prepare import (STUB, CalleeKind, CallGraph, classify_callee,
                          icall_signature, indirect_candidates)
from ..ir.types import (FLOAT_KINDS, K_F32, K_PTR, FloatType, IntType, IrType, PtrType,
                        VoidType, align_of, flatten, kind_of, size_of)
from ..ir.validate import callee_signature, infer_register_types
from ..values import MASKS, to_f32
from . import opcodes as O


@dataclass
class FuncCode:
    name: str
    index: int
    entry_pc: int
    entry_block: int
    n_blocks: int
    param_slots: list  # [(is_float, slot)] flattened over all params
    param_kinds: list
    itemplate: list
    ftemplate: list
    sym_fixups: list  # [(slot, symbol)]
    ret_kinds: list


@dataclass
class ExtInfo:
    name: str
    kind: CalleeKind
    intrinsic: Optional[str]
    ret_kinds: list
    arg_kinds: list


@dataclass
class ICallInfo:
    caller: str
    signature: object
    candidates: list  # callee names, STUB last
    ret_kinds: list


@dataclass
class Program:
    code: array
    funcs: list
    func_index: dict
    callsites: list  # [(arg slots, dst slots)]
    rets: list  # [ret slots]
    exts: list
    icalls: list
    n_blocks: int
    n_branches: int
    block_names: list  # block id -> (function, label)
    branch_sites: list  # branch index -> site id
    branch_index: dict  # site id -> branch index
    block_func: list  # block id -> function index
    load_sites: dict = field(default_factory=dict)

    def templates(self, sym_addr) -> tuple[list, list]:
        """Per-function register templates with symbol addresses filled in."""
        its, fts = [], []
        for f in self.funcs:
            it = list(f.itemplate)
            for slot, sym in f.sym_fixups:
                it[slot] = sym_addr(sym)
            its.append(it)
            fts.append(list(f.ftemplate))
        return its, fts


class _FuncCompiler:
    def __init__(self, prog_builder, f: Function, findex: int, site_base: int):
        self.pb = prog_builder
        self.m = prog_builder.m
        self.f = f
        self.findex = findex
        self.site = site_base
        self.types = infer_register_types(self.m, f)
        self.ni = 0
        self.nf = 0
        self.slots: dict[str, list] = {}  # reg -> [(is_float, slot, kind, offset)]
        self.itemplate: list = []
        self.ftemplate: list = []
        self.iconst: dict = {}
        self.fconst: dict = {}
        self.sym_fixups: list = []
        self.fixups: list = []  # (pc, word, label) patched once block pcs are known
        for name, ty in f.params:
            self.reg(name, ty)
        for name, ty in self.types.items():
            self.reg(name, ty)

    def new_slot(self, is_float: bool) -> int:
        if is_float:
            self.ftemplate.append(0.0)
            self.nf += 1
            return self.nf - 1
        self.itemplate.append(0)
        self.ni += 1
        return self.ni - 1

    def reg(self, name, ty: IrType):
        if name in self.slots:
            return self.slots[name]
        comps = []
        for off, t in flatten(ty):
            k = kind_of(t)
            comps.append((k in FLOAT_KINDS, self.new_slot(k in FLOAT_KINDS), k, off))
        self.slots[name] = comps
        return comps

    def const_slot(self, value, kind: int) -> int:
        if kind in FLOAT_KINDS:
            v = float(value)
            v = to_f32(v) if kind == K_F32 else v
            key = repr(v)
            if key not in self.fconst:
                s = self.new_slot(True)
                self.ftemplate[s] = v
                self.fconst[key] = s
            return self.fconst[key]
        v = int(value) & MASKS[kind]
        if v not in self.iconst:
            s = self.new_slot(False)
            self.itemplate[s] = v
            self.iconst[v] = s
        return self.iconst[v]

    def operand(self, a, ty: IrType) -> list:
        """Slots (is_float, slot) holding operand `a` interpreted at type `ty`."""
        if isinstance(a, Reg):
            return [(c[0], c[1]) for c in self.slots[a.name]]
        k = kind_of(ty)
        if isinstance(a, IntLit):
            return [(False, self.const_slot(a.value, k))]
        if isinstance(a, FloatLit):
            return [(True, self.const_slot(a.value, k))]
        if isinstance(a, Null):
            return [(False, self.const_slot(0, K_PTR))]
        if isinstance(a, Sym):
            s = self.new_slot(False)
            self.sym_fixups.append((s, a.name))
            return [(False, s)]
        raise IgenError(f"bad operand {a!r}")

    def one(self, a, ty) -> int:
        return self.operand(a, ty)[0][1]

    def optype(self, *args) -> Optional[IrType]:
        for a in args:
            if isinstance(a, Reg):
                return self.types.get(a.name) or dict(self.f.params).get(a.name)
        for a in args:
            if isinstance(a, (Null, Sym)):
                return PtrType()
            if isinstance(a, FloatLit):
                return FloatType(64)
        return IntType(64)

    def dst(self, name) -> list:
        return self.slots[name]

    def emit(self, *words):
        self.pb.emit(*words)

    def compile(self):
        pb = self.pb
        f = self.f
        entry_pc = len(pb.code) // O.WIDTH
        self.block_pc = {}
        self.block_id = {}
        for b in f.blocks:
            self.block_id[b.label] = pb.new_block(self.findex, f.name, b.label)
        for b in f.blocks:
            self.block_pc[b.label] = len(pb.code) // O.WIDTH
            for ins in b.instrs:
                self.instr(ins)
                self.site += 1
        for pc, word, label in self.fixups:
            pb.code[pc * O.WIDTH + word] = self.block_pc[label]
        ret_kinds = [kind_of(t) for _, t in flatten(f.ret)] if not isinstance(f.ret, VoidType) else []
        params = []
        pkinds = []
        for name, _ in f.params:
            for c in self.slots[name]:
                params.append((c[0], c[1]))
                pkinds.append(c[2])
        return FuncCode(f.name, self.findex, entry_pc, self.block_id[f.blocks[0].label],
                        len(f.blocks), params, pkinds, self.itemplate, self.ftemplate,
                        self.sym_fixups, ret_kinds)

    def instr(self, ins):
        op, a = ins.op, ins.args
        pc = len(self.pb.code) // O.WIDTH
        if op == "const":
            d = self.dst(ins.dst)[0]
            s = self.operand(a[0], ins.ty)[0][1]
            self.emit(O.MOVF if d[0] else O.MOVI, d[1], s)
        elif op in BINOPS:
            ty = self.types[ins.dst]
            self.emit(O.IBIN, self.dst(ins.dst)[0][1], self.one(a[0], ty), self.one(a[1], ty),
                      BINOPS.index(op), ty.width)
        elif op in FBINOPS:
            ty = self.types[ins.dst]
            self.emit(O.FBIN, self.dst(ins.dst)[0][1], self.one(a[0], ty), self.one(a[1], ty),
                      FBINOPS.index(op), ty.width)
        elif op == "icmp":
            ty = self.optype(*a)
            d = self.dst(ins.dst)[0][1]
            x, y = self.one(a[0], ty), self.one(a[1], ty)
            if isinstance(ty, PtrType):
                self.emit(O.PCMP, d, x, y, ICMP_PREDS.index(ins.pred), self.site)
            else:
                self.emit(O.ICMP, d, x, y, ICMP_PREDS.index(ins.pred), ty.width)
        elif op == "fcmp":
            ty = self.optype(*a)
            self.emit(O.FCMP, self.dst(ins.dst)[0][1], self.one(a[0], ty), self.one(a[1], ty),
                      FCMP_PREDS.index(ins.pred))
        elif op == "gep":
            base = self.one(a[0], PtrType())
            if len(a) > 1:
                ity = self.types[a[1].name] if a[1].name in self.types else dict(self.f.params)[a[1].name]
                idx, w = self.one(a[1], ity), ity.width
            else:
                idx, w = -1, 64
            self.emit(O.GEP, self.dst(ins.dst)[0][1], base, idx, ins.scale, ins.disp, w)
        elif op == "load":
            addr = self.one(a[0], PtrType())
            for isf, slot, k, off in self.dst(ins.dst):
                self.emit(O.LOADF if isf else O.LOADI, slot, addr, k, self.site, off)
            self.pb.load_sites[self.site] = ins.ty
        elif op == "store":
            addr = self.one(a[1], PtrType())
            vals = self.operand(a[0], ins.ty) if ins.ty.is_primitive else \
                [(c[0], c[1]) for c in self.slots[a[0].name]]
            for (isf, slot), (off, t) in zip(vals, flatten(ins.ty)):
                self.emit(O.STOREF if isf else O.STOREI, slot, addr, kind_of(t), off)
        elif op == "call":
            self.call(ins)
        elif op == "icall":
            self.icall(ins)
        elif op == "select":
            ty = self.types[ins.dst]
            d = self.dst(ins.dst)[0]
            self.emit(O.SELF if d[0] else O.SELI, d[1], self.one(a[0], IntType(1)),
                      self.one(a[1], ty), self.one(a[2], ty))
        elif op == "cast":
            self.cast(ins)
        elif op == "alloca":
            self.emit(O.ALLOCA, self.dst(ins.dst)[0][1], size_of(ins.ty), max(align_of(ins.ty), 16))
        elif op == "br":
            c = self.one(a[0], IntType(1))
            bi = self.pb.new_branch(self.site)
            self.emit(O.BR, c, 0, 0, self.block_id[ins.labels[0]], self.block_id[ins.labels[1]], bi)
            self.fixups.append((pc, 2, ins.labels[0]))
            self.fixups.append((pc, 3, ins.labels[1]))
        elif op == "jmp":
            self.emit(O.JMP, 0, self.block_id[ins.labels[0]])
            self.fixups.append((pc, 1, ins.labels[0]))
        elif op == "ret":
            if a:
                slots = self.operand(a[0], self.f.ret) if self.f.ret.is_primitive else \
                    [(c[0], c[1]) for c in self.slots[a[0].name]]
                self.pb.rets.append(slots)
                self.emit(O.RET, len(self.pb.rets) - 1)
            else:
                self.emit(O.RET, -1)
        elif op == "unreachable":
            self.emit(O.UNREACH)
        else:
            raise IgenError(f"cannot compile {op}")

    def arg_slots(self, args, types) -> list:
        out = []
        for x, t in zip(args, types):
            if t.is_primitive or not isinstance(x, Reg):
                out.extend(self.operand(x, t))
            else:
                out.extend((c[0], c[1]) for c in self.slots[x.name])
        return out

    def dst_slots(self, ins) -> list:
        if ins.dst is None:
            return []
        return [(c[0], c[1]) for c in self.slots[ins.dst]]

    def call(self, ins):
        pb = self.pb
        cls = classify_callee(self.m, ins.callee)
        if cls.kind is CalleeKind.DEFINED:
            target = self.m.function(ins.callee)
            cs = pb.callsite(self.arg_slots(ins.args, target.signature.params), self.dst_slots(ins))
            self.emit(O.CALL, pb.func_index[ins.callee], cs)
            return
        sig = callee_signature(self.m, ins.callee)
        cs = pb.callsite(self.arg_slots(ins.args, sig.params), self.dst_slots(ins))
        ext = pb.ext(ins.callee, cls, sig)
        self.emit(O.XCALL, ext, cs, self.site)

    def icall(self, ins):
        pb = self.pb
        sig = icall_signature(ins, self.types_with_params())
        cands = indirect_candidates(self.m, self.f.name, sig, pb.cg)
        cs = pb.callsite(self.arg_slots(ins.args[1:], sig.params), self.dst_slots(ins))
        rk = [] if isinstance(sig.ret, VoidType) else [kind_of(t) for _, t in flatten(sig.ret)]
        pb.icalls.append(ICallInfo(self.f.name, sig, cands, rk))
        self.emit(O.ICALL, self.one(ins.args[0], PtrType()), cs, len(pb.icalls) - 1, self.site)

    def types_with_params(self):
        t = dict(self.f.params)
        t.update(self.types)
        return t

    def cast(self, ins):
        kind = ins.pred
        src_ty = self.optype(ins.args[0])
        src = self.one(ins.args[0], src_ty)
        d = self.dst(ins.dst)[0][1]
        dty = ins.ty

        def width(t):
            return 64 if isinstance(t, PtrType) else t.width

        if kind in ("zext", "trunc", "ptrtoint", "inttoptr"):
            self.emit(O.CASTII, d, src, 0, width(src_ty), width(dty))
        elif kind == "sext":
            self.emit(O.CASTII, d, src, 1, width(src_ty), width(dty))
        elif kind in ("sitofp", "uitofp"):
            self.emit(O.CASTIF, d, src, int(kind == "sitofp"), width(src_ty), dty.width)
        elif kind in ("fptosi", "fptoui"):
            self.emit(O.CASTFI, d, src, int(kind == "fptosi"), dty.width)
        elif kind in ("fpext", "fptrunc"):
            self.emit(O.CASTFF, d, src, dty.width)
        elif kind == "bitcast":
            sf, df = isinstance(src_ty, FloatType), isinstance(dty, FloatType)
            if sf and df:
                self.emit(O.CASTFF, d, src, dty.width)
            elif not sf and not df:
                self.emit(O.CASTII, d, src, 0, width(src_ty), width(dty))
            elif df:
                self.emit(O.BITIF, d, src, dty.width)
            else:
                self.emit(O.BITFI, d, src, width(dty))
        else:
            raise IgenError(f"unknown cast {kind}")


class _ProgramBuilder:
    def __init__(self, m: Module):
        self.m = m
        self.code = array("q")
        self.callsites: list = []
        self._callsite_ids: dict = {}
        self.rets: list = []
        self.exts: list = []
        self._ext_ids: dict = {}
        self.icalls: list = []
        self.block_names: list = []
        self.block_func: list = []
        self.branch_sites: list = []
        self.load_sites: dict = {}
        self.func_index = {f.name: i for i, f in enumerate(m.functions)}
        self.cg = CallGraph(m)

    def emit(self, *words):
        if len(words) > O.WIDTH:
            raise IgenError("instruction too wide")
        self.code.extend(words)
        self.code.extend([0] * (O.WIDTH - len(words)))

    def new_block(self, findex, fname, label) -> int:
        self.block_names.append((fname, label))
        self.block_func.append(findex)
        return len(self.block_names) - 1

    def new_branch(self, site) -> int:
        self.branch_sites.append(site)
        return len(self.branch_sites) - 1

    def callsite(self, args, dsts) -> int:
        key = (tuple(args), tuple(dsts))
        if key not in self._callsite_ids:
            self.callsites.append(key)
            self._callsite_ids[key] = len(self.callsites) - 1
        return self._callsite_ids[key]

    def ext(self, name, cls, sig) -> int:
        if name not in self._ext_ids:
            rk = [] if isinstance(sig.ret, VoidType) else [kind_of(t) for _, t in flatten(sig.ret)]
            ak = [kind_of(t) for p in sig.params for _, t in flatten(p)]
            self.exts.append(ExtInfo(name, cls.kind, cls.intrinsic, rk, ak))
            self._ext_ids[name] = len(self.exts) - 1
        return self._ext_ids[name]


def compile_module(m: Module) -> Program:
    pb = _ProgramBuilder(m)
    funcs = []
    site = 0
    for i, f in enumerate(m.functions):
        fc = _FuncCompiler(pb, f, i, site)
        funcs.append(fc.compile())
        site += sum(len(b.instrs) for b in f.blocks)
    return Program(pb.code, funcs, pb.func_index, pb.callsites, pb.rets, pb.exts, pb.icalls,
                   len(pb.block_names), len(pb.branch_sites), pb.block_names, pb.branch_sites,
                   {s: i for i, s in enumerate(pb.branch_sites)}, pb.block_func, pb.load_sites)


__all__ = ["Program", "FuncCode", "ExtInfo", "ICallInfo", "compile_module", "STUB"]
