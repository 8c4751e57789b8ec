"""Register type inference and module validation."""

from __future__ import annotations

from typing import Optional

from .model import (BINOPS, FBINOPS, FloatLit, Function, Instr, IntLit, Module,
                    Null, Reg, Signature, Sym)
from .types import (F64, I1, I32, I64, PTR, VOID, FloatType, IntType, IrType,
                    PtrType, VoidType, size_of)

# Allow-listed library calls the runtime implements natively.
INTRINSICS: dict[str, Signature] = {
    "malloc": Signature((I64,), PTR),
    "free": Signature((PTR,), VOID),
    "memcpy": Signature((PTR, PTR, I64), PTR),
    "memset": Signature((PTR, I32, I64), PTR),
    "exit": Signature((I32,), VOID),
    "abort": Signature((), VOID),
}


def callee_signature(m: Module, name: str) -> Optional[Signature]:
    for f in m.functions:
        if f.name == name:
            return f.signature
    e = m.external(name)
    if e is not None:
        return e.signature
    return INTRINSICS.get(name)


def _is_int(t):
    return isinstance(t, IntType)


def _is_float(t):
    return isinstance(t, FloatType)


def _lit_type(a) -> Optional[IrType]:
    if isinstance(a, IntLit):
        return I64
    if isinstance(a, FloatLit):
        return F64
    if isinstance(a, (Null, Sym)):
        return PTR
    return None


class _Typer:
    def __init__(self, m: Module, f: Function):
        self.m = m
        self.f = f
        self.types: dict[str, IrType] = {n: t for n, t in f.params}
        self.diags: list[str] = []

    def diag(self, msg):
        self.diags.append(f"@{self.f.name}: {msg}")

    def reg_type(self, a) -> Optional[IrType]:
        return self.types.get(a.name) if isinstance(a, Reg) else None

    def first_reg_type(self, args):
        for a in args:
            t = self.reg_type(a)
            if t is not None:
                return t
        return None

    def result_type(self, ins: Instr) -> Optional[IrType]:
        op = ins.op
        if op in ("const", "load", "cast", "icall"):
            return ins.ty
        if op in BINOPS or op in FBINOPS:
            t = self.first_reg_type(ins.args)
            if t is None and all(isinstance(a, (IntLit, FloatLit)) for a in ins.args):
                t = F64 if op in FBINOPS else I64
            return t
        if op in ("icmp", "fcmp"):
            return I1
        if op in ("gep", "alloca"):
            return PTR
        if op == "select":
            t = self.first_reg_type(ins.args[1:])
            return t if t is not None else _lit_type(ins.args[1])
        if op == "call":
            sig = callee_signature(self.m, ins.callee)
            return sig.ret if sig is not None else None
        return None

    def infer(self):
        changed = True
        while changed:
            changed = False
            for ins in self.f.instructions():
                if ins.dst is None or ins.dst in self.types:
                    continue
                t = self.result_type(ins)
                if t is not None:
                    self.types[ins.dst] = t
                    changed = True

    # operand typing against an expected type; literals adopt the expectation
    def operand_ok(self, a, expected: IrType) -> bool:
        if isinstance(a, Reg):
            return self.types.get(a.name) == expected
        if isinstance(a, IntLit):
            return _is_int(expected)
        if isinstance(a, FloatLit):
            return _is_float(expected)
        if isinstance(a, (Null, Sym)):
            return isinstance(expected, PtrType)
        return False

    def check_sym(self, a):
        if isinstance(a, Sym) and self.m.global_(a.name) is None and not self.m.has_function(a.name):
            self.diag(f"unknown symbol @{a.name}")

    def check(self):
        f = self.f
        labels = {b.label for b in f.blocks}
        if not f.blocks:
            self.diag("function has no blocks")
        for ins in f.instructions():
            for a in ins.args:
                self.check_sym(a)
            if ins.op == "call" and callee_signature(self.m, ins.callee) is None:
                self.diags.append(f"unresolved callee @{ins.callee}")
                continue
            if ins.dst is not None:
                t = self.result_type(ins)
                have = self.types.get(ins.dst)
                if have is None:
                    self.diag(f"cannot infer type of %{ins.dst}")
                    continue
                if t is not None and t != have:
                    self.diag(f"%{ins.dst} redefined with type {t}, was {have}")
            self.check_instr(ins, labels)
        for b in f.blocks:
            if not b.instrs or not b.instrs[-1].is_terminator:
                self.diags.append(f"block %{b.label} lacks terminator")
            for ins in b.instrs[:-1]:
                if ins.is_terminator:
                    self.diag(f"block %{b.label} has a terminator before its end")
                    break

    def check_instr(self, ins: Instr, labels):
        op, a = ins.op, ins.args
        dt = self.types.get(ins.dst) if ins.dst is not None else None
        if op == "const":
            if not ins.ty.is_primitive or not self.operand_ok(a[0], ins.ty) or isinstance(a[0], Reg):
                self.diag(f"bad constant {a[0]} for type {ins.ty}")
        elif op in BINOPS or op in FBINOPS:
            want = _is_float if op in FBINOPS else _is_int
            if dt is None or not want(dt) or not all(self.operand_ok(x, dt) for x in a):
                self.diag(f"operand types of {op} do not match")
        elif op in ("icmp", "fcmp"):
            t = self.first_reg_type(a) or _lit_type(a[0])
            ok = t is not None and all(self.operand_ok(x, t) for x in a)
            if op == "icmp":
                ok = ok and (_is_int(t) or isinstance(t, PtrType))
            else:
                ok = ok and _is_float(t)
            if not ok:
                self.diag(f"operand types of {op} do not match")
        elif op == "gep":
            if not self.operand_ok(a[0], PTR):
                self.diag("gep base must be ptr")
            if len(a) > 1 and not _is_int(self.reg_type(a[1])):
                self.diag("gep index must be an integer register")
        elif op == "load":
            if not self.operand_ok(a[0], PTR):
                self.diag("load address must be ptr")
            if isinstance(ins.ty, VoidType) or size_of(ins.ty) == 0:
                self.diag(f"cannot load {ins.ty}")
        elif op == "store":
            if not self.operand_ok(a[1], PTR):
                self.diag("store address must be ptr")
            if not self.operand_ok(a[0], ins.ty):
                self.diag(f"stored value is not {ins.ty}")
        elif op == "call":
            self.check_call(callee_signature(self.m, ins.callee), a, ins)
        elif op == "icall":
            if not self.operand_ok(a[0], PTR):
                self.diag("icall target must be ptr")
            for x in a[1:]:
                if not isinstance(x, Reg) or x.name not in self.types:
                    self.diag("icall arguments must be typed registers")
            if ins.dst is not None and isinstance(ins.ty, VoidType):
                self.diag("void icall cannot define a register")
        elif op == "select":
            if not self.operand_ok(a[0], I1):
                self.diag("select condition must be i1")
            if dt is None or not dt.is_primitive or not all(self.operand_ok(x, dt) for x in a[1:]):
                self.diag("select operand types do not match")
        elif op == "cast":
            src = self.reg_type(a[0]) or _lit_type(a[0])
            if src is None or not cast_ok(ins.pred, src, ins.ty):
                self.diag(f"invalid cast {ins.pred} from {src} to {ins.ty}")
        elif op == "alloca":
            if isinstance(ins.ty, VoidType):
                self.diag("cannot alloca void")
        elif op == "br":
            if not self.operand_ok(a[0], I1):
                self.diag("branch condition must be i1")
            for lab in ins.labels:
                if lab not in labels:
                    self.diag(f"branch to unknown label %{lab}")
        elif op == "jmp":
            if ins.labels[0] not in labels:
                self.diag(f"branch to unknown label %{ins.labels[0]}")
        elif op == "ret":
            if self.f.returns_void:
                if a:
                    self.diag("void function returns a value")
            elif not a or not self.operand_ok(a[0], self.f.ret):
                self.diag(f"return value is not {self.f.ret}")

    def check_call(self, sig: Signature, args, ins):
        if len(args) != len(sig.params):
            self.diag(f"call to @{ins.callee} with {len(args)} args, expected {len(sig.params)}")
            return
        for i, (x, t) in enumerate(zip(args, sig.params)):
            if not self.operand_ok(x, t):
                self.diag(f"argument {i} of call to @{ins.callee} is not {t}")
        if ins.dst is not None and isinstance(sig.ret, VoidType):
            self.diag(f"void call to @{ins.callee} cannot define a register")


def cast_ok(kind: str, src: IrType, dst: IrType) -> bool:
    if kind in ("zext", "sext"):
        return _is_int(src) and _is_int(dst) and dst.width >= src.width
    if kind == "trunc":
        return _is_int(src) and _is_int(dst) and dst.width <= src.width
    if kind in ("sitofp", "uitofp"):
        return _is_int(src) and _is_float(dst)
    if kind in ("fptosi", "fptoui"):
        return _is_float(src) and _is_int(dst)
    if kind == "fpext":
        return _is_float(src) and _is_float(dst) and dst.width >= src.width
    if kind == "fptrunc":
        return _is_float(src) and _is_float(dst) and dst.width <= src.width
    if kind == "ptrtoint":
        return isinstance(src, PtrType) and _is_int(dst)
    if kind == "inttoptr":
        return _is_int(src) and isinstance(dst, PtrType)
    if kind == "bitcast":
        return src.is_primitive and dst.is_primitive and src != I1 and size_of(src) == size_of(dst)
    return False


def infer_register_types(m: Module, f: Function) -> dict[str, IrType]:
    t = _Typer(m, f)
    t.infer()
    return t.types


def validate_module(m: Module) -> list[str]:
    """Diagnostics for `m`; an empty list means the module is well formed."""
    diags = []
    for f in m.functions:
        t = _Typer(m, f)
        t.infer()
        t.check()
        diags.extend(t.diags)
    for e in m.externals:
        if e.name in INTRINSICS and e.signature != INTRINSICS[e.name]:
            diags.append(f"declaration of @{e.name} does not match its intrinsic signature")
    return diags
