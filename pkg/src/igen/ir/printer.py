"""Canonical text form of a module.

The output is what the input-file module hash is computed over, so it must be
stable: one top-level item or instruction per line, fixed spacing.
"""

from __future__ import annotations

from .model import BINOPS, FBINOPS, Function, Global, Instr, Module
from .types import ArrayType, IrType, StructType


def _const(c, ty: IrType) -> str:
    if isinstance(c, tuple):
        if isinstance(ty, StructType):
            return "{" + ", ".join(_const(x, t) for x, t in zip(c, ty.fields)) + "}"
        if isinstance(ty, ArrayType):
            return "[" + ", ".join(_const(x, ty.elem) for x in c) + "]"
        return "[" + ", ".join(_const(x, ty) for x in c) + "]"
    return str(c)


def _offset(ins: Instr) -> str:
    parts = ""
    if len(ins.args) > 1:
        parts = f"{ins.args[1]} * {ins.scale}"
        if ins.disp > 0:
            parts += f" + {ins.disp}"
        elif ins.disp < 0:
            parts += f" - {-ins.disp}"
        return parts
    return str(ins.disp)


def print_instr(ins: Instr) -> str:
    op = ins.op
    a = ins.args
    head = f"%{ins.dst} = " if ins.dst is not None else ""
    if op == "const":
        body = f"const {ins.ty} {a[0]}"
    elif op in BINOPS or op in FBINOPS:
        body = f"{op} {a[0]}, {a[1]}"
    elif op in ("icmp", "fcmp"):
        body = f"{op} {ins.pred} {a[0]}, {a[1]}"
    elif op == "gep":
        body = f"gep {a[0]}, {_offset(ins)}"
    elif op == "load":
        body = f"load {ins.ty} {a[0]}"
    elif op == "store":
        body = f"store {ins.ty} {a[0]}, {a[1]}"
    elif op == "call":
        body = f"call @{ins.callee}(" + ", ".join(map(str, a)) + ")"
    elif op == "icall":
        body = f"icall {ins.ty} {a[0]}(" + ", ".join(map(str, a[1:])) + ")"
    elif op == "select":
        body = f"select {a[0]}, {a[1]}, {a[2]}"
    elif op == "cast":
        body = f"cast {ins.pred} {a[0]} to {ins.ty}"
    elif op == "alloca":
        body = f"alloca {ins.ty}"
    elif op == "br":
        body = f"br {a[0]}, {ins.labels[0]}, {ins.labels[1]}"
    elif op == "jmp":
        body = f"jmp {ins.labels[0]}"
    elif op == "ret":
        body = "ret" + (f" {a[0]}" if a else "")
    elif op == "unreachable":
        body = "unreachable"
    else:
        raise ValueError(f"unknown opcode {op}")
    return head + body


def _global(g: Global) -> str:
    s = f"global @{g.name} : {g.ty}"
    if g.init is not None:
        s += " = " + _const(g.init, g.ty)
    return s


def _function(f: Function) -> list[str]:
    params = ", ".join(f"%{n}: {t}" for n, t in f.params)
    lines = [f"func @{f.name}({params}) -> {f.ret} {{"]
    for b in f.blocks:
        lines.append(f"{b.label}:")
        lines.extend("  " + print_instr(i) for i in b.instrs)
    lines.append("}")
    return lines


def print_module(m: Module) -> str:
    lines = [f"type {name} = {ty}" for name, ty in m.aliases]
    lines += [_global(g) for g in m.globals]
    for e in m.externals:
        s = f"declare @{e.name}(" + ", ".join(map(str, e.params)) + f") -> {e.ret}"
        lines.append(s + (" noreturn" if e.noreturn else ""))
    for f in m.functions:
        lines.extend(_function(f))
    return "\n".join(lines) + "\n"


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def module_hash(m: Module) -> int:
    return fnv1a64(print_module(m).encode("utf-8"))
