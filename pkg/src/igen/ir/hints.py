"""Static branch hints linking freshly generated values to the branch they decide.

Only the simplest shape is recognised: inside one block, a register produced
by a load (or a stubbed external call) is compared against a constant and the
comparison feeds the block's conditional branch.  Anything further away from
the branch gets no hint.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .model import FloatLit, Function, IntLit, Module, Reg, site_bases
from .prepare import CalleeKind, classify_callee
from .types import IrType


@dataclass(frozen=True)
class BranchHint:
    branch_site: int
    value_site: int
    op: str  # icmp | fcmp
    pred: str
    const: Union[int, float]
    value_on_lhs: bool
    value_type: IrType


def _const_value(a, consts: dict) -> Optional[Union[int, float]]:
    if isinstance(a, (IntLit, FloatLit)):
        return a.value
    if isinstance(a, Reg):
        return consts.get(a.name)
    return None


def extract_branch_hints(f: Function, m: Module, site_base: int = None) -> list[BranchHint]:
    if site_base is None:
        site_base = site_bases(m)[f.name]
    hints = []
    site = site_base
    for b in f.blocks:
        hint = _block_hint(b.instrs, site, m)
        if hint is not None:
            hints.append(hint)
        site += len(b.instrs)
    return hints


def _last_def(instrs, name, before):
    for j in range(before - 1, -1, -1):
        if instrs[j].dst == name:
            return j
    return None


def _block_hint(instrs, base, m: Module) -> Optional[BranchHint]:
    if not instrs:
        return None
    br = instrs[-1]
    if br.op != "br" or not isinstance(br.args[0], Reg):
        return None
    ci = _last_def(instrs, br.args[0].name, len(instrs) - 1)
    if ci is None or instrs[ci].op not in ("icmp", "fcmp"):
        return None
    cmp = instrs[ci]
    # registers holding a `const` at the compare, local to this block
    consts = {}
    for ins in instrs[:ci]:
        if ins.dst is not None:
            consts.pop(ins.dst, None)
            if ins.op == "const" and isinstance(ins.args[0], (IntLit, FloatLit)):
                consts[ins.dst] = ins.args[0].value
    lhs, rhs = cmp.args
    for value, other, on_lhs in ((lhs, rhs, True), (rhs, lhs, False)):
        if not isinstance(value, Reg) or value.name in consts:
            continue
        c = _const_value(other, consts)
        if c is None:
            continue
        vi = _last_def(instrs, value.name, ci)
        if vi is None:
            continue
        src = instrs[vi]
        if src.op == "load" and src.ty.is_primitive:
            vty = src.ty
        elif src.op == "call" and classify_callee(m, src.callee).kind is CalleeKind.STUBBED:
            e = m.external(src.callee)
            vty = e.ret
        else:
            continue
        if str(vty) == "ptr":
            continue
        return BranchHint(base + len(instrs) - 1, base + vi, cmp.op, cmp.pred, c, on_lhs, vty)
    return None
