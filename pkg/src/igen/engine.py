"""One generation attempt and one replay, on top of a prepared module."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

from .errors import (BudgetSignal, DumpError, ExitSignal, IgenError, PoolExhausted,
                     RollbackSignal, TrapSignal)
from .exec import get_kernel
from .exec.host import GenerateHost, ReplayHost
from .exec.outcome import ExitKind, Profile, budget, graceful, normal, trapped
from .exec.program import Program, compile_module
from .genrt import GenConfig, GenRuntime
from .inputfmt import (REPLAY_ARENA_BASE, REPLAY_BYTE_BASE, GeneratedInput, LoadedImage,
                       dump, load)
from .ir.hints import extract_branch_hints
from .ir.model import Module, site_bases
from .ir.parser import parse_module
from .ir.prepare import CallGraph, function_scope
from .ir.printer import module_hash
from .ir.types import FLOAT_KINDS, K_PTR, align_of, flatten, size_of
from .ir.validate import validate_module
from .memory import (GLOBAL_SEGMENT, MemoryPool, decode, function_address, function_index,
                     initializer_bytes, offset_between)
from .values import MASKS


class InvalidModule(IgenError):
    def __init__(self, diags):
        super().__init__("; ".join(diags))
        self.diags = diags


@dataclass
class Prepared:
    module: Module
    hash: int
    program: Program
    callgraph: CallGraph
    hints: dict  # value site -> BranchHint
    module_sigs: list  # function index -> Signature

    def scope(self, entry: str) -> list[str]:
        return function_scope(self.module, entry, self.callgraph)

    def scope_blocks(self, entry: str) -> list[int]:
        fids = {self.program.func_index[n] for n in self.scope(entry)}
        return [b for b, fi in enumerate(self.program.block_func) if fi in fids]


def prepare(source) -> Prepared:
    """Parse (if given text), validate and compile a module."""
    m = parse_module(source) if isinstance(source, str) else source
    diags = validate_module(m)
    if diags:
        raise InvalidModule(diags)
    prog = compile_module(m)
    bases = site_bases(m)
    hints = {}
    for f in m.functions:
        for h in extract_branch_hints(f, m, bases[f.name]):
            hints.setdefault(h.value_site, h)
    return Prepared(m, module_hash(m), prog, CallGraph(m), hints,
                    [f.signature for f in m.functions])


def _setup_pool(prep: Prepared) -> tuple[MemoryPool, callable]:
    pool = MemoryPool()
    m = prep.module
    for g in m.globals:
        pool.register_global(g.name, size_of(g.ty), align_of(g.ty))

    def sym_addr(name):
        g = pool.global_by_name.get(name)
        return g.base_raw if g is not None else function_address(prep.program.func_index[name])

    for g in m.globals:
        if g.init is not None:
            pool.write_bytes(pool.global_by_name[g.name].base_raw,
                             initializer_bytes(g.ty, g.init, sym_addr))
    return pool, sym_addr


@dataclass
class Attempt:
    status: str  # "success" | "rollback" | "failure"
    exit: Optional[ExitKind] = None
    constraint: object = None
    input: Optional[GeneratedInput] = None
    profile: Optional[Profile] = None
    reason: str = ""
    hint_uses: int = 0


def _arg_override(f, overrides: dict):
    """Flattened index -> pinned value, for scalar parameters named in `overrides`."""
    out = {}
    i = 0
    for name, ty in f.params:
        n = len(flatten(ty))
        if name in overrides and n == 1:
            out[i] = overrides[name]
        i += n
    return out


def generate_attempt(prep: Prepared, entry: str, config: GenConfig, seed: int,
                     constraints: Optional[dict] = None, branch_counts=None,
                     backend: Optional[str] = None, record_trace: bool = False) -> Attempt:
    """Run `entry` once in generation mode.

    A rollback returns the new constraint; the caller folds it into the set
    and retries.  Success carries the dumped input and the run's profile.
    """
    prog = prep.program
    fidx = prog.func_index[entry]
    fc = prog.funcs[fidx]
    pool, sym_addr = _setup_pool(prep)
    rt = GenRuntime(pool, config, seed, constraints, prep.hints, branch_counts, prog.branch_index)
    host = GenerateHost(prog, pool, rt, prep.module_sigs)
    prof = Profile.for_program(prog, record_trace)
    pinned = _arg_override(prep.module.functions[fidx], dict(config.arg_overrides))
    args = []
    try:
        for i, k in enumerate(fc.param_kinds):
            if i in pinned and k != K_PTR:
                v = pinned[i]
                v = float(v) if k in FLOAT_KINDS else int(v) & MASKS[k]
            else:
                v = rt.gen_value(k)
            args.append(v)
        itemps, ftemps = prog.templates(sym_addr)
        deadline = time.monotonic() + config.timeout_ms / 1000.0
        vals = get_kernel(backend).execute(prog, host, fidx, list(args), itemps, ftemps, prof,
                                           config.step_budget, deadline)
        exit_kind = normal(vals)
    except ExitSignal as e:
        exit_kind = graceful(e.code)
    except RollbackSignal as e:
        return Attempt("rollback", constraint=e.constraint, profile=prof, hint_uses=rt.hint_uses)
    except TrapSignal as e:
        return Attempt("failure", trapped(e.kind, e.detail), profile=prof, reason=e.kind)
    except BudgetSignal as e:
        reason = "Timeout" if e.reason == "timeout" else "StepBudgetExhausted"
        return Attempt("failure", budget(e.reason), profile=prof, reason=reason)
    except PoolExhausted as e:
        return Attempt("failure", trapped("PoolExhausted", str(e)), profile=prof, reason="PoolExhausted")
    try:
        gi = dump(pool, list(zip(fc.param_kinds, args)), rt.stream, entry, prep.hash)
    except DumpError as e:
        return Attempt("failure", exit_kind, profile=prof, reason=f"DumpError: {e}")
    if exit_kind.values and K_PTR in fc.ret_kinds:
        starts = {o.id: o for o in gi.objects}

        def canon(raw):
            hit = pool.object_of(raw) if raw else None
            if hit is not None and hit[0].index in starts:
                rec, off = hit
                o = starts[rec.index]
                return _logical(o, off - (rec.anchor - o.anchor_offset) if o.kind == 0 else off)
            return _canon_other(raw, prep)

        exit_kind = normal(_canon_values(exit_kind.values, fc.ret_kinds, canon))
    return Attempt("success", exit_kind, input=gi, profile=prof, hint_uses=rt.hint_uses)


def _logical(o, off: int) -> str:
    return f"obj{o.id}{off:+d}" if o.name is None else f"@{o.name}{off:+d}"


def _canon_other(raw: int, prep: Prepared) -> str:
    if raw == 0:
        return "null"
    fi = function_index(raw)
    if 0 <= fi < len(prep.module.functions):
        return "@" + prep.module.functions[fi].name
    return f"{raw:#x}"


def _canon_values(values, kinds, canon) -> tuple:
    """Pointer results in address-independent form (object id and offset)."""
    return tuple(canon(v) if k == K_PTR else v for v, k in zip(values, kinds))


@dataclass
class ReplayResult:
    exit: ExitKind
    profile: Profile
    image: LoadedImage
    stream_left: int = 0
    extras: dict = field(default_factory=dict)


def replay(prep: Prepared, data, slot_offset: int = 0, byte_base: int = REPLAY_BYTE_BASE,
           arena_base: int = REPLAY_ARENA_BASE, step_budget: int = 10_000_000,
           timeout_ms: int = 5000, backend: Optional[str] = None,
           record_trace: bool = False) -> ReplayResult:
    """Load an input (bytes or GeneratedInput) and run its entry function.

    Raises HashMismatch / FormatError for inputs that cannot be loaded.
    """
    image = load(data, prep, slot_offset, byte_base, arena_base)
    prog = prep.program
    entry = image.input.entry
    if entry not in prog.func_index:
        raise IgenError(f"unknown entry @{entry}")
    fidx = prog.func_index[entry]
    if len(image.args) != len(prog.funcs[fidx].param_kinds):
        raise IgenError("argument count does not match the entry function")
    host = ReplayHost(prog, image.mem, image.stream, prep.module_sigs)
    prof = Profile.for_program(prog, record_trace)

    def sym_addr(name):
        g = image.mem.global_by_name.get(name)
        return g.base_raw if g is not None else function_address(prog.func_index[name])

    itemps, ftemps = prog.templates(sym_addr)
    deadline = time.monotonic() + timeout_ms / 1000.0
    try:
        vals = get_kernel(backend).execute(prog, host, fidx, list(image.args), itemps, ftemps, prof,
                                           step_budget, deadline)
        exit_kind = normal(vals)
    except ExitSignal as e:
        exit_kind = graceful(e.code)
    except TrapSignal as e:
        exit_kind = trapped(e.kind, e.detail)
    except BudgetSignal as e:
        exit_kind = budget(e.reason)
    if exit_kind.values and K_PTR in prog.funcs[fidx].ret_kinds:
        by_slot = {o.id + slot_offset: o for o in image.input.objects if o.kind == 0}
        by_name = {o.name: o for o in image.input.objects if o.kind == 1}

        def canon(raw):
            index, off = decode(raw)
            o = by_slot.get(index)
            if o is None and index == GLOBAL_SEGMENT:
                g = image.mem.globals.lookup(off, 1) or image.mem.globals.lookup(off - 1, 1)
                o = by_name.get(g.name) if g is not None else None
            if o is not None:
                return _logical(o, offset_between(raw, image.new_base[o.id]))
            return _canon_other(raw, prep)

        exit_kind = normal(_canon_values(exit_kind.values, prog.funcs[fidx].ret_kinds, canon))
    return ReplayResult(exit_kind, prof, image, len(image.stream) - host.pos)
