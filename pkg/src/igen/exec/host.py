"""Host objects the kernels call for everything beyond plain computation.

GenerateHost routes memory through the pool (creating inputs on first read)
and draws stub results and indirect callees from the generation runtime.
ReplayHost reads a restored image and consumes the recorded stream instead.
"""

from __future__ import annotations

from ..errors import ExitSignal, TrapSignal
from ..genrt import TAG_CALLEE, GenRuntime
from ..ir.prepare import STUB, CalleeKind
from ..ir.types import K_I8, KIND_NAMES
from ..memory import GLOBAL_SEGMENT, function_index
from ..values import sext


class _HostBase:
    wants_ptr_cmp = False

    def __init__(self, prog, mem):
        self.prog = prog
        self.mem = mem
        self.segs = mem.segs
        self.heap = mem.heap
        self.charge = 0  # extra budget steps owed by the last intrinsic

    # memory
    def _gen(self, site):
        return None

    def load(self, raw, kind, site):
        return self.mem.read(raw, kind, self._gen(site))

    def store(self, raw, kind, value):
        self.mem.write(raw, kind, value)

    def alloca(self, size, align):
        a = self.heap.alloc(size, align)
        if not a:
            raise TrapSignal("StackOverflow", "alloca space exhausted")
        return a

    def release(self, addrs):
        for a in addrs:
            self.heap.free(a)

    # calls
    def xcall(self, ei, args, site):
        ext = self.prog.exts[ei]
        if ext.kind is CalleeKind.INTRINSIC:
            return self._intrinsic(ext.intrinsic, args)
        if ext.kind is CalleeKind.NONRETURNING:
            if ext.intrinsic == "exit":
                raise ExitSignal(sext(args[0], 32))
            raise ExitSignal(134 if ext.intrinsic == "abort" else None)
        return self.stub(ext.ret_kinds, site)

    def _intrinsic(self, name, args):
        if name == "malloc":
            return [self.heap.alloc(args[0])]
        if name == "free":
            p = args[0]
            if p and not self.heap.free(p) and not self._runtime_owned(p):
                raise TrapSignal("InvalidAccess", f"free of unknown pointer {p:#x}")
            return []
        if name == "memcpy":
            dst, src, n = args
            self.charge += -(-n // 8)
            gen = self._gen(-1)
            buf = [self.mem.read(src + i, K_I8, gen) for i in range(n)]
            for i, b in enumerate(buf):
                self.mem.write(dst + i, K_I8, b)
            return [dst]
        if name == "memset":
            dst, val, n = args
            self.charge += -(-n // 8)
            val &= 0xFF
            for i in range(n):
                self.mem.write(dst + i, K_I8, val)
            return [dst]
        raise TrapSignal("InvalidAccess", f"unsupported intrinsic {name}")

    def _runtime_owned(self, p) -> bool:
        return False

    def _check_target(self, ii, fi):
        info = self.prog.icalls[ii]
        f = self.prog.funcs[fi]
        sig = self.module_sigs[fi]
        if sig != info.signature:
            raise TrapSignal("InvalidAccess", f"indirect call to @{f.name} with wrong signature")
        return fi


class GenerateHost(_HostBase):
    def __init__(self, prog, pool, rt: GenRuntime, module_sigs):
        super().__init__(prog, pool)
        self.rt = rt
        self.wants_ptr_cmp = rt.config.rollback
        self.module_sigs = module_sigs

    def _gen(self, site):
        rt = self.rt
        return lambda kind: rt.gen_value(kind, site)

    def _runtime_owned(self, p):
        return self.mem.object_of(p) is not None

    def ptr_cmp(self, x, y, pred):
        self.rt.on_ptr_cmp(x, y, pred)

    def stub(self, kinds, site):
        return self.rt.stub_return(kinds, site)

    def icall(self, ii, fp, site):
        fi = function_index(fp)
        if 0 <= fi < len(self.prog.funcs):
            return self._check_target(ii, fi)
        name = self.rt.select_callee(self.prog.icalls[ii].candidates)
        return -1 if name == STUB else self.prog.func_index[name]

    def icall_stub(self, ii, site):
        return self.rt.stub_return(self.prog.icalls[ii].ret_kinds, site)


class ReplayHost(_HostBase):
    """`stream` holds (tag, value) pairs; callee entries carry a function index or -1."""

    def __init__(self, prog, mem, stream, module_sigs):
        super().__init__(prog, mem)
        self.stream = stream
        self.pos = 0
        self.module_sigs = module_sigs

    def _next(self, tag):
        if self.pos >= len(self.stream):
            raise TrapSignal("StreamExhausted", f"entry {self.pos}")
        t, v = self.stream[self.pos]
        if t != tag:
            want = "callee" if tag == TAG_CALLEE else KIND_NAMES[tag]
            raise TrapSignal("StreamTypeMismatch", f"entry {self.pos}: expected {want}")
        self.pos += 1
        return v

    def _runtime_owned(self, p):
        return (p >> 40) in self.segs or (p >> 40) == GLOBAL_SEGMENT

    def stub(self, kinds, site):
        return [self._next(k) for k in kinds]

    def icall(self, ii, fp, site):
        fi = function_index(fp)
        if 0 <= fi < len(self.prog.funcs):
            return self._check_target(ii, fi)
        return self._next(TAG_CALLEE)

    def icall_stub(self, ii, site):
        return self.stub(self.prog.icalls[ii].ret_kinds, site)
