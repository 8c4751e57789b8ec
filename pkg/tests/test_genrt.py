import math
import random
import struct

import pytest
from hypothesis import given, settings, strategies as st

from igen.errors import RollbackSignal
from igen.genrt import GenConfig, GenRuntime, MustAlias, MustNull, eval_fcmp, satisfying_value
from igen.ir.hints import BranchHint
from igen.ir.types import F32, F64, I8, I16, I32, I64, K_F32, K_F64, K_I8, K_I16, K_I32, K_I64
from igen.memory import MemoryPool

INT_PREDS = ["eq", "ne", "slt", "sle", "sgt", "sge", "ult", "ule", "ugt", "uge"]
FLOAT_PREDS = ["oeq", "one", "olt", "ole", "ogt", "oge", "ueq", "une", "ult", "ule", "ugt", "uge",
               "ord", "uno"]
INTS = [(I8, K_I8, 8), (I16, K_I16, 16), (I32, K_I32, 32), (I64, K_I64, 64)]


def ref_icmp(pred, a, b, width):
    """Plain integer comparison, written independently of the runtime's helper."""
    if pred.startswith("s"):
        a = a - (1 << width) if a >= 1 << (width - 1) else a
        b = b - (1 << width) if b >= 1 << (width - 1) else b
    op = pred[-2:] if pred not in ("eq", "ne") else pred
    return {"eq": a == b, "ne": a != b, "lt": a < b, "le": a <= b, "gt": a > b, "ge": a >= b}[op]


def hint(op, pred, const, lhs, ty):
    return BranchHint(1, 0, op, pred, const, lhs, ty)


@settings(max_examples=400, deadline=None)
@given(st.sampled_from(INTS), st.sampled_from(INT_PREDS), st.integers(0, 2**64 - 1),
       st.booleans(), st.booleans(), st.integers(0, 2**32))
def test_int_hint_values_satisfy(tk, pred, const, lhs, want, seed):
    ty, kind, width = tk
    c = const & ((1 << width) - 1)
    v = satisfying_value(hint("icmp", pred, c, lhs, ty), want, kind, random.Random(seed), GenConfig())
    a, b = (v, c) if lhs else (c, v)
    if v is None:
        # only acceptable when no value of the type can do it; for these
        # predicates the extremes and the constant's neighbours decide that
        m = (1 << width) - 1
        probes = {0, m, m >> 1, (m >> 1) + 1, c, (c + 1) & m, (c - 1) & m}
        assert not any(ref_icmp(pred, *((x, c) if lhs else (c, x)), width) == want for x in probes)
    else:
        assert 0 <= v < 1 << width
        assert ref_icmp(pred, a, b, width) == want


def test_int_hint_exhaustive_i8():
    rng = random.Random(0)
    for pred in INT_PREDS:
        for c in range(256):
            for lhs in (True, False):
                for want in (True, False):
                    v = satisfying_value(hint("icmp", pred, c, lhs, I8), want, K_I8, rng, GenConfig())
                    possible = any(ref_icmp(pred, *((x, c) if lhs else (c, x)), 8) == want
                                   for x in range(256))
                    assert (v is not None) == possible, (pred, c, lhs, want)
                    if v is not None:
                        assert ref_icmp(pred, *((v, c) if lhs else (c, v)), 8) == want


@settings(max_examples=300, deadline=None)
@given(st.sampled_from([(F32, K_F32), (F64, K_F64)]), st.sampled_from(FLOAT_PREDS),
       st.floats(-1e6, 1e6), st.booleans(), st.booleans(), st.integers(0, 2**32))
def test_float_hint_values_satisfy(tk, pred, const, lhs, want, seed):
    ty, kind = tk
    v = satisfying_value(hint("fcmp", pred, const, lhs, ty), want, kind, random.Random(seed), GenConfig())
    if v is None:
        return
    c = const
    if kind == K_F32:
        c = struct.unpack("<f", struct.pack("<f", c))[0]
        assert struct.unpack("<f", struct.pack("<f", v))[0] == v or math.isnan(v)
    a, b = (v, c) if lhs else (c, v)
    assert eval_fcmp(pred, a, b) == want


def test_hint_type_mismatch_gives_up():
    assert satisfying_value(hint("icmp", "eq", 1, True, F64), True, K_F64, random.Random(), GenConfig()) is None


def test_config_validation():
    with pytest.raises(ValueError):
        GenConfig(null_prob=1.5)
    with pytest.raises(ValueError):
        GenConfig(step_budget=0)
    d = GenConfig()
    assert (d.null_prob, d.rollback_prob, d.max_retries, d.timeout_ms, d.step_budget, d.seeds) == \
        (0.25, 0.5, 16, 5000, 10_000_000, 5)


def test_draws_are_seed_deterministic():
    def draws(seed):
        rt = GenRuntime(MemoryPool(), GenConfig(), seed)
        return [rt.gen_value(k) for k in (K_I8, K_I32, K_I64, K_F32, K_F64)] + \
               [rt.gen_value(7) for _ in range(6)]
    assert draws(11) == draws(11)
    assert draws(11) != draws(12)


def _runtime(**kw):
    cfg = GenConfig(null_prob=0.0, rollback_prob=1.0, **kw)
    return GenRuntime(MemoryPool(), cfg, 0)


def test_null_comparison_requests_null():
    rt = _runtime()
    p = rt.gen_pointer()
    with pytest.raises(RollbackSignal) as ei:
        rt.on_ptr_cmp(p, 0, "eq")
    assert ei.value.constraint == MustNull(0)
    # honoured on the retry
    rt2 = GenRuntime(MemoryPool(), rt.config, 1, {0: MustNull(0)})
    assert rt2.gen_pointer() == 0


def test_alias_constraint_places_later_pointer_inside_earlier():
    rt = _runtime()
    a = rt.gen_pointer()
    b = rt.gen_pointer()
    with pytest.raises(RollbackSignal) as ei:
        rt.on_ptr_cmp(a + 12, b, "ne")
    c = ei.value.constraint
    assert c == MustAlias(1, 12, base_site=0)
    rt2 = GenRuntime(MemoryPool(), rt.config, 5, {1: c})
    a2 = rt2.gen_pointer()
    b2 = rt2.gen_pointer()
    assert b2 == a2 + 12


def test_ordered_comparison_targets_used_extent():
    rt = _runtime()
    it = rt.gen_pointer()
    rt.pool.write(it, K_I32, 0)
    rt.pool.write(it + 4, K_I32, 0)
    end = rt.gen_pointer()
    with pytest.raises(RollbackSignal) as ei:
        rt.on_ptr_cmp(it + 8, end, "ult")  # it < end must keep holding until the data runs out
    assert ei.value.constraint.offset == 8


def test_rollback_disabled_or_unlucky():
    rt = _runtime(rollback=False)
    a, b = rt.gen_pointer(), rt.gen_pointer()
    rt.on_ptr_cmp(a, b, "eq")
    rt = GenRuntime(MemoryPool(), GenConfig(rollback_prob=0.0), 0)
    a, b = rt.pool.create_object(site=0), rt.pool.create_object(site=1)
    rt.on_ptr_cmp(a, b, "eq")


def test_constrained_site_is_not_rolled_back_again():
    rt = GenRuntime(MemoryPool(), GenConfig(null_prob=0.0, rollback_prob=1.0), 0, {1: MustAlias(1, 0, 0)})
    a = rt.gen_pointer()
    b = rt.gen_pointer()
    rt.on_ptr_cmp(a, b + 4, "eq")  # same object now: no new constraint


def test_stub_values_are_recorded():
    rt = _runtime()
    vals = rt.stub_return([K_I32, K_F64])
    assert [(e.tag, e.value) for e in rt.stream] == list(zip([K_I32, K_F64], vals))
    assert rt.select_callee(["only"]) == "only"
    assert rt.stream[-1].value == "only"
