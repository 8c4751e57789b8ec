import time

import pytest
from hypothesis import given, settings, strategies as st

from igen.engine import generate_attempt, prepare, replay
from igen.exec import available_backends
from igen.genrt import GenConfig
from igen.inputfmt import GeneratedInput, encode_input
from igen.ir.types import K_I8, K_I32, K_I64, K_PTR

from conftest import FIXTURES, corpus_modules, prepared

BACKENDS = available_backends()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernel not built")
SLOW_OK = dict(timeout_ms=600_000)


def run(prep, entry, args, backend=None, **kw):
    """Replay `entry` on hand-built scalar arguments."""
    gi = GeneratedInput(prep.hash, entry, [], [], [], list(args), [])
    return replay(prep, encode_input(gi), backend=backend, **kw)


ARITH = prepare("\n".join(
    f"func @{op}{w}(%a: i{w}, %b: i{w}) -> i{w} {{ entry: %r = {op} %a, %b\n ret %r }}"
    for op in ("add", "sub", "mul", "and", "or", "xor", "shl", "lshr", "ashr",
               "udiv", "sdiv", "urem", "srem")
    for w in (8, 32, 64)))
KINDS = {8: K_I8, 32: K_I32, 64: K_I64}


def ref_binop(op, a, b, w):
    m = (1 << w) - 1

    def s(x):
        return x - (1 << w) if x >> (w - 1) else x

    if op in ("udiv", "sdiv", "urem", "srem") and b == 0:
        return None
    sh = b % w
    r = {
        "add": lambda: a + b, "sub": lambda: a - b, "mul": lambda: a * b,
        "and": lambda: a & b, "or": lambda: a | b, "xor": lambda: a ^ b,
        "shl": lambda: a << sh, "lshr": lambda: a >> sh, "ashr": lambda: s(a) >> sh,
        "udiv": lambda: a // b, "urem": lambda: a % b,
        # C truncating division, via floor division on magnitudes
        "sdiv": lambda: (abs(s(a)) // abs(s(b))) * (1 if (s(a) < 0) == (s(b) < 0) else -1),
        "srem": lambda: s(a) - s(b) * ((abs(s(a)) // abs(s(b))) * (1 if (s(a) < 0) == (s(b) < 0) else -1)),
    }[op]()
    return r & m


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(["add", "sub", "mul", "and", "or", "xor", "shl", "lshr", "ashr",
                        "udiv", "sdiv", "urem", "srem"]),
       st.sampled_from([8, 32, 64]), st.data())
def test_integer_ops_match_reference(op, w, data):
    a = data.draw(st.integers(0, (1 << w) - 1))
    b = data.draw(st.one_of(st.integers(0, (1 << w) - 1), st.sampled_from([0, 1, (1 << w) - 1])))
    want = ref_binop(op, a, b, w)
    for be in BACKENDS:
        rr = run(ARITH, f"{op}{w}", [(KINDS[w], a), (KINDS[w], b)], be)
        if want is None:
            assert (rr.exit.tag, rr.exit.trap) == ("Trap", "DivByZero")
        else:
            assert rr.exit.values == (want,), (be, op, w, a, b)


EXITS = prepare("""
declare @fatal(i32) -> void noreturn
declare @ext() -> i32

func @ab() -> i32 { entry: call @abort()
 unreachable }
func @ex(%c: i32) -> i32 { entry: call @exit(%c)
 unreachable }
func @un() -> i32 { entry: unreachable }
func @nr() -> i32 { entry: call @fatal(1)
 ret 0 }
func @stub() -> i32 {
entry:
  %a = call @ext()
  %b = call @ext()
  %r = sub %a, %b
  ret %r
}
func @heap() -> i64 {
entry:
  %p = call @malloc(16)
  store i64 5, %p
  %v = load i64 %p
  call @free(%p)
  ret %v
}
func @copy(%src: ptr) -> i64 {
entry:
  %dst = alloca i64
  %r = call @memcpy(%dst, %src, 8)
  %v = load i64 %dst
  ret %v
}
""")


def test_graceful_exits():
    assert str(run(EXITS, "ab", []).exit) == "GracefulExit(134)"
    assert str(run(EXITS, "ex", [(K_I32, 3)]).exit) == "GracefulExit(3)"
    assert str(run(EXITS, "un", []).exit) == "GracefulExit(None)"
    at = generate_attempt(EXITS, "nr", GenConfig(), 0)
    assert at.status == "success" and at.exit.tag == "GracefulExit"


def test_stub_values_replay():
    at = generate_attempt(EXITS, "stub", GenConfig(), 3)
    assert at.status == "success" and len(at.input.stream) == 2
    a, b = (v for _, v in at.input.stream)
    rr = replay(EXITS, encode_input(at.input))
    assert rr.exit.key() == at.exit.key()
    assert rr.exit.values == ((a - b) & 0xFFFFFFFF,)
    assert rr.stream_left == 0


def test_user_memory_is_not_input():
    at = generate_attempt(EXITS, "heap", GenConfig(), 0)
    assert at.exit.values == (5,)
    assert at.input.objects == [] and at.input.payload_bytes() == 0


def test_memcpy_from_fresh_object_records_bytes():
    for seed in range(10):
        at = generate_attempt(EXITS, "copy", GenConfig(), seed)
        if at.status == "success" and at.exit.tag == "NormalReturn":
            [obj] = at.input.objects
            assert [len(b) for _, b in obj.runs] == [8]
            assert int.from_bytes(obj.runs[0][1], "little") == at.exit.values[0]
            return
    pytest.fail("no seed produced a non-null source")


SPIN = prepare((FIXTURES / "spin.ir").read_text())


@pytest.mark.parametrize("backend", BACKENDS)
def test_step_budget(backend):
    at = generate_attempt(SPIN, "spin", GenConfig(step_budget=50_000), 0, backend=backend)
    assert at.status == "failure" and str(at.exit) == "BudgetExhausted(steps)"
    assert at.reason == "StepBudgetExhausted"
    assert at.profile.steps >= 50_000


@pytest.mark.parametrize("backend", BACKENDS)
def test_timeout(backend):
    t0 = time.monotonic()
    at = generate_attempt(SPIN, "spin", GenConfig(step_budget=10**12, timeout_ms=200), 0, backend=backend)
    assert time.monotonic() - t0 < 1.2
    assert str(at.exit) == "BudgetExhausted(timeout)" and at.reason == "Timeout"


def test_recursion_depth_traps():
    deep = prepare("func @f(%n: i64) -> i64 { entry: %r = call @f(%n)\n ret %r }")
    rr = run(deep, "f", [(K_I64, 1)])
    assert rr.exit.tag == "Trap"


@needs_both
@pytest.mark.parametrize("path", corpus_modules(), ids=lambda p: p.stem)
def test_backends_agree(path):
    prep = prepared(path.stem)
    cfg = GenConfig(**SLOW_OK, step_budget=2_000_000)
    for f in prep.module.functions:
        for seed in range(3):
            c = generate_attempt(prep, f.name, cfg, seed, backend="cython", record_trace=True)
            p = generate_attempt(prep, f.name, cfg, seed, backend="python", record_trace=True)
            assert c.status == p.status, (f.name, seed)
            assert c.profile.trace == p.profile.trace
            assert c.profile.steps == p.profile.steps
            if c.status == "success":
                assert c.exit.key() == p.exit.key()
                assert encode_input(c.input) == encode_input(p.input)
                data = encode_input(c.input)
                rc = replay(prep, data, backend="cython", **SLOW_OK)
                rp = replay(prep, data, backend="python", **SLOW_OK)
                assert rc.exit.key() == rp.exit.key() == c.exit.key()
            else:
                assert c.constraint == p.constraint and c.reason == p.reason


def test_pointer_args_are_relocated():
    prep = prepared("list_sum")
    at = generate_attempt(prep, "sum", GenConfig(), 2)
    assert at.status == "success"
    assert any(k == K_PTR for k, _ in at.input.args)
    a = replay(prep, encode_input(at.input), record_trace=True)
    b = replay(prep, encode_input(at.input), slot_offset=9, byte_base=0x3330, record_trace=True)
    assert a.exit.key() == b.exit.key() == at.exit.key()
    assert a.profile.trace == b.profile.trace
