import struct

import pytest
from hypothesis import given, settings, strategies as st

from igen.engine import prepare, replay
from igen.errors import FormatError, HashMismatch
from igen.genrt import TAG_CALLEE
from igen.inputfmt import (GeneratedInput, ObjectEntry, Reloc, decode_input, encode_input, load,
                           pointer_cells, redump, verify)
from igen.ir.types import K_F32, K_F64, K_I1, K_I8, K_I16, K_I32, K_I64, K_PTR
from igen.values import MASKS

from conftest import prepared
from helpers import CORRUPTIONS, corpus_inputs


def _scalar(kind):
    if kind == K_F64:
        return st.floats(allow_nan=False)
    if kind == K_F32:
        return st.floats(width=32, allow_nan=False)
    if kind == K_PTR:
        return st.just(0)
    return st.integers(0, MASKS[kind])


_kinds = st.sampled_from([K_I1, K_I8, K_I16, K_I32, K_I64, K_F32, K_F64, K_PTR])
_value = _kinds.flatmap(lambda k: st.tuples(st.just(k), _scalar(k)))
_stream_value = st.one_of(_value, st.just((TAG_CALLEE, 0)))


@st.composite
def _objects(draw):
    out = []
    for oid in draw(st.lists(st.integers(1, 1000), unique=True, max_size=5)):
        align = draw(st.sampled_from([1, 4, 16, 64]))
        runs, pos = [], 0
        for _ in range(draw(st.integers(0, 4))):
            pos += draw(st.integers(0, 40))
            b = draw(st.binary(min_size=1, max_size=24))
            runs.append((pos, b))
            pos += len(b)
        glob = draw(st.booleans())
        out.append(ObjectEntry(oid, int(glob), pos + draw(st.integers(0, 32)),
                               draw(st.integers(-64, 64)) * align, align, runs,
                               draw(st.text(min_size=1, max_size=8)) if glob else None))
    return out


_reloc = st.builds(Reloc, st.integers(0, 2), st.integers(0, 2**32 - 1), st.integers(0, 2**64 - 1),
                   st.integers(0, 1), st.integers(0, 2**32 - 1), st.integers(-2**63, 2**63 - 1))

_inputs = st.builds(GeneratedInput, st.integers(0, 2**64 - 1), st.text(min_size=1, max_size=12),
                    st.lists(st.text(max_size=10), max_size=4), _objects(),
                    st.lists(_reloc, max_size=6), st.lists(_value, max_size=8),
                    st.lists(_stream_value, max_size=8))


@settings(max_examples=200, deadline=None)
@given(_inputs)
def test_encode_decode_round_trip(gi):
    data = encode_input(gi)
    back = decode_input(data)
    assert back == gi
    assert encode_input(back) == data


@settings(max_examples=100, deadline=None)
@given(_inputs, st.data())
def test_truncation_is_detected(gi, data):
    raw = encode_input(gi)
    cut = data.draw(st.integers(0, len(raw) - 1))
    with pytest.raises(FormatError):
        decode_input(raw[:cut])
    with pytest.raises(FormatError, match="trailing"):
        decode_input(raw + b"\0")


def test_header_layout():
    gi = GeneratedInput(0x1122334455667788, "f", [], [], [], [(K_I32, 7)], [])
    data = encode_input(gi)
    assert data[:4] == b"IGIN"
    assert struct.unpack_from("<IQ", data, 4) == (1, 0x1122334455667788)
    assert gi.payload_bytes() == 4


@pytest.fixture(scope="module")
def some_inputs():
    return corpus_inputs()


def test_corpus_inputs_verify_and_round_trip(some_inputs):
    assert len(some_inputs) > 100
    for stem, fn, _, o in some_inputs:
        assert verify(o.data) == [], (stem, fn)
        prep = prepared(stem)
        image = load(o.data, prep)
        assert redump(image, prep) == o.data, (stem, fn)


@pytest.mark.parametrize("name", sorted(CORRUPTIONS))
def test_verify_rejects_corruption(some_inputs, name):
    with_runs = [o.data for _, _, _, o in some_inputs
                 if any(obj.runs for obj in decode_input(o.data).objects)]
    for data in with_runs[:20]:
        bad = CORRUPTIONS[name](data)
        diags = verify(bad)
        assert diags, name
        expect = {"overlapping runs": "overlapping runs", "dangling relocation": "missing target",
                  "bad magic": "bad magic"}[name]
        assert any(expect in d for d in diags), diags


def test_rebased_load_relocates_every_pointer(some_inputs):
    for stem, fn, k, o in some_inputs:
        prep = prepared(stem)
        image = load(o.data, prep, slot_offset=3 + k, byte_base=0x7000 + 48 * k)
        for reloc, found, expected in pointer_cells(image):
            assert found == expected, (stem, fn, reloc)


def test_load_rejects_other_module(some_inputs):
    _, _, _, o = some_inputs[0]
    other = prepare("func @id(%x: i64) -> i64 { entry: ret %x }")
    with pytest.raises(HashMismatch, match="does not match"):
        load(o.data, other)
    with pytest.raises(HashMismatch):
        replay(other, o.data)


def test_gemm_payload_counts_only_input_bytes():
    from igen.engine import generate_attempt
    from igen.genrt import GenConfig

    prep = prepared("gemm")
    cfg = GenConfig(arg_overrides=(("ni", 3), ("nj", 4), ("nk", 5)), null_prob=0.0)
    at = generate_attempt(prep, "gemm", cfg, 1)
    assert at.status == "success"
    # A is 3x5, B is 5x4 doubles; C is only written; 3 dims + alpha as scalars
    assert at.input.payload_bytes() == 8 * (15 + 20) + 3 * 4 + 8
    c = at.input.objects[0]
    assert c.runs == [] and c.alloc_size >= 8 * 12
