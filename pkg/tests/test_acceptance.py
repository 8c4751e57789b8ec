"""Acceptance criteria 1-9.

Each test prints one ``[PASS]``/``[FAIL]`` line; the lines are repeated in
the pytest terminal summary.  Run ``pytest tests/test_acceptance.py -v``.
"""

import random
import time
from contextlib import contextmanager

import pytest

from igen import driver
from igen.engine import replay
from igen.exec import available_backends
from igen.genrt import GenConfig
from igen.inputfmt import encode_input, load, pointer_cells, redump, verify
from igen.ir.types import K_I32
from igen.values import pack_value

from conftest import CORPUS, FIXTURES, prepared
from helpers import CORRUPTIONS, RESULTS, corpus_inputs
from oracles import ValueSource, random_trace, trace_mismatches
from test_memory import WRITE_READ_TRACE

FAST = available_backends()[0]


@contextmanager
def criterion(n, title):
    """Record and print the outcome of one criterion; `detail` is filled by the body."""
    info = {"detail": ""}
    try:
        yield info
    except BaseException:
        line = f"[FAIL] criterion {n}: {title} {info['detail']}".rstrip()
        RESULTS.append(line)
        print(line)
        raise
    line = f"[PASS] criterion {n}: {title} {info['detail']}".rstrip()
    RESULTS.append(line)
    print(line)


def _union_curve(prep, names, config):
    curves = [driver.generate_for_function(prep, n, config).curve for n in names]
    return [sum(c[k] for c in curves) / len(curves) for k in range(config.seeds)]


def test_1_replay_equivalence():
    with criterion(1, "replay equivalence over the corpus") as info:
        t0 = time.monotonic()
        report = driver.run_corpus(CORPUS, GenConfig())
        elapsed = time.monotonic() - t0
        seeds = [s for m in report["modules"] for f in m["functions"] for s in f["seeds"]]
        generated = [s for s in seeds if s["generated"]]
        replayed = [s for s in generated if s["replayed"]]
        info["detail"] = (f"({len(replayed)}/{len(generated)} inputs replayed, "
                          f"{len(report['modules'])} modules, {elapsed:.1f}s)")
        assert len(report["modules"]) >= 20
        assert all(m["error"] is None for m in report["modules"])
        assert generated and len(replayed) == len(generated)
        assert elapsed < 60


def test_2_shadow_minimality():
    with criterion(2, "shadow minimality against the triplet reference") as info:
        out, gi, _ = trace_mismatches(WRITE_READ_TRACE)
        assert out == [], out
        [obj] = gi.objects
        # runs hold exactly the three generated cells (12 bytes at anchor+4), no written bytes
        assert [(o - obj.anchor_offset, len(b)) for o, b in obj.runs] == [(4, 12)]
        src = ValueSource(0)
        assert obj.runs[0][1] == b"".join(pack_value(K_I32, src(K_I32)) for _ in range(3))
        bad = 0
        for seed in range(500):
            rng = random.Random(10_000 + seed)
            mism, _, _ = trace_mismatches(random_trace(rng, rng.randrange(1, 400)), seed)
            bad += bool(mism)
        info["detail"] = f"(write-read sequence exact, 500 random traces, {bad} mismatches)"
        assert bad == 0


def test_3_relocation():
    with criterion(3, "rebased replay and exact pointer relocation") as info:
        inputs = corpus_inputs()
        cells = 0
        for k, (stem, fn, i, o) in enumerate(inputs):
            prep = prepared(stem)
            base = replay(prep, o.data, record_trace=True)
            moved = replay(prep, o.data, slot_offset=5 + k % 11, byte_base=0x1000 + 0x50 * (k % 7 + 1),
                           arena_base=0x80000 + 0x100 * (k % 3), record_trace=True)
            assert moved.exit.key() == base.exit.key(), (stem, fn, i)
            assert moved.profile.trace == base.profile.trace, (stem, fn, i)
            assert moved.stream_left == 0
            assert o.replayed and str(base.exit) == o.replay_exit
            image = load(o.data, prep, slot_offset=5 + k % 11, byte_base=0x1000 + 0x50 * (k % 7 + 1))
            for reloc, found, expected in pointer_cells(image):
                assert found == expected, (stem, fn, reloc)
                cells += 1
        info["detail"] = f"({len(inputs)} inputs, {cells} pointer cells checked)"
        assert cells > 0


ROLLBACK_SUBSET = {"iter_range": ["sum_range", "count_below"], "iter_copy": ["copy_range", "find"],
                   "null_walk": ["count_entries", "sum_firsts"],
                   "list_ops": ["last_key", "max_key"], "list_sum": ["sum"]}


def test_4_rollback_efficacy():
    with criterion(4, "rollback efficacy on iterator and null-traversal functions") as info:
        def successes(config):
            ok = 0
            for stem, names in ROLLBACK_SUBSET.items():
                for n in names:
                    ok += driver.generate_for_function(prepared(stem), n, config).ran_all
            return ok

        total = sum(map(len, ROLLBACK_SUBSET.values()))
        with_rb = successes(GenConfig())
        without = successes(GenConfig(rollback=False))
        info["detail"] = f"(default {with_rb}/{total}, --no-rollback {without}/{total})"
        assert with_rb == total
        assert without < with_rb


def test_5_hint_efficacy():
    with criterion(5, "hint efficacy on constant-threshold branches") as info:
        prep = prepared("thresholds")
        names = [f.name for f in prep.module.functions]
        on = _union_curve(prep, names, GenConfig())
        off = _union_curve(prep, names, GenConfig(hints=False))
        info["detail"] = (f"(hints {' '.join(f'{c:.3f}' for c in on)}; "
                          f"none {' '.join(f'{c:.3f}' for c in off)})")
        assert all(a >= b for a, b in zip(on, off))
        assert on[-1] - on[0] >= 0.10


def test_6_storage_overhead():
    with criterion(6, "gemm 141x152x183 payload and file size") as info:
        prep = prepared("gemm")
        cfg = GenConfig(arg_overrides=(("ni", 141), ("nj", 152), ("nk", 183)),
                        step_budget=200_000_000, timeout_ms=3_600_000)
        attempt = None
        for k in range(20):
            attempt, _, _ = driver.generate_with_retries(prep, "gemm", cfg, driver.seed_for(0, k),
                                                         backend=FAST)
            if attempt.status == "success":
                break
        assert attempt.status == "success", attempt.reason
        data = encode_input(attempt.input)
        payload = attempt.input.payload_bytes()
        info["detail"] = (f"(payload {payload} bytes, file {len(data)} bytes, "
                          f"overhead {len(data) - payload} bytes, {FAST} kernel)")
        assert payload == 428_972
        assert len(data) <= 1.01 * payload


def test_7_determinism(tmp_path):
    with criterion(7, "two corpus runs are byte-identical") as info:
        runs = []
        for name in ("a", "b"):
            out = tmp_path / name
            driver.run_corpus(CORPUS, GenConfig(), out / "inputs", out / "report.json")
            runs.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
        info["detail"] = f"({len(runs[0])} files compared)"
        assert len(runs[0]) > 100
        assert runs[0] == runs[1]


@pytest.mark.parametrize("timeout_ms", [1000])
def test_8_budget_safety(tmp_path, timeout_ms):
    with criterion(8, "budget safety on an infinite loop") as info:
        path = FIXTURES / "spin.ir"
        out = tmp_path / "inputs"
        cfg = GenConfig(seeds=1, timeout_ms=timeout_ms, step_budget=10**15)
        t0 = time.monotonic()
        mr = driver.run_module(path, cfg, out_dir=out)
        by_time = time.monotonic() - t0
        t0 = time.monotonic()
        mr2 = driver.run_module(path, GenConfig(seeds=1), out_dir=out)
        by_steps = time.monotonic() - t0
        exits = [o.exit for r in (mr, mr2) for f in r.functions for o in f.outcomes]
        info["detail"] = f"({', '.join(exits)}; {by_time:.2f}s with a {timeout_ms} ms timeout)"
        assert all(e.startswith("BudgetExhausted") for e in exits)
        assert exits[0] == "BudgetExhausted(timeout)"
        assert by_time < timeout_ms / 1000 + 1
        assert by_steps < GenConfig().timeout_ms / 1000 + 1
        assert not out.exists() or not any(out.rglob("*"))


def test_9_format_round_trip():
    with criterion(9, "dump/load/re-dump identity and verify") as info:
        inputs = corpus_inputs()
        for stem, fn, i, o in inputs:
            prep = prepared(stem)
            assert verify(o.data) == [], (stem, fn, i)
            assert redump(load(o.data, prep), prep) == o.data, (stem, fn, i)
        rejected = {}
        for name, corrupt in CORRUPTIONS.items():
            expect = {"overlapping runs": "overlapping runs", "dangling relocation": "missing target",
                      "bad magic": "bad magic"}[name]
            tried = hits = 0
            for _, _, _, o in inputs:
                try:
                    bad = corrupt(o.data)
                except ValueError:
                    continue  # nothing to corrupt this way
                tried += 1
                hits += any(expect in d for d in verify(bad))
            rejected[name] = (hits, tried)
            assert tried and hits == tried, name
        info["detail"] = (f"({len(inputs)} inputs; rejected "
                          + ", ".join(f"{k} {h}/{t}" for k, (h, t) in rejected.items()) + ")")
