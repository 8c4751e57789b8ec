import json
import subprocess
import sys

import pytest

from igen import driver
from igen.cli import main
from igen.genrt import GenConfig
from igen.inputfmt import decode_input, encode_input

from conftest import CORPUS, FIXTURES, prepared


def test_seed_mixing_keeps_retries_apart():
    seeds = [driver.seed_for(0, k) for k in range(5)]
    assert len(set(seeds)) == 5
    retried = {s ^ r for s in seeds for r in range(17)}
    assert len(retried) == 5 * 17


def test_retry_loop_reuses_constraints(monkeypatch):
    calls = []
    real = driver.generate_attempt

    def spy(prep, entry, config, seed, constraints, *a, **kw):
        calls.append((seed, dict(constraints)))
        return real(prep, entry, config, seed, constraints, *a, **kw)

    monkeypatch.setattr(driver, "generate_attempt", spy)
    prep = prepared("iter_range")
    at, retries, cons = driver.generate_with_retries(prep, "sum_range", GenConfig(), 1234)
    assert [s for s, _ in calls] == [1234 ^ r for r in range(len(calls))]
    assert retries == len(calls) - 1
    for (_, before), (_, after) in zip(calls, calls[1:]):
        assert set(before) < set(after)


def test_function_result_counts():
    fr = driver.generate_for_function(prepared("list_sum"), "sum", GenConfig())
    assert len(fr.outcomes) == 5 and len(fr.curve) == 5
    assert fr.curve == sorted(fr.curve)
    assert fr.ran_all and fr.generated_all
    j = fr.to_json()
    assert j["function"] == "sum" and len(j["seeds"]) == 5


def test_gen_replay_verify(tmp_path, capsys):
    out = tmp_path / "inputs"
    assert main(["gen", str(CORPUS / "list_sum.ir"), "--entry", "sum", "--out", str(out)]) == 0
    files = sorted(out.rglob("*.igin"))
    assert files and all(f.parent.name == "list_sum" for f in files)
    capsys.readouterr()
    assert main(["replay", str(CORPUS / "list_sum.ir"), str(files[0])]) == 0
    text = capsys.readouterr().out
    assert "entry: @sum" in text and "exit: NormalReturn" in text
    assert main(["verify", str(files[0])]) == 0
    assert capsys.readouterr().out.strip() == "ok"
    bad = tmp_path / "bad.igin"
    bad.write_bytes(b"NOPE" + files[0].read_bytes()[4:])
    assert main(["verify", str(bad)]) == 1


def test_replay_exit_codes(tmp_path, capsys):
    mod = tmp_path / "m.ir"
    mod.write_text("func @div(%a: i32, %b: i32) -> i32 { entry: %r = sdiv %a, %b\n ret %r }\n")
    out = tmp_path / "in"
    assert main(["gen", str(mod), "--out", str(out), "--arg", "b=0", "--seeds", "1"]) == 0
    assert not list(out.rglob("*.igin"))  # a trapping run stores nothing
    assert main(["gen", str(mod), "--out", str(out), "--arg", "b=1", "--seeds", "1"]) == 0
    [f] = out.rglob("*.igin")
    assert main(["replay", str(mod), str(f)]) == 0
    gi = decode_input(f.read_bytes())
    gi.args[1] = (gi.args[1][0], 0)
    f.write_bytes(encode_input(gi))
    assert main(["replay", str(mod), str(f)]) == 1  # DivByZero trap
    other = tmp_path / "other.ir"
    other.write_text("func @div(%a: i32, %b: i32) -> i32 { entry: %r = udiv %a, %b\n ret %r }\n")
    assert main(["replay", str(other), str(f)]) == 2
    assert "input does not match module" in capsys.readouterr().err
    junk = tmp_path / "junk.igin"
    junk.write_bytes(b"IG")
    assert main(["replay", str(mod), str(junk)]) == 2


def test_gen_rejects_invalid_module(tmp_path, capsys):
    mod = tmp_path / "bad.ir"
    mod.write_text("func @f() -> i64 { entry: %x = call @missing()\n ret %x }\n")
    assert main(["gen", str(mod)]) == 1
    assert "unresolved callee @missing" in capsys.readouterr().err
    assert main(["gen", str(CORPUS / "list_sum.ir"), "--entry", "nope"]) == 1


def test_budget_failure_writes_nothing(tmp_path):
    out = tmp_path / "o"
    assert main(["gen", str(FIXTURES / "spin.ir"), "--out", str(out), "--step-budget", "20000",
                 "--seeds", "2"]) == 0
    assert not out.exists() or not any(out.rglob("*"))


def test_corpus_command_writes_report(tmp_path, capsys):
    report = tmp_path / "r.json"
    assert main(["corpus", str(CORPUS), "--report", str(report), "--seeds", "2"]) == 0
    table = capsys.readouterr().out
    assert "Functions" in table and "mean block coverage" in table
    data = json.loads(report.read_text())
    assert data["config"]["seeds"] == 2
    assert data["totals"]["functions"] == sum(len(m["functions"]) for m in data["modules"])
    assert len(data["coverage_curve"]) == 2


def test_unparsable_module_counts_as_not_prepared(tmp_path):
    (tmp_path / "a.ir").write_text((CORPUS / "list_sum.ir").read_text())
    (tmp_path / "b.ir").write_text("func @f(%p: ptr) -> i32 { entry: %v = load i32 %p\n ret %v }\n"
                                   "func @g() -> i32 { entry: %x = call @nowhere()\n ret %x }\n")
    rep = driver.run_corpus(tmp_path, GenConfig(seeds=1))
    t = rep["totals"]
    assert t["functions"] == 3 and t["prepared"] == 1
    assert rep["modules"][1]["error"]


def test_console_script_and_log_level(tmp_path):
    r = subprocess.run([sys.executable, "-m", "igen", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "igen" in r.stdout
    r = subprocess.run([sys.executable, "-m", "igen", "gen", str(CORPUS / "list_sum.ir"),
                        "--seeds", "1", "--out", str(tmp_path)],
                       capture_output=True, text=True, env={"IGEN_LOG": "debug", "PATH": ""})
    assert r.returncode == 0
    assert "DEBUG" in r.stderr or "INFO" in r.stderr


@pytest.mark.parametrize("flag", ["--no-hints", "--no-rollback", "--no-fptr"])
def test_ablation_flags(flag, tmp_path):
    assert main(["gen", str(CORPUS / "dispatch.ir"), flag, "--seeds", "2", "--out", str(tmp_path)]) == 0
