"""Command line: ``igen gen | replay | corpus | verify``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import driver
from .engine import prepare, replay
from .errors import FormatError, HashMismatch, IgenError
from .exec import BACKEND
from .exec.outcome import GRACEFUL, NORMAL
from .genrt import GenConfig
from .inputfmt import verify

EXIT_OK, EXIT_FAIL, EXIT_MISMATCH = 0, 1, 2


def _number(text: str):
    try:
        return int(text, 0)
    except ValueError:
        return float(text)


def _gen_flags(p: argparse.ArgumentParser) -> None:
    d = GenConfig()
    p.add_argument("--seeds", type=int, default=d.seeds, help="inputs to attempt per function")
    p.add_argument("--seed", type=int, default=d.seed, help="first rng seed")
    p.add_argument("--timeout-ms", type=int, default=d.timeout_ms)
    p.add_argument("--step-budget", type=int, default=d.step_budget)
    p.add_argument("--max-retries", type=int, default=d.max_retries)
    p.add_argument("--null-prob", type=float, default=d.null_prob)
    p.add_argument("--rollback-prob", type=float, default=d.rollback_prob)
    p.add_argument("--out", type=Path, default=None, help="directory for input files")
    p.add_argument("--no-hints", action="store_true", help="ignore branch hints")
    p.add_argument("--no-rollback", action="store_true", help="never roll back on pointer comparisons")
    p.add_argument("--no-fptr", action="store_true", help="always stub indirect calls")
    p.add_argument("--arg", action="append", default=[], metavar="NAME=VALUE",
                   help="pin a scalar entry argument (repeatable)")
    p.add_argument("--backend", choices=("cython", "python"), default=None)


def _config(a) -> GenConfig:
    overrides = []
    for item in a.arg:
        name, sep, value = item.partition("=")
        if not sep:
            raise SystemExit(f"--arg expects NAME=VALUE, got {item!r}")
        overrides.append((name, _number(value)))
    return GenConfig(seed=a.seed, seeds=a.seeds, timeout_ms=a.timeout_ms, step_budget=a.step_budget,
                     max_retries=a.max_retries, null_prob=a.null_prob, rollback_prob=a.rollback_prob,
                     hints=not a.no_hints, rollback=not a.no_rollback, fptr=not a.no_fptr,
                     arg_overrides=tuple(overrides))


def cmd_gen(a) -> int:
    config = _config(a)
    entries = [a.entry] if a.entry else None
    out = a.out if a.out is not None else Path("inputs")
    try:
        mr = driver.run_module(a.module, config, entries, out, a.backend)
    except IgenError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    if mr.error is not None:
        print(f"error: {mr.error}", file=sys.stderr)
        return EXIT_FAIL
    for fr in mr.functions:
        ok = sum(o.replayed for o in fr.outcomes)
        cov = 100 * fr.curve[-1] if fr.curve else 0.0
        print(f"@{fr.name}: {ok}/{len(fr.outcomes)} inputs replayed, coverage {cov:.1f}%")
        for o in fr.outcomes:
            where = f" -> {out / o.file}" if o.file else ""
            print(f"  seed {o.seed}: {o.exit} retries={o.retries}{where}")
    return EXIT_OK


def cmd_replay(a) -> int:
    try:
        prep = prepare(a.module.read_text(encoding="utf-8"))
        rr = replay(prep, a.input.read_bytes(), step_budget=a.step_budget,
                    timeout_ms=a.timeout_ms, backend=a.backend)
    except HashMismatch:
        print("error: input does not match module", file=sys.stderr)
        return EXIT_MISMATCH
    except (IgenError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISMATCH if isinstance(e, FormatError) else EXIT_FAIL
    entry = rr.image.input.entry
    scope = set(prep.scope_blocks(entry))
    hit = rr.profile.blocks_hit() & scope
    print(f"entry: @{entry}")
    print(f"exit: {rr.exit}")
    if rr.exit.detail:
        print(f"detail: {rr.exit.detail}")
    print(f"steps: {rr.profile.steps}")
    print(f"blocks: {len(hit)}/{len(scope)} ({100 * len(hit) / max(1, len(scope)):.1f}%)")
    return EXIT_OK if rr.exit.tag in (NORMAL, GRACEFUL) else EXIT_FAIL


def cmd_corpus(a) -> int:
    config = _config(a)
    report = driver.run_corpus(a.dir, config, a.out, a.report, backend=a.backend)
    sys.stdout.write(driver.format_table(report))
    return EXIT_OK


def cmd_verify(a) -> int:
    try:
        data = a.input.read_bytes()
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    diags = verify(data)
    for d in diags:
        print(d)
    if not diags:
        print("ok")
    return EXIT_OK if not diags else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="igen", description="Generate and replay inputs for IR functions.")
    p.add_argument("--version", action="version", version=f"%(prog)s 0.1.0 ({BACKEND} kernel)")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate inputs for functions of one module")
    g.add_argument("module", type=Path)
    which = g.add_mutually_exclusive_group()
    which.add_argument("--entry", help="function to generate for")
    which.add_argument("--all", action="store_true", help="every defined function (default)")
    _gen_flags(g)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("replay", help="run a function on a stored input")
    r.add_argument("module", type=Path)
    r.add_argument("input", type=Path)
    r.add_argument("--step-budget", type=int, default=GenConfig().step_budget)
    r.add_argument("--timeout-ms", type=int, default=GenConfig().timeout_ms)
    r.add_argument("--backend", choices=("cython", "python"), default=None)
    r.set_defaults(func=cmd_replay)

    c = sub.add_parser("corpus", help="generate for every module in a directory")
    c.add_argument("dir", type=Path)
    c.add_argument("--report", type=Path, default=None, help="write the JSON report here")
    _gen_flags(c)
    c.set_defaults(func=cmd_corpus)

    v = sub.add_parser("verify", help="check an input file's structure")
    v.add_argument("input", type=Path)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    driver.configure_logging()
    a = build_parser().parse_args(argv)
    return a.func(a)


if __name__ == "__main__":
    sys.exit(main())
