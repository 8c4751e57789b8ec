"""Multi-seed generation per function, replay checks, coverage and corpus reports."""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .engine import Prepared, generate_attempt, prepare, replay
from .errors import IgenError
from .exec.outcome import GRACEFUL, NORMAL
from .genrt import GenConfig
from .inputfmt import encode_input
from .ir.parser import parse_module

log = logging.getLogger("igen")

INPUT_SUFFIX = ".igin"


def configure_logging() -> None:
    level = os.environ.get("IGEN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def write_atomic(path: Path, data: bytes) -> None:
    """Write via a temp file in the same directory, so readers never see a partial file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


@dataclass
class SeedOutcome:
    seed: int
    generated: bool = False
    replayed: bool = False
    exit: str = ""  # generation ExitKind (or failure reason)
    replay_exit: str = ""
    normal: bool = False  # generation ended in NormalReturn
    retries: int = 0
    constraints: int = 0
    reason: str = ""
    blocks: frozenset = frozenset()
    data: Optional[bytes] = None
    file: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "seed": self.seed, "generated": self.generated, "replayed": self.replayed,
            "exit": self.exit, "replay_exit": self.replay_exit, "normal_exit": self.normal,
            "retries": self.retries, "constraints": self.constraints, "reason": self.reason,
            "blocks_covered": len(self.blocks),
            "input": self.file, "input_bytes": len(self.data) if self.data is not None else None,
        }


@dataclass
class FunctionResult:
    name: str
    n_blocks: int
    outcomes: list = field(default_factory=list)
    curve: list = field(default_factory=list)  # union coverage after k replayed seeds

    @property
    def generated_normal(self):
        return any(o.generated and o.normal for o in self.outcomes)

    @property
    def generated_all(self):
        return any(o.generated for o in self.outcomes)

    @property
    def ran_normal(self):
        return any(o.replayed and o.normal for o in self.outcomes)

    @property
    def ran_all(self):
        return any(o.replayed for o in self.outcomes)

    def to_json(self) -> dict:
        return {
            "function": self.name, "blocks": self.n_blocks,
            "generated_normal": self.generated_normal, "generated_all": self.generated_all,
            "ran_normal": self.ran_normal, "ran_all": self.ran_all,
            "coverage": [round(c, 6) for c in self.curve],
            "seeds": [o.to_json() for o in self.outcomes],
        }


def seed_for(base: int, k: int) -> int:
    """64-bit generation seed for the k-th input (SplitMix64 of base + k).

    Mixing keeps ``seed ^ retry`` of one input clear of every other input's
    seeds, so retries never replay another input's random stream.
    """
    z = (base + k + 1) * 0x9E3779B97F4A7C15 & 0xFFFFFFFFFFFFFFFF
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & 0xFFFFFFFFFFFFFFFF
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def generate_with_retries(prep: Prepared, entry: str, config: GenConfig, seed: int,
                          branch_counts=None, backend=None):
    """Retry loop for one seed: fold rollback constraints until an attempt finishes.

    Retry r runs with rng seed ``seed ^ r``.  Returns (attempt, retries used, constraints).
    """
    constraints: dict = {}
    attempt = None
    for r in range(config.max_retries + 1):
        attempt = generate_attempt(prep, entry, config, seed ^ r, constraints, branch_counts, backend)
        if attempt.status != "rollback":
            return attempt, r, constraints
        c = attempt.constraint
        log.debug("%s seed %d retry %d: %s", entry, seed, r, c)
        constraints[c.site] = c
    return attempt, config.max_retries, constraints


def generate_for_function(prep: Prepared, entry: str, config: GenConfig,
                          backend=None, verify_rebased: bool = False) -> FunctionResult:
    """Generate inputs with `config.seeds` seeds and replay each one.

    Branch counts from completed replays steer hinted values of later seeds.
    """
    scope = set(prep.scope_blocks(entry))
    res = FunctionResult(entry, len(scope))
    acc = None
    covered: set = set()
    for k in range(config.seeds):
        seed = seed_for(config.seed, k)
        out = SeedOutcome(seed)
        attempt, retries, cons = generate_with_retries(prep, entry, config, seed, acc, backend)
        out.retries = retries
        out.constraints = len(cons)
        if attempt.status == "success":
            out.generated = True
            out.exit = str(attempt.exit)
            out.normal = attempt.exit.tag == NORMAL
            out.data = encode_input(attempt.input)
            kwargs = dict(step_budget=config.step_budget, timeout_ms=config.timeout_ms, backend=backend)
            if verify_rebased:
                kwargs.update(slot_offset=k + 1, byte_base=0x1000 + 16 * (k + 1))
            rr = replay(prep, out.data, **kwargs)
            out.replay_exit = str(rr.exit)
            same = (rr.exit.key() == attempt.exit.key()
                    and rr.profile.trace_key() == attempt.profile.trace_key()
                    and rr.stream_left == 0)
            if same and rr.exit.tag in (NORMAL, GRACEFUL):
                out.replayed = True
                out.blocks = frozenset(rr.profile.blocks_hit() & scope)
                covered |= out.blocks
                acc = rr.profile.merge_into(acc)
            else:
                out.reason = "replay diverged"
                log.warning("%s seed %d: replay diverged (%s vs %s)", entry, seed, rr.exit, attempt.exit)
        elif attempt.status == "rollback":
            out.exit = "RetriesExhausted"
            out.reason = "RetriesExhausted"
        else:
            out.exit = str(attempt.exit)
            out.reason = attempt.reason
        res.outcomes.append(out)
        res.curve.append(len(covered) / len(scope) if scope else 0.0)
    return res


# -- corpus ---------------------------------------------------------------------

STAGES = ("functions", "prepared", "inputs_normal", "inputs_all", "ran_normal", "ran_all")


@dataclass
class ModuleResult:
    path: str
    error: Optional[str] = None
    n_functions: int = 0
    functions: list = field(default_factory=list)


def _function_names(text: str) -> list[str]:
    try:
        return [f.name for f in parse_module(text).functions]
    except IgenError:
        return []


def run_module(path: Path, config: GenConfig, entries=None, out_dir: Optional[Path] = None,
               backend=None, verify_rebased: bool = False) -> ModuleResult:
    text = path.read_text(encoding="utf-8")
    mr = ModuleResult(path.name)
    try:
        prep = prepare(text)
    except IgenError as e:
        mr.error = str(e)
        mr.n_functions = len(_function_names(text))
        log.warning("%s: %s", path.name, e)
        return mr
    names = [f.name for f in prep.module.functions]
    if entries:
        missing = [e for e in entries if e not in names]
        if missing:
            raise IgenError(f"{path.name}: no function named {', '.join(missing)}")
        names = [n for n in names if n in entries]
    mr.n_functions = len(names)
    for name in names:
        fr = generate_for_function(prep, name, config, backend, verify_rebased)
        for i, o in enumerate(fr.outcomes):
            if o.generated:
                o.file = f"{path.stem}/{name}.{i}{INPUT_SUFFIX}"
                if out_dir is not None:
                    write_atomic(out_dir / o.file, o.data)
        mr.functions.append(fr)
    return mr


def build_report(modules: list[ModuleResult], config: GenConfig) -> dict:
    totals = dict.fromkeys(STAGES, 0)
    curves = []
    for mr in modules:
        totals["functions"] += mr.n_functions
        if mr.error is not None:
            continue
        totals["prepared"] += len(mr.functions)
        for fr in mr.functions:
            totals["inputs_normal"] += fr.generated_normal
            totals["inputs_all"] += fr.generated_all
            totals["ran_normal"] += fr.ran_normal
            totals["ran_all"] += fr.ran_all
            curves.append(fr.curve)
    n = config.seeds
    mean_curve = [round(sum(c[k] for c in curves) / len(curves), 6) if curves else 0.0
                  for k in range(n)]
    return {
        "config": config.echo(),
        "totals": totals,
        "coverage_curve": mean_curve,
        "modules": [
            {"module": mr.path, "error": mr.error, "functions": [fr.to_json() for fr in mr.functions]}
            for mr in modules
        ],
    }


def format_table(report: dict) -> str:
    t = report["totals"]
    head = ["Functions", "Prepared", "Inputs (normal)", "Inputs (all)", "Ran (normal)", "Ran (all)"]
    vals = [str(t[s]) for s in STAGES]
    widths = [max(len(h), len(v)) for h, v in zip(head, vals)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(head, widths)),
             "  ".join(v.rjust(w) for v, w in zip(vals, widths)), ""]
    curve = report["coverage_curve"]
    lines.append("inputs  mean block coverage")
    for k, c in enumerate(curve, 1):
        lines.append(f"{k:6d}  {100 * c:6.2f}%")
    return "\n".join(lines) + "\n"


def report_bytes(report: dict) -> bytes:
    return (json.dumps(report, indent=2) + "\n").encode("utf-8")


def run_corpus(corpus_dir, config: GenConfig, out_dir=None, report_path=None,
               entries=None, backend=None, verify_rebased: bool = False) -> dict:
    """Generate for every function of every ``*.ir`` module under `corpus_dir`.

    Modules are visited in sorted path order; the report has no timings so
    that two runs with the same config are byte-identical.
    """
    corpus_dir = Path(corpus_dir)
    out_dir = Path(out_dir) if out_dir is not None else None
    modules = []
    for path in sorted(corpus_dir.glob("*.ir")):
        log.info("module %s", path.name)
        modules.append(run_module(path, config, entries, out_dir, backend, verify_rebased))
    report = build_report(modules, config)
    if report_path is not None:
        write_atomic(Path(report_path), report_bytes(report))
    return report
