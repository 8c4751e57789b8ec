"""Compiled vs pure-Python interpreter kernel.

Each workload generates one input, then replays it repeatedly on every
available backend; the reported time is the median replay.  Both backends
must agree on the exit and the block trace, otherwise the run aborts.

    python benchmarks/bench_kernel.py [--repeat N] [--dims 48] [--json out.json]
"""

import argparse
import json
import statistics
import sys
import time
from pathlib import Path

from igen.engine import prepare, replay
from igen.driver import generate_with_retries, seed_for
from igen.exec import available_backends
from igen.genrt import GenConfig
from igen.inputfmt import encode_input

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


def workloads(dims: int):
    big = dict(step_budget=10**9, timeout_ms=10**7)
    yield "gemm", "gemm", GenConfig(arg_overrides=(("ni", dims), ("nj", dims), ("nk", dims)), **big)
    yield "matrix", None, GenConfig(int_range=(0, 64), **big)
    yield "sorting", None, GenConfig(**big)
    yield "list_sum", "sum", GenConfig(null_prob=0.05, **big)


def first_input(prep, entry, cfg):
    for k in range(50):
        at, _, _ = generate_with_retries(prep, entry, cfg, seed_for(cfg.seed, k))
        if at.status == "success":
            return encode_input(at.input)
    return None


def bench(repeat: int, dims: int):
    backends = available_backends()
    rows = []
    for stem, entry, cfg in workloads(dims):
        prep = prepare((CORPUS / f"{stem}.ir").read_text())
        names = [entry] if entry else [f.name for f in prep.module.functions]
        for name in names:
            data = first_input(prep, name, cfg)
            if data is None:
                continue
            row = {"workload": f"{stem}:{name}"}
            ref = None
            for be in backends:
                times = []
                for _ in range(repeat):
                    t0 = time.perf_counter()
                    rr = replay(prep, data, step_budget=cfg.step_budget, timeout_ms=cfg.timeout_ms,
                                backend=be)
                    times.append(time.perf_counter() - t0)
                key = (rr.exit.key(), rr.profile.trace_key())
                if ref is None:
                    ref = key
                elif key != ref:
                    sys.exit(f"backends disagree on {row['workload']}")
                row["steps"] = rr.profile.steps
                row[be] = statistics.median(times)
            rows.append(row)
    return backends, rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--dims", type=int, default=48, help="gemm matrix dimension")
    p.add_argument("--json", type=Path, default=None)
    a = p.parse_args(argv)
    backends, rows = bench(a.repeat, a.dims)
    head = f"{'workload':28s} {'steps':>10s}" + "".join(f" {b + ' ms':>12s}" for b in backends)
    if len(backends) == 2:
        head += f" {'speedup':>8s}"
    print(head)
    for r in rows:
        line = f"{r['workload']:28s} {r['steps']:10d}" + "".join(f" {1e3 * r[b]:12.2f}" for b in backends)
        if len(backends) == 2:
            line += f" {r['python'] / max(r['cython'], 1e-9):7.1f}x"
        print(line)
    if a.json:
        a.json.write_text(json.dumps({"backends": backends, "rows": rows}, indent=2) + "\n")


if __name__ == "__main__":
    main()
