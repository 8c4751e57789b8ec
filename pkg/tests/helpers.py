"""Shared fixtures data: generated corpus inputs and file corruptions."""

import dataclasses
import functools

from igen.driver import generate_for_function
from igen.genrt import GenConfig
from igen.inputfmt import Reloc, decode_input, encode_input

from conftest import corpus_modules, prepared


@functools.lru_cache(maxsize=None)
def corpus_inputs(verify_rebased=False):
    """[(module stem, function, seed index, outcome)] for every generated corpus input."""
    out = []
    for path in corpus_modules():
        prep = prepared(path.stem)
        for f in prep.module.functions:
            fr = generate_for_function(prep, f.name, GenConfig(), verify_rebased=verify_rebased)
            for i, o in enumerate(fr.outcomes):
                if o.generated:
                    out.append((path.stem, f.name, i, o))
    return tuple(out)


def overlap_runs(data: bytes) -> bytes:
    gi = decode_input(data)
    for o in gi.objects:
        if o.runs:
            off, b = o.runs[0]
            o.runs.append((off, b[:1]))
            return encode_input(gi)
    raise ValueError("input has no runs")


def dangle_reloc(data: bytes) -> bytes:
    gi = decode_input(data)
    ids = {o.id for o in gi.objects}
    missing = max(ids, default=0) + 100
    for i, r in enumerate(gi.relocs):
        if r.kind == 0 and r.target != 0:
            gi.relocs[i] = dataclasses.replace(r, target=missing)
            return encode_input(gi)
    gi.relocs.append(Reloc(1, 0, 0, 0, missing, 0))
    return encode_input(gi)


def bad_magic(data: bytes) -> bytes:
    return b"XGIN" + data[4:]


CORRUPTIONS = {"overlapping runs": overlap_runs, "dangling relocation": dangle_reloc,
               "bad magic": bad_magic}

# one line per acceptance criterion, echoed in the terminal summary
RESULTS = []
