"""Value production during generation: numbers, pointers, stubs, rollback."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional, Union

from .errors import RollbackSignal
from .ir.hints import BranchHint
from .ir.prepare import STUB
from .ir.types import K_F32, K_I1, K_PTR, FloatType, IntType
from .memory import MemoryPool
from .values import MASKS, WIDTHS, sext, to_f32

TAG_CALLEE = 8


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    int_range: tuple[int, int] = (0, 256)
    float_range: tuple[float, float] = (0.0, 1.0)
    null_prob: float = 0.25
    rollback_prob: float = 0.5
    max_retries: int = 16
    timeout_ms: int = 5000
    step_budget: int = 10_000_000
    hints: bool = True
    rollback: bool = True
    fptr: bool = True
    seeds: int = 5
    # pinned values for scalar entry arguments, by parameter name
    arg_overrides: tuple[tuple[str, object], ...] = ()

    def __post_init__(self):
        for p in (self.null_prob, self.rollback_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        if self.step_budget <= 0 or self.timeout_ms <= 0 or self.max_retries < 0:
            raise ValueError("budgets must be positive")
        if self.int_range[0] >= self.int_range[1]:
            raise ValueError("empty integer range")

    def echo(self) -> dict:
        return {
            "seed": self.seed, "seeds": self.seeds,
            "int_range": list(self.int_range), "float_range": list(self.float_range),
            "null_prob": self.null_prob, "rollback_prob": self.rollback_prob,
            "max_retries": self.max_retries, "timeout_ms": self.timeout_ms,
            "step_budget": self.step_budget,
            "hints": self.hints, "rollback": self.rollback, "fptr": self.fptr,
        }


@dataclass(frozen=True)
class MustAlias:
    site: int
    offset: int  # relative to the base object's anchor
    base_site: Optional[int] = None  # generated base, named by its creating request
    base_global: Optional[str] = None


@dataclass(frozen=True)
class MustNull:
    site: int


Constraint = Union[MustAlias, MustNull]


@dataclass
class StreamEntry:
    tag: int  # primitive kind, or TAG_CALLEE
    value: object  # int/float/raw pointer, or callee name


# predicate algebra for hint satisfaction
_SWAP = {"slt": "sgt", "sle": "sge", "sgt": "slt", "sge": "sle",
         "ult": "ugt", "ule": "uge", "ugt": "ult", "uge": "ule",
         "olt": "ogt", "ole": "oge", "ogt": "olt", "oge": "ole"}
_NEG_I = {"eq": "ne", "ne": "eq", "slt": "sge", "sge": "slt", "sle": "sgt", "sgt": "sle",
          "ult": "uge", "uge": "ult", "ule": "ugt", "ugt": "ule"}
_NEG_F = {"oeq": "une", "une": "oeq", "one": "ueq", "ueq": "one", "olt": "uge", "uge": "olt",
          "ole": "ugt", "ugt": "ole", "ogt": "ule", "ule": "ogt", "oge": "ult", "ult": "oge",
          "ord": "uno", "uno": "ord"}


def eval_icmp(pred: str, a: int, b: int, width: int) -> bool:
    if pred[0] == "s":
        a, b = sext(a, width), sext(b, width)
    op = pred if pred in ("eq", "ne") else pred[1:]
    return {"eq": a == b, "ne": a != b, "lt": a < b, "le": a <= b,
            "gt": a > b, "ge": a >= b}[op]


def eval_fcmp(pred: str, a: float, b: float) -> bool:
    uno = math.isnan(a) or math.isnan(b)
    if pred == "ord":
        return not uno
    if pred == "uno":
        return uno
    if uno:
        return pred[0] == "u"
    op = pred[1:]
    return {"eq": a == b, "ne": a != b, "lt": a < b, "le": a <= b,
            "gt": a > b, "ge": a >= b}[op]


class GenRuntime:
    """Per-attempt generation state: rng, constraints, fresh-pointer sites, stream."""

    def __init__(self, pool: MemoryPool, config: GenConfig, seed: int,
                 constraints: Optional[dict] = None,
                 hints: Optional[dict] = None,
                 branch_counts=None,
                 branch_index: Optional[dict] = None):
        self.pool = pool
        self.config = config
        self.rng = random.Random(seed)
        self.constraints: dict[int, Constraint] = dict(constraints or {})
        self.hints = hints if config.hints else None
        self.branch_counts = branch_counts
        self.branch_index = branch_index or {}
        self.next_site = 0
        self.site_object: dict[int, int] = {}  # site -> object index it created
        self.stream: list[StreamEntry] = []
        self.hint_uses = 0

    # -- numbers ------------------------------------------------------------
    def draw_numeric(self, kind: int):
        if kind == K_I1:
            return self.rng.randrange(2)
        if kind in (K_F32, K_F32 + 1):
            lo, hi = self.config.float_range
            v = lo + (hi - lo) * self.rng.random()
            return to_f32(v) if kind == K_F32 else v
        lo, hi = self.config.int_range
        return self.rng.randrange(lo, hi) & MASKS[kind]

    def gen_numeric(self, kind: int, hint: Optional[BranchHint] = None):
        if hint is None or self.branch_counts is None:
            return self.draw_numeric(kind)
        bi = self.branch_index.get(hint.branch_site)
        if bi is None:
            return self.draw_numeric(kind)
        taken = self.branch_counts[2 * bi]
        not_taken = self.branch_counts[2 * bi + 1]
        want = taken <= not_taken  # under-covered edge; ties satisfy the condition
        v = satisfying_value(hint, want, kind, self.rng, self.config)
        if v is None:
            return self.draw_numeric(kind)
        self.hint_uses += 1
        return v

    # -- pointers ----------------------------------------------------------
    def gen_pointer(self) -> int:
        site = self.next_site
        self.next_site += 1
        c = self.constraints.get(site)
        if isinstance(c, MustNull):
            return 0
        if isinstance(c, MustAlias):
            base = None
            if c.base_global is not None:
                base = self.pool.global_by_name.get(c.base_global)
            elif c.base_site in self.site_object:
                base = self.pool.objects[self.site_object[c.base_site]]
            if base is not None:
                return base.anchor_raw + c.offset
        if self.rng.random() < self.config.null_prob:
            return 0
        raw = self.pool.create_object(site=site)
        self.site_object[site] = raw >> 40
        return raw

    def gen_value(self, kind: int, site: int = -1):
        if kind == K_PTR:
            return self.gen_pointer()
        hint = self.hints.get(site) if self.hints else None
        return self.gen_numeric(kind, hint)

    # -- stubs and indirect calls -------------------------------------------
    def stub_return(self, kinds, site: int = -1) -> list:
        out = []
        for k in kinds:
            v = self.gen_value(k, site)
            self.stream.append(StreamEntry(k, v))
            out.append(v)
        return out

    def select_callee(self, candidates: list[str]) -> str:
        if not self.config.fptr:
            name = STUB
        elif len(candidates) == 1:
            name = candidates[0]
        else:
            name = candidates[self.rng.randrange(len(candidates))]
        self.stream.append(StreamEntry(TAG_CALLEE, name))
        return name

    # -- pointer comparisons -------------------------------------------------
    def on_ptr_cmp(self, x: int, y: int, pred: str) -> None:
        """May raise RollbackSignal with a new constraint; otherwise returns."""
        if not self.config.rollback or x == y:
            return
        ox = self.pool.object_of(x) if x else None
        oy = self.pool.object_of(y) if y else None
        if x == 0 or y == 0:
            obj = oy if x == 0 else ox
            if obj is None or obj[0].site is None or obj[0].site in self.constraints:
                return
            if self.rng.random() < self.config.rollback_prob:
                raise RollbackSignal(MustNull(obj[0].site))
            return
        if ox is None or oy is None or ox[0] is oy[0]:
            return
        (later, lp, later_on_lhs), (earlier, ep) = (
            ((ox, x, True), (oy, y)) if ox[0].index > oy[0].index else ((oy, y, False), (ox, x)))
        lrec, lo = later
        erec, eo = earlier
        if lrec.site is None or lrec.site in self.constraints:
            return
        if self.rng.random() >= self.config.rollback_prob:
            return
        d = lo - lrec.anchor
        if pred in ("eq", "ne"):
            target = eo - erec.anchor
        else:
            upper = (pred[1] in "l") != later_on_lhs  # later must compare greater
            used_lo, used_hi = erec.used_extent()
            if used_lo == used_hi:
                target = eo - erec.anchor
            else:
                target = (used_hi if upper else used_lo) - erec.anchor
        base_site = erec.site if erec.kind == "generated" else None
        base_global = erec.name if erec.kind == "global" else None
        if base_site is None and base_global is None:
            return
        raise RollbackSignal(MustAlias(lrec.site, target - d, base_site, base_global))


def satisfying_value(hint: BranchHint, want: bool, kind: int, rng: random.Random,
                     config: GenConfig):
    """A value of `kind` that makes the hinted comparison come out as `want`."""
    if hint.op == "icmp":
        if not isinstance(hint.value_type, IntType):
            return None
        pred = hint.pred if want else _NEG_I[hint.pred]
        if not hint.value_on_lhs:
            pred = _SWAP.get(pred, pred)
        return _int_satisfying(pred, int(hint.const), kind, rng, config)
    if not isinstance(hint.value_type, FloatType):
        return None
    pred = hint.pred if want else _NEG_F[hint.pred]
    if not hint.value_on_lhs:
        pred = _SWAP.get(pred, pred)
    v = _float_satisfying(pred, float(hint.const), rng, config)
    if v is None:
        return None
    if kind == K_F32:
        v = to_f32(v)
    if not eval_fcmp(pred, v, to_f32(hint.const) if kind == K_F32 else float(hint.const)):
        return None
    return v


def _int_satisfying(pred: str, c: int, kind: int, rng, config):
    width = WIDTHS[kind]
    mask = MASKS[kind]
    signed = pred[0] == "s"
    if signed:
        dmin, dmax = -(1 << (width - 1)), (1 << (width - 1)) - 1
        c = sext(c & mask, width)
    else:
        dmin, dmax = 0, mask
        c &= mask
    op = pred if pred in ("eq", "ne") else pred[1:]
    if op == "eq":
        return c & mask
    lo_pref, hi_pref = config.int_range[0], config.int_range[1] - 1
    if op == "ne":
        lo, hi = max(dmin, lo_pref), min(dmax, hi_pref)
        if lo > hi:
            lo, hi = dmin, dmax
        if lo == hi == c:
            v = c + 1 if c < dmax else c - 1
        else:
            v = rng.randint(lo, hi)
            while v == c:
                v = rng.randint(lo, hi)
        return v & mask
    if op == "lt":
        lo, hi = dmin, c - 1
    elif op == "le":
        lo, hi = dmin, c
    elif op == "gt":
        lo, hi = c + 1, dmax
    else:
        lo, hi = c, dmax
    if lo > hi:
        return None
    plo, phi = max(lo, lo_pref), min(hi, hi_pref)
    if plo > phi:
        # preferred range misses the satisfying side; stay near the constant
        if op in ("lt", "le"):
            plo, phi = max(lo, hi - 255), hi
        else:
            plo, phi = lo, min(hi, lo + 255)
    return rng.randint(plo, phi) & mask


def _float_satisfying(pred: str, c: float, rng, config):
    flo, fhi = config.float_range
    if pred in ("ord", "one", "une", "ult", "ule", "ugt", "uge", "olt", "ole", "ogt", "oge") \
            and math.isnan(c):
        return None
    if pred == "uno":
        return math.nan
    if pred in ("oeq", "ueq"):
        return c
    u = rng.random()
    if pred == "ord":
        return flo + (fhi - flo) * u
    if pred in ("one", "une"):
        v = flo + (fhi - flo) * u
        return v if v != c else c + 1.0
    if pred[1:] in ("lt", "le"):
        if flo < c:
            v = flo + (min(fhi, c) - flo) * u
        else:
            v = c - 1.0 - u * max(1.0, abs(c))
        if v >= c and pred[1:] == "lt":
            v = math.nextafter(c, -math.inf)
        return v
    if flo <= c < fhi:
        v = c + (fhi - c) * u
    else:
        v = c + 1.0 + u * max(1.0, abs(c))
    if v <= c and pred[1:] == "gt":
        v = math.nextafter(c, math.inf)
    return v
