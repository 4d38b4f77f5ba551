"""Oblivious distribution and tight compaction.

Each cell carries a word mark (the word should end at a marked position)
and a position mark.  A word is *red* when it is marked but sits at an
unmarked position, *blue* when it is unmarked at a marked position, and
neutral otherwise.  With equally many marked words and marked positions,
distribution permutes the words so that marked words occupy exactly the
marked positions.

One level of the recursion:

1. swap routine: for every right vertex of a DISC(eps) graph on the n
   positions, pair red and blue words among its neighbours and swap the
   word parts (position marks stay);
2. the survivors (still red or blue, at most n/(2 ell) of each colour) are
   compacted into the first half by a logged 2-fold compaction;
3. recurse on the first half, where red words act as marked words and blue
   cells as marked positions;
4. sweep the logged compaction back.

Instances of size at most ``base_size`` are solved by a quadratic pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels as K
from .compaction import (
    RULE_MISMATCH,
    CompactionConfig,
    CopyScript,
    MatchingFailure,
    _emit,
    _trace_buf,
    compact,
    sweep_back,
)
from .expander import FamilySpec, family
from .memory import DUMMY, POS_MARK, WORD_MARK, AccessTrace, Region, SimMemory

DISTRIBUTION_FAMILY = FamilySpec(epsilon=1 / 8, base="permutation", degree=288, seed=0)


class PreconditionError(ValueError):
    """Input violates a documented precondition (exit code 2 at the CLI)."""


@dataclass(frozen=True)
class DistConfig:
    ell: int = 16
    graphs: FamilySpec = DISTRIBUTION_FAMILY
    compaction: CompactionConfig = field(default_factory=CompactionConfig)
    base_size: int = 64
    swap_mode: str = "gather"

    def to_dict(self) -> dict:
        return {"ell": self.ell, "base_size": self.base_size, "swap_mode": self.swap_mode,
                "graphs": {"epsilon": self.graphs.epsilon, "base": self.graphs.base,
                           "degree": self.graphs.degree, "seed": self.graphs.seed},
                "compaction": self.compaction.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "DistConfig":
        d = dict(d)
        kw = {k: d[k] for k in ("ell", "base_size", "swap_mode") if k in d}
        if "graphs" in d:
            kw["graphs"] = FamilySpec(**{k: v for k, v in d["graphs"].items()
                                         if k in FamilySpec.__dataclass_fields__})
        if "compaction" in d:
            kw["compaction"] = CompactionConfig.from_dict(d["compaction"])
        return cls(**kw)


def classify(flags: np.ndarray) -> np.ndarray:
    """Per-cell colour: 1 red, 2 blue, 0 neutral."""
    wm = (flags & WORD_MARK) != 0
    pm = (flags & POS_MARK) != 0
    real = (flags & DUMMY) == 0
    return np.where(real & wm & ~pm, 1, np.where(real & pm & ~wm, 2, 0)).astype(np.int8)


@lru_cache(maxsize=32)
def _reverse_table(n: int, spec: FamilySpec) -> np.ndarray:
    return np.ascontiguousarray(family(n, spec).reverse())


def swap_routine(mem: SimMemory, region: Region, spec: FamilySpec, mode: str = "gather") -> None:
    """Pair red and blue words over the neighbourhood of every right vertex.

    ``gather`` reads the d neighbour cells of a right vertex, resolves the
    lexicographic pair scan in registers and writes the cells back (2 n d
    accesses); ``pairwise`` performs one conditional swap per neighbour pair
    (4 n d(d-1)/2 accesses).  Both leave memory in the same state.
    """
    n = region.size
    rev = _reverse_table(n, spec)
    d = rev.shape[1]
    P, F, O = mem._payload, mem._flags, mem._origin
    if mode == "gather":
        exp = 2 * n * d
        tr = _trace_buf(mem, exp)
        k = K.swap_gather(P, F, O, region.base, rev, tr, mem.recording)
    elif mode == "pairwise":
        exp = 4 * n * (d * (d - 1) // 2)
        tr = _trace_buf(mem, exp)
        k = K.swap_pairwise(P, F, O, region.base, rev, tr, mem.recording)
    else:
        raise ValueError(f"unknown swap mode {mode!r}")
    _emit(mem, tr, k, exp)


def _base_case(mem: SimMemory, region: Region) -> None:
    n = region.size
    exp = 4 * (n * (n - 1) // 2)
    tr = _trace_buf(mem, exp)
    k = K.base_case(mem._payload, mem._flags, mem._origin, region.base, n, tr, mem.recording)
    _emit(mem, tr, k, exp)


@dataclass
class DistStats:
    levels: list = field(default_factory=list)

    def record(self, n, red, blue):
        self.levels.append({"n": n, "red": red, "blue": blue})


def distribute_region(mem: SimMemory, region: Region, cfg: DistConfig, stats: DistStats | None = None,
                      failures: list | None = None) -> None:
    """In-place distribution on a power-of-two region (sizes are public, data is not).

    Matching failures are appended to ``failures`` when given and raised
    otherwise, in both cases only after the whole recursion has run.
    """
    n = region.size
    if n <= cfg.base_size:
        _base_case(mem, region)
        return
    swap_routine(mem, region, cfg.graphs, cfg.swap_mode)
    if stats is not None:
        c = classify(mem.peek(region)[1])
        stats.record(n, int((c == 1).sum()), int((c == 2).sum()))
    script = CopyScript()
    compact(mem, region, cfg.compaction, script, rule=RULE_MISMATCH, scheme="word", strict=False)
    inner = script.failures if failures is None else failures
    if failures is not None:
        failures.extend(script.failures)
    distribute_region(mem, region.sub(0, n // 2), cfg, stats, inner)
    sweep_back(mem, script)
    if failures is None and inner:
        raise MatchingFailure("; ".join(inner))


def _pow2_at_least(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def _prepare(values, word_marks, pos_marks, word_bits):
    values = np.asarray(values, dtype=np.uint64)
    wm = np.asarray(word_marks, dtype=bool)
    pm = np.asarray(pos_marks, dtype=bool)
    if not (values.shape == wm.shape == pm.shape) or values.ndim != 1:
        raise PreconditionError("values and marks must be 1-d arrays of equal length")
    if int(wm.sum()) != int(pm.sum()):
        raise PreconditionError(f"{int(wm.sum())} marked words but {int(pm.sum())} marked positions")
    return values, wm, pm


@dataclass
class DistResult:
    values: np.ndarray
    word_marks: np.ndarray
    pos_marks: np.ndarray
    origin: np.ndarray
    trace: AccessTrace | None = None
    stats: DistStats | None = None


def distribute(values, word_marks, pos_marks, cfg: DistConfig | None = None,
               trace_mode: str | None = None, stats: bool = False) -> DistResult:
    """Distribute marked words onto marked positions.

    Arrays whose length is not a power of two are padded with neutral words
    (unmarked words at unmarked positions), which never move.
    """
    cfg = cfg or DistConfig()
    values, wm, pm = _prepare(values, word_marks, pos_marks, cfg.compaction.word_bits)
    n = values.size
    size = _pow2_at_least(n)
    rec = AccessTrace(trace_mode) if trace_mode else None
    mem = SimMemory(cfg.compaction.word_bits, rec)
    region = mem.alloc(size)
    flags = np.zeros(size, np.uint8)
    flags[:n] = np.where(wm, WORD_MARK, 0) | np.where(pm, POS_MARK, 0)
    payload = np.zeros(size, np.uint64)
    payload[:n] = values
    origin = np.arange(size)
    mem.load(region, payload, flags, origin)
    st = DistStats() if stats else None
    distribute_region(mem, region, cfg, st)
    p, f, o = mem.peek(region)
    return DistResult(p[:n], (f[:n] & WORD_MARK) != 0, (f[:n] & POS_MARK) != 0, o[:n], rec, st)


def tight_compact_region(mem: SimMemory, region: Region, cfg: DistConfig) -> int:
    """Count marked words, mark the first m positions, distribute, clear the position marks."""
    n = region.size
    addrs = np.arange(region.base, region.base + n, dtype=np.int64)
    _, f, _ = mem.read_many(addrs)
    m = int(np.count_nonzero((f & WORD_MARK) != 0))
    pos = np.arange(n) < m
    _, f, _ = mem.read_many(addrs)
    mem.write_many(addrs, flags=np.where(pos, f | POS_MARK, f & np.uint8(0xFF ^ POS_MARK)))
    failures: list = []
    distribute_region(mem, region, cfg, failures=failures)
    _, f, _ = mem.read_many(addrs)
    mem.write_many(addrs, flags=f & np.uint8(0xFF ^ POS_MARK))
    if failures:
        raise MatchingFailure("; ".join(failures))
    return m


def tight_compact(values, marks, cfg: DistConfig | None = None, trace_mode: str | None = None) -> DistResult:
    """Stable-free tight compaction: the m marked words end in the first m positions."""
    cfg = cfg or DistConfig()
    values = np.asarray(values, dtype=np.uint64)
    marks = np.asarray(marks, dtype=bool)
    if values.shape != marks.shape or values.ndim != 1:
        raise PreconditionError("values and marks must be 1-d arrays of equal length")
    n = values.size
    size = _pow2_at_least(n)
    rec = AccessTrace(trace_mode) if trace_mode else None
    mem = SimMemory(cfg.compaction.word_bits, rec)
    region = mem.alloc(size)
    payload = np.zeros(size, np.uint64)
    payload[:n] = values
    flags = np.zeros(size, np.uint8)
    flags[:n] = np.where(marks, WORD_MARK, 0)
    mem.load(region, payload, flags, np.arange(size))
    tight_compact_region(mem, region, cfg)
    p, f, o = mem.peek(region)
    return DistResult(p[:n], (f[:n] & WORD_MARK) != 0, np.zeros(n, bool), o[:n], rec)
