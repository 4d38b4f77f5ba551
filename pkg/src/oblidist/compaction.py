"""Oblivious 2-fold and loose compaction.

2-fold compaction moves every marked atom of a region into its first half,
keeping the multiset of real atoms in the region.  The block scheme works on
N blocks of B atoms plus an all-dummy auxiliary array of the same size:

0. blocks i and i + N/2 are swapped when the lower one holds more marked
   atoms; the upper block of each pair becomes a marked vertex when it holds
   more than B/4 marked atoms, and the right vertices i, i + N/2 are blocked
   when the lower one does;
1. a (B, B/4)-matching for the marked vertices is found, and every matched
   edge carries one marked atom to a dummy slot of its right block;
2. marked atoms of upper block i + N/2 and of aux blocks i, i + N/2 are
   swapped with real unmarked atoms of lower block i;
3. every edge that carried an atom takes one dummy back.

Step 0 guarantees that each lower block receiving atoms in step 2 has at
least 3B/4 real unmarked atoms, so step 2 never moves a dummy and step 3
always finds a dummy on the left and a real atom on the right.

All data movement is a sequence of conditional swaps whose addresses depend
only on sizes; the swaps are logged in a :class:`CopyScript` so a later
:func:`sweep_back` can undo them in reverse order.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import _kernels as K
from .expander import FamilySpec, family
from .matching import (
    Matching,
    MatchingError,
    alloc_cells,
    block_size,
    compressed_words,
    find_matching_active,
    find_matching_full_scan,
    run_matching_compressed,
)
from .memory import ATOM_MARK, DUMMY, Region, SimMemory

RULE_WORD = 0
RULE_MISMATCH = 1

COMPACTION_FAMILY = FamilySpec(epsilon=0.75, base="permutation", degree=8, seed=0)


class CompactionError(RuntimeError):
    pass


class MatchingFailure(CompactionError):
    pass


def _largest_pow2_le(x: float) -> int:
    if x < 1:
        raise ValueError("value below 1")
    return 1 << (int(math.floor(x)).bit_length() - 1)


@dataclass(frozen=True)
class CompactionConfig:
    """Parameters of the compaction schemes.

    ``scheme='word'`` runs the block scheme on single-word atoms at every
    size; ``'multiscale'`` dispatches to the small / medium / general
    schemes by size.
    """

    gamma: float = 1 / 8
    word_bits: int = 256
    graphs: FamilySpec = COMPACTION_FAMILY
    scheme: str = "word"
    matching: str = "auto"
    compressed_max_words: int = 8
    round_slack: int = 2
    check: bool = False

    @property
    def degree(self) -> int:
        return self.graphs.degree

    @property
    def B(self) -> int:
        return block_size(self.graphs.degree)

    @property
    def q(self) -> int:
        b = self.word_bits
        return _largest_pow2_le(b / math.log2(b))

    @property
    def p(self) -> int:
        return self.q * self.q

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma, "word_bits": self.word_bits, "scheme": self.scheme,
            "matching": self.matching, "compressed_max_words": self.compressed_max_words,
            "round_slack": self.round_slack, "check": self.check,
            "graphs": {"epsilon": self.graphs.epsilon, "base": self.graphs.base,
                       "degree": self.graphs.degree, "seed": self.graphs.seed},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CompactionConfig":
        d = dict(d)
        g = d.pop("graphs", None)
        kw = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if g is not None:
            kw["graphs"] = FamilySpec(**{k: v for k, v in g.items() if k in FamilySpec.__dataclass_fields__})
        return cls(**kw)


# copy script ------------------------------------------------------------------

@dataclass
class CopyScript:
    """Log of conditional swaps ``(a, b, applied)`` in execution order."""

    segments: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def push(self, sa, sb, sp) -> None:
        if len(sa):
            self.segments.append((sa, sb, sp))

    def __len__(self) -> int:
        return sum(len(s[0]) for s in self.segments)

    def arrays(self):
        if not self.segments:
            z = np.zeros(0, np.int64)
            return z, z, np.zeros(0, bool)
        return tuple(np.concatenate([s[i] for s in self.segments]) for i in range(3))

    def applied(self) -> int:
        return int(sum(int(s[2].sum()) for s in self.segments))

    def mark(self) -> int:
        return len(self.segments)

    def since(self, mark: int) -> "CopyScript":
        return CopyScript(self.segments[mark:])

    def truncate(self, mark: int) -> None:
        del self.segments[mark:]

    _HEADER = struct.Struct("<4sHQ")
    _REC = np.dtype([("a", "<u8"), ("b", "<u8"), ("applied", "u1")])

    def save(self, path) -> None:
        sa, sb, sp = self.arrays()
        rec = np.empty(len(sa), self._REC)
        rec["a"], rec["b"], rec["applied"] = sa, sb, sp
        Path(path).write_bytes(self._HEADER.pack(b"OBXS", 1, len(sa)) + rec.tobytes())

    @classmethod
    def load(cls, path) -> "CopyScript":
        raw = Path(path).read_bytes()
        magic, version, n = cls._HEADER.unpack_from(raw)
        if magic != b"OBXS" or version != 1:
            raise CompactionError("not a copy script file")
        rec = np.frombuffer(raw[cls._HEADER.size:], cls._REC, count=n)
        return cls([(rec["a"].astype(np.int64), rec["b"].astype(np.int64), rec["applied"].astype(bool))])


def _new_log(size: int):
    return np.empty(size, np.int64), np.empty(size, np.int64), np.empty(size, np.bool_)


def _trace_buf(mem: SimMemory, size: int) -> np.ndarray:
    return np.empty(size if mem.recording else 0, np.int64)


def _emit(mem: SimMemory, tr: np.ndarray, k: int, expected: int) -> None:
    if k != expected:
        raise CompactionError(f"kernel produced {k} accesses, expected {expected}")
    if mem.recording:
        mem._emit(tr)
    else:
        mem._emit_count(k)


def sweep_back(mem: SimMemory, script: CopyScript, keep: int = 0) -> None:
    """Undo every logged swap, last first, emitting R b, R a, W b, W a per record."""
    P, F, O = mem._payload, mem._flags, mem._origin
    for sa, sb, sp in reversed(script.segments):
        tr = _trace_buf(mem, 4 * len(sa))
        k = K.replay_reverse(P, F, O, sa, sb, sp, 0, len(sa), keep, tr, mem.recording)
        _emit(mem, tr, k, 4 * len(sa))


def replay_forward(mem: SimMemory, script: CopyScript) -> None:
    P, F, O = mem._payload, mem._flags, mem._origin
    for sa, sb, sp in script.segments:
        tr = _trace_buf(mem, 4 * len(sa))
        k = K.apply_swaps(P, F, O, sa, sb, sp, 0, len(sa), tr, mem.recording)
        _emit(mem, tr, k, 4 * len(sa))


# building blocks --------------------------------------------------------------

def tag(mem: SimMemory, region: Region, W: int, threshold: Fraction, rule: int) -> None:
    """Flag every word of each W-word atom whose marked fraction exceeds ``threshold``."""
    n_atoms = region.size // W
    exp = 2 * n_atoms * W
    tr = _trace_buf(mem, exp)
    k = K.tag_atoms(mem._flags, region.base, n_atoms, W, threshold.numerator,
                    threshold.denominator, rule, tr, mem.recording)
    _emit(mem, tr, k, exp)


def _settle_failures(script: CopyScript, start: int, strict: bool) -> None:
    """Raise for failures recorded since ``start``; called once all accesses are done."""
    if strict and len(script.failures) > start:
        raise MatchingFailure("; ".join(script.failures[start:]))


def _choose_matching(cfg: CompactionConfig, N: int, requested: str | None) -> str:
    kind = requested or cfg.matching
    if kind == "auto":
        fits = compressed_words(N, cfg.degree, cfg.word_bits) <= cfg.compressed_max_words
        return "compressed" if fits else "full_scan"
    return kind


def twofold_compact_block(mem: SimMemory, region: Region, cfg: CompactionConfig, script: CopyScript,
                          W: int = 1, threshold: Fraction = Fraction(0), rule: int = RULE_WORD,
                          matching: str | None = None, live: bool = True, strict: bool = True) -> Matching:
    """Block scheme on atoms of W words; marked atoms end in the first half.

    With ``live=False`` nothing is tagged, so the pass performs exactly the
    same accesses but moves nothing.  A matching failure is recorded on the
    script and, when ``strict``, raised after every access has been made.
    """
    B, d = cfg.B, cfg.degree
    n_atoms = region.size // W
    if region.size % W or n_atoms % B:
        raise CompactionError("region must split into whole blocks")
    N = n_atoms // B
    if N < 2 or N & (N - 1):
        raise CompactionError(f"block count must be a power of two >= 2, got {N}")
    g = family(N, cfg.graphs)
    if not live:
        threshold = Fraction(1)
    tag(mem, region, W, threshold, rule)

    aux = mem.alloc(region.size, dummy=True)
    cells = alloc_cells(mem, N, d)
    P, F, O = mem._payload, mem._flags, mem._origin
    rec = mem.recording
    h = N // 2
    adj = np.ascontiguousarray(g.adj, dtype=np.int64)

    size = h * B * W
    sa, sb, sp = _new_log(size)
    exp = h * (2 * B + 4 * B * W + 4)
    tr = _trace_buf(mem, exp)
    k, _ = K.census(P, F, O, region.base, N, B, W, cells.vl.base, cells.vr.base, tr, rec, sa, sb, sp, 0)
    _emit(mem, tr, k, exp)
    script.push(sa, sb, sp)

    kind = _choose_matching(cfg, N, matching)
    rounds = max(1, math.ceil(math.log2(N))) + cfg.round_slack
    if kind == "compressed":
        m = run_matching_compressed(g, B=B, word_bits=cfg.word_bits, mem=mem, cells=cells, rounds=rounds)
    elif kind == "full_scan":
        m = find_matching_full_scan(g, B=B, mem=mem, cells=cells, rounds=rounds)
    elif kind == "active":
        m = find_matching_active(g, B=B, mem=mem, cells=cells)
    else:
        raise CompactionError(f"unknown matching variant {kind!r}")

    size = h * d * B * B * W
    sa, sb, sp = _new_log(size)
    exp = h * d * (2 + 4 * B * B * W)
    tr = _trace_buf(mem, exp)
    k, _ = K.phase_spread(P, F, O, region.base, aux.base, adj, N, B, W, cells.ec.base, tr, rec, sa, sb, sp, 0)
    _emit(mem, tr, k, exp)
    script.push(sa, sb, sp)

    size = h * 3 * B * B * W
    sa, sb, sp = _new_log(size)
    exp = 4 * size
    tr = _trace_buf(mem, exp)
    k, _ = K.phase_gather(P, F, O, region.base, aux.base, N, B, W, tr, rec, sa, sb, sp, 0)
    _emit(mem, tr, k, exp)
    script.push(sa, sb, sp)

    size = h * d * B * B * W
    sa, sb, sp = _new_log(size)
    exp = h * d * (1 + 4 * B * B * W)
    tr = _trace_buf(mem, exp)
    k, _ = K.phase_settle(P, F, O, region.base, aux.base, adj, N, B, W, cells.ec.base, tr, rec, sa, sb, sp, 0)
    _emit(mem, tr, k, exp)
    script.push(sa, sb, sp)

    start = len(script.failures)
    if m.failed:
        script.failures.append(f"{m.unsatisfied} of {N} blocks unsatisfied after {m.rounds} rounds")
    elif cfg.check:
        check_twofold(mem, region, aux)
    _settle_failures(script, start, strict)
    return m


def check_twofold(mem: SimMemory, region: Region, aux: Region | None = None) -> None:
    """Untraced end-state check of a 2-fold pass on ATOM_MARK flags."""
    _, f, _ = mem.peek(region)
    hot = ((f & ATOM_MARK) != 0) & ((f & DUMMY) == 0)
    if hot[region.size // 2:].any():
        raise CompactionError("marked atom left in the upper half")
    if (f & DUMMY).any():
        raise CompactionError("dummy left in the main region")
    if aux is not None:
        _, fa, _ = mem.peek(aux)
        if not np.all(fa & DUMMY):
            raise CompactionError("real atom left in the auxiliary region")


def stride_gather(mem: SimMemory, region: Region, a: int, chunk: int, script: CopyScript) -> None:
    """Transpose ``a`` rows of chunks from column-major to row-major order.

    The region holds ``a * cols`` chunks of ``chunk`` words; chunk ``c * a + r``
    moves to slot ``r * cols + c``, so row 0 (the first chunk of every column)
    ends up contiguous at the front.
    """
    n_chunks = region.size // chunk
    if region.size % chunk or n_chunks % a:
        raise CompactionError("region does not split into a x cols chunks")
    cols = n_chunks // a
    x = np.arange(n_chunks)
    dst_chunk = (x % a) * cols + x // a
    dest = (dst_chunk[:, None] * chunk + np.arange(chunk)).ravel()
    sa, sb = [], []
    seen = np.zeros(region.size, bool)
    for i in range(region.size):
        if seen[i]:
            continue
        seen[i] = True
        j = dest[i]
        while j != i:
            sa.append(i)
            sb.append(j)
            seen[j] = True
            j = dest[j]
    sa = np.asarray(sa, np.int64) + region.base
    sb = np.asarray(sb, np.int64) + region.base
    sp = np.ones(len(sa), bool)
    tr = _trace_buf(mem, 4 * len(sa))
    k = K.apply_swaps(mem._payload, mem._flags, mem._origin, sa, sb, sp, 0, len(sa), tr, mem.recording)
    _emit(mem, tr, k, 4 * len(sa))
    script.push(sa, sb, sp)


# multi-scale schemes ------------------------------------------------------------

def compact_small(mem: SimMemory, region: Region, cfg: CompactionConfig, script: CopyScript,
                  rule: int = RULE_WORD, live: bool = True, strict: bool = True) -> Matching:
    """Word atoms with the packed matching; needs the state to fit in a few words."""
    N = region.size // cfg.B
    if compressed_words(N, cfg.degree, cfg.word_bits) > cfg.compressed_max_words:
        raise MatchingError(f"packed state for N={N} exceeds {cfg.compressed_max_words} words")
    return twofold_compact_block(mem, region, cfg, script, W=1, rule=rule, matching="compressed",
                                 live=live, strict=strict)


def _word_twice(mem, region, cfg, script, rule, live, matching=None):
    twofold_compact_block(mem, region, cfg, script, W=1, rule=rule, matching=matching, live=live, strict=False)
    twofold_compact_block(mem, region.sub(0, region.size // 2), cfg, script, W=1, rule=rule,
                          matching=matching, live=live, strict=False)


def compact_medium(mem: SimMemory, region: Region, cfg: CompactionConfig, script: CopyScript,
                   rule: int = RULE_WORD, live: bool = True, q: int | None = None,
                   strict: bool = True) -> None:
    """n = p * q words seen as p subarrays of q words.

    Subarrays with more than a gamma/8 fraction of marked words are moved to
    the first quarter (two atom-level passes); every other subarray of the
    last three quarters has its marked words moved to its first quarter; a
    stride gather then packs those quarters together.
    """
    q = q or cfg.q
    n = region.size
    p = n // q
    if n % q or p < 4 * cfg.B:
        raise CompactionError(f"medium scheme needs at least {4 * cfg.B} subarrays of {q} words")
    start = len(script.failures)
    thr = Fraction(cfg.gamma).limit_denominator(1 << 20) / 8
    _atoms_twice(mem, region, cfg, script, q, thr, rule, live, "auto")
    for j in range(p // 4, p):
        _word_twice(mem, region.sub(j * q, q), cfg, script, rule, live)
    stride_gather(mem, region.sub(n // 4, 3 * n // 4), 4, q // 4, script)
    _settle_failures(script, start, strict)


def _atoms_twice(mem, region, cfg, script, W, thr, rule, live, matching):
    twofold_compact_block(mem, region, cfg, script, W=W, threshold=thr, rule=rule, matching=matching,
                          live=live, strict=False)
    twofold_compact_block(mem, region.sub(0, region.size // 2), cfg, script, W=W, threshold=thr, rule=rule,
                          matching=matching, live=live, strict=False)


def compact_general(mem: SimMemory, region: Region, cfg: CompactionConfig, script: CopyScript,
                    rule: int = RULE_WORD, live: bool = True, strict: bool = True) -> None:
    """Subarrays of q*q words: atom passes with the full-scan matching, then the
    medium scheme twice inside each remaining subarray, then a stride gather."""
    n, q = region.size, cfg.q
    P = q * q
    if n <= P or n // P < 4 * cfg.B:
        return compact_medium(mem, region, cfg, script, rule, live, strict=strict)
    start = len(script.failures)
    g8 = Fraction(cfg.gamma).limit_denominator(1 << 20) / 8
    _atoms_twice(mem, region, cfg, script, P, g8 * g8 / 2, rule, live, "full_scan")
    for j in range(n // P // 4, n // P):
        sub = region.sub(j * P, P)
        compact_medium(mem, sub, cfg, script, rule, live, strict=False)
        compact_medium(mem, sub.sub(0, P // 2), cfg, script, rule, live, strict=False)
    stride_gather(mem, region.sub(n // 4, 3 * n // 4), 4, P // 4, script)
    _settle_failures(script, start, strict)


def density_limit(cfg: CompactionConfig, scheme: str) -> float:
    g = cfg.gamma
    return {"small": g / 4, "word": g / 4, "medium": (g / 8) ** 2, "general": (g / 8) ** 3 / 2}[scheme]


def compact(mem: SimMemory, region: Region, cfg: CompactionConfig, script: CopyScript,
            rule: int = RULE_WORD, live: bool = True, scheme: str | None = None,
            strict: bool = True) -> None:
    """2-fold compaction of ``region`` with the configured scheme."""
    scheme = scheme or cfg.scheme
    if scheme == "multiscale":
        n, N = region.size, region.size // cfg.B
        if compressed_words(N, cfg.degree, cfg.word_bits) <= cfg.compressed_max_words:
            scheme = "small"
        else:
            scheme = "medium" if n <= cfg.p else "general"
    if scheme == "small":
        compact_small(mem, region, cfg, script, rule, live, strict=strict)
    elif scheme == "word":
        twofold_compact_block(mem, region, cfg, script, W=1, rule=rule, live=live, strict=strict)
    elif scheme == "medium":
        compact_medium(mem, region, cfg, script, rule, live, strict=strict)
    elif scheme == "general":
        compact_general(mem, region, cfg, script, rule, live, strict=strict)
    else:
        raise CompactionError(f"unknown scheme {scheme!r}")


def min_region(cfg: CompactionConfig) -> int:
    return 2 * cfg.B


def loose_compact(mem: SimMemory, region: Region, m: int, ell: int, cfg: CompactionConfig,
                  script: CopyScript, rule: int = RULE_WORD, strict: bool = True) -> int:
    """Move m marked words into a prefix of length ``2**ceil(lg(m * max(ell, 4/gamma))) / 2``.

    2-fold passes run on prefixes n, n/2, ... down to a floor that depends
    only on n and ell.  A pass is live only while its prefix holds at least
    ``m * max(ell, 4/gamma)`` words, so every live pass stays within the
    word scheme's density.  Dead passes tag nothing and make the same
    accesses, so the sequence does not depend on m.  Returns the length of
    the prefix guaranteed to contain the marked words.
    """
    n = region.size
    if n & (n - 1):
        raise CompactionError("loose compaction needs a power-of-two region")
    if m < 0 or m * ell > n:
        raise CompactionError(f"need m * ell <= n (m={m}, ell={ell}, n={n})")
    floor = max(1 << max(0, math.ceil(math.log2(ell))), min_region(cfg))
    eff = max(ell, math.ceil(4 / cfg.gamma))
    start = len(script.failures)
    s, bound = n, n
    while s >= floor:
        live = m > 0 and m * eff <= s
        compact(mem, region.sub(0, s), cfg, script, rule=rule, live=live, strict=False)
        if live:
            bound = s // 2
        s //= 2
    _settle_failures(script, start, strict)
    return bound if m > 0 else 0
