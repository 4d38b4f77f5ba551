"""(B, B/4)-matchings for a set of marked left vertices.

Every round, each unsatisfied marked vertex sends a request along each of
its d slots.  A right vertex answers all of its requests positively when it
received at most B/4 of them that round (and is not blocked), negatively
otherwise.  A vertex with at least B positive answers keeps its B lowest
positive slots and becomes satisfied.

Three realisations share these semantics:

* ``find_matching_active`` touches only unsatisfied vertices (not oblivious);
* ``find_matching_full_scan`` sweeps every vertex and edge cell each round for
  a fixed number of rounds;
* ``run_matching_compressed`` keeps the whole state in a few b-bit words and
  reads and rewrites all of them each round.

State lives in three cell regions of a :class:`SimMemory`: left vertex cells
(flags ``V_MARKED``, ``V_SAT``), right vertex cells (flag ``V_BLOCKED``,
payload = request counter) and one edge cell per slot (flag ``E_MATCHED``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import E_MATCHED, V_BLOCKED, V_MARKED
from .expander import ExpanderGraph
from .memory import Region, SimMemory, encode

V_SAT = 4
E_REPLY = 4

ROUND_SLACK = 2


class MatchingError(RuntimeError):
    pass


@dataclass(frozen=True)
class MatchCells:
    vl: Region
    vr: Region
    ec: Region


@dataclass
class Matching:
    selected: np.ndarray
    marked: np.ndarray
    satisfied: np.ndarray
    rounds: int
    history: list = field(default_factory=list)
    variant: str = "full_scan"

    @property
    def failed(self) -> bool:
        return bool(np.any(self.marked & ~self.satisfied))

    @property
    def unsatisfied(self) -> int:
        return int(np.count_nonzero(self.marked & ~self.satisfied))


def block_size(d: int) -> int:
    """Largest power of two not exceeding d / 2."""
    if d < 2:
        raise ValueError("degree must be at least 2")
    return 1 << ((d // 2).bit_length() - 1)


def round_budget(n: int, slack: int = ROUND_SLACK) -> int:
    return max(1, math.ceil(math.log2(max(n, 2)))) + slack


def alloc_cells(mem: SimMemory, n: int, d: int) -> MatchCells:
    return MatchCells(mem.alloc(n), mem.alloc(n), mem.alloc(n * d))


def _standalone(g: ExpanderGraph, marked, blocked, mem, cells):
    """Private memory with cells preloaded (untraced) for direct calls."""
    if mem is None:
        mem = SimMemory()
    if cells is None:
        cells = alloc_cells(mem, g.n, g.d)
        m = np.asarray(marked, dtype=bool)
        b = np.zeros(g.n, bool) if blocked is None else np.asarray(blocked, dtype=bool)
        mem.load(cells.vl, np.zeros(g.n), np.where(m, V_MARKED, 0))
        mem.load(cells.vr, np.zeros(g.n), np.where(b, V_BLOCKED, 0))
        mem.load(cells.ec, np.zeros(g.n * g.d), np.zeros(g.n * g.d))
    return mem, cells


def _round_semantics(adj, active, blocked, B):
    """One protocol round: (request counts, positive mask, newly satisfied, selection)."""
    n, d = adj.shape
    req = np.bincount(adj[active].ravel(), minlength=n)
    pos = active[:, None] & (req[adj] <= B // 4) & ~blocked[adj]
    newsat = active & (pos.sum(axis=1) >= B)
    sel = pos & (np.cumsum(pos, axis=1) <= B) & newsat[:, None]
    return req, pos, newsat, sel


def _final(mem, cells, g, history, rounds, variant):
    _, fl, _ = mem.peek(cells.vl)
    _, fe, _ = mem.peek(cells.ec)
    return Matching(
        selected=(fe.reshape(g.n, g.d) & E_MATCHED) != 0,
        marked=(fl & V_MARKED) != 0,
        satisfied=(fl & V_SAT) != 0,
        rounds=rounds,
        history=history,
        variant=variant,
    )


def find_matching_full_scan(g: ExpanderGraph, marked=None, B: int | None = None, blocked=None,
                            mem: SimMemory | None = None, cells: MatchCells | None = None,
                            rounds: int | None = None) -> Matching:
    """Oblivious protocol: the same cells are touched in the same order every round."""
    n, d = g.n, g.d
    B = B or block_size(d)
    mem, cells = _standalone(g, marked, blocked, mem, cells)
    rounds = round_budget(n) if rounds is None else rounds
    adj = g.adj
    vl = cells.vl.base + np.arange(n, dtype=np.int64)
    vr = cells.vr.base + np.arange(n, dtype=np.int64)
    ec = cells.ec.base + np.arange(n * d, dtype=np.int64).reshape(n, d)
    tgt = vr[adj]
    rec = mem.recording
    per_round = n * (5 * d + 5)
    if rec:
        ta = np.empty((n, 1 + 2 * d), np.int64)
        ta[:, 0] = vl << 1
        ta[:, 1::2] = tgt << 1
        ta[:, 2::2] = (tgt << 1) | 1
        tb = np.empty((n, 3 * d + 2), np.int64)
        tb[:, 0] = vl << 1
        tb[:, 1 : 2 * d + 1 : 2] = tgt << 1
        tb[:, 2 : 2 * d + 1 : 2] = ec << 1
        tb[:, 2 * d + 1 : 3 * d + 1] = (ec << 1) | 1
        tb[:, -1] = (vl << 1) | 1
        tc = np.stack([vr << 1, (vr << 1) | 1], axis=1)
        codes = np.concatenate([ta.ravel(), tb.ravel(), tc.ravel()])
    F = mem._flags
    P = mem._payload
    blocked_v = (F[vr] & V_BLOCKED) != 0
    history = [int(np.count_nonzero(((F[vl] & V_MARKED) != 0) & ((F[vl] & V_SAT) == 0)))]
    for _ in range(rounds):
        fl = F[vl]
        active = ((fl & V_MARKED) != 0) & ((fl & V_SAT) == 0)
        req, pos, newsat, sel = _round_semantics(adj, active, blocked_v, B)
        P[vr] = req.astype(np.uint64)
        fe = F[ec]
        fe = np.where(pos, fe | E_REPLY, fe & np.uint8(0xFF ^ E_REPLY))
        F[ec] = np.where(sel, fe | E_MATCHED, fe)
        F[vl] = np.where(newsat, fl | V_SAT, fl)
        P[vr] = 0
        if rec:
            mem._emit(codes)
        else:
            mem._emit_count(per_round)
        history.append(int(np.count_nonzero(active & ~newsat)))
    return _final(mem, cells, g, history, rounds, "full_scan")


def find_matching_active(g: ExpanderGraph, marked=None, B: int | None = None, blocked=None,
                         mem: SimMemory | None = None, cells: MatchCells | None = None,
                         max_rounds: int | None = None) -> Matching:
    """Sequential protocol touching only unsatisfied vertices; stops when all are satisfied."""
    n, d = g.n, g.d
    B = B or block_size(d)
    mem, cells = _standalone(g, marked, blocked, mem, cells)
    max_rounds = 4 * round_budget(n) if max_rounds is None else max_rounds
    adj = g.adj
    F, P = mem._flags, mem._payload
    vl = cells.vl.base + np.arange(n, dtype=np.int64)
    vr = cells.vr.base + np.arange(n, dtype=np.int64)
    _, fl0, _ = mem.read_many(vl)
    _, fr0, _ = mem.read_many(vr)
    blocked_v = (fr0 & V_BLOCKED) != 0
    active = ((fl0 & V_MARKED) != 0) & ((fl0 & V_SAT) == 0)
    history = [int(active.sum())]
    r = 0
    while active.any() and r < max_rounds:
        r += 1
        us = np.flatnonzero(active)
        req, pos, newsat, sel = _round_semantics(adj, active, blocked_v, B)
        touched = np.unique(adj[us])
        ecs = cells.ec.base + (us[:, None] * d + np.arange(d)).ravel()
        mem._emit(encode(1, vr[touched]))
        mem._emit(encode(0, vr[adj[us]].ravel()))
        P[vr[touched]] = req[touched].astype(np.uint64)
        fe = F[ecs].reshape(us.size, d)
        fe = np.where(sel[us], fe | E_MATCHED, fe)
        mem.write_many(ecs, flags=fe.ravel())
        mem.write_many(vl[us], flags=np.where(newsat[us], F[vl[us]] | V_SAT, F[vl[us]]))
        mem.write_many(vr[touched], payload=np.zeros(touched.size))
        active = active & ~newsat
        history.append(int(active.sum()))
    return _final(mem, cells, g, history, r, "active")


# packed state -----------------------------------------------------------------

@dataclass(frozen=True)
class PackedLayout:
    """Bit layout of the matching state.

    Per edge: a ceil(lg N)-bit pointer and request/reply/matched flags.  Per
    left vertex: a counter in [0, d], marked and satisfied flags and one
    entry of the unsatisfied list.  Per right vertex: a counter and a blocked
    flag.  A header holds the list length.
    """

    n: int
    d: int

    @property
    def lg(self) -> int:
        return max(1, (self.n - 1).bit_length())

    @property
    def cbits(self) -> int:
        return self.d.bit_length()

    @property
    def edge_bits(self) -> int:
        return self.lg + 3

    @property
    def left_bits(self) -> int:
        return self.cbits + 2 + self.lg

    @property
    def right_bits(self) -> int:
        return self.cbits + 1

    @property
    def header_bits(self) -> int:
        return self.n.bit_length()

    @property
    def left_off(self) -> int:
        return self.n * self.d * self.edge_bits

    @property
    def right_off(self) -> int:
        return self.left_off + self.n * self.left_bits

    @property
    def header_off(self) -> int:
        return self.right_off + self.n * self.right_bits

    @property
    def total_bits(self) -> int:
        return self.header_off + self.header_bits

    def words(self, b: int) -> int:
        return -(-self.total_bits // b)

    # field offsets
    def edge(self, u: int, e: int) -> int:
        return (u * self.d + e) * self.edge_bits

    def left(self, u: int) -> int:
        return self.left_off + u * self.left_bits

    def right(self, v: int) -> int:
        return self.right_off + v * self.right_bits


def compressed_words(n: int, d: int, b: int) -> int:
    return PackedLayout(n, d).words(b)


class _Bits:
    """A big integer viewed as a bit string, with an operation counter."""

    __slots__ = ("x", "ops")

    def __init__(self, x: int = 0):
        self.x = x
        self.ops = 0

    def get(self, off: int, w: int) -> int:
        self.ops += 1
        return (self.x >> off) & ((1 << w) - 1)

    def set(self, off: int, w: int, val: int) -> None:
        self.ops += 1
        m = ((1 << w) - 1) << off
        self.x = (self.x & ~m) | ((val << off) & m)


# flag positions inside fields
_EF_REQ, _EF_REPLY, _EF_MATCH = 0, 1, 2


def _put(bits: np.ndarray, offs, width: int, vals) -> None:
    offs = np.asarray(offs, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=np.int64).ravel()
    sh = np.arange(width, dtype=np.int64)
    bits[offs[:, None] + sh] = (vals[:, None] >> sh) & 1


def _take(bits: np.ndarray, offs, width: int) -> np.ndarray:
    offs = np.asarray(offs, dtype=np.int64).ravel()
    sh = np.arange(width, dtype=np.int64)
    return (bits[offs[:, None] + sh].astype(np.int64) << sh).sum(axis=1)


def _offsets(lay: "PackedLayout"):
    n, d = lay.n, lay.d
    edge = (np.arange(n * d, dtype=np.int64) * lay.edge_bits).reshape(n, d)
    left = lay.left_off + np.arange(n, dtype=np.int64) * lay.left_bits
    right = lay.right_off + np.arange(n, dtype=np.int64) * lay.right_bits
    return edge, left, right


def pack_state(g: ExpanderGraph, marked, blocked=None, b: int = 1024,
               satisfied=None, selected=None) -> list[int]:
    """Pack the protocol state into ``lay.words(b)`` integers of b bits."""
    lay = PackedLayout(g.n, g.d)
    marked = np.asarray(marked, dtype=bool)
    blocked = np.zeros(g.n, bool) if blocked is None else np.asarray(blocked, bool)
    satisfied = np.zeros(g.n, bool) if satisfied is None else np.asarray(satisfied, bool)
    selected = np.zeros((g.n, g.d), bool) if selected is None else np.asarray(selected, bool)
    bits = np.zeros(lay.words(b) * b, np.uint8)
    edge, left, right = _offsets(lay)
    _put(bits, edge, lay.lg, g.adj)
    _put(bits, edge + lay.lg + _EF_MATCH, 1, selected)
    _put(bits, left + lay.cbits, 1, marked)
    _put(bits, left + lay.cbits + 1, 1, satisfied)
    unsat = np.flatnonzero(marked & ~satisfied)
    _put(bits, left[: unsat.size] + lay.cbits + 2, lay.lg, unsat)
    _put(bits, right + lay.cbits, 1, blocked)
    _put(bits, [lay.header_off], lay.header_bits, [unsat.size])
    x = int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little")
    return _split(x, lay.words(b), b)


def _split(x: int, k: int, b: int) -> list[int]:
    m = (1 << b) - 1
    return [(x >> (i * b)) & m for i in range(k)]


def _join(words, b: int) -> int:
    x = 0
    for i, w in enumerate(words):
        x |= int(w) << (i * b)
    return x


def unpack_state(words, n: int, d: int, b: int) -> dict:
    lay = PackedLayout(n, d)
    k = len(words)
    raw = _join(words, b).to_bytes(-(-k * b // 8), "little")
    bits = np.unpackbits(np.frombuffer(raw, np.uint8), bitorder="little")
    edge, left, right = _offsets(lay)
    length = int(_take(bits, [lay.header_off], lay.header_bits)[0])
    return {
        "adj": _take(bits, edge, lay.lg).reshape(n, d),
        "selected": _take(bits, edge + lay.lg + _EF_MATCH, 1).reshape(n, d).astype(bool),
        "marked": _take(bits, left + lay.cbits, 1).astype(bool),
        "satisfied": _take(bits, left + lay.cbits + 1, 1).astype(bool),
        "blocked": _take(bits, right + lay.cbits, 1).astype(bool),
        "unsatisfied": _take(bits, left[:length] + lay.cbits + 2, lay.lg).tolist(),
    }


def _packed_round(s: _Bits, lay: PackedLayout, B: int) -> int:
    """Active round on the packed state; returns the new unsatisfied count."""
    lg, cb = lay.lg, lay.cbits
    length = s.get(lay.header_off, lay.header_bits)
    us = [s.get(lay.left(i) + cb + 2, lg) for i in range(length)]
    for u in us:
        for e in range(lay.d):
            off = lay.edge(u, e)
            v = s.get(off, lg)
            s.set(off + lg + _EF_REQ, 1, 1)
            r = lay.right(v)
            s.set(r, cb, s.get(r, cb) + 1)
    keep = []
    for u in us:
        good = []
        for e in range(lay.d):
            off = lay.edge(u, e)
            v = s.get(off, lg)
            r = lay.right(v)
            ok = s.get(r, cb) <= B // 4 and not s.get(r + cb, 1)
            s.set(off + lg + _EF_REPLY, 1, int(ok))
            if ok:
                good.append(e)
        s.set(lay.left(u), cb, len(good))
        if len(good) >= B:
            for e in good[:B]:
                s.set(lay.edge(u, e) + lg + _EF_MATCH, 1, 1)
            s.set(lay.left(u) + cb + 1, 1, 1)
        else:
            keep.append(u)
    for u in us:
        for e in range(lay.d):
            off = lay.edge(u, e)
            s.set(lay.right(s.get(off, lg)), cb, 0)
            s.set(off + lg + _EF_REQ, 2, 0)
    for i, u in enumerate(keep):
        s.set(lay.left(i) + cb + 2, lg, u)
    s.set(lay.header_off, lay.header_bits, len(keep))
    return len(keep)


def run_matching_compressed(g: ExpanderGraph, marked=None, B: int | None = None, blocked=None,
                            word_bits: int = 1024, mem: SimMemory | None = None,
                            cells: MatchCells | None = None, rounds: int | None = None,
                            max_words: int | None = None) -> Matching:
    """Protocol on packed state words.

    Reads the vertex cells, packs the state into ``ceil(bits / b)`` wide
    words, runs a fixed number of rounds that each read and rewrite every
    state word, then writes every edge cell.
    """
    n, d = g.n, g.d
    B = B or block_size(d)
    lay = PackedLayout(n, d)
    k = lay.words(word_bits)
    if max_words is not None and k > max_words:
        raise MatchingError(f"packed state needs {k} words, limit is {max_words}")
    if mem is None:
        mem = SimMemory(word_bits=word_bits)
    elif mem.word_bits < word_bits:
        raise MatchingError("memory words are narrower than the packed state words")
    mem, cells = _standalone(g, marked, blocked, mem, cells)
    rounds = round_budget(n) if rounds is None else rounds
    vl = cells.vl.base + np.arange(n, dtype=np.int64)
    vr = cells.vr.base + np.arange(n, dtype=np.int64)
    _, fl, _ = mem.read_many(vl)
    _, fr, _ = mem.read_many(vr)
    mk = (fl & V_MARKED) != 0
    state = mem.alloc_wide(k)
    for i, w in enumerate(pack_state(g, mk, (fr & V_BLOCKED) != 0, word_bits)):
        mem.write_wide(state.base + i, w)
    history = [int(mk.sum())]
    ops = 0
    for _ in range(rounds):
        s = _Bits(_join([mem.read_wide(state.base + i) for i in range(k)], word_bits))
        history.append(_packed_round(s, lay, B))
        ops += s.ops
        for i, w in enumerate(_split(s.x, k, word_bits)):
            mem.write_wide(state.base + i, w)
    st = unpack_state([mem.read_wide(state.base + i) for i in range(k)], n, d, word_bits)
    ec = cells.ec.base + np.arange(n * d, dtype=np.int64)
    fe = mem._flags[ec]
    mem.write_many(ec, flags=np.where(st["selected"].ravel(), fe | E_MATCHED, fe))
    mem.write_many(vl, flags=np.where(st["satisfied"], fl | V_SAT, fl))
    m = _final(mem, cells, g, history, rounds, "compressed")
    m.register_ops = ops
    return m


def verify_matching(g: ExpanderGraph, marked, m: Matching, B: int | None = None, blocked=None) -> bool:
    """Check the (B, B/4)-matching conditions for the marked set."""
    B = B or block_size(g.d)
    marked = np.asarray(marked, dtype=bool)
    sel = np.asarray(m.selected, dtype=bool)
    rows = sel.sum(axis=1)
    if np.any(rows[marked] != B) or np.any(rows[~marked] != 0):
        return False
    load = np.bincount(g.adj[sel], minlength=g.n)
    if np.any(load > B // 4):
        return False
    if blocked is not None and np.any(load[np.asarray(blocked, bool)] > 0):
        return False
    return True
