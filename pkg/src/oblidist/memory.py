"""Simulated word-RAM with an access recorder.

Every cell holds a payload, a sideband flag byte and an origin tag.  All
reads and writes made by algorithms go through :class:`SimMemory`, which
forwards ``(op, addr)`` events to an :class:`AccessTrace` when one is
attached.  ``load`` and ``peek`` are untraced and exist for setting up inputs
and for test oracles.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

WORD_MARK = 1
POS_MARK = 2
DUMMY = 4
ATOM_MARK = 8

OP_READ = 0
OP_WRITE = 1


@dataclass(frozen=True)
class Word:
    payload: int = 0
    flags: int = 0
    origin: int = -1

    @property
    def word_mark(self) -> bool:
        return bool(self.flags & WORD_MARK)

    @property
    def pos_mark(self) -> bool:
        return bool(self.flags & POS_MARK)

    @property
    def dummy(self) -> bool:
        return bool(self.flags & DUMMY)


DUMMY_WORD = Word(0, DUMMY, -1)


@dataclass(frozen=True)
class Region:
    base: int
    size: int
    wide: bool = False

    def __len__(self) -> int:
        return self.size

    def addr(self, i: int) -> int:
        if not 0 <= i < self.size:
            raise IndexError(i)
        return self.base + i

    def sub(self, start: int, size: int) -> "Region":
        if start < 0 or start + size > self.size:
            raise IndexError((start, size))
        return Region(self.base + start, size, self.wide)


def encode(op: int, addr) -> np.ndarray:
    return (np.asarray(addr, dtype=np.int64) << 1) | op


class AccessTrace:
    """Ordered record of memory events.

    ``mode='full'`` keeps every event; ``'digest'`` keeps a running hash and a
    count only; ``'count'`` keeps the count.  Two traces compare equal when
    their counts and digests agree (a full trace can also be compared event
    by event).
    """

    def __init__(self, mode: str = "full"):
        if mode not in ("full", "digest", "count"):
            raise ValueError(f"unknown trace mode {mode!r}")
        self.mode = mode
        self.count = 0
        self._hash = hashlib.blake2b(digest_size=16)
        self._chunks: list[np.ndarray] = []

    @property
    def hashing(self) -> bool:
        return self.mode != "count"

    def extend_codes(self, codes: np.ndarray) -> None:
        codes = np.ascontiguousarray(codes, dtype=np.int64)
        if codes.size == 0:
            return
        self.count += int(codes.size)
        if self.mode == "count":
            return
        self._hash.update(codes.astype("<i8", copy=False).tobytes())
        if self.mode == "full":
            self._chunks.append(codes.copy())

    def add_count(self, k: int) -> None:
        if self.mode != "count":
            raise RuntimeError("events must be recorded individually in this mode")
        self.count += int(k)

    def append(self, op: str, addr: int) -> None:
        self.extend_codes(encode(0 if op == "R" else 1, [addr]))

    def digest(self) -> str:
        if self.mode == "count":
            raise RuntimeError("count-only traces carry no digest")
        return self._hash.hexdigest()

    def codes(self) -> np.ndarray:
        if self.mode != "full":
            raise RuntimeError("only full traces keep events")
        if not self._chunks:
            return np.zeros(0, dtype=np.int64)
        if len(self._chunks) > 1:
            self._chunks = [np.concatenate(self._chunks)]
        return self._chunks[0]

    def addresses(self) -> np.ndarray:
        return self.codes() >> 1

    def ops(self) -> np.ndarray:
        return (self.codes() & 1).astype(np.uint8)

    def records(self) -> Iterator[tuple[str, int]]:
        for c in self.codes().tolist():
            yield ("W" if c & 1 else "R", c >> 1)

    def __len__(self) -> int:
        return self.count

    def __eq__(self, other) -> bool:
        if not isinstance(other, AccessTrace):
            return NotImplemented
        return trace_equal(self, other)

    def __repr__(self) -> str:
        return f"AccessTrace(mode={self.mode!r}, count={self.count})"

    @classmethod
    def from_records(cls, records: Iterable[tuple[str, int]], mode: str = "full") -> "AccessTrace":
        t = cls(mode)
        ops, addrs = [], []
        for op, addr in records:
            ops.append(0 if op == "R" else 1)
            addrs.append(addr)
        t.extend_codes((np.asarray(addrs, dtype=np.int64) << 1) | np.asarray(ops, dtype=np.int64))
        return t


def trace_equal(a: AccessTrace, b: AccessTrace) -> bool:
    if a.count != b.count:
        return False
    if a.mode == "count" or b.mode == "count":
        return True
    if a.mode == "full" and b.mode == "full":
        return bool(np.array_equal(a.codes(), b.codes()))
    return a.digest() == b.digest()


class SimMemory:
    """Flat word-addressed memory made of allocated regions.

    Payloads of the main bank are unsigned 64-bit integers.  Regions created
    with :meth:`alloc_wide` hold arbitrary-precision integers and serve as
    the b-bit state words of the packed matching.
    """

    def __init__(self, word_bits: int = 64, recorder: AccessTrace | None = None):
        if word_bits < 1:
            raise ValueError("word_bits must be positive")
        self.word_bits = int(word_bits)
        self.recorder = recorder
        self._payload = np.zeros(0, dtype=np.uint64)
        self._flags = np.zeros(0, dtype=np.uint8)
        self._origin = np.zeros(0, dtype=np.int64)
        self._wide: dict[int, int] = {}
        self._next = 0
        self.payload_mask = (1 << min(self.word_bits, 64)) - 1

    # allocation -----------------------------------------------------------
    def alloc(self, n: int, dummy: bool = False) -> Region:
        n = int(n)
        base = self._next
        grow = base + n - self._payload.size
        if grow > 0:
            self._payload = np.concatenate([self._payload, np.zeros(grow, np.uint64)])
            self._flags = np.concatenate([self._flags, np.zeros(grow, np.uint8)])
            self._origin = np.concatenate([self._origin, np.full(grow, -1, np.int64)])
        if dummy:
            self._flags[base : base + n] = DUMMY
        self._next += n
        return Region(base, n)

    def alloc_wide(self, n: int) -> Region:
        base = self._next
        self._next += int(n)
        for a in range(base, base + n):
            self._wide[a] = 0
        return Region(base, int(n), wide=True)

    @property
    def size(self) -> int:
        return self._next

    # untraced setup and inspection ----------------------------------------
    def load(self, region: Region, payload, flags=None, origin=None) -> None:
        s = slice(region.base, region.base + region.size)
        self._payload[s] = np.asarray(payload, dtype=np.uint64) & np.uint64(self.payload_mask)
        self._flags[s] = 0 if flags is None else np.asarray(flags, dtype=np.uint8)
        self._origin[s] = np.arange(region.size) if origin is None else np.asarray(origin, dtype=np.int64)

    def peek(self, region: Region):
        s = slice(region.base, region.base + region.size)
        return self._payload[s].copy(), self._flags[s].copy(), self._origin[s].copy()

    # recording ------------------------------------------------------------
    @property
    def recording(self) -> bool:
        return self.recorder is not None and self.recorder.hashing

    def _emit(self, codes: np.ndarray) -> None:
        if self.recorder is not None:
            self.recorder.extend_codes(codes)

    def _emit_count(self, codes_or_count) -> None:
        """Accept either a code buffer or a bare count from a kernel run."""
        if self.recorder is None:
            return
        if isinstance(codes_or_count, (int, np.integer)):
            self.recorder.add_count(int(codes_or_count))
        else:
            self.recorder.extend_codes(codes_or_count)

    # traced scalar access -------------------------------------------------
    def read(self, addr: int) -> Word:
        self._emit(encode(OP_READ, [addr]))
        return Word(int(self._payload[addr]), int(self._flags[addr]), int(self._origin[addr]))

    def write(self, addr: int, word: Word) -> None:
        if word.payload < 0 or word.payload > self.payload_mask:
            raise OverflowError("payload does not fit in one word")
        self._emit(encode(OP_WRITE, [addr]))
        self._payload[addr] = word.payload
        self._flags[addr] = word.flags
        self._origin[addr] = word.origin

    def read_many(self, addrs):
        addrs = np.asarray(addrs, dtype=np.int64)
        self._emit(encode(OP_READ, addrs))
        return self._payload[addrs].copy(), self._flags[addrs].copy(), self._origin[addrs].copy()

    def write_many(self, addrs, payload=None, flags=None, origin=None) -> None:
        """Write a batch; fields passed as None are rewritten unchanged."""
        addrs = np.asarray(addrs, dtype=np.int64)
        self._emit(encode(OP_WRITE, addrs))
        if payload is not None:
            self._payload[addrs] = np.asarray(payload, dtype=np.uint64)
        if flags is not None:
            self._flags[addrs] = np.asarray(flags, dtype=np.uint8)
        if origin is not None:
            self._origin[addrs] = np.asarray(origin, dtype=np.int64)

    def read_wide(self, addr: int) -> int:
        self._emit(encode(OP_READ, [addr]))
        return self._wide[addr]

    def write_wide(self, addr: int, value: int) -> None:
        if value < 0 or value.bit_length() > self.word_bits:
            raise OverflowError("value does not fit in one word")
        self._emit(encode(OP_WRITE, [addr]))
        self._wide[addr] = value

    def cswap(self, a: int, b: int, predicate, keep: int = 0) -> bool:
        return oblivious_cswap(self, a, b, predicate, keep)


def traced_read(mem: SimMemory, addr: int) -> Word:
    return mem.read(addr)


def traced_write(mem: SimMemory, addr: int, word: Word) -> None:
    mem.write(addr, word)


def oblivious_cswap(mem: SimMemory, a: int, b: int, predicate, keep: int = 0) -> bool:
    """Read both cells, swap them iff ``predicate`` holds, write both back.

    ``predicate`` is a boolean or a callable ``(wa, wb) -> bool``.

    The trace is R a, R b, W a, W b whatever the predicate decides.  Flag bits
    in ``keep`` stay with their cells instead of travelling with the words.
    """
    wa, wb = mem.read(a), mem.read(b)
    do = bool(predicate(wa, wb) if callable(predicate) else predicate)
    if do:
        fa = (wb.flags & ~keep) | (wa.flags & keep)
        fb = (wa.flags & ~keep) | (wb.flags & keep)
        wa, wb = Word(wb.payload, fa, wb.origin), Word(wa.payload, fb, wa.origin)
    mem.write(a, wa)
    mem.write(b, wb)
    return do


def count_marked(mem: SimMemory, region: Region, bit: int = WORD_MARK) -> int:
    """Full fixed-order scan counting cells whose ``bit`` is set (dummies excluded)."""
    addrs = np.arange(region.base, region.base + region.size, dtype=np.int64)
    _, flags, _ = mem.read_many(addrs)
    return int(np.count_nonzero(((flags & bit) != 0) & ((flags & DUMMY) == 0)))
