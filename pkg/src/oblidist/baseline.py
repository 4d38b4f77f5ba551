"""Reference points: a sorting-network compaction, a plain oracle, scaling benchmarks."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels as K
from .compaction import CopyScript, _emit, _trace_buf, compact, compact_general
from .distribution import DistConfig, distribute, tight_compact
from .memory import WORD_MARK, AccessTrace, SimMemory


def bitonic_comparators(n: int) -> int:
    k = n.bit_length() - 1
    return (n // 2) * k * (k + 1) // 2


def bitonic_tight_compact(values, marks, trace_mode: str | None = None, word_bits: int = 64):
    """Tight compaction by a bitonic sorting network on (unmarked, origin).

    Returns ``(values, marks, origin, trace)``; marked words come first in
    their original relative order.
    """
    values = np.asarray(values, dtype=np.uint64)
    marks = np.asarray(marks, dtype=bool)
    n = values.size
    size = 1 << max(0, (n - 1).bit_length())
    rec = AccessTrace(trace_mode) if trace_mode else None
    mem = SimMemory(word_bits, rec)
    r = mem.alloc(size)
    payload = np.zeros(size, np.uint64)
    payload[:n] = values
    flags = np.zeros(size, np.uint8)
    flags[:n] = np.where(marks, WORD_MARK, 0)
    mem.load(r, payload, flags, np.arange(size))
    exp = 4 * bitonic_comparators(size)
    tr = _trace_buf(mem, exp)
    k = K.bitonic(mem._payload, mem._flags, mem._origin, r.base, size, tr, mem.recording)
    _emit(mem, tr, k, exp)
    p, f, o = mem.peek(r)
    keep = o < n
    return p[keep], (f[keep] & WORD_MARK) != 0, o[keep], rec


def oracle_distribute(word_marks, pos_marks) -> np.ndarray:
    """Non-oblivious reference: returns ``dest`` with marked word i sent to a marked position.

    Marked words go to marked positions in order; unmarked words fill the
    remaining positions in order.
    """
    wm = np.asarray(word_marks, dtype=bool)
    pm = np.asarray(pos_marks, dtype=bool)
    if wm.sum() != pm.sum():
        raise ValueError("mark counts differ")
    dest = np.empty(wm.size, np.int64)
    dest[np.flatnonzero(wm)] = np.flatnonzero(pm)
    dest[np.flatnonzero(~wm)] = np.flatnonzero(~pm)
    return dest


def oracle_tight_compact(values, marks):
    values = np.asarray(values)
    marks = np.asarray(marks, dtype=bool)
    return np.concatenate([values[marks], values[~marks]])


# benchmarks -----------------------------------------------------------------------

@dataclass
class BenchRecord:
    algo: str
    n: int
    accesses: int
    seconds: float
    params_hash: str


ALGORITHMS = ("distribute", "tight_compact", "compact_general", "compact_word", "bitonic")


def params_hash(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True, default=str).encode()
    return hashlib.blake2b(blob, digest_size=8).hexdigest()


def _instance(n: int, seed: int):
    rng = np.random.default_rng([seed, n])
    vals = rng.integers(0, 1 << 62, n, dtype=np.uint64)
    m = n // 2
    wm = np.zeros(n, bool)
    wm[rng.choice(n, m, replace=False)] = True
    pm = np.zeros(n, bool)
    pm[rng.choice(n, m, replace=False)] = True
    return vals, wm, pm


def count_accesses(algo: str, n: int, cfg: DistConfig | None = None, seed: int = 0) -> int:
    """Number of memory accesses of one run (independent of the data for oblivious algorithms)."""
    cfg = cfg or DistConfig()
    vals, wm, pm = _instance(n, seed)
    if algo == "distribute":
        return distribute(vals, wm, pm, cfg, trace_mode="count").trace.count
    if algo == "tight_compact":
        return tight_compact(vals, wm, cfg, trace_mode="count").trace.count
    if algo == "bitonic":
        return bitonic_tight_compact(vals, wm, trace_mode="count")[3].count
    if algo in ("compact_general", "compact_word"):
        rec = AccessTrace("count")
        mem = SimMemory(cfg.compaction.word_bits, rec)
        r = mem.alloc(n)
        flags = np.zeros(n, np.uint8)
        mem.load(r, vals, flags)
        if algo == "compact_general":
            compact_general(mem, r, cfg.compaction, CopyScript())
        else:
            compact(mem, r, cfg.compaction, CopyScript(), scheme="word")
        return rec.count
    raise ValueError(f"unknown algorithm {algo!r}")


def bench_scaling(algos, sizes, cfg: DistConfig | None = None, seed: int = 0) -> list[BenchRecord]:
    cfg = cfg or DistConfig()
    h = params_hash(cfg.to_dict())
    out = []
    for algo in algos:
        for n in sizes:
            t = time.perf_counter()
            acc = count_accesses(algo, int(n), cfg, seed)
            out.append(BenchRecord(algo, int(n), int(acc), time.perf_counter() - t, h))
    return out


def fit_exponent(ns, counts) -> float:
    """Least-squares slope of log(count) against log(n)."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(counts, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def write_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["algo", "n", "accesses", "seconds", "params_hash"])
        w.writeheader()
        for r in records:
            w.writerow(asdict(r))
