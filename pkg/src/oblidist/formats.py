"""File formats: marked arrays, access traces and run configurations."""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .compaction import CompactionConfig
from .distribution import DistConfig
from .expander import FamilySpec
from .memory import DUMMY, POS_MARK, WORD_MARK, AccessTrace


class FormatError(ValueError):
    """Malformed or unsupported file."""


# marked arrays --------------------------------------------------------------------

ARRAY_MAGIC = b"OBXA"
ARRAY_VERSION = 1
_ARRAY_HEADER = struct.Struct("<4sHQIH")
SIDEBAND_BITS = WORD_MARK | POS_MARK | DUMMY


@dataclass
class MarkedArray:
    values: np.ndarray
    word_marks: np.ndarray
    pos_marks: np.ndarray
    word_bits: int = 64

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.uint64)
        n = self.values.size
        self.word_marks = _as_marks(self.word_marks, n)
        self.pos_marks = _as_marks(self.pos_marks, n)
        if self.word_bits < 8:
            raise FormatError("word_bits must be at least 8")
        if self.word_bits < 64 and n and int(self.values.max()) >> self.word_bits:
            raise FormatError(f"a value does not fit in {self.word_bits} bits")

    def __len__(self) -> int:
        return self.values.size

    @property
    def sideband(self) -> np.ndarray:
        return (np.where(self.word_marks, WORD_MARK, 0) | np.where(self.pos_marks, POS_MARK, 0)).astype(np.uint8)


def _as_marks(m, n):
    if m is None:
        return np.zeros(n, bool)
    m = np.asarray(m, dtype=bool)
    if m.shape != (n,):
        raise FormatError("mark array has the wrong length")
    return m


def save_array(arr: MarkedArray, path) -> None:
    n, b = len(arr), arr.word_bits
    nbytes = (b + 7) // 8
    body = np.zeros((n, nbytes + 1), np.uint8)
    raw = arr.values.astype("<u8").view(np.uint8).reshape(n, 8)
    k = min(8, nbytes)
    body[:, :k] = raw[:, :k]
    body[:, nbytes] = arr.sideband
    Path(path).write_bytes(_ARRAY_HEADER.pack(ARRAY_MAGIC, ARRAY_VERSION, n, b, 0) + body.tobytes())


def load_array(path) -> MarkedArray:
    raw = Path(path).read_bytes()
    if len(raw) < _ARRAY_HEADER.size:
        raise FormatError("truncated array file")
    magic, version, n, b, _flags = _ARRAY_HEADER.unpack_from(raw)
    if magic != ARRAY_MAGIC:
        raise FormatError("not an array file (bad magic)")
    if version != ARRAY_VERSION:
        raise FormatError(f"unsupported array file version {version}")
    nbytes = (b + 7) // 8
    body = raw[_ARRAY_HEADER.size:]
    if len(body) != n * (nbytes + 1):
        raise FormatError("array body has the wrong length")
    cells = np.frombuffer(body, np.uint8).reshape(n, nbytes + 1)
    if nbytes > 8 and cells[:, 8:nbytes].any():
        raise FormatError("payloads wider than 64 bits are not supported")
    buf = np.zeros((n, 8), np.uint8)
    k = min(8, nbytes)
    buf[:, :k] = cells[:, :k]
    side = cells[:, nbytes]
    if np.any(side & ~np.uint8(SIDEBAND_BITS)):
        raise FormatError("unknown sideband bits")
    values = buf.view("<u8").reshape(n).astype(np.uint64)
    return MarkedArray(values, (side & WORD_MARK) != 0, (side & POS_MARK) != 0, b)


# traces ---------------------------------------------------------------------------

TRACE_MAGIC = b"OBXT"
TRACE_VERSION = 1
_TRACE_HEADER = struct.Struct("<4sHQ")


def save_trace(trace: AccessTrace, path, fmt: str | None = None) -> None:
    """Write a full trace as JSON lines (``.jsonl``) or compact binary (anything else)."""
    if trace.mode != "full":
        raise FormatError("only full traces can be written")
    fmt = fmt or ("jsonl" if str(path).endswith(".jsonl") else "binary")
    codes = trace.codes()
    if fmt == "jsonl":
        ops = np.where(codes & 1, "W", "R")
        addrs = codes >> 1
        with open(path, "w") as fh:
            for op, a in zip(ops.tolist(), addrs.tolist()):
                fh.write(f'{{"op":"{op}","addr":{a}}}\n')
    elif fmt == "binary":
        Path(path).write_bytes(_TRACE_HEADER.pack(TRACE_MAGIC, TRACE_VERSION, codes.size)
                               + codes.astype("<u8").tobytes())
    else:
        raise FormatError(f"unknown trace format {fmt!r}")


def load_trace(path) -> AccessTrace:
    raw = Path(path).read_bytes()
    if raw[:4] == TRACE_MAGIC:
        if len(raw) < _TRACE_HEADER.size:
            raise FormatError("truncated trace file")
        _, version, n = _TRACE_HEADER.unpack_from(raw)
        if version != TRACE_VERSION:
            raise FormatError(f"unsupported trace file version {version}")
        body = raw[_TRACE_HEADER.size:]
        if len(body) != 8 * n:
            raise FormatError("trace body has the wrong length")
        t = AccessTrace("full")
        t.extend_codes(np.frombuffer(body, "<u8").astype(np.int64))
        return t
    try:
        text = raw.decode()
    except UnicodeDecodeError as e:
        raise FormatError("not a trace file") from e
    records = []
    for i, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            r = json.loads(line)
            op, addr = r["op"], int(r["addr"])
        except (ValueError, KeyError, TypeError) as e:
            raise FormatError(f"bad trace record on line {i}") from e
        if op not in ("R", "W") or addr < 0:
            raise FormatError(f"bad trace record on line {i}")
        records.append((op, addr))
    return AccessTrace.from_records(records)


# run configuration ----------------------------------------------------------------

CONFIG_ENV = "OBLIDIST_CONFIG"

PAPER_ELL = 1 << 25
PAPER_GAMMA = 1 / 32
PAPER_EPSILON = 1 / 64


@dataclass(frozen=True)
class RunConfig:
    """Top-level configuration shared by the CLI subcommands."""

    mode: str = "test"
    dist: DistConfig = DistConfig()
    loose_ell: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("test", "paper"):
            raise FormatError(f"unknown mode {self.mode!r}")
        if self.mode == "paper":
            c = self.dist.compaction
            if (self.dist.ell != PAPER_ELL or c.gamma != PAPER_GAMMA
                    or c.graphs.epsilon > PAPER_EPSILON or self.dist.graphs.epsilon > PAPER_EPSILON):
                raise FormatError("paper mode pins ell = 2^25, gamma = 1/32 and epsilon <= 1/64")

    @property
    def compaction(self) -> CompactionConfig:
        return self.dist.compaction

    @classmethod
    def paper(cls) -> "RunConfig":
        """Full-scale constants.  The graph degrees are large; building them is slow at any size."""
        comp = CompactionConfig(gamma=PAPER_GAMMA, graphs=FamilySpec(PAPER_EPSILON, "permutation", 32768, 0))
        dist = DistConfig(ell=PAPER_ELL, graphs=FamilySpec(PAPER_EPSILON, "permutation", 32768, 0),
                          compaction=comp)
        return cls("paper", dist)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "loose_ell": self.loose_ell, "seed": self.seed, "dist": self.dist.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise FormatError("configuration must be a JSON object")
        unknown = set(d) - {"mode", "loose_ell", "seed", "dist", "compaction"}
        if unknown:
            raise FormatError(f"unknown configuration keys: {sorted(unknown)}")
        dist = dict(d.get("dist", {}))
        if "compaction" in d:
            dist["compaction"] = d["compaction"]
        try:
            return cls(d.get("mode", "test"), DistConfig.from_dict(dist),
                       int(d.get("loose_ell", 64)), int(d.get("seed", 0)))
        except TypeError as e:
            raise FormatError(str(e)) from e


def load_config(path=None) -> RunConfig:
    """Read a JSON configuration; falls back to $OBLIDIST_CONFIG, then defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e}") from e
    return RunConfig.from_dict(data)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
