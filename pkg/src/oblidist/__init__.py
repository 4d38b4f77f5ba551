"""Deterministic data-oblivious distribution and compaction on a simulated word-RAM."""

from .compaction import CompactionConfig, CopyScript, compact, loose_compact, sweep_back
from .distribution import DistConfig, PreconditionError, distribute, tight_compact
from .memory import (
    ATOM_MARK,
    DUMMY,
    POS_MARK,
    WORD_MARK,
    AccessTrace,
    Region,
    SimMemory,
    Word,
    count_marked,
    oblivious_cswap,
    trace_equal,
    traced_read,
    traced_write,
)

__version__ = "0.1.0"

__all__ = [
    "ATOM_MARK",
    "DUMMY",
    "POS_MARK",
    "WORD_MARK",
    "AccessTrace",
    "CompactionConfig",
    "CopyScript",
    "DistConfig",
    "PreconditionError",
    "Region",
    "SimMemory",
    "Word",
    "compact",
    "count_marked",
    "distribute",
    "loose_compact",
    "oblivious_cswap",
    "sweep_back",
    "tight_compact",
    "trace_equal",
    "traced_read",
    "traced_write",
]
