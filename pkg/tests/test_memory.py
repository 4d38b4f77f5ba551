import numpy as np
import pytest

from oblidist.memory import (
    DUMMY,
    POS_MARK,
    WORD_MARK,
    AccessTrace,
    SimMemory,
    Word,
    count_marked,
    oblivious_cswap,
    trace_equal,
    traced_read,
    traced_write,
)


def test_read_then_write_trace():
    t = AccessTrace()
    mem = SimMemory(64, t)
    mem.alloc(4)
    w = traced_read(mem, 0)
    traced_write(mem, 0, w)
    assert list(t.records()) == [("R", 0), ("W", 0)]


def test_write_then_read_returns_word():
    mem = SimMemory(64, AccessTrace())
    mem.alloc(2)
    w = Word(77, WORD_MARK | POS_MARK, 5)
    traced_write(mem, 1, w)
    r = traced_read(mem, 1)
    assert (r.payload, r.flags, r.origin) == (77, WORD_MARK | POS_MARK, 5)
    assert r.word_mark and r.pos_mark and not r.dummy


def test_repeated_addresses():
    t = AccessTrace()
    mem = SimMemory(64, t)
    mem.alloc(8)
    for a in (5, 5, 7):
        traced_read(mem, a)
    assert len(t) == 3
    assert t.addresses().tolist() == [5, 5, 7]


def test_out_of_range():
    mem = SimMemory(64)
    mem.alloc(3)
    with pytest.raises(IndexError):
        traced_read(mem, 3)


def test_payload_must_fit():
    mem = SimMemory(8)
    mem.alloc(1)
    with pytest.raises(OverflowError):
        traced_write(mem, 0, Word(256))


def test_cswap_false_and_true():
    for pred in (False, True):
        t = AccessTrace()
        mem = SimMemory(64, t)
        r = mem.alloc(2)
        mem.load(r, [1, 2], [WORD_MARK, 0], [10, 20])
        oblivious_cswap(mem, 0, 1, pred)
        p, f, o = mem.peek(r)
        if pred:
            assert p.tolist() == [2, 1] and f.tolist() == [0, WORD_MARK] and o.tolist() == [20, 10]
        else:
            assert p.tolist() == [1, 2]
        assert list(t.records()) == [("R", 0), ("R", 1), ("W", 0), ("W", 1)]


def test_cswap_traces_identical_over_random_predicates(rng):
    frags = set()
    t = AccessTrace()
    mem = SimMemory(64, t)
    mem.alloc(2)
    for pred in rng.random(1000) < 0.5:
        before = len(t)
        oblivious_cswap(mem, 0, 1, bool(pred))
        frags.add(tuple(t.codes()[before:].tolist()))
    assert len(frags) == 1


@pytest.mark.parametrize("kind", ["none", "all", "random"])
def test_count_marked(rng, kind):
    n = 50
    marks = {"none": np.zeros(n, bool), "all": np.ones(n, bool), "random": rng.random(n) < 0.3}[kind]
    t = AccessTrace()
    mem = SimMemory(64, t)
    r = mem.alloc(n)
    mem.load(r, np.zeros(n, np.uint64), np.where(marks, WORD_MARK, 0).astype(np.uint8))
    assert count_marked(mem, r) == marks.sum()
    assert t.addresses().tolist() == list(range(n))
    assert set(t.ops().tolist()) == {0}


def test_count_marked_ignores_dummies():
    mem = SimMemory(64)
    r = mem.alloc(3)
    mem.load(r, [0, 0, 0], [WORD_MARK, WORD_MARK | DUMMY, 0])
    assert count_marked(mem, r) == 1


def test_trace_equal_cases():
    a = AccessTrace.from_records([("R", 1), ("W", 2)])
    assert trace_equal(a, AccessTrace.from_records([("R", 1), ("W", 2)]))
    assert not trace_equal(a, AccessTrace.from_records([("R", 1)]))
    assert not trace_equal(a, AccessTrace.from_records([("R", 1), ("W", 3)]))
    assert not trace_equal(a, AccessTrace.from_records([("R", 1), ("R", 2)]))


def test_digest_mode_agrees_with_full():
    recs = [("R", 3), ("W", 3), ("R", 9)]
    full, dig = AccessTrace.from_records(recs), AccessTrace.from_records(recs, "digest")
    assert full.digest() == dig.digest()
    assert full == dig
    other = AccessTrace.from_records([("R", 3), ("W", 3), ("R", 8)], "digest")
    assert full != other


def test_count_mode_has_no_digest():
    t = AccessTrace("count")
    t.add_count(5)
    assert len(t) == 5
    with pytest.raises(RuntimeError):
        t.digest()


def test_wide_words():
    mem = SimMemory(1024, AccessTrace())
    r = mem.alloc_wide(2)
    big = (1 << 1000) + 12345
    mem.write_wide(r.base, big)
    assert mem.read_wide(r.base) == big
    with pytest.raises(OverflowError):
        mem.write_wide(r.base, 1 << 1024)


def test_sideband_neutrality(rng):
    """Zeroing all sideband values leaves the trace of a cswap sequence unchanged."""
    def run(flags):
        t = AccessTrace()
        mem = SimMemory(64, t)
        r = mem.alloc(16)
        mem.load(r, np.arange(16), flags)
        for i in range(15):
            f = mem.peek(r)[1]
            oblivious_cswap(mem, i, i + 1, bool(f[i] & WORD_MARK))
        return t

    flags = np.where(rng.random(16) < 0.5, WORD_MARK, 0).astype(np.uint8)
    assert run(flags) == run(np.zeros(16, np.uint8))
