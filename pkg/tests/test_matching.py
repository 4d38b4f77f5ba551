import math

import numpy as np
import pytest

from oblidist.compaction import COMPACTION_FAMILY
from oblidist.expander import complete_graph, family
from oblidist.matching import (
    Matching,
    MatchingError,
    PackedLayout,
    block_size,
    compressed_words,
    find_matching_active,
    find_matching_full_scan,
    pack_state,
    run_matching_compressed,
    unpack_state,
    verify_matching,
)
from oblidist.memory import AccessTrace, SimMemory


def marked_set(rng, n, k):
    m = np.zeros(n, bool)
    m[rng.choice(n, k, replace=False)] = True
    return m


def test_block_size():
    assert [block_size(d) for d in (2, 3, 8, 9, 16, 288)] == [1, 1, 4, 4, 8, 128]


@pytest.mark.parametrize("n", [64, 256, 1024])
def test_variants_agree(rng, n):
    g = family(n, COMPACTION_FAMILY)
    for _ in range(10):
        mk = marked_set(rng, n, n // 32)
        a = find_matching_active(g, mk)
        f = find_matching_full_scan(g, mk)
        c = run_matching_compressed(g, mk)
        assert np.array_equal(a.selected, f.selected)
        assert np.array_equal(a.selected, c.selected)
        assert verify_matching(g, mk, a)
        assert not a.failed


def test_halving_history(rng):
    n = 256
    g = family(n, COMPACTION_FAMILY)
    mk = marked_set(rng, n, n // 32)
    m = find_matching_full_scan(g, mk)
    k = int(mk.sum())
    assert m.history[0] == k
    for r, u in enumerate(m.history):
        assert u <= k / 2 ** r
    assert m.history[math.ceil(math.log2(n))] == 0


def test_blocked_vertices_never_used(rng):
    n = 256
    g = family(n, COMPACTION_FAMILY)
    mk = marked_set(rng, n, 4)
    blocked = marked_set(rng, n, 8)
    m = find_matching_full_scan(g, mk, blocked=blocked)
    assert verify_matching(g, mk, m, blocked=blocked)
    assert not np.any(np.isin(g.adj[m.selected], np.flatnonzero(blocked)))


def test_verify_rejects_bad_matchings(rng):
    n = 64
    g = family(n, COMPACTION_FAMILY)
    mk = marked_set(rng, n, 2)
    m = find_matching_active(g, mk)
    sel = m.selected.copy()
    u = int(np.flatnonzero(mk)[0])
    sel[u, np.flatnonzero(sel[u])[0]] = False
    assert not verify_matching(g, mk, Matching(sel, mk, m.satisfied, 1))
    # overload one right vertex
    g2 = complete_graph(8)
    sel = np.zeros((8, 8), bool)
    sel[:, :4] = True
    assert not verify_matching(g2, np.ones(8, bool), Matching(sel, np.ones(8, bool), np.ones(8, bool), 1), B=4)


def test_full_scan_trace_independent_of_marks(rng):
    n = 128
    g = family(n, COMPACTION_FAMILY)
    traces = []
    for k in (0, 1, 4, n // 32):
        t = AccessTrace("digest")
        mem = SimMemory(64, t)
        find_matching_full_scan(g, marked_set(rng, n, k), mem=mem)
        traces.append(t)
    assert all(t == traces[0] for t in traces)
    per_round = n * (5 * g.d + 5)
    assert traces[0].count == per_round * (math.ceil(math.log2(n)) + 2)


def test_compressed_trace_independent_of_marks(rng):
    n = 64
    g = family(n, COMPACTION_FAMILY)
    traces = []
    for k in (0, 2):
        t = AccessTrace()
        run_matching_compressed(g, marked_set(rng, n, k), word_bits=1024, mem=SimMemory(1024, t))
        traces.append(t)
    assert traces[0] == traces[1]


def test_compressed_words_example():
    assert compressed_words(16, 8, 1024) == 2
    lay = PackedLayout(16, 8)
    assert lay.total_bits == 16 * 8 * 7 + 16 * 10 + 16 * 5 + 5


def test_compressed_word_limit(rng):
    g = family(256, COMPACTION_FAMILY)
    with pytest.raises(MatchingError):
        run_matching_compressed(g, marked_set(rng, 256, 4), word_bits=256, max_words=4)
    with pytest.raises(MatchingError):
        run_matching_compressed(g, marked_set(rng, 256, 4), word_bits=1024, mem=SimMemory(64))


def test_pack_unpack_round_trip(rng):
    for n in (4, 16, 64):
        g = family(n, COMPACTION_FAMILY)
        for b in (64, 256, 1024):
            mk = rng.random(n) < 0.3
            sat = mk & (rng.random(n) < 0.5)
            bl = rng.random(n) < 0.2
            sel = rng.random((n, g.d)) < 0.3
            words = pack_state(g, mk, bl, b, satisfied=sat, selected=sel)
            assert len(words) == compressed_words(n, g.d, b)
            assert all(0 <= w < 1 << b for w in words)
            st = unpack_state(words, n, g.d, b)
            assert np.array_equal(st["adj"], g.adj)
            assert np.array_equal(st["selected"], sel)
            assert np.array_equal(st["marked"], mk)
            assert np.array_equal(st["satisfied"], sat)
            assert np.array_equal(st["blocked"], bl)
            assert st["unsatisfied"] == np.flatnonzero(mk & ~sat).tolist()


def test_register_ops_counted(rng):
    g = family(64, COMPACTION_FAMILY)
    m = run_matching_compressed(g, marked_set(rng, 64, 2))
    assert m.register_ops > 0


def test_active_touches_fewer_cells(rng):
    n = 256
    g = family(n, COMPACTION_FAMILY)
    mk = marked_set(rng, n, 2)
    ta, tf = AccessTrace("count"), AccessTrace("count")
    find_matching_active(g, mk, mem=SimMemory(64, ta))
    find_matching_full_scan(g, mk, mem=SimMemory(64, tf))
    assert ta.count < tf.count
