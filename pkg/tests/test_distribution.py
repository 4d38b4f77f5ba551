import numpy as np
import pytest

from conftest import adversarial_instances, random_instance
from oblidist.baseline import oracle_tight_compact
from oblidist.distribution import (
    DistConfig,
    PreconditionError,
    classify,
    distribute,
    swap_routine,
    tight_compact,
)
from oblidist.memory import DUMMY, POS_MARK, WORD_MARK, AccessTrace, SimMemory


def check_distributed(values, wm, pm, res):
    """Marked words sit exactly on marked positions; the multiset is unchanged."""
    assert np.array_equal(res.word_marks, pm)
    assert np.array_equal(res.pos_marks, pm)
    assert np.array_equal(np.sort(res.values[pm]), np.sort(values[wm]))
    assert np.array_equal(np.sort(res.values), np.sort(values))
    assert np.array_equal(values[res.origin], res.values)


@pytest.mark.parametrize("n", [1, 2, 7, 64, 100, 256, 1024])
def test_random_instances(rng, n):
    for _ in range(5):
        v, wm, pm = random_instance(rng, n)
        check_distributed(v, wm, pm, distribute(v, wm, pm))


@pytest.mark.parametrize("name", ["all-marked", "none-marked", "alternating", "single-mismatch"])
def test_adversarial(name):
    v, wm, pm = adversarial_instances(512)[name]
    check_distributed(v, wm, pm, distribute(v, wm, pm))


def test_empty():
    res = distribute(np.zeros(0), np.zeros(0, bool), np.zeros(0, bool))
    assert res.values.size == 0


def test_precondition_errors():
    with pytest.raises(PreconditionError):
        distribute([1, 2, 3], [True, False, False], [True, True, False])
    with pytest.raises(PreconditionError):
        distribute([1, 2], [True], [True])
    with pytest.raises(PreconditionError):
        tight_compact([1, 2], [True])


def test_padding_words_stay_put(rng):
    v, wm, pm = random_instance(rng, 300)
    res = distribute(v, wm, pm)
    assert res.origin.max() < 300


def test_traces_independent_of_marks(rng):
    n = 512
    ref = None
    for m in (0, 1, n // 3, n):
        v, wm, pm = random_instance(rng, n, m)
        t = distribute(v, wm, pm, trace_mode="digest").trace
        ref = ref or t
        assert t == ref


def test_tight_compact(rng):
    for n in (5, 64, 333, 1024):
        v = rng.integers(0, 1 << 40, n, dtype=np.uint64)
        mk = rng.random(n) < 0.37
        res = tight_compact(v, mk)
        m = int(mk.sum())
        assert res.word_marks[:m].all() and not res.word_marks[m:].any()
        assert np.array_equal(np.sort(res.values[:m]), np.sort(oracle_tight_compact(v, mk)[:m]))
        assert not res.pos_marks.any()


def test_classify():
    f = np.array([WORD_MARK, POS_MARK, WORD_MARK | POS_MARK, 0, WORD_MARK | DUMMY], np.uint8)
    assert classify(f).tolist() == [1, 2, 0, 0, 0]


def _swap(n, flags, mode):
    t = AccessTrace("count")
    mem = SimMemory(64, t)
    r = mem.alloc(n)
    mem.load(r, np.arange(n, dtype=np.uint64), flags)
    swap_routine(mem, r, DistConfig().graphs, mode)
    return mem.peek(r), t.count


def test_gather_equals_pairwise(rng):
    n = 128
    wm = rng.random(n) < 0.5
    pm = rng.random(n) < 0.5
    flags = (np.where(wm, WORD_MARK, 0) | np.where(pm, POS_MARK, 0)).astype(np.uint8)
    (pg, fg, og), cg = _swap(n, flags, "gather")
    (pp, fp, op), cp = _swap(n, flags, "pairwise")
    assert np.array_equal(pg, pp) and np.array_equal(fg, fp) and np.array_equal(og, op)
    d = DistConfig().graphs.degree
    assert cg == 2 * n * d and cp == 4 * n * d * (d - 1) // 2


def test_swap_reduces_colours(rng):
    n = 1024
    wm = np.zeros(n, bool)
    wm[rng.choice(n, n // 2, replace=False)] = True
    pm = np.zeros(n, bool)
    pm[rng.choice(n, n // 2, replace=False)] = True
    flags = (np.where(wm, WORD_MARK, 0) | np.where(pm, POS_MARK, 0)).astype(np.uint8)
    (_, f, _), _ = _swap(n, flags, "gather")
    c = classify(f)
    assert (c == 1).sum() == (c == 2).sum()
    assert (c == 1).sum() <= n / (2 * DistConfig().ell)


def test_stats_levels(rng):
    v, wm, pm = random_instance(rng, 1024, 512)
    st = distribute(v, wm, pm, stats=True).stats
    assert [lv["n"] for lv in st.levels] == [1024, 512, 256, 128]
    assert all(lv["red"] == lv["blue"] for lv in st.levels)


def test_config_round_trip():
    cfg = DistConfig(ell=8, base_size=32)
    assert DistConfig.from_dict(cfg.to_dict()) == cfg


def test_unknown_swap_mode():
    mem = SimMemory(64)
    r = mem.alloc(128)
    with pytest.raises(ValueError):
        swap_routine(mem, r, DistConfig().graphs, "bogus")
