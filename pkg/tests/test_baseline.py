import csv

import numpy as np
import pytest

from oblidist.baseline import (
    bench_scaling,
    bitonic_comparators,
    bitonic_tight_compact,
    count_accesses,
    fit_exponent,
    oracle_distribute,
    oracle_tight_compact,
    write_csv,
)


def test_comparator_count():
    assert [bitonic_comparators(n) for n in (2, 4, 8, 1024)] == [1, 6, 24, 28160]


@pytest.mark.parametrize("n", [1, 5, 64, 100, 1000])
def test_bitonic_matches_oracle(rng, n):
    v = rng.integers(0, 1 << 50, n, dtype=np.uint64)
    mk = rng.random(n) < 0.4
    out, marks, origin, _ = bitonic_tight_compact(v, mk)
    assert np.array_equal(out, oracle_tight_compact(v, mk))
    assert np.array_equal(marks, np.sort(mk)[::-1])
    assert np.array_equal(v[origin], out)


def test_bitonic_trace_oblivious(rng):
    n = 256
    a = bitonic_tight_compact(np.arange(n), rng.random(n) < 0.5, "digest")[3]
    b = bitonic_tight_compact(np.arange(n), np.zeros(n, bool), "digest")[3]
    assert a == b and a.count == 4 * bitonic_comparators(n)


def test_oracle_distribute():
    wm = np.array([1, 0, 1, 0], bool)
    pm = np.array([0, 1, 0, 1], bool)
    assert oracle_distribute(wm, pm).tolist() == [1, 0, 3, 2]
    with pytest.raises(ValueError):
        oracle_distribute(wm, np.ones(4, bool))


def test_count_accesses_independent_of_seed():
    for algo in ("distribute", "bitonic", "compact_word"):
        assert count_accesses(algo, 256, seed=0) == count_accesses(algo, 256, seed=9)
    with pytest.raises(ValueError):
        count_accesses("quicksort", 16)


def test_fit_exponent():
    ns = [2 ** k for k in range(8, 14)]
    assert fit_exponent(ns, [5 * n for n in ns]) == pytest.approx(1.0)
    assert fit_exponent(ns, [n * np.log2(n) ** 2 for n in ns]) > 1.2


def test_bench_csv(tmp_path):
    recs = bench_scaling(["distribute", "bitonic"], [128, 256])
    write_csv(recs, tmp_path / "b.csv")
    rows = list(csv.DictReader(open(tmp_path / "b.csv")))
    assert [r["algo"] for r in rows] == ["distribute", "distribute", "bitonic", "bitonic"]
    assert len({r["params_hash"] for r in rows}) == 1
    assert int(rows[2]["accesses"]) == 4 * bitonic_comparators(128)
