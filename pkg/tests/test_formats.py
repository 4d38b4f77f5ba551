import json

import numpy as np
import pytest

from oblidist.compaction import CompactionError
from oblidist.distribution import distribute
from oblidist.formats import (
    CONFIG_ENV,
    FormatError,
    MarkedArray,
    RunConfig,
    load_array,
    load_config,
    load_trace,
    save_array,
    save_config,
    save_trace,
)
from oblidist.memory import AccessTrace


@pytest.mark.parametrize("bits", [8, 64, 256])
def test_array_round_trip(tmp_path, rng, bits):
    n = 37
    vals = rng.integers(0, 1 << min(bits, 63), n, dtype=np.uint64)
    a = MarkedArray(vals, rng.random(n) < 0.5, rng.random(n) < 0.5, bits)
    save_array(a, tmp_path / "a.obx")
    b = load_array(tmp_path / "a.obx")
    assert b.word_bits == bits
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.word_marks, b.word_marks) and np.array_equal(a.pos_marks, b.pos_marks)


def test_array_file_size(tmp_path):
    save_array(MarkedArray(np.arange(10), None, None, 256), tmp_path / "a")
    assert (tmp_path / "a").stat().st_size == 20 + 10 * 33


def test_array_rejects(tmp_path):
    with pytest.raises(FormatError):
        MarkedArray([300], None, None, 8)
    with pytest.raises(FormatError):
        MarkedArray([1, 2], [True], None)
    p = tmp_path / "x"
    save_array(MarkedArray(np.arange(4), None, None, 64), p)
    raw = bytearray(p.read_bytes())
    for bad in (b"NOPE" + raw[4:], raw[:-1], raw[:10]):
        (tmp_path / "b").write_bytes(bytes(bad))
        with pytest.raises(FormatError):
            load_array(tmp_path / "b")
    raw[-1] = 0x80
    (tmp_path / "b").write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_array(tmp_path / "b")


@pytest.mark.parametrize("name", ["t.jsonl", "t.obt"])
def test_trace_round_trip(tmp_path, name):
    t = AccessTrace.from_records([("R", 0), ("W", 5), ("R", 1 << 40)])
    save_trace(t, tmp_path / name)
    u = load_trace(tmp_path / name)
    assert u == t and list(u.records()) == list(t.records())


def test_jsonl_layout(tmp_path):
    save_trace(AccessTrace.from_records([("R", 3), ("W", 4)]), tmp_path / "t.jsonl")
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    assert [json.loads(x) for x in lines] == [{"op": "R", "addr": 3}, {"op": "W", "addr": 4}]


def test_trace_rejects_garbage(tmp_path):
    (tmp_path / "g").write_bytes(bytes(range(256)))
    with pytest.raises(FormatError):
        load_trace(tmp_path / "g")
    (tmp_path / "h.jsonl").write_text('{"op": "X", "addr": 1}\n')
    with pytest.raises(FormatError):
        load_trace(tmp_path / "h.jsonl")


def test_config_round_trip(tmp_path, monkeypatch):
    cfg = RunConfig(loose_ell=32, seed=4)
    save_config(cfg, tmp_path / "c.json")
    assert load_config(tmp_path / "c.json") == cfg
    monkeypatch.setenv(CONFIG_ENV, str(tmp_path / "c.json"))
    assert load_config() == cfg
    monkeypatch.delenv(CONFIG_ENV)
    assert load_config() == RunConfig()


def test_config_rejects(tmp_path):
    with pytest.raises(FormatError):
        RunConfig.from_dict({"colour": 1})
    with pytest.raises(FormatError):
        RunConfig.from_dict({"mode": "fast"})
    with pytest.raises(FormatError):
        RunConfig.from_dict({"mode": "paper"})
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(FormatError):
        load_config(tmp_path / "bad.json")


def test_paper_mode_constants():
    cfg = RunConfig.paper()
    assert cfg.mode == "paper" and cfg.dist.ell == 1 << 25
    assert cfg.compaction.gamma == 1 / 32
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_paper_mode_desk_scale(rng):
    """Only the base case is reachable; it stays oblivious and correct."""
    cfg = RunConfig.paper().dist
    n = cfg.base_size
    ref = None
    for m in (0, 5, n):
        wm = np.zeros(n, bool)
        wm[rng.choice(n, m, replace=False)] = True
        pm = rng.permutation(wm)
        r = distribute(rng.integers(0, 1 << 60, n, dtype=np.uint64), wm, pm, cfg, trace_mode="digest")
        assert np.array_equal(r.word_marks, pm)
        ref = ref or r.trace
        assert r.trace == ref
    with pytest.raises(CompactionError):
        distribute(np.arange(2 * n), np.zeros(2 * n, bool), np.zeros(2 * n, bool), cfg)
