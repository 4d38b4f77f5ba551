import numpy as np
import pytest

from oblidist.memory import WORD_MARK, SimMemory

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def random_instance(rng, n, m=None):
    """Values with m marked words and m marked positions (m random when None)."""
    m = int(rng.integers(0, n + 1)) if m is None else m
    values = rng.integers(0, 1 << 62, n, dtype=np.uint64)
    wm = np.zeros(n, bool)
    wm[rng.choice(n, m, replace=False)] = True
    pm = np.zeros(n, bool)
    pm[rng.choice(n, m, replace=False)] = True
    return values, wm, pm


def adversarial_instances(n):
    """All marked, none marked, alternating, single mismatch."""
    v = np.arange(n, dtype=np.uint64) * 3 + 1
    ones, zeros = np.ones(n, bool), np.zeros(n, bool)
    alt = np.arange(n) % 2 == 0
    one_w = zeros.copy()
    one_w[0] = True
    one_p = zeros.copy()
    one_p[n - 1] = True
    return {
        "all-marked": (v, ones, ones),
        "none-marked": (v, zeros, zeros),
        "alternating": (v, alt, ~alt),
        "single-mismatch": (v, one_w, one_p),
    }


def load_words(n, marks, word_bits=256, recorder=None, payload=None):
    mem = SimMemory(word_bits, recorder)
    r = mem.alloc(n)
    payload = np.arange(n, dtype=np.uint64) + 100 if payload is None else payload
    mem.load(r, payload, np.where(marks, WORD_MARK, 0).astype(np.uint8))
    return mem, r


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
