"""scikit-learn style wrappers.

Inputs are integer matrices whose first column holds the payload and whose
remaining columns hold 0/1 marks:

* ``TightCompactor`` / ``LooseCompactor``: ``[value, mark]``
* ``Distributor``: ``[value, word_mark, pos_mark]``

``transform`` returns a matrix of the same layout in the permuted order and
stores the run's access-trace digest in ``trace_digest_`` and the source
index of every output row in ``origin_``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .compaction import CompactionConfig, CopyScript, loose_compact
from .distribution import DistConfig, distribute, tight_compact
from .expander import FamilySpec
from .memory import WORD_MARK, AccessTrace, SimMemory


def _validate(X, n_cols):
    X = check_array(X, dtype=np.int64, ensure_min_samples=1)
    if X.shape[1] != n_cols:
        raise ValueError(f"expected {n_cols} columns, got {X.shape[1]}")
    if X[:, 0].min() < 0:
        raise ValueError("payload values must be non-negative")
    marks = X[:, 1:]
    if not np.isin(marks, (0, 1)).all():
        raise ValueError("mark columns must hold 0 or 1")
    return X


class _Base(TransformerMixin, BaseEstimator):
    _n_cols = 2

    def fit(self, X, y=None):
        X = _validate(X, self._n_cols)
        self.n_features_in_ = X.shape[1]
        return self

    def _check(self, X):
        check_is_fitted(self, "n_features_in_")
        return _validate(X, self._n_cols)


class TightCompactor(_Base):
    """Obliviously move the marked rows to the front."""

    def __init__(self, ell=16, word_bits=256, epsilon=1 / 8, degree=288):
        self.ell = ell
        self.word_bits = word_bits
        self.epsilon = epsilon
        self.degree = degree

    def _config(self) -> DistConfig:
        return DistConfig(ell=self.ell, graphs=FamilySpec(self.epsilon, "permutation", self.degree, 0),
                          compaction=CompactionConfig(word_bits=self.word_bits))

    def transform(self, X):
        X = self._check(X)
        r = tight_compact(X[:, 0].astype(np.uint64), X[:, 1] == 1, self._config(), trace_mode="digest")
        self.trace_digest_ = r.trace.digest()
        self.n_marked_ = int(r.word_marks.sum())
        self.origin_ = r.origin
        return np.column_stack([r.values.astype(np.int64), r.word_marks.astype(np.int64)])


class Distributor(TightCompactor):
    """Obliviously send marked words to marked positions."""

    _n_cols = 3

    def transform(self, X):
        X = self._check(X)
        r = distribute(X[:, 0].astype(np.uint64), X[:, 1] == 1, X[:, 2] == 1, self._config(),
                       trace_mode="digest")
        self.trace_digest_ = r.trace.digest()
        self.origin_ = r.origin
        return np.column_stack([r.values.astype(np.int64), r.word_marks.astype(np.int64),
                                r.pos_marks.astype(np.int64)])


class LooseCompactor(_Base):
    """Move m marked rows into a prefix of length at most m * ell (power-of-two row counts)."""

    def __init__(self, ell=64, word_bits=256):
        self.ell = ell
        self.word_bits = word_bits

    def transform(self, X):
        X = self._check(X)
        n = X.shape[0]
        cfg = CompactionConfig(word_bits=self.word_bits)
        rec = AccessTrace("digest")
        mem = SimMemory(cfg.word_bits, rec)
        region = mem.alloc(n)
        mem.load(region, X[:, 0].astype(np.uint64), np.where(X[:, 1] == 1, WORD_MARK, 0).astype(np.uint8))
        m = int(X[:, 1].sum())
        self.prefix_ = loose_compact(mem, region, m, self.ell, cfg, CopyScript())
        self.trace_digest_ = rec.digest()
        p, f, o = mem.peek(region)
        self.origin_ = o
        return np.column_stack([p.astype(np.int64), ((f & WORD_MARK) != 0).astype(np.int64)])
