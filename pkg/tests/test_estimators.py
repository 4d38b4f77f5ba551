import numpy as np
import pytest
from sklearn.base import clone

from oblidist.estimators import Distributor, LooseCompactor, TightCompactor


def test_tight_compactor(rng):
    n = 200
    X = np.column_stack([rng.integers(0, 1000, n), rng.random(n) < 0.3])
    est = TightCompactor().fit(X)
    Y = est.transform(X)
    m = int(X[:, 1].sum())
    assert est.n_marked_ == m
    assert Y[:m, 1].all() and not Y[m:, 1].any()
    assert np.array_equal(X[est.origin_, 0], Y[:, 0])


def test_same_digest_for_different_marks(rng):
    n = 128
    X1 = np.column_stack([np.arange(n), rng.random(n) < 0.5])
    X2 = np.column_stack([np.arange(n), np.zeros(n, int)])
    a, b = TightCompactor().fit(X1), TightCompactor().fit(X2)
    a.transform(X1)
    b.transform(X2)
    assert a.trace_digest_ == b.trace_digest_


def test_distributor(rng):
    n = 100
    wm = np.zeros(n, int)
    wm[rng.choice(n, 30, replace=False)] = 1
    pm = np.zeros(n, int)
    pm[rng.choice(n, 30, replace=False)] = 1
    X = np.column_stack([np.arange(n) * 7, wm, pm])
    Y = Distributor().fit_transform(X)
    assert np.array_equal(Y[:, 1], pm) and np.array_equal(Y[:, 2], pm)


def test_loose_compactor():
    n = 1024
    X = np.column_stack([np.arange(n), np.isin(np.arange(n), [1, 700, 900])])
    est = LooseCompactor(ell=16).fit(X)
    Y = est.transform(X)
    assert Y[: est.prefix_, 1].sum() == 3


def test_validation_and_clone():
    est = TightCompactor(ell=8)
    assert clone(est).get_params()["ell"] == 8
    with pytest.raises(ValueError):
        est.fit(np.array([[1, 2]]))
    with pytest.raises(ValueError):
        est.fit(np.array([[1, 0, 1]]))
    with pytest.raises(ValueError):
        est.fit(np.array([[-1, 0]]))
    with pytest.raises(Exception):
        TightCompactor().transform(np.array([[1, 0]]))
