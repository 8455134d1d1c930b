import os
import statistics
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lux.blackbox import (FunctionModel, PredictionRecord, confidence_threshold, knn_model,
                          records, subprocess_model)
from lux.dataset import breast_cancer, toy_blobs
from lux.errors import (EmptyInput, KTooLarge, ModelTimeout, NoLabels, ProcessSpawnError,
                        ProtocolError)

import oracles

STUB = os.path.join(os.path.dirname(__file__), "stub_model.py")


def stub(mode, timeout=30.0):
    return subprocess_model([sys.executable, STUB, mode, "2"], timeout=timeout)


def test_knn_examples(blobs):
    m = knn_model(blobs, 3)
    assert m.predict_proba([[0.5, 0.5]]).tolist() == [[1.0, 0.0]]
    rec = knn_model(blobs, 4).records([[3.0, 3.0]])[0]
    assert rec.proba == (0.5, 0.5) and rec.label == 0
    one = knn_model(blobs, 1).records(blobs.X[5:6])[0]
    assert one.label == 1 and one.confidence == 1.0


def test_knn_full_k_gives_prior():
    d = breast_cancer()
    m = knn_model(d, len(d))
    prior = np.bincount(d.y_true) / len(d)
    P = m.predict_proba(d.X[:7] * 1.3)
    assert np.allclose(P, prior, atol=1e-15)


def test_knn_errors(blobs):
    with pytest.raises(KTooLarge):
        knn_model(blobs, 9)
    from lux.dataset import Dataset
    with pytest.raises(NoLabels):
        knn_model(Dataset(blobs.schema, blobs.X), 3)


def brute_knn(train, k, q):
    """Votes with fractional sharing among rows tied at the k-th distance."""
    Xs = train.scale(train.X)
    qs = train.scale(np.atleast_2d(q))[0]
    d = np.sqrt(((Xs - qs) ** 2).sum(axis=1))
    kth = np.sort(d)[k - 1]
    closer = d < kth - 1e-12 * max(1.0, kth)
    tied = np.abs(d - kth) <= 1e-12 * max(1.0, kth)
    share = (k - closer.sum()) / tied.sum()
    votes = np.zeros(2)
    for i in range(len(d)):
        votes[train.y_true[i]] += 1.0 if closer[i] else (share if tied[i] else 0.0)
    return votes / k


@given(st.lists(st.tuples(st.integers(-2, 8), st.integers(-2, 8)), min_size=1, max_size=20),
       st.integers(1, 8))
def test_knn_matches_brute_force(points, k):
    blobs = toy_blobs()
    m = knn_model(blobs, k)
    Q = np.array(points, dtype=float) / 2.0
    P = m.predict_proba(Q)
    for q, p in zip(Q, P):
        assert np.allclose(p, brute_knn(blobs, k, q), atol=1e-12)


def test_knn_permutation_and_determinism(rng):
    d = breast_cancer()
    m = knn_model(d, 5)
    Q = d.X[rng.choice(len(d), 50, replace=False)] * rng.uniform(0.9, 1.1, (50, 30))
    perm = rng.permutation(50)
    P = m.predict_proba(Q)
    assert np.array_equal(m.predict_proba(Q[perm]), P[perm])
    assert np.array_equal(m.predict_proba(Q), P)


def test_records_tie_goes_low():
    rec = records([[0.5, 0.5], [0.2, 0.8]])
    assert [r.label for r in rec] == [0, 1]
    assert rec[1].confidence == 0.8 and rec[1].proba == (0.2, 0.8)


def test_function_model_validates():
    bad = FunctionModel(lambda X: np.full((len(X), 2), 0.45), 2)
    with pytest.raises(ProtocolError, match="sum to 1"):
        bad.predict_proba([[0.0]])


def test_threshold_examples():
    assert confidence_threshold([0.9, 0.9, 0.9]) == pytest.approx(0.9, abs=1e-15)
    assert confidence_threshold([1.0, 0.5]) == 0.5
    assert confidence_threshold([0.6, 0.8, 1.0]) == pytest.approx(0.8 - 0.1632993161855452,
                                                                  abs=1e-12)
    recs = [PredictionRecord(0, 0.6, (0.6, 0.4)), PredictionRecord(1, 1.0, (0.0, 1.0))]
    assert confidence_threshold(recs) == pytest.approx(0.6, abs=1e-12)
    with pytest.raises(EmptyInput):
        confidence_threshold([])


unit = st.floats(0.0, 1.0, allow_nan=False)


@given(st.lists(unit, min_size=1, max_size=30))
def test_threshold_matches_oracle(conf):
    assert confidence_threshold(conf) == pytest.approx(oracles.delta(conf), abs=1e-9)


@given(st.lists(st.floats(0.3, 0.7), min_size=1, max_size=30), st.floats(-0.3, 0.3))
def test_threshold_translation(conf, c):
    base = confidence_threshold(conf)
    shifted = confidence_threshold([v + c for v in conf])
    raw = statistics.fmean(conf) - statistics.pstdev(conf)
    if 0.0 <= raw <= 1.0 and 0.0 <= raw + c <= 1.0:
        assert shifted == pytest.approx(base + c, abs=1e-12)


def test_subprocess_uniform():
    with stub("uniform") as m:
        assert m.n_classes == 2 and m.n_features == 2
        assert all(r.confidence == 0.5 for r in m.records(np.zeros((4, 2))))


def test_subprocess_sign_is_order_consistent(rng):
    with stub("sign") as m:
        X = rng.uniform(0, 5, (20, 2))
        perm = rng.permutation(20)
        assert np.array_equal(m.predict_proba(X[perm]), m.predict_proba(X)[perm])


def test_subprocess_garbage_line():
    with stub("garbage") as m:
        with pytest.raises(ProtocolError, match="this is not json"):
            m.predict_proba(np.zeros((1, 2)))


def test_subprocess_bad_sum():
    with stub("badsum") as m:
        with pytest.raises(ProtocolError, match="probabilities must sum to 1"):
            m.predict_proba(np.zeros((1, 2)))


def test_subprocess_timeout():
    m = stub("silent", timeout=0.5)
    try:
        with pytest.raises(TimeoutError):
            m.predict_proba(np.zeros((1, 2)))
    finally:
        m._proc.kill()
        m.close()
    assert issubclass(ModelTimeout, TimeoutError)


def test_subprocess_spawn_failure():
    with pytest.raises(ProcessSpawnError):
        subprocess_model(["/nonexistent/model-binary"])
