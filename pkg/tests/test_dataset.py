import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lux.dataset import (Dataset, FeatureSchema, breast_cancer, distance, load_csv,
                         minmax_scale, pairwise_distances, toy_blobs, train_test_split,
                         write_csv)
from lux.errors import DimensionMismatch, EmptyDataset, MissingColumn, ParseError

import oracles


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_small_file(tmp_path):
    p = write(tmp_path, "a,b,label\n1,2,x\n3,4,y\n5,6,x\n")
    d = load_csv(p, "label")
    assert d.schema.names == ("a", "b")
    assert len(d) == 3 and d.n_features == 2
    assert d.schema.class_names == ("x", "y")
    assert d.y_true.tolist() == [0, 1, 0]


def test_blank_cell_reports_row_and_column(tmp_path):
    p = write(tmp_path, "a,b,label\n1,2,x\n3,,y\n")
    with pytest.raises(ParseError) as err:
        load_csv(p, "label")
    assert err.value.row == 2 and err.value.col == "b"


def test_missing_label_column(tmp_path):
    p = write(tmp_path, "a,b\n1,2\n")
    with pytest.raises(MissingColumn):
        load_csv(p, "label")


def test_header_only_is_empty(tmp_path):
    with pytest.raises(EmptyDataset):
        load_csv(write(tmp_path, "a,b,label\n"), "label")


def test_provenance_lines_are_skipped(tmp_path):
    p = write(tmp_path, "# made by hand\n# seed=1\na,label\n0.5,p\n0.25,q\n")
    d = load_csv(p, "label")
    assert d.X.tolist() == [[0.5], [0.25]]


def test_non_finite_rejected(tmp_path):
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "a,label\ninf,x\n"), "label")


def test_cancer_shape():
    d = breast_cancer()
    assert d.X.shape == (569, 30)
    assert d.schema.class_names == ("benign", "malignant")
    assert np.bincount(d.y_true).tolist() == [357, 212]


def test_schema_rules():
    with pytest.raises(ValueError):
        FeatureSchema(("a", "a"))
    with pytest.raises(ValueError):
        FeatureSchema(("a", ""))
    with pytest.raises(ValueError):
        FeatureSchema(("a",), class_names=("only",))


def test_dataset_checks():
    s = FeatureSchema(("a", "b"))
    with pytest.raises(DimensionMismatch):
        Dataset(s, np.zeros((2, 3)))
    with pytest.raises(EmptyDataset):
        Dataset(s, np.zeros((0, 2)))
    with pytest.raises(ValueError):
        Dataset(s, np.array([[np.nan, 1.0]]))
    d = Dataset(s, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        d.X[0, 0] = 1.0


def test_scaled_example():
    ranges = np.array([[0.0, 3.0], [0.0, 4.0]])
    assert distance((0, 0), (3, 4), ranges=ranges) == pytest.approx(math.sqrt(2), abs=1e-12)
    assert distance((0, 0), (1, 1), metric="manhattan") == 2.0
    x = np.array([0.3, 0.7])
    assert distance(x, x) == 0.0
    with pytest.raises(DimensionMismatch):
        distance((0, 0), (1, 1, 1))


def test_toy_blobs():
    d = toy_blobs()
    assert len(d) == 8 and np.bincount(d.y_true).tolist() == [4, 4]
    assert oracles.entropy(np.bincount(d.y_true).tolist()) == 1.0
    dist = d.distances_to(d.X[3])
    dist[3] = np.inf
    nearest = np.flatnonzero(dist == dist.min())
    assert sorted(nearest.tolist()) == [1, 2]


def test_constant_feature_scales_to_zero():
    s = FeatureSchema(("a", "b"))
    d = Dataset(s, np.array([[1.0, 5.0], [2.0, 5.0]]))
    assert np.all(d.scaled().X[:, 1] == 0.0)


def test_stratified_split_disjoint():
    d = breast_cancer()
    train, test = train_test_split(d, 0.3, seed=0)
    assert len(train) + len(test) == len(d)
    assert abs(len(test) - 0.3 * len(d)) <= 2
    rows = {tuple(r) for r in train.X}
    assert not any(tuple(r) in rows for r in test.X)
    assert abs(test.y_true.mean() - d.y_true.mean()) < 0.01


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=1000)
@given(arrays(float, (3, 4), elements=finite), st.sampled_from(["euclidean", "manhattan"]))
def test_triangle_inequality(P, metric):
    a, b, c = P
    ranges = np.stack([P.min(axis=0), P.max(axis=0)], axis=1)
    ab = distance(a, b, metric, ranges)
    bc = distance(b, c, metric, ranges)
    ac = distance(a, c, metric, ranges)
    assert ac <= ab + bc + 1e-9
    assert ab == pytest.approx(distance(b, a, metric, ranges), abs=1e-15)


@given(arrays(float, st.tuples(st.integers(1, 8), st.integers(1, 4)), elements=finite))
def test_scaling_idempotent(X):
    d = Dataset(FeatureSchema(tuple(f"f{i}" for i in range(X.shape[1]))), X)
    once = d.scaled()
    twice = once.scaled()
    assert np.max(np.abs(once.X - twice.X)) <= 1e-12


@given(arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 3)), elements=finite),
       st.lists(st.sampled_from(["p", "q", "r"]), min_size=6, max_size=6))
def test_csv_round_trip(tmp_path_factory, X, labels):
    path = tmp_path_factory.mktemp("csv") / "d.csv"
    labels = labels[: X.shape[0]]
    classes = tuple(dict.fromkeys(labels))
    assume(len(classes) >= 2)
    y = np.array([classes.index(v) for v in labels])
    schema = FeatureSchema(tuple(f"f{i}" for i in range(X.shape[1])), class_names=classes)
    d = Dataset(schema, X, y)
    write_csv(d, path, header_lines=["round trip"])
    back = load_csv(path, "label")
    assert back.schema.names == d.schema.names
    assert np.max(np.abs(back.X - d.X)) <= 1e-9
    assert [back.schema.class_names[i] for i in back.y_true] == list(labels)


def test_pairwise_matches_loop(rng):
    A, B = rng.random((5, 3)), rng.random((4, 3))
    D = pairwise_distances(A, B)
    for i in range(5):
        for j in range(4):
            assert D[i, j] == pytest.approx(math.dist(A[i], B[j]), abs=1e-12)
    assert np.all(minmax_scale(A, np.array([[0, 1]] * 3)) == A)
