import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lux.blackbox import FunctionModel, PredictionRecord, knn_model
from lux.dataset import Dataset, FeatureSchema
from lux.errors import LowFidelityWarning, NoCounterfactualLeaf
from lux.explain import (ExplainParams, Explainer, explain, extract_counterfactual,
                         extract_counterfactuals, extract_factual, medoid, render_rule)
from lux.importance import ImportanceVector
from lux.neighborhood import NeighborhoodParams
from lux.tree import TreeParams, build_tree, make_sample, predict

import oracles


def toy_params(K=8, sigma=3, **kw):
    return ExplainParams(neighborhood=NeighborhoodParams(K=K, sigma=sigma), **kw)


def test_toy_factual(blobs):
    m = knn_model(blobs, 3)
    b = explain(blobs, m, [0.5, 0.5], toy_params())
    assert len(b.factual) == 1
    assert b.factual.label == 0 and b.factual.confidence == 1.0
    assert not b.low_fidelity
    assert render_rule(b.factual).startswith("IF x")
    assert render_rule(b.factual).endswith("THEN class = 0 # 1.0")


def test_toy_counterfactual_nearest(blobs):
    m = knn_model(blobs, 3)
    b = explain(blobs, m, [0.5, 0.5], toy_params())
    cf = b.counterfactuals[0]
    assert cf.row == 4 and cf.example.tolist() == [5.0, 5.0]
    assert cf.rule.label == 1
    assert cf.distance == pytest.approx(blobs.distance([0.5, 0.5], [5, 5]), abs=1e-12)


def test_counterfactual_from_other_blob(blobs):
    m = knn_model(blobs, 3)
    b = explain(blobs, m, [5.5, 5.5], toy_params())
    assert b.factual.label == 1
    cf = b.counterfactuals[0]
    # brute force: the class-0 row nearest to (5.5, 5.5)
    d = [(math.dist([5.5, 5.5], r), i) for i, r in enumerate(blobs.X.tolist()) if i < 4]
    assert cf.row == min(d)[1] == 3


def test_medoid_kind_ties_to_lowest(blobs):
    m = knn_model(blobs, 3)
    b = explain(blobs, m, [0.5, 0.5], toy_params(counterfactual="medoid"))
    cf = b.counterfactuals[0]
    # the class-1 square is symmetric; all four rows tie, the lowest index wins
    assert cf.kind == "medoid" and cf.row == 4


def test_determinism(blobs):
    m = knn_model(blobs, 3)
    a = explain(blobs, m, [0.5, 0.5], toy_params(), seed=3)
    b = explain(blobs, m, [0.5, 0.5], toy_params(), seed=3)
    assert a.same_as(b)
    assert a.to_json() == b.to_json()


def hard_tree(X, y, imp=(1.0, 1.0), **kw):
    preds = [PredictionRecord(int(l), 1.0, tuple(float(c == l) for c in range(2))) for l in y]
    s = make_sample(X, preds, np.arange(len(y)), 2)
    return build_tree(s, list(imp), TreeParams(**kw))


def test_depth_zero_rule():
    X = np.array([[0.0, 0], [1, 1], [2, 2]])
    tree = hard_tree(X, [0, 0, 0])
    rule = extract_factual(tree, [1.0, 1.0])
    assert rule.conditions == ()
    assert render_rule(rule) == "IF TRUE THEN class = 0 # 1.0"
    with pytest.raises(NoCounterfactualLeaf):
        extract_counterfactual(tree, [1.0, 1.0], Dataset(FeatureSchema(("x1", "x2")), X))


def test_depth_two_path():
    g = np.linspace(0, 10, 11)
    X = np.array([(a, b) for a in g for b in g])
    y = ((X[:, 0] > 5) & (X[:, 1] > 5)).astype(int)
    tree = hard_tree(X, y, oblique_enabled=False)
    rule = extract_factual(tree, [8.0, 8.0])
    assert len(rule) == 2 and rule.label == 1
    steps, leaf = tree.path([8.0, 8.0])
    assert [(n.split, left) for n, left in steps] == list(rule.conditions)
    assert all(left is False for _, left in rule.conditions)
    assert {s.feature for s, _ in rule.conditions} == {0, 1}


@pytest.mark.filterwarnings("ignore::lux.errors.NoRepresentativesWarning")
def test_low_fidelity_flagged():
    X = np.array([[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]])
    d = Dataset(FeatureSchema(("x1",)), X)
    # the model disagrees with the only sensible tree at x=2.6
    m = FunctionModel(lambda Z: np.where((np.abs(Z[:, 0] - 2.6) < 0.05)[:, None],
                                         [0.0, 1.0], [1.0, 0.0]), 2)
    with pytest.warns(LowFidelityWarning):
        b = explain(d, m, [2.6], ExplainParams(neighborhood=NeighborhoodParams(K=6, sigma=2)))
    assert b.low_fidelity


def test_medoid_matches_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 15))
        X = rng.integers(0, 4, (n, 2)).astype(float)
        d = Dataset(FeatureSchema(("a", "b")), X)
        rows = sorted(set(rng.integers(0, n, size=int(rng.integers(1, n + 1))).tolist()))
        scaled = d.scale(d.X).tolist()
        want = oracles.medoid(rows, scaled)
        assert medoid(d, rows) == want


def test_bundle_json_roundtrip(blobs):
    m = knn_model(blobs, 3)
    b = explain(blobs, m, [0.5, 0.5], toy_params())
    doc = json.loads(b.to_json())
    assert doc["factual"] == render_rule(b.factual)
    assert doc["provenance"]["seed"] == 0
    assert doc["counterfactuals"][0]["row"] == 4


def random_problem(seed, n, d, n_classes):
    rng = np.random.default_rng(seed)
    X = rng.normal(0, 1, (n, d)) * rng.uniform(0.5, 3, d)
    W = rng.normal(size=(d, n_classes))
    scale = rng.uniform(0.5, 3)

    def fn(Z):
        logits = Z @ W * scale
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)
    names = tuple(f"x{i + 1}" for i in range(d))
    return Dataset(FeatureSchema(names), X), FunctionModel(fn, n_classes), rng


@settings(max_examples=500)
@given(st.integers(0, 10**6), st.integers(10, 40), st.integers(2, 3), st.integers(2, 3),
       st.sampled_from(["nearest_neighbor", "medoid"]), st.booleans())
def test_explanation_properties(seed, n, d, n_classes, kind, local):
    data, model, rng = random_problem(seed, n, d, n_classes)
    x = data.X[int(rng.integers(n))] + rng.normal(0, 0.1, d)
    params = ExplainParams(
        neighborhood=NeighborhoodParams(K=max(n_classes, n // 3), sigma=3,
                                        stratification="local" if local else "global"),
        tree=TreeParams(max_depth=3, svm_epochs=100), n_coalitions=32, counterfactual=kind)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        b = Explainer(data, model, params).explain(x, seed=seed % 5)
    tree = b.tree
    tree_features = {n.split.feature for n in tree.root.iter_nodes() if not n.is_leaf} | {
        n.split.partner for n in tree.root.iter_nodes()
        if not n.is_leaf and n.split.kind == "oblique"}

    # coverage soundness over the dataset rows
    rule = b.factual
    inside = rule.covers(data.X)
    assert np.array_equal(np.flatnonzero(inside), rule.coverage_idx)
    for i in range(n):
        ok = all(bool(s.goes_left(data.X[i:i + 1])[0]) == left for s, left in rule.conditions)
        assert ok == inside[i]
    assert predict(tree, x).label == rule.label

    for cf in b.counterfactuals:
        # validity: the tree routes the example to the counterfactual leaf
        assert predict(tree, cf.example).label == cf.rule.label != b.prediction.label
        assert bool(cf.rule.covers(cf.example)[0])
        # representativeness: a real row that reached the chosen leaf
        assert 0 <= cf.row < n and np.array_equal(cf.example, data.X[cf.row])
        assert cf.row in tree.sample.source[tree.sample.source >= 0]
        assert set(cf.rule.features) <= tree_features
    if not local:
        labels = [cf.rule.label for cf in b.counterfactuals]
        assert len(labels) == len(set(labels))


def test_nearest_counterfactual_is_brute_force_nearest():
    checked = 0
    for trial in range(30):
        data, model, _ = random_problem(trial, 30, 2, 2)
        x = data.X[trial % 30]
        b = Explainer(data, model, ExplainParams(
            neighborhood=NeighborhoodParams(K=10, sigma=3), n_coalitions=16)).explain(x)
        if not b.counterfactuals:
            continue
        tree = b.tree
        scaled = data.scale(data.X)
        xs = data.scale(x[None, :])[0]
        cands = []
        for leaf in tree.leaves():
            if leaf.majority == b.prediction.label:
                continue
            for r in set(tree.sample.source[leaf.data_snapshot].tolist()) - {-1}:
                cands.append((math.dist(xs, scaled[r]), r))
        d0, r0 = min(cands)
        assert b.counterfactuals[0].row == r0
        assert b.counterfactuals[0].distance == pytest.approx(d0, abs=1e-12)
        checked += 1
    assert checked >= 10


def test_injected_importances(blobs):
    m = knn_model(blobs, 3)
    e = Explainer(blobs, m, toy_params())
    b = e.explain([0.5, 0.5], importances=ImportanceVector([0.0, 1.0]))
    # the zero-importance feature can never drive a split
    assert {s.feature for s, _ in b.factual.conditions} == {1}


def test_per_class_counterfactuals():
    X = np.array([[0, 0], [0, 1], [1, 0], [5, 0], [5, 1], [6, 0], [0, 5], [1, 5], [0, 6.0]])
    y = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2])
    d = Dataset(FeatureSchema(("x1", "x2"), class_names=("a", "b", "c")), X, y)
    m = knn_model(d, 1)
    b = explain(d, m, [0.2, 0.2], ExplainParams(neighborhood=NeighborhoodParams(K=9, sigma=2)))
    assert sorted(cf.rule.label for cf in b.counterfactuals) == [1, 2]
    one = extract_counterfactuals(b.tree, [0.2, 0.2], d, per_class=False)
    assert len(one) == 1
