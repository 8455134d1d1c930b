from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lux.blackbox import FunctionModel, PredictionRecord, knn_model
from lux.dataset import Dataset, FeatureSchema, train_test_split
from lux.errors import DegenerateTable, EmptyTest, EmptyTree, NoValidPairs
from lux.explain import ExplainParams, Rule, explain
from lux.metrics import (EvalRun, SyntheticSpec, evaluate, f1_score, friedman_nemenyi,
                         global_fidelity, jaccard, lipschitz_stability, local_fidelity,
                         make_synthetic, phantom_fraction, read_records, shap_consistency,
                         simplicity, stability_jaccard, write_records, write_summary)
from lux.neighborhood import NeighborhoodParams
from lux.tree import SplitExpr, TreeParams, build_tree, make_sample

import oracles


def hard_tree(X, y, n_classes=2, **kw):
    preds = [PredictionRecord(int(l), 1.0, tuple(float(c == l) for c in range(n_classes)))
             for l in y]
    s = make_sample(X, preds, np.arange(len(y)), n_classes)
    return build_tree(s, [1.0] * X.shape[1], TreeParams(**kw))


def rule(conds, names=("x1", "x2", "x3")):
    return Rule(tuple(conds), 0, 1.0, np.array([], int), names, ("0", "1"))


def test_f1_confusion_example():
    # TP 2, FP 1, FN 1, TN 4
    y_true = [1, 1, 1, 0, 0, 0, 0, 0]
    y_pred = [1, 1, 0, 1, 0, 0, 0, 0]
    assert f1_score(y_true, y_pred) == pytest.approx(2 / 3, abs=1e-12)


@settings(max_examples=500)
@given(st.integers(2, 4).flatmap(lambda c: st.tuples(
    st.just(c), st.lists(st.tuples(st.integers(0, c - 1), st.integers(0, c - 1)),
                         min_size=1, max_size=40))))
def test_f1_oracle(case):
    c, pairs = case
    t, p = [a for a, _ in pairs], [b for _, b in pairs]
    want = oracles.f1(t, p)
    n_classes = c if c > 2 else None
    if c > 2 and len(set(t) | set(p)) <= 2:
        # macro over present classes only applies to genuinely multiclass problems
        n_classes = None
    assert f1_score(t, p, n_classes) == pytest.approx(want, abs=1e-12)


@given(st.sets(st.integers(0, 6)), st.sets(st.integers(0, 6)))
def test_jaccard_oracle(a, b):
    assert jaccard(a, b) == pytest.approx(oracles.jaccard(a, b), abs=1e-15)


def test_jaccard_examples():
    assert jaccard({"a", "b"}, {"b", "c"}) == pytest.approx(1 / 3)
    assert jaccard(set(), set()) == 1.0
    assert stability_jaccard([{"a"}, {"a"}, {"a"}]) == 1.0


def test_local_fidelity(blobs):
    m = knn_model(blobs, 3)
    b = explain(blobs, m, [0.5, 0.5], ExplainParams(neighborhood=NeighborhoodParams(K=8, sigma=3)))
    assert local_fidelity(b, blobs) == 1.0
    assert local_fidelity(b, blobs, m, on="coverage") == 1.0
    assert local_fidelity(None, blobs) == 0.0


def test_global_fidelity_constant_leaf():
    X = np.arange(20.0).reshape(10, 2)
    tree = hard_tree(X, [1] * 10)
    test = Dataset(FeatureSchema(("a", "b")), np.arange(40.0).reshape(20, 2))
    model = FunctionModel(lambda Z: np.eye(2)[(Z[:, 0] // 2 % 2).astype(int)], 2)
    assert np.bincount(model.predict(test.X)).tolist() == [10, 10]
    assert global_fidelity(tree, test, model) == pytest.approx(2 / 3, abs=1e-12)
    same = FunctionModel(lambda Z: np.tile([0.0, 1.0], (len(Z), 1)), 2)
    assert global_fidelity(tree, test, same) == 1.0
    with pytest.raises(EmptyTest):
        global_fidelity(tree, _EmptyTest(), model)


class _EmptyTest:
    X = np.empty((0, 2))

    def __len__(self):
        return 0


def test_simplicity_and_consistency():
    assert simplicity(rule([])) == 0
    r = rule([(SplitExpr.oblique(1, 0, 1.0, 12.36), True), (SplitExpr.axis(1, 7.92), False)])
    assert simplicity(r) == 2
    assert shap_consistency(rule([]), [0.3, 0.2]) == 0.0
    assert shap_consistency(rule([(SplitExpr.axis(2, 0.0), True)]), [0.1, 0.9, 0.7]) == 0.7
    r2 = rule([(SplitExpr.axis(0, 0.0), True), (SplitExpr.axis(2, 1.0), False)])
    assert shap_consistency(r2, [0.2, 0.9, 0.4]) == pytest.approx(0.3)


def fake_bundle(instance, coverage):
    factual = SimpleNamespace(coverage_idx=np.arange(coverage))
    return SimpleNamespace(instance=np.asarray(instance, float), factual=factual)


def test_lipschitz_examples():
    d = Dataset(FeatureSchema(("a",)), np.linspace(0, 1, 10)[:, None])
    a, b = fake_bundle([0.0], 5), fake_bundle([1.0], 5)
    assert lipschitz_stability([(a, b)], d) == pytest.approx(0.5)
    zero = fake_bundle([0.5], 0), fake_bundle([1.0], 0)
    assert lipschitz_stability([zero], d) == 0.0
    with pytest.raises(NoValidPairs):
        lipschitz_stability([(a, fake_bundle([0.0], 3))], d)


def test_phantom_fraction():
    g = np.linspace(0, 10, 11)
    X = np.array([(a, b) for a in g for b in g])
    y = (X[:, 0] > 5).astype(int) * 2 + (X[:, 1] > 5).astype(int)
    tree = hard_tree(X, y, n_classes=4, oblique_enabled=False)
    assert len(tree.leaves()) == 4
    full = Dataset(FeatureSchema(("a", "b")), X)
    assert phantom_fraction(tree, full) == 0.0
    three = Dataset(FeatureSchema(("a", "b")), X[y != 3])
    assert phantom_fraction(tree, three) == 0.25
    with pytest.raises(EmptyTree):
        phantom_fraction(None, full)


def test_friedman_thirteen_by_four():
    rng = np.random.default_rng(0)
    table = rng.uniform(0.5, 1.0, (13, 4))
    res = friedman_nemenyi(table)
    assert res.df == (3, 36)
    assert res.critical_value == pytest.approx(2.87, abs=0.005)
    assert res.ranks.sum() == pytest.approx(10.0, abs=1e-12)


def test_friedman_dominant():
    table = np.array([[0.9, 0.5, 0.4], [0.8, 0.7, 0.1], [0.99, 0.2, 0.3]])
    res = friedman_nemenyi(table)
    assert res.ranks[0] == 1.0
    low = friedman_nemenyi(table, higher_is_better=False)
    assert low.ranks[0] == 3.0
    with pytest.raises(DegenerateTable):
        friedman_nemenyi(np.ones((4, 3)))


@settings(max_examples=1000)
@given(st.integers(2, 15), st.integers(2, 6), st.integers(0, 10**6), st.booleans())
def test_friedman_rank_sums(N, k, seed, higher):
    rng = np.random.default_rng(seed)
    # coarse values force plenty of ties
    table = rng.integers(0, 4, (N, k)).astype(float)
    if np.all(table == table[:, :1]):
        return
    res = friedman_nemenyi(table, higher_is_better=higher)
    want = oracles.friedman_rank_sums(table.tolist(), higher)
    assert np.allclose(res.rank_sums, want, atol=1e-12)
    assert res.ranks.sum() == pytest.approx(k * (k + 1) / 2, abs=1e-12)


def test_friedman_statistic_against_reference():
    # Iman-Davenport F from the chi-square statistic computed by scipy
    from scipy.stats import friedmanchisquare
    rng = np.random.default_rng(3)
    table = rng.normal(size=(10, 4))
    res = friedman_nemenyi(table)
    chi2 = friedmanchisquare(*table.T).statistic
    N, k = table.shape
    assert res.chi2 == pytest.approx(chi2, rel=1e-12)
    assert res.statistic == pytest.approx((N - 1) * chi2 / (N * (k - 1) - chi2), rel=1e-12)


def test_synthetic_separable():
    spec = SyntheticSpec(n_samples=500, n_informative=2, n_noise=0, n_classes=2, blob_std=1.5,
                         seed=4)
    d = make_synthetic(spec)
    a, b = d.X[d.y_true == 0], d.X[d.y_true == 1]
    gaps = [max(b[:, j].min() - a[:, j].max(), a[:, j].min() - b[:, j].max())
            for j in range(2)]
    assert max(gaps) >= 4 * spec.blob_std


def test_synthetic_noise_uncorrelated():
    d = make_synthetic(SyntheticSpec(500, 4, 4, 2, seed=1))
    for j in range(4, 8):
        r = np.corrcoef(d.X[:, j], d.y_true)[0, 1]
        assert abs(r) < 0.15


def test_synthetic_reproducible():
    a = make_synthetic(SyntheticSpec(300, 3, 2, 3, seed=9))
    b = make_synthetic(SyntheticSpec(300, 3, 2, 3, seed=9))
    assert a.X.tobytes() == b.X.tobytes() and a.y_true.tobytes() == b.y_true.tobytes()
    assert a.schema.names == ("x1", "x2", "x3", "noise1", "noise2")


def test_records_replay(tmp_path):
    d = make_synthetic(SyntheticSpec(120, 2, 1, 2, seed=2))
    train, test = train_test_split(d, 0.3, seed=0)
    run = evaluate("syn", train, test, knn_model(train, 5),
                   ExplainParams(n_coalitions=32), n_instances=6, runs=2)
    path = tmp_path / "records.csv"
    write_records([run], path, header_lines=["lux 0.1.0"])
    back = read_records(path)
    assert len(back) == 1
    assert back[0].aggregate() == run.aggregate()
    assert "stability_jaccard" in run.metrics() and "lipschitz_stability" in run.metrics()
    assert {r["instance"] for r in run.records if r["metric"] == "lipschitz_stability"} <= {
        r["instance"] for r in run.records if r["metric"] == "global_fidelity"}
    write_summary(back, tmp_path / "summary.csv")
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert lines[0] == "algorithm,dataset,metric,mean,std,n"


def test_eval_run_aggregate():
    run = EvalRun("d")
    for i, v in enumerate([1.0, 0.0, 0.5]):
        run.add(i, "local_fidelity", v)
    mean, std, n = run.aggregate()["local_fidelity"]
    assert (mean, n) == (0.5, 3)
    assert std == pytest.approx(np.std([1.0, 0.0, 0.5]))
