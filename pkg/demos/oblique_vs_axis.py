"""Fit the same diagonal problem with and without two-feature splits.

A boundary like f1 - f2 + c = 0 takes a staircase of axis-aligned cuts but
a single oblique one.
"""

import warnings

import numpy as np

from lux.blackbox import FunctionModel
from lux.dataset import Dataset, FeatureSchema, train_test_split
from lux.explain import ExplainParams, Explainer, render_rule
from lux.metrics import global_fidelity
from lux.tree import TreeParams

warnings.simplefilter("ignore")
rng = np.random.default_rng(3)
c = 1.5
X = rng.uniform(0, 10, size=(400, 2))
data = Dataset(FeatureSchema(("f1", "f2"), class_names=("neg", "pos")), X,
               (X[:, 0] - X[:, 1] + c > 0).astype(int))
train, test = train_test_split(data, 0.3, seed=0)


def proba(Z):
    p = 1 / (1 + np.exp(-4 * (Z[:, 0] - Z[:, 1] + c)))
    return np.column_stack([1 - p, p])


model = FunctionModel(proba, 2)
x = test.X[np.argmin(np.abs(test.X[:, 0] - test.X[:, 1] + c))]
print("explaining", np.round(x, 3).tolist())
for oblique in (True, False):
    b = Explainer(train, model, ExplainParams(tree=TreeParams(oblique_enabled=oblique))).explain(x)
    tag = "oblique" if oblique else "axis only"
    print(f"\n{tag}: depth {b.tree.depth}, leaves {len(b.tree.leaves())}, "
          f"global fidelity {global_fidelity(b.tree, test, model):.3f}")
    print("  ", render_rule(b.factual))
