"""Explain one point of the eight-row two-blob toy set, step by step.

    python demos/toy_walkthrough.py [out.svg]
"""

import sys

from lux.blackbox import knn_model
from lux.dataset import toy_blobs
from lux.explain import ExplainParams, Explainer, render_rule
from lux.neighborhood import NeighborhoodParams
from lux.viz import VizSpec, to_svg

data = toy_blobs()
model = knn_model(data, 3)
params = ExplainParams(neighborhood=NeighborhoodParams(K=8, sigma=3))
bundle = Explainer(data, model, params).explain([0.5, 0.5], seed=0)

print("rows and predicted labels")
for i, (row, label) in enumerate(zip(data.X, model.predict(data.X))):
    print(f"  {i}: {row.tolist()} -> {label}")

print("\nneighborhood roles")
for i, tags in bundle.neighborhood.roles():
    print(f"  row {i}: {tags}")
print(f"synthetic rows added: {bundle.augmented.synth_X.shape[0]}")
print(f"importances: {[round(v, 3) for v in bundle.importances.values]}")

print("\nfactual:        ", render_rule(bundle.factual))
for cf in bundle.counterfactuals:
    print("counterfactual: ", render_rule(cf.rule), f"(row {cf.row}, {cf.example.tolist()})")

if len(sys.argv) > 1:
    with open(sys.argv[1], "w", encoding="utf-8") as fh:
        fh.write(to_svg(VizSpec.from_bundle(bundle)))
    print("tree drawn to", sys.argv[1])
