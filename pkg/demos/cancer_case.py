"""Explain a few breast-cancer test rows under a 5-NN black box.

Shows the rule, the nearest real counterfactual and how well each local
tree tracks the model on the neighborhood and on the held-out split.
"""

import warnings

from lux.blackbox import knn_model
from lux.dataset import breast_cancer, train_test_split
from lux.explain import ExplainParams, Explainer, render_rule
from lux.metrics import global_fidelity, local_fidelity, phantom_fraction
from lux.neighborhood import NeighborhoodParams

warnings.simplefilter("ignore")
data = breast_cancer()
train, test = train_test_split(data, 0.3, seed=0)
model = knn_model(train, 5)
explainer = Explainer(train, model, ExplainParams(neighborhood=NeighborhoodParams(K=40, sigma=10)))

for i in (0, 7, 42):
    b = explainer.explain(test.X[i], seed=i)
    print(f"test row {i}: model says {data.schema.class_names[b.prediction.label]}")
    print("  factual:", render_rule(b.factual))
    if b.counterfactuals:
        cf = b.counterfactuals[0]
        print(f"  counterfactual (train row {cf.row}):", render_rule(cf.rule))
    print(f"  neighborhood {len(b.neighborhood)} real + {b.augmented.synth_X.shape[0]} synthetic, "
          f"local F1 {local_fidelity(b, train):.3f}, "
          f"global fidelity {global_fidelity(b.tree, test, model):.3f}, "
          f"phantom leaves {phantom_fraction(b.tree, test):.2f}\n")
