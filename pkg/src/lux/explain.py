"""End-to-end local explanation: neighborhood, oversampling, importance, tree, rules."""

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .dataset import pairwise_distances
from .errors import (AllZeroImportance, DegenerateBackground, LowFidelityWarning,
                     NoCounterfactualLeaf)
from .importance import ImportanceVector, kernel_shap
from .neighborhood import NeighborhoodParams, assemble, cached_density_clusters
from .oversampling import DANGER_K, AugmentedSample, mark_in_danger, upsample
from .tree import TreeParams, build_tree, make_sample


@dataclass(frozen=True)
class ExplainParams:
    neighborhood: NeighborhoodParams = field(default_factory=NeighborhoodParams)
    tree: TreeParams = field(default_factory=TreeParams)
    oversample: bool = True
    danger_k: int = DANGER_K
    target_balance: bool = True
    n_coalitions: int = 512
    background_cap: int = 100
    counterfactual: str = "nearest_neighbor"

    def __post_init__(self):
        if self.counterfactual not in ("nearest_neighbor", "medoid"):
            raise ValueError("counterfactual must be 'nearest_neighbor' or 'medoid'")

    def as_dict(self):
        return asdict(self)


@dataclass(eq=False)
class Rule:
    """Conjunction of split conditions ending in a class label.

    Each condition is ``(split, left)``; ``left`` True means the row must
    satisfy ``split`` (the ``<`` side), False means the ``>=`` side.
    """

    conditions: tuple
    label: int
    confidence: float
    coverage_idx: np.ndarray
    feature_names: tuple
    class_names: tuple

    def covers(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        mask = np.ones(X.shape[0], dtype=bool)
        for split, left in self.conditions:
            mask &= split.goes_left(X) == left
        return mask

    @property
    def features(self):
        """Distinct feature indices used; oblique conditions contribute both features."""
        return frozenset(f for split, _ in self.conditions for f in split.features)

    def feature_names_used(self):
        return frozenset(self.feature_names[f] for f in self.features)

    def __len__(self):
        return len(self.conditions)

    def __eq__(self, other):
        if not isinstance(other, Rule):
            return NotImplemented
        return (self.conditions == other.conditions and self.label == other.label
                and self.confidence == other.confidence
                and np.array_equal(self.coverage_idx, other.coverage_idx))

    def __str__(self):
        return render_rule(self)


@dataclass(eq=False)
class Counterfactual:
    rule: Rule
    example: np.ndarray
    kind: str
    distance: float
    row: int

    def __eq__(self, other):
        if not isinstance(other, Counterfactual):
            return NotImplemented
        return (self.rule == other.rule and np.array_equal(self.example, other.example)
                and self.kind == other.kind and self.distance == other.distance
                and self.row == other.row)


@dataclass(eq=False)
class ExplanationBundle:
    instance: np.ndarray
    prediction: object
    factual: Rule
    counterfactuals: list
    tree: object
    neighborhood: object
    augmented: AugmentedSample
    importances: ImportanceVector
    seed: int
    params: ExplainParams
    low_fidelity: bool = False

    def same_as(self, other):
        """Structural equality, used for determinism checks."""
        return (np.array_equal(self.instance, other.instance)
                and self.factual == other.factual
                and self.counterfactuals == other.counterfactuals
                and self.tree.same_structure(other.tree)
                and self.neighborhood == other.neighborhood
                and self.augmented == other.augmented
                and self.importances == other.importances
                and self.seed == other.seed and self.params == other.params)

    def to_dict(self):
        return {
            "factual": render_rule(self.factual),
            "factual_conditions": [_condition_dict(s, left) for s, left in self.factual.conditions],
            "prediction": {"label": self.prediction.label,
                           "confidence": self.prediction.confidence},
            "low_fidelity": self.low_fidelity,
            "counterfactuals": [{
                "rule": render_rule(cf.rule), "kind": cf.kind, "row": cf.row,
                "distance": cf.distance, "example": [float(v) for v in cf.example],
            } for cf in self.counterfactuals],
            "importances": dict(zip(self.tree.feature_names,
                                    (float(v) for v in self.importances.values))),
            "neighborhood": {"base": self.neighborhood.base_idx.tolist(),
                             "inverse": self.neighborhood.inverse_idx.tolist(),
                             "cluster": self.neighborhood.cluster_idx.tolist(),
                             "synthetic": len(self.augmented.origin)},
            "tree": self.tree.serialize(),
            "provenance": {"seed": self.seed, "version": __version__,
                           "instance": [float(v) for v in self.instance],
                           "params": self.params.as_dict()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _condition_dict(split, left):
    d = {k: v for k, v in asdict(split).items() if v is not None}
    d["left"] = left
    return d


def _fmt_confidence(c):
    return repr(round(float(c), 2))


def render_rule(rule):
    """``IF <cond> AND ... THEN class = <label> # <confidence>``."""
    if rule.conditions:
        body = " AND ".join(s.describe(rule.feature_names, left, digits=2)
                            for s, left in rule.conditions)
    else:
        body = "TRUE"
    label = rule.class_names[rule.label] if rule.class_names else str(rule.label)
    return f"IF {body} THEN class = {label} # {_fmt_confidence(rule.confidence)}"


def _rule_for(tree, steps, leaf, data):
    conditions = tuple((node.split, left) for node, left in steps)
    rule = Rule(conditions, leaf.majority, leaf.leaf_confidence, np.array([], dtype=int),
                tree.feature_names, tree.class_names)
    if data is not None:
        rule.coverage_idx = np.flatnonzero(rule.covers(data.X))
    return rule


def leaf_paths(tree):
    """Mapping id(leaf) -> (steps, leaf) for every leaf of ``tree``."""
    out = {}

    def walk(node, steps):
        if node.is_leaf:
            out[id(node)] = (list(steps), node)
            return
        walk(node.left, steps + [(node, True)])
        walk(node.right, steps + [(node, False)])

    walk(tree.root, [])
    return out


def extract_factual(tree, x, data=None):
    """Rule along the path ``x`` takes; coverage is counted over ``data`` rows."""
    steps, leaf = tree.path(x)
    return _rule_for(tree, steps, leaf, data)


def _leaf_candidates(tree, label):
    """(steps, leaf, real dataset rows) for leaves whose majority differs from ``label``."""
    sample = tree.sample
    found = []
    for steps, leaf in leaf_paths(tree).values():
        if leaf.majority == label:
            continue
        rows = sample.source[leaf.data_snapshot]
        rows = np.unique(rows[rows >= 0])
        if rows.size:
            found.append((steps, leaf, rows))
    return found


def medoid(data, rows, metric="euclidean"):
    """Row minimizing summed scaled distance to the other rows; ties to the lowest index."""
    rows = np.sort(np.asarray(rows, dtype=int))
    Xs = data.scale(data.X[rows])
    cost = pairwise_distances(Xs, Xs, metric).sum(axis=1)
    # summation order can split exact ties by a few ulps
    best = cost.min()
    return int(rows[np.flatnonzero(cost <= best + 1e-12 * max(1.0, best))[0]])


def extract_counterfactuals(tree, x, data, kind="nearest_neighbor", label=None,
                            per_class=False, metric="euclidean"):
    """Counterfactuals from differently-labeled leaves, nearest first.

    Only real dataset rows are candidates. With ``per_class`` the nearest
    counterfactual for every other class is returned, else just the nearest.
    """
    x = np.asarray(getattr(x, "values", x), dtype=float).ravel()
    if label is None:
        label = tree.leaf_of(x).majority
    candidates = _leaf_candidates(tree, label)
    if not candidates:
        raise NoCounterfactualLeaf("no leaf predicts a different class")

    options = []
    for steps, leaf, rows in candidates:
        if kind == "medoid":
            pick = np.array([medoid(data, rows, metric)])
        elif kind == "nearest_neighbor":
            pick = rows
        else:
            raise ValueError(f"unknown counterfactual kind {kind!r}")
        d = data.distances_to(x, rows=pick, metric=metric)
        j = int(np.lexsort((pick, d))[0])
        options.append((float(d[j]), int(pick[j]), steps, leaf))
    options.sort(key=lambda o: (o[0], o[1]))

    chosen, seen = [], set()
    for dist, row, steps, leaf in options:
        if per_class and leaf.majority in seen:
            continue
        seen.add(leaf.majority)
        rule = _rule_for(tree, steps, leaf, data)
        chosen.append(Counterfactual(rule, data.X[row].copy(), kind, dist, row))
        if not per_class:
            break
    return chosen


def extract_counterfactual(tree, x, data, kind="nearest_neighbor", label=None,
                           metric="euclidean"):
    return extract_counterfactuals(tree, x, data, kind, label, False, metric)[0]


class Explainer:
    """Explains instances of one dataset against one black-box model.

    Black-box predictions for every dataset row and the density clustering
    are computed once and reused across calls.
    """

    def __init__(self, data, model, params=None):
        self.data = data
        self.model = model
        self.params = params or ExplainParams()
        self.preds = model.records(data.X)
        self.n_classes = getattr(model, "n_classes", None) or len(data.schema.class_names)
        names = data.schema.class_names
        self.class_names = names if len(names) == self.n_classes else tuple(
            str(c) for c in range(self.n_classes))

    @property
    def clustering(self):
        p = self.params.neighborhood
        return cached_density_clusters(self.data, p.sigma, p.metric)

    def _background(self, idx, seed):
        cap = self.params.background_cap
        if idx.size > cap:
            rng = np.random.default_rng(seed)
            idx = np.sort(rng.choice(idx, size=cap, replace=False))
        return self.data.X[idx]

    def _importance(self, x, idx, seed):
        n = self.data.n_features
        try:
            return kernel_shap(self.model, self._background(idx, seed), x[None, :],
                               n_coalitions=max(self.params.n_coalitions, 2 * n), seed=seed)
        except (AllZeroImportance, DegenerateBackground):
            # the model is flat around x; fall back to no preference between features
            return ImportanceVector(np.ones(n), scope="uniform-fallback")

    def explain(self, x, seed=0, importances=None):
        p = self.params
        x = np.asarray(getattr(x, "values", x), dtype=float).ravel()
        data, model = self.data, self.model
        x_pred = model.records(x[None, :])[0]
        nbhd = assemble(data, model, x, p.neighborhood, self.preds, self.clustering)

        if p.oversample:
            danger = mark_in_danger(nbhd, data, model, p.danger_k, p.neighborhood.metric)
            aug = upsample(nbhd, danger, model, data, p.target_balance, seed, p.danger_k,
                           p.neighborhood.metric, skip_unpaired=True)
        else:
            aug = AugmentedSample(nbhd.all_idx.copy(), np.empty((0, data.n_features)), [], [])

        imp = importances if importances is not None else self._importance(x, nbhd.all_idx, seed)

        X = np.vstack([data.X[nbhd.all_idx], aug.synth_X])
        preds = list(nbhd.preds) + list(aug.synth_preds)
        source = np.concatenate([nbhd.all_idx, np.full(aug.n_synthetic, -1)])
        tparams = TreeParams(**{**asdict(p.tree), "seed": seed})
        sample = make_sample(X, preds, source, self.n_classes, tparams.confidence_weighting)
        tree = build_tree(sample, imp, tparams, data.schema.names, self.class_names)

        factual = extract_factual(tree, x, data)
        low = factual.label != x_pred.label
        if low:
            warnings.warn(f"factual rule predicts {factual.label} but the model says "
                          f"{x_pred.label}", LowFidelityWarning, stacklevel=2)
        try:
            cfs = extract_counterfactuals(
                tree, x, data, p.counterfactual, label=x_pred.label,
                per_class=p.neighborhood.stratification == "global",
                metric=p.neighborhood.metric)
        except NoCounterfactualLeaf:
            cfs = []
        return ExplanationBundle(x, x_pred, factual, cfs, tree, nbhd, aug, imp, seed, p, low)


def explain(data, model, x, params=None, seed=0):
    """One-shot convenience wrapper around :class:`Explainer`."""
    return Explainer(data, model, params).explain(x, seed)
