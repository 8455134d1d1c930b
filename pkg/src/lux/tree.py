"""Uncertainty-aware explanation tree with importance-weighted, optionally oblique splits.

Rows carry soft class masses derived from black-box confidence. Each node
picks the best axis-aligned threshold by information gain times feature
importance, then tries a two-feature linear boundary over the most
important feature pair and keeps it only when it scores strictly higher.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .blackbox import PredictionRecord
from .errors import DegenerateBoundary, EmptySample, SchemaMismatch, ZeroMass


@dataclass(frozen=True)
class SplitExpr:
    """Condition ``value(feature) < rhs``; rows satisfying it go left.

    ``rhs`` is ``threshold`` for axis splits and
    ``alpha * value(partner) + beta`` for oblique ones.
    """

    kind: str
    feature: int
    threshold: float = None
    alpha: float = None
    beta: float = None
    partner: int = None

    def __post_init__(self):
        if self.kind == "axis":
            if self.threshold is None or not np.isfinite(self.threshold):
                raise ValueError("axis split needs a finite threshold")
        elif self.kind == "oblique":
            if self.partner is None or self.partner == self.feature:
                raise ValueError("oblique split needs a distinct partner feature")
            if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
                raise ValueError("oblique coefficients must be finite")
        else:
            raise ValueError(f"unknown split kind {self.kind!r}")

    @classmethod
    def axis(cls, feature, threshold):
        return cls("axis", int(feature), threshold=float(threshold))

    @classmethod
    def oblique(cls, feature, partner, alpha, beta):
        return cls("oblique", int(feature), alpha=float(alpha), beta=float(beta),
                   partner=int(partner))

    @property
    def features(self):
        return (self.feature,) if self.kind == "axis" else (self.feature, self.partner)

    def rhs(self, X):
        X = np.atleast_2d(X)
        if self.kind == "axis":
            return np.full(X.shape[0], self.threshold)
        return self.alpha * X[:, self.partner] + self.beta

    def goes_left(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X[:, self.feature] < self.rhs(X)

    def describe(self, names, left=True, digits=None):
        op = "<" if left else ">="
        fmt = (lambda v: repr(float(v))) if digits is None else (lambda v: f"{v:.{digits}f}")
        f = names[self.feature]
        if self.kind == "axis":
            return f"{f} {op} {fmt(self.threshold)}"
        sign = "+" if self.beta >= 0 else "-"
        return f"{f} {op} {fmt(self.alpha)} * {names[self.partner]}{sign}{fmt(abs(self.beta))}"


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 5
    min_samples_split: int = 5
    min_gain: float = 1e-4
    oblique_enabled: bool = True
    confidence_weighting: bool = True
    svm_lambda: float = 1e-4
    svm_epochs: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be nonnegative")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be at least 2")
        if self.min_gain < 0:
            raise ValueError("min_gain must be nonnegative")


@dataclass(eq=False)
class TrainingSample:
    """Rows the tree is fit on.

    ``source`` is the dataset row index for real rows and -1 for synthetic ones.
    """

    X: np.ndarray
    labels: np.ndarray
    masses: np.ndarray
    source: np.ndarray

    def __len__(self):
        return self.X.shape[0]

    @property
    def real(self):
        return self.source >= 0


def class_masses(preds, n_classes, confidence_weighting=True):
    """Soft class masses: the row's confidence on its label, the rest spread evenly."""
    n = len(preds)
    M = np.zeros((n, n_classes))
    for i, p in enumerate(preds):
        if confidence_weighting and n_classes > 1:
            M[i, :] = (1.0 - p.confidence) / (n_classes - 1)
            M[i, p.label] = p.confidence
        else:
            M[i, p.label] = 1.0
    return M


def make_sample(X, preds, source, n_classes, confidence_weighting=True):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise EmptySample("cannot build a tree on an empty sample")
    labels = np.array([p.label for p in preds], dtype=int)
    return TrainingSample(X, labels, class_masses(preds, n_classes, confidence_weighting),
                          np.asarray(source, dtype=int))


@dataclass(eq=False)
class TreeNode:
    class_hist: np.ndarray
    n_rows: int
    data_snapshot: np.ndarray
    depth: int = 0
    split: SplitExpr = None
    left: "TreeNode" = None
    right: "TreeNode" = None
    gain: float = 0.0

    @property
    def is_leaf(self):
        return self.split is None

    @property
    def children(self):
        return () if self.is_leaf else (self.left, self.right)

    @property
    def majority(self):
        return int(np.argmax(self.class_hist))

    @property
    def leaf_confidence(self):
        return float(self.class_hist[self.majority] / self.class_hist.sum())

    def iter_nodes(self):
        yield self
        for child in self.children:
            yield from child.iter_nodes()

    def leaves(self):
        return [n for n in self.iter_nodes() if n.is_leaf]

    @property
    def height(self):
        if self.is_leaf:
            return 0
        return 1 + max(self.left.height, self.right.height)

    def same_structure(self, other):
        if self.split != other.split or self.n_rows != other.n_rows:
            return False
        if not np.array_equal(self.class_hist, other.class_hist):
            return False
        if not np.array_equal(self.data_snapshot, other.data_snapshot):
            return False
        return all(a.same_structure(b) for a, b in zip(self.children, other.children))


@dataclass(eq=False)
class ExplanationTree:
    root: TreeNode
    sample: TrainingSample
    feature_names: tuple
    class_names: tuple
    params: TreeParams = field(default_factory=TreeParams)

    @property
    def n_features(self):
        return len(self.feature_names)

    @property
    def depth(self):
        return self.root.height

    def leaves(self):
        return self.root.leaves()

    def path(self, x):
        """Nodes and branch directions (True = left) from root to the leaf of ``x``."""
        x = np.asarray(getattr(x, "values", x), dtype=float).ravel()
        if x.size != self.n_features:
            raise SchemaMismatch(f"instance has {x.size} values, tree expects {self.n_features}")
        node, steps = self.root, []
        while not node.is_leaf:
            left = bool(node.split.goes_left(x[None, :])[0])
            steps.append((node, left))
            node = node.left if left else node.right
        return steps, node

    def leaf_of(self, x):
        return self.path(x)[1]

    def apply(self, X):
        """Leaf index (position in ``leaves()``) for every row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise SchemaMismatch(f"rows have {X.shape[1]} values, tree expects {self.n_features}")
        leaf_ids = {id(leaf): i for i, leaf in enumerate(self.leaves())}
        out = np.empty(X.shape[0], dtype=int)

        def route(node, rows):
            if rows.size == 0:
                return
            if node.is_leaf:
                out[rows] = leaf_ids[id(node)]
                return
            left = node.split.goes_left(X[rows])
            route(node.left, rows[left])
            route(node.right, rows[~left])

        route(self.root, np.arange(X.shape[0]))
        return out

    def predict(self, X):
        leaves = self.leaves()
        return np.array([leaves[i].majority for i in self.apply(X)], dtype=int)

    def same_structure(self, other):
        return self.root.same_structure(other.root)

    def serialize(self):
        """One node per line, indented by depth, full-precision values."""
        lines = []

        def emit(node, tag):
            hist = ",".join(repr(float(v)) for v in node.class_hist)
            head = "  " * node.depth + f"[{tag}] "
            if node.is_leaf:
                body = f"leaf class={self.class_names[node.majority]}"
            else:
                body = node.split.describe(self.feature_names)
            lines.append(f"{head}{body} | n={node.n_rows} | hist={hist}")
            for child, t in zip(node.children, ("true", "false")):
                emit(child, t)

        emit(self.root, "root")
        return "\n".join(lines) + "\n"


def entropy(hist):
    """Shannon entropy (bits) of a class-mass vector; 0 log 0 is taken as 0."""
    hist = np.asarray(hist, dtype=float)
    total = hist.sum()
    if not total > 0:
        raise ZeroMass("entropy of an empty mass vector")
    p = hist / total
    # tiny masses can underflow to zero after division
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def _entropy_rows(H):
    """Row-wise entropy of a matrix of mass vectors; all-zero rows give 0."""
    total = H.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(total > 0, H / np.where(total > 0, total, 1.0), 0.0)
        terms = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=1)


def info_gain(masses, goes_left):
    """Entropy reduction of splitting weighted rows by the boolean ``goes_left``."""
    masses = np.atleast_2d(np.asarray(masses, dtype=float))
    goes_left = np.asarray(goes_left, dtype=bool)
    left, right = masses[goes_left].sum(axis=0), masses[~goes_left].sum(axis=0)
    total = left + right
    t, l, r = total.sum(), left.sum(), right.sum()
    if l <= 0 or r <= 0:
        return 0.0
    return entropy(total) - (l / t * entropy(left) + r / t * entropy(right))


def lux_gain(gain, importance):
    """Information gain scaled by the importance of the split feature."""
    return float(gain) * float(importance)


def fit_linear_boundary(X, labels, lam=1e-4, epochs=2000, seed=0, batch_size=256):
    """Max-margin line between two classes over two features.

    Features are standardized, then a hinge-loss objective with L2 penalty
    ``lam`` on the weights (not the intercept) is minimized by stochastic subgradient steps of size
    1/(lam * t) (mini-batches of ``batch_size`` rows, the full set when
    smaller), averaging the second half of the iterates. The line
    w1*z1 + w2*z2 + b = 0 is returned in original units as ``(alpha, beta)``
    with f1 = alpha * f2 + beta, where f1 is column 0 of ``X``.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels).astype(bool)
    if X.ndim != 2 or X.shape[1] != 2:
        raise ValueError("fit_linear_boundary expects exactly two feature columns")
    if labels.all() or not labels.any():
        raise ValueError("both classes must be present to fit a boundary")
    y = np.where(labels, 1.0, -1.0)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Z = np.hstack([(X - mu) / sd, np.ones((X.shape[0], 1))])
    yZ = y[:, None] * Z
    n = Z.shape[0]
    rng = np.random.default_rng(seed)
    radius = 1.0 / np.sqrt(lam)
    w = np.zeros(3)
    acc = np.zeros(3)
    burn = epochs // 2
    full = n <= batch_size
    m = n if full else batch_size
    picks = None if full else rng.integers(n, size=(epochs, batch_size))
    # the intercept is left out of the penalty and the projection
    shrink = np.array([1.0, 1.0, 0.0])
    for t in range(1, epochs + 1):
        B = yZ if full else yZ[picks[t - 1]]
        g = (B @ w < 1.0).astype(float) @ B
        eta = 1.0 / (lam * t)
        w = w - eta * (lam * shrink * w - g / m)
        norm = math.sqrt(w[0] * w[0] + w[1] * w[1])
        if norm > radius:
            w[:2] *= radius / norm
        if t > burn:
            acc += w
    w1, w2, b = acc / (epochs - burn)
    if abs(w1) < 1e-8:
        raise DegenerateBoundary("boundary is parallel to the split feature axis")
    alpha = -sd[0] * w2 / (w1 * sd[1])
    beta = mu[0] - alpha * mu[1] - sd[0] * b / w1
    if not (np.isfinite(alpha) and np.isfinite(beta)):
        raise DegenerateBoundary("boundary coefficients are not finite")
    return float(alpha), float(beta)


def best_axis_split(X, masses, imp):
    """Best (split, gain, lux gain) over midpoints of consecutive distinct values."""
    total = masses.sum(axis=0)
    h_total = entropy(total)
    t = total.sum()
    best = (None, 0.0, 0.0)
    for f in range(X.shape[1]):
        w = float(imp[f])
        if w <= 0:
            continue
        order = np.argsort(X[:, f], kind="stable")
        v = X[order, f]
        cut = np.flatnonzero(v[:-1] < v[1:])
        if cut.size == 0:
            continue
        cum = np.cumsum(masses[order], axis=0)[cut]
        left_mass = cum.sum(axis=1)
        right = total - cum
        gains = h_total - (left_mass / t * _entropy_rows(cum)
                           + (t - left_mass) / t * _entropy_rows(right))
        i = int(np.argmax(gains))
        score = gains[i] * w
        if score > best[2]:
            lo, hi = v[cut[i]], v[cut[i] + 1]
            mid = (lo + hi) / 2.0
            if not lo < mid:
                mid = hi
            best = (SplitExpr.axis(f, mid), float(gains[i]), float(score))
    return best


def is_homogeneous(labels):
    return labels.size == 0 or np.all(labels == labels[0])


def select_split(X, masses, labels, imp, params=TreeParams()):
    """Split for one node, or None when the node should become a leaf.

    Returns ``(split, lux_gain)``; ``imp`` is used as given, so pass
    normalized importances if ``min_gain`` should be scale-free.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    masses = np.asarray(masses, dtype=float)
    labels = np.asarray(labels)
    imp = np.asarray(getattr(imp, "values", imp), dtype=float)
    if is_homogeneous(labels) or X.shape[0] < params.min_samples_split:
        return None
    split, _, score = best_axis_split(X, masses, imp)

    if params.oblique_enabled and X.shape[1] >= 2:
        order = np.lexsort((np.arange(imp.size), -imp))
        f1, f2 = int(order[0]), int(order[1])
        # gain never exceeds the node entropy, so skip fits that cannot win
        ceiling = entropy(masses.sum(axis=0)) * imp[f1]
        if imp[f1] > 0 and ceiling > score:
            majority = int(np.argmax(masses.sum(axis=0)))
            try:
                alpha, beta = fit_linear_boundary(
                    X[:, [f1, f2]], labels == majority, lam=params.svm_lambda,
                    epochs=params.svm_epochs, seed=params.seed)
            except (DegenerateBoundary, ValueError):
                pass
            else:
                cand = SplitExpr.oblique(f1, f2, alpha, beta)
                ob_score = lux_gain(info_gain(masses, cand.goes_left(X)), imp[f1])
                if score < ob_score:
                    split, score = cand, ob_score

    if split is None or not score > params.min_gain:
        return None
    return split, score


def build_tree(sample, imp, params=TreeParams(), feature_names=None, class_names=None):
    """Grow an ExplanationTree on ``sample`` using max-normalized importances."""
    if len(sample) == 0:
        raise EmptySample("cannot build a tree on an empty sample")
    imp_values = np.asarray(getattr(imp, "values", imp), dtype=float)
    if imp_values.size != sample.X.shape[1]:
        raise SchemaMismatch("importance vector does not match feature count")
    weights = imp_values / imp_values.max()
    X, M, y = sample.X, sample.masses, sample.labels

    def grow(rows, depth):
        node = TreeNode(class_hist=M[rows].sum(axis=0), n_rows=int(rows.size),
                        data_snapshot=rows, depth=depth)
        if depth >= params.max_depth:
            return node
        found = select_split(X[rows], M[rows], y[rows], weights, params)
        if found is None:
            return node
        split, score = found
        left = split.goes_left(X[rows])
        if left.all() or not left.any():
            return node
        node.split, node.gain = split, score
        node.left = grow(rows[left], depth + 1)
        node.right = grow(rows[~left], depth + 1)
        return node

    names = tuple(feature_names) if feature_names is not None else tuple(
        f"x{i + 1}" for i in range(X.shape[1]))
    classes = tuple(class_names) if class_names else tuple(
        str(c) for c in range(M.shape[1]))
    root = grow(np.arange(len(sample)), 0)
    return ExplanationTree(root, sample, names, classes, params)


def predict(tree, x):
    """Route one instance and report the leaf majority with its confidence."""
    leaf = tree.leaf_of(x)
    proba = leaf.class_hist / leaf.class_hist.sum()
    return PredictionRecord(leaf.majority, leaf.leaf_confidence, tuple(float(p) for p in proba))
