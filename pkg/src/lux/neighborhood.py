"""Representative neighborhood selection over real data rows.

The neighborhood of an instance is the union of a class-stratified base
set, an inverse-sampled set hugging the decision boundary, and every
density cluster (OPTICS over the whole dataset) that touches either set.
"""

import math
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.cluster import OPTICS

from .dataset import METRICS, pairwise_distances
from .errors import EmptyNeighborhood, NoRepresentativesWarning, TooFewRows

NOISE = -1


@dataclass(frozen=True)
class NeighborhoodParams:
    K: int = 40
    sigma: int = 5
    stratification: str = "global"
    metric: str = "euclidean"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be positive")
        if self.sigma < 2:
            raise ValueError("sigma must be at least 2")
        if self.stratification not in ("local", "global"):
            raise ValueError("stratification must be 'local' or 'global'")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")

    def validate_classes(self, n_classes):
        if self.K < n_classes:
            raise ValueError(f"K={self.K} is smaller than the number of classes ({n_classes})")


@dataclass(frozen=True, eq=False)
class DensityClustering:
    labels: np.ndarray
    ordering: np.ndarray
    reachability: np.ndarray

    def clusters(self):
        """Mapping cluster id -> sorted member row indices."""
        return {int(c): np.flatnonzero(self.labels == c)
                for c in np.unique(self.labels) if c != NOISE}


@dataclass(eq=False)
class Neighborhood:
    base_idx: np.ndarray
    inverse_idx: np.ndarray
    cluster_idx: np.ndarray
    all_idx: np.ndarray
    epsilon: float
    preds: list = field(repr=False)
    unfilled: dict = field(default_factory=dict)

    def __len__(self):
        return self.all_idx.size

    def __eq__(self, other):
        if not isinstance(other, Neighborhood):
            return NotImplemented
        return (all(np.array_equal(getattr(self, k), getattr(other, k))
                    for k in ("base_idx", "inverse_idx", "cluster_idx", "all_idx"))
                and self.epsilon == other.epsilon and self.preds == other.preds)

    def roles(self):
        """Diagnostic listing: (row index, comma-joined roles)."""
        out = []
        for i in self.all_idx:
            tags = [name for name, s in (("base", self.base_idx),
                                         ("inverse", self.inverse_idx),
                                         ("cluster", self.cluster_idx)) if i in s]
            out.append((int(i), ",".join(tags)))
        return out


def class_quota(K, n_classes, n_rows):
    """Rows taken per class; K at or above the row count means take every row."""
    if K >= n_rows:
        return n_rows
    return math.ceil(K / n_classes)


def _nearest(dist, candidates, quota, cap=math.inf):
    """Up to ``quota`` candidates ordered by (distance, row index), within ``cap``."""
    candidates = np.asarray(candidates, dtype=int)
    d = dist[candidates]
    keep = d <= cap
    candidates, d = candidates[keep], d[keep]
    order = np.lexsort((candidates, d))
    return candidates[order[:quota]]


def _labels(preds):
    return np.array([p.label for p in preds], dtype=int)


def local_epsilon(dist, labels, label):
    """Distance to the nearest row whose model label differs from ``label``."""
    other = labels != label
    return float(dist[other].min()) if np.any(other) else math.inf


def base_neighborhood(data, model, x, params, preds=None, n_classes=None, _report=None):
    """Per-class nearest rows to ``x`` under the stratification cap.

    ``preds`` are the cached black-box predictions for every row of
    ``data``; they are computed if not supplied.
    """
    if preds is None:
        preds = model.records(data.X)
    labels = _labels(preds)
    n_classes = n_classes or getattr(model, "n_classes", None) or int(labels.max()) + 1
    params.validate_classes(n_classes)
    x_label = model.records(np.atleast_2d(x))[0].label
    dist = data.distances_to(x, metric=params.metric)
    quota = class_quota(params.K, n_classes, len(data))
    eps = local_epsilon(dist, labels, x_label) if params.stratification == "local" else math.inf

    chosen, unfilled, empty = [], {}, []
    for c in range(n_classes):
        members = np.flatnonzero(labels == c)
        picked = _nearest(dist, members, quota, eps)
        if picked.size < quota:
            unfilled[c] = quota - picked.size
        if picked.size == 0:
            empty.append(c)
        chosen.append(picked)
    idx = np.unique(np.concatenate(chosen)) if chosen else np.array([], dtype=int)
    if empty:
        warnings.warn(f"no base-neighborhood representatives for classes {empty}",
                      NoRepresentativesWarning, stacklevel=2)
    if idx.size == 0:
        raise EmptyNeighborhood("no rows selected for the base neighborhood")
    if _report is not None:
        _report.update(epsilon=eps, unfilled=unfilled)
    return idx


def inverse_neighborhood(data, model, x, base, params, preds=None, n_classes=None):
    """Rows labeled like ``x`` that sit nearest to each opposite-label base row."""
    if preds is None:
        preds = model.records(data.X)
    labels = _labels(preds)
    n_classes = n_classes or getattr(model, "n_classes", None) or int(labels.max()) + 1
    x_label = model.records(np.atleast_2d(x))[0].label
    quota = class_quota(params.K, n_classes, len(data))
    same = np.flatnonzero(labels == x_label)
    anchors = [int(i) for i in base if labels[i] != x_label]
    if not anchors or same.size == 0:
        return np.array([], dtype=int)
    Xs = data.scale(data.X)
    D = pairwise_distances(Xs[anchors], Xs[same], params.metric)
    picked = []
    for row in D:
        order = np.lexsort((same, row))
        picked.append(same[order[:quota]])
    return np.unique(np.concatenate(picked))


def density_clusters(data, sigma, metric="euclidean"):
    """OPTICS (min_samples=sigma, unbounded eps) with xi=0.05 cluster extraction."""
    n = len(data)
    if n < sigma:
        raise TooFewRows(f"{n} rows but sigma={sigma}")
    Xs = data.scale(data.X)
    if np.all(Xs == Xs[0]):
        # no density structure at all: one cluster holding every row
        return DensityClustering(np.zeros(n, dtype=int), np.arange(n), np.zeros(n))
    optics = OPTICS(min_samples=sigma, max_eps=np.inf, metric=metric,
                    cluster_method="xi", xi=0.05, min_cluster_size=sigma)
    optics.fit(Xs)
    return DensityClustering(np.asarray(optics.labels_, dtype=int),
                             np.asarray(optics.ordering_, dtype=int),
                             np.asarray(optics.reachability_, dtype=float))


_cluster_cache = {}
_cache_lock = threading.Lock()


def cached_density_clusters(data, sigma, metric="euclidean"):
    key = (id(data), sigma, metric)
    with _cache_lock:
        hit = _cluster_cache.get(key)
        if hit is not None and hit[0] is data:
            return hit[1]
    result = density_clusters(data, sigma, metric)
    with _cache_lock:
        if len(_cluster_cache) > 64:
            _cluster_cache.clear()
        _cluster_cache[key] = (data, result)
    return result


def absorb_clusters(clustering, seed_idx):
    """Union of whole clusters that share at least one row with ``seed_idx``."""
    seed = np.zeros(clustering.labels.size, dtype=bool)
    seed[np.asarray(seed_idx, dtype=int)] = True
    hit = np.unique(clustering.labels[seed])
    hit = hit[hit != NOISE]
    return np.flatnonzero(np.isin(clustering.labels, hit))


def assemble(data, model, x, params, preds=None, clustering=None):
    if preds is None:
        preds = model.records(data.X)
    n_classes = getattr(model, "n_classes", None) or len(data.schema.class_names)
    report = {}
    base = base_neighborhood(data, model, x, params, preds, n_classes, _report=report)
    inverse = inverse_neighborhood(data, model, x, base, params, preds, n_classes)
    if clustering is None:
        clustering = cached_density_clusters(data, params.sigma, params.metric)
    seed = np.union1d(base, inverse)
    clusters = absorb_clusters(clustering, seed)
    all_idx = np.union1d(seed, clusters)
    return Neighborhood(base_idx=base, inverse_idx=inverse, cluster_idx=clusters,
                        all_idx=all_idx, epsilon=report["epsilon"],
                        preds=[preds[i] for i in all_idx], unfilled=report["unfilled"])
