"""Minimal data generation inside the neighborhood.

Only rows the black box is unsure about, or rows surrounded by the other
label, are upsampled; new rows are interpolated between two real
neighborhood rows of the same label and then labeled by the black box.
"""

from dataclasses import dataclass, field

import numpy as np

from .blackbox import confidence_threshold
from .dataset import pairwise_distances
from .errors import NoSameClassNeighbor

DANGER_K = 5


@dataclass(eq=False)
class AugmentedSample:
    """Real neighborhood rows plus generated ones.

    ``origin`` holds one (parent row, neighbor row, t) triple per synthetic
    row, with parent and neighbor given as dataset indices.
    """

    real_idx: np.ndarray
    synth_X: np.ndarray
    synth_preds: list
    origin: list = field(default_factory=list)

    @property
    def n_synthetic(self):
        return self.synth_X.shape[0]

    def __eq__(self, other):
        if not isinstance(other, AugmentedSample):
            return NotImplemented
        return (np.array_equal(self.real_idx, other.real_idx)
                and np.array_equal(self.synth_X, other.synth_X)
                and self.synth_preds == other.synth_preds and self.origin == other.origin)


def _labels(nbhd):
    return np.array([p.label for p in nbhd.preds], dtype=int)


def _neighbor_order(data, nbhd, metric):
    """For each neighborhood member, the other members sorted by distance (ties by row)."""
    Xs = data.scale(data.X[nbhd.all_idx])
    D = pairwise_distances(Xs, Xs, metric)
    n = D.shape[0]
    order = np.empty((n, n - 1), dtype=int)
    for i in range(n):
        others = np.delete(np.arange(n), i)
        order[i] = others[np.lexsort((others, D[i, others]))]
    return order


def mark_in_danger(nbhd, data, model=None, k=DANGER_K, metric="euclidean"):
    """Dataset indices of neighborhood rows that are uncertain or isolated.

    A row is uncertain when its black-box confidence is below the
    neighborhood threshold, and isolated when a strict majority of its
    ``k`` nearest neighborhood rows carry a different model label.
    """
    n = len(nbhd)
    if n == 0:
        return np.array([], dtype=int)
    labels = _labels(nbhd)
    conf = np.array([p.confidence for p in nbhd.preds])
    delta = confidence_threshold(nbhd.preds)
    danger = conf < delta
    k = min(k, n - 1)
    if k >= 1:
        order = _neighbor_order(data, nbhd, metric)[:, :k]
        other = (labels[order] != labels[:, None]).sum(axis=1)
        danger |= other * 2 > k
    return nbhd.all_idx[danger]


def upsample(nbhd, danger, model, data, target_balance=True, seed=0, k=DANGER_K,
             metric="euclidean", skip_unpaired=False):
    """BorderlineSMOTE-style interpolation from the in-danger rows.

    With ``target_balance`` each class that has in-danger parents receives
    enough rows to match the largest class; otherwise every in-danger row
    spawns one synthetic row.  Rows without a same-label neighbor raise
    :class:`NoSameClassNeighbor` unless ``skip_unpaired`` is set.
    """
    rng = np.random.default_rng(seed)
    n_feat = data.n_features
    empty = AugmentedSample(nbhd.all_idx.copy(), np.empty((0, n_feat)), [], [])
    danger = np.asarray(danger, dtype=int)
    if danger.size == 0 or len(nbhd) < 2:
        return empty

    labels = _labels(nbhd)
    pos = {int(r): i for i, r in enumerate(nbhd.all_idx)}
    order = _neighbor_order(data, nbhd, metric)

    mates = {}
    for r in danger:
        i = pos[int(r)]
        same = [j for j in order[i] if labels[j] == labels[i]][:k]
        if not same:
            if skip_unpaired:
                continue
            raise NoSameClassNeighbor(int(r))
        mates[int(r)] = same

    parents_by_class = {}
    for r in danger:
        if int(r) in mates:
            parents_by_class.setdefault(int(labels[pos[int(r)]]), []).append(int(r))
    counts = np.bincount(labels, minlength=max(labels.max() + 1, 1))
    plan = []
    for c in sorted(parents_by_class):
        parents = parents_by_class[c]
        if target_balance:
            n_new = int(counts.max() - counts[c])
        else:
            n_new = len(parents)
        plan.extend(parents[i % len(parents)] for i in range(n_new))
    if not plan:
        return empty

    rows, origin = [], []
    for p in plan:
        q_pos = mates[p][rng.integers(len(mates[p]))]
        q = int(nbhd.all_idx[q_pos])
        t = float(rng.random())
        xp, xq = data.X[p], data.X[q]
        # clip guards the segment bounds against rounding
        rows.append(np.clip(xp + t * (xq - xp), np.minimum(xp, xq), np.maximum(xp, xq)))
        origin.append((p, q, t))
    synth_X = np.array(rows)
    return AugmentedSample(nbhd.all_idx.copy(), synth_X, model.records(synth_X), origin)
