"""Tabular data model, CSV ingestion and scaled distances."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch, EmptyDataset, MissingColumn, ParseError

METRICS = ("euclidean", "manhattan")


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple
    kinds: tuple = None
    class_names: tuple = ()

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        object.__setattr__(self, "names", names)
        if any(not n for n in names):
            raise ValueError("feature names must be non-empty")
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        kinds = self.kinds or ("numeric",) * len(names)
        if len(kinds) != len(names) or any(k != "numeric" for k in kinds):
            raise ValueError("only numeric features are supported")
        object.__setattr__(self, "kinds", tuple(kinds))
        class_names = tuple(str(c) for c in self.class_names)
        # an empty tuple means "not known yet"; a model may supply them later
        if len(class_names) == 1:
            raise ValueError("at least 2 class labels are required")
        object.__setattr__(self, "class_names", class_names)

    @property
    def n_features(self):
        return len(self.names)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise MissingColumn(name) from None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable feature matrix with a schema and optional class indices.

    ``ranges`` holds per-feature (min, max) used for min-max scaling before
    any distance is computed.
    """

    schema: FeatureSchema
    X: np.ndarray
    y_true: np.ndarray = None
    ranges: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=float, copy=True)
        if X.ndim != 2 or X.shape[0] == 0:
            raise EmptyDataset("dataset needs at least one row")
        if X.shape[1] != self.schema.n_features:
            raise DimensionMismatch(
                f"{X.shape[1]} columns but schema has {self.schema.n_features} features")
        if not np.all(np.isfinite(X)):
            raise ValueError("dataset contains NaN or Inf")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        if self.y_true is not None:
            y = np.asarray(self.y_true, dtype=int).copy()
            if y.shape != (X.shape[0],):
                raise DimensionMismatch("y_true length differs from row count")
            y.setflags(write=False)
            object.__setattr__(self, "y_true", y)
        if self.ranges is None:
            ranges = np.stack([X.min(axis=0), X.max(axis=0)], axis=1)
        else:
            ranges = np.array(self.ranges, dtype=float)
        ranges.setflags(write=False)
        object.__setattr__(self, "ranges", ranges)

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    def scale(self, X):
        return minmax_scale(X, self.ranges)

    def scaled(self):
        """Return a new Dataset whose values are min-max scaled to [0, 1]."""
        return Dataset(self.schema, self.scale(self.X), self.y_true)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        y = None if self.y_true is None else self.y_true[idx]
        return Dataset(self.schema, self.X[idx], y, ranges=self.ranges)

    def distance(self, a, b, metric="euclidean"):
        return distance(a, b, metric=metric, ranges=self.ranges)

    def distances_to(self, x, rows=None, metric="euclidean"):
        """Scaled distances from ``x`` to every row (or to ``rows``)."""
        X = self.X if rows is None else self.X[np.asarray(rows, dtype=int)]
        return pairwise_distances(self.scale(np.atleast_2d(x)), self.scale(X), metric)[0]


def minmax_scale(X, ranges):
    X = np.asarray(X, dtype=float)
    lo, hi = ranges[:, 0], ranges[:, 1]
    span = hi - lo
    constant = span == 0
    out = (X - lo) / np.where(constant, 1.0, span)
    # constant features carry no distance information
    if np.any(constant):
        out = np.where(constant, 0.0, out)
    return out


def pairwise_distances(A, B, metric="euclidean"):
    """Distances between rows of already-scaled matrices A and B."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"{A.shape[1]} vs {B.shape[1]} features")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    # cdist differences each pair directly, so d(a, a) == 0 and symmetric ties stay exact
    return cdist(A, B, "euclidean" if metric == "euclidean" else "cityblock")


def distance(a, b, metric="euclidean", ranges=None):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.size} vs {b.size} features")
    if ranges is not None:
        ranges = np.asarray(ranges, dtype=float)
        if ranges.shape != (a.size, 2):
            raise DimensionMismatch("ranges do not match instance length")
        a, b = minmax_scale(a, ranges), minmax_scale(b, ranges)
    if metric == "euclidean":
        return float(math.sqrt(float(np.dot(a - b, a - b))))
    if metric == "manhattan":
        return float(np.abs(a - b).sum())
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def load_csv(path, label_column=None):
    """Read a header-first CSV of numeric features.

    Lines starting with ``#`` before the header are treated as a provenance
    block and skipped. The label column, if named, becomes ``y_true`` with
    class names in order of first appearance.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows:
        raise EmptyDataset(f"{path}: no header row")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    if not body:
        raise EmptyDataset(f"{path}: no data rows")

    label_pos = None
    if label_column is not None:
        if label_column not in header:
            raise MissingColumn(label_column)
        label_pos = header.index(label_column)
    feature_pos = [i for i in range(len(header)) if i != label_pos]

    X = np.empty((len(body), len(feature_pos)))
    labels = []
    for r, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise ParseError(r, None, f"expected {len(header)} cells, got {len(row)}")
        for j, c in enumerate(feature_pos):
            cell = row[c].strip()
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(r, header[c], f"not a number: {cell!r}") from None
            if not math.isfinite(value):
                raise ParseError(r, header[c], "non-finite value")
            X[r - 1, j] = value
        if label_pos is not None:
            labels.append(row[label_pos].strip())

    y_true, class_names = None, ()
    if label_pos is not None:
        class_names = tuple(dict.fromkeys(labels))
        lookup = {c: i for i, c in enumerate(class_names)}
        y_true = np.array([lookup[v] for v in labels], dtype=int)
    schema = FeatureSchema(tuple(header[c] for c in feature_pos), class_names=class_names)
    return Dataset(schema, X, y_true)


def write_csv(data, path, label_column="label", header_lines=()):
    """Write ``data`` so that :func:`load_csv` reads it back unchanged.

    ``path`` may also be an open text file.
    """
    if hasattr(path, "write"):
        _write_rows(data, path, label_column, header_lines)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write_rows(data, fh, label_column, header_lines)


def _write_rows(data, fh, label_column, header_lines):
    for line in header_lines:
        fh.write(f"# {line}\n")
    writer = csv.writer(fh, lineterminator="\n")
    names = list(data.schema.names)
    has_labels = data.y_true is not None
    writer.writerow(names + ([label_column] if has_labels else []))
    for i, row in enumerate(data.X):
        cells = [repr(float(v)) for v in row]
        if has_labels:
            cells.append(data.schema.class_names[data.y_true[i]])
        writer.writerow(cells)


def toy_blobs():
    """Eight points in two well separated 2x2 squares, four per class."""
    X = np.array([(0, 0), (0, 1), (1, 0), (1, 1),
                  (5, 5), (5, 6), (6, 5), (6, 6)], dtype=float)
    y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    return Dataset(FeatureSchema(("x1", "x2"), class_names=("0", "1")), X, y)


def breast_cancer():
    """The Wisconsin diagnostic breast-cancer data (569 rows, 30 features).

    Classes are ordered (benign, malignant) so class 1 is the minority.
    """
    from sklearn.datasets import load_breast_cancer

    raw = load_breast_cancer()
    # sklearn codes malignant=0, benign=1
    y = 1 - raw.target
    names = tuple(n.replace(" ", "_") for n in raw.feature_names)
    schema = FeatureSchema(names, class_names=("benign", "malignant"))
    return Dataset(schema, raw.data, y)


def train_test_split(data, test_fraction=0.3, seed=0):
    """Stratified (when labeled) random split into two Datasets sharing no rows."""
    rng = np.random.default_rng(seed)
    n = len(data)
    if data.y_true is None:
        perm = rng.permutation(n)
        n_test = int(round(test_fraction * n))
        test_idx = np.sort(perm[:n_test])
    else:
        picks = []
        for c in np.unique(data.y_true):
            members = np.flatnonzero(data.y_true == c)
            members = rng.permutation(members)
            picks.append(members[: int(round(test_fraction * members.size))])
        test_idx = np.sort(np.concatenate(picks))
    mask = np.zeros(n, dtype=bool)
    mask[test_idx] = True
    train = Dataset(data.schema, data.X[~mask],
                    None if data.y_true is None else data.y_true[~mask])
    test = Dataset(data.schema, data.X[mask],
                   None if data.y_true is None else data.y_true[mask])
    return train, test
