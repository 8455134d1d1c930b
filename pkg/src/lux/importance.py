"""Local feature importance: kernel-weighted Shapley estimates and file injection."""

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import (AllZeroImportance, DegenerateBackground, MissingFeature,
                     NegativeImportance, SingularSystem)

RIDGE = 1e-6


@dataclass(frozen=True, eq=False)
class ImportanceVector:
    values: np.ndarray
    scope: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValueError("importances must be a finite vector")
        if np.any(v < 0):
            raise ValueError("importances must be nonnegative")
        if not np.any(v > 0):
            raise AllZeroImportance("all importances are zero")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def __getitem__(self, i):
        return float(self.values[i])

    def __eq__(self, other):
        return (isinstance(other, ImportanceVector)
                and np.array_equal(self.values, other.values))

    def top_pair(self):
        """Indices (F1, F2) of the two features with the largest summed importance.

        F1 is the more important of the two; ties break toward lower index.
        """
        order = np.lexsort((np.arange(self.values.size), -self.values))
        return int(order[0]), int(order[1])

    def normalized(self):
        return ImportanceVector(self.values / self.values.max(), self.scope)


def shapley_kernel_weight(n, size):
    """Kernel weight of a coalition with ``size`` of ``n`` features present."""
    return (n - 1) / (comb(n, size) * size * (n - size))


def _coalitions(n, n_coalitions, rng):
    """Coalition masks and regression weights.

    All non-trivial coalitions are enumerated when they fit in the budget.
    Otherwise coalition sizes are drawn in proportion to their total kernel
    mass and members uniformly; each draw is paired with its complement and
    the sampled rows carry equal weight.
    """
    if 2 ** n - 2 <= n_coalitions:
        masks, weights = [], []
        for size in range(1, n):
            w = shapley_kernel_weight(n, size)
            for members in itertools.combinations(range(n), size):
                m = np.zeros(n, dtype=bool)
                m[list(members)] = True
                masks.append(m)
                weights.append(w)
        return np.array(masks), np.array(weights)

    sizes = np.arange(1, n)
    mass = (n - 1) / (sizes * (n - sizes))
    mass /= mass.sum()
    half = max(1, n_coalitions // 2)
    drawn = rng.choice(sizes, size=half, p=mass)
    masks = np.zeros((2 * half, n), dtype=bool)
    for i, s in enumerate(drawn):
        members = rng.choice(n, size=s, replace=False)
        masks[2 * i, members] = True
        masks[2 * i + 1] = ~masks[2 * i]
    return masks, np.full(2 * half, 1.0 / (2 * half))


def _solve(masks, weights, y, total):
    """Weighted least squares with the efficiency constraint sum(phi) = total."""
    n = masks.shape[1]
    Z = masks.astype(float)
    ZtW = Z.T * weights
    # KKT system of the ridge problem with one equality constraint; the
    # penalty touches every coefficient alike so symmetric inputs stay symmetric
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = ZtW @ Z + RIDGE * np.eye(n)
    kkt[:n, n] = 1.0
    kkt[n, :n] = 1.0
    rhs = np.append(ZtW @ y, total)
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    if not np.all(np.isfinite(sol)):
        raise SingularSystem("coalition regression is singular")
    return sol[:n]


def shapley_values(model, background, target, n_coalitions=512, seed=0, output=None):
    """Signed attributions of ``target`` for one output class.

    Features outside a coalition are replaced by background values and the
    model output is averaged over the background rows.
    """
    Xb = np.atleast_2d(np.asarray(getattr(background, "X", background), dtype=float))
    x = np.asarray(getattr(target, "values", target), dtype=float).ravel()
    n = x.size
    if Xb.shape[0] == 0:
        raise DegenerateBackground("background is empty")
    base_proba = model.predict_proba(np.vstack([x, Xb]))
    if output is None:
        output = int(np.argmax(base_proba[0]))
    fx = base_proba[0, output]
    f_empty = base_proba[1:, output].mean()
    if n == 1:
        return np.array([fx - f_empty])

    rng = np.random.default_rng(seed)
    masks, weights = _coalitions(n, n_coalitions, rng)
    nb = Xb.shape[0]
    batch = np.repeat(Xb[None, :, :], masks.shape[0], axis=0)
    batch = np.where(masks[:, None, :], x[None, None, :], batch).reshape(-1, n)
    out = model.predict_proba(batch)[:, output].reshape(masks.shape[0], nb).mean(axis=1)
    return _solve(masks, weights, out - f_empty, fx - f_empty)


def kernel_shap(model, background, targets, n_coalitions=512, seed=0):
    """Mean absolute attribution per feature, averaged over ``targets``.

    Each target is attributed for its own predicted class.
    """
    Xb = np.atleast_2d(np.asarray(getattr(background, "X", background), dtype=float))
    if Xb.shape[0] == 0:
        raise DegenerateBackground("background is empty")
    if Xb.shape[0] > 1 and np.all(Xb == Xb[0]):
        raise DegenerateBackground("all background rows are identical")
    T = np.atleast_2d(np.asarray(getattr(targets, "X", targets), dtype=float))
    n = T.shape[1]
    if n_coalitions < 2 * n:
        raise ValueError(f"n_coalitions must be at least {2 * n}")
    phi = np.zeros(n)
    for i, t in enumerate(T):
        phi += np.abs(shapley_values(model, Xb, t, n_coalitions, seed=seed + i))
    return ImportanceVector(phi / T.shape[0], scope=f"kernel_shap:{T.shape[0]} targets")


def importance_from_file(path, schema):
    """Read ``feature=value`` lines (``#`` comments allowed) in schema order."""
    found = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"expected feature=value, got {line!r}")
            found[key.strip()] = float(value)
    names = getattr(schema, "names", schema)
    values = []
    for name in names:
        if name not in found:
            raise MissingFeature(name)
        if found[name] < 0:
            raise NegativeImportance(name)
        values.append(found[name])
    return ImportanceVector(values, scope=f"file:{path}")
