"""Evaluation harness: fidelity, simplicity, consistency, stability, phantom
branches, rank statistics and synthetic data generation."""

import csv
import itertools
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .dataset import Dataset, FeatureSchema, pairwise_distances
from .errors import DegenerateTable, EmptyTest, EmptyTree, NoValidPairs

RECORD_FIELDS = ("algorithm", "dataset", "instance", "metric", "value")


def f1_score(y_true, y_pred, n_classes=None):
    """Binary F1 (positive class 1) for two classes, macro F1 otherwise.

    A class that appears in neither vector scores 1 (nothing to get wrong).
    """
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape:
        raise ValueError("label vectors differ in length")
    if n_classes is None:
        n_classes = int(max(y_true.max(initial=0), y_pred.max(initial=0))) + 1
    n_classes = max(n_classes, 2)

    def one(c):
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        if tp + fp + fn == 0:
            return 1.0
        return 2.0 * tp / (2.0 * tp + fp + fn)

    if n_classes == 2:
        return float(one(1))
    present = np.union1d(y_true, y_pred)
    return float(np.mean([one(c) for c in present]))


def _labels(preds):
    return np.array([p.label for p in preds], dtype=int)


def local_fidelity(bundle, data, model=None, on="neighborhood"):
    """F1 of tree vs black box over the neighborhood (or the factual rule's coverage).

    Returns 0 when no explanation was produced.
    """
    if bundle is None:
        return 0.0
    tree = bundle.tree
    if on == "neighborhood":
        idx = bundle.neighborhood.all_idx
        truth = _labels(bundle.neighborhood.preds)
    elif on == "coverage":
        idx = bundle.factual.coverage_idx
        if idx.size == 0:
            return 0.0
        truth = model.predict(data.X[idx])
    else:
        raise ValueError("on must be 'neighborhood' or 'coverage'")
    return f1_score(truth, tree.predict(data.X[idx]), len(tree.class_names))


def global_fidelity(tree, test, model):
    if len(test) == 0:
        raise EmptyTest("global fidelity needs test rows")
    return f1_score(model.predict(test.X), tree.predict(test.X), len(tree.class_names))


def simplicity(rule):
    """Number of distinct features in the rule's conditions."""
    return len(rule.features)


def shap_consistency(rule, imp):
    values = np.asarray(getattr(imp, "values", imp), dtype=float)
    feats = sorted(rule.features)
    return float(values[feats].mean()) if feats else 0.0


def jaccard(a, b):
    a, b = set(a), set(b)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def stability_jaccard(runs):
    """Mean pairwise Jaccard index of the factual feature sets of repeated runs.

    ``runs`` holds bundles, rules or plain feature sets.
    """
    sets = []
    for r in runs:
        r = getattr(r, "factual", r)
        sets.append(r.features if hasattr(r, "features") else frozenset(r))
    if len(sets) < 2:
        raise ValueError("stability needs at least two runs")
    return float(np.mean([jaccard(a, b) for a, b in itertools.combinations(sets, 2)]))


def lipschitz_stability(pairs, data, metric="euclidean"):
    """Mean of (rule coverage fraction) / (scaled distance) over explanation pairs.

    Coverage fraction is averaged over the two factual rules of a pair;
    pairs of identical instances are skipped.
    """
    n = len(data)
    ratios = []
    for a, b in pairs:
        d = data.distance(a.instance, b.instance, metric)
        if d <= 0:
            continue
        cov = (a.factual.coverage_idx.size + b.factual.coverage_idx.size) / (2.0 * n)
        ratios.append(cov / d)
    if not ratios:
        raise NoValidPairs("no pair of distinct instances")
    return float(np.mean(ratios))


def nearest_pairs(bundles, data, metric="euclidean"):
    """Pair every bundle with the bundle of its nearest other explained instance."""
    if len(bundles) < 2:
        return []
    X = data.scale(np.array([b.instance for b in bundles]))
    D = pairwise_distances(X, X, metric)
    np.fill_diagonal(D, np.inf)
    return [(bundles[i], bundles[int(np.argmin(D[i]))]) for i in range(len(bundles))]


def phantom_fraction(tree, test):
    """Share of leaves that no test row reaches."""
    if tree is None or not tree.leaves():
        raise EmptyTree("no tree to inspect")
    if len(test) == 0:
        raise EmptyTest("phantom fraction needs test rows")
    leaves = tree.leaves()
    hit = np.bincount(tree.apply(test.X), minlength=len(leaves))
    return float(np.mean(hit == 0))


@dataclass
class FriedmanResult:
    statistic: float
    chi2: float
    df: tuple
    p_value: float
    critical_value: float
    ranks: np.ndarray
    rank_sums: np.ndarray
    critical_distance: float
    alpha: float = 0.05

    @property
    def reject(self):
        return self.statistic > self.critical_value


def friedman_nemenyi(table, higher_is_better=True, alpha=0.05):
    """Iman-Davenport corrected Friedman test plus the Nemenyi critical distance.

    ``table`` is datasets x algorithms. Rank 1 is the best algorithm on a
    dataset; ties share the average rank.
    """
    table = np.asarray(table, dtype=float)
    if table.ndim != 2 or table.shape[0] < 2 or table.shape[1] < 2:
        raise ValueError("need at least 2 datasets and 2 algorithms")
    N, k = table.shape
    if np.all(table == table[:, :1]):
        raise DegenerateTable("every dataset ties all algorithms")
    ranks_per_row = stats.rankdata(-table if higher_is_better else table, axis=1)
    rank_sums = ranks_per_row.sum(axis=0)
    ranks = rank_sums / N
    chi2 = 12.0 * N / (k * (k + 1)) * (np.sum(ranks ** 2) - k * (k + 1) ** 2 / 4.0)
    df = (k - 1, (k - 1) * (N - 1))
    denom = N * (k - 1) - chi2
    statistic = np.inf if denom <= 0 else (N - 1) * chi2 / denom
    p_value = 0.0 if not np.isfinite(statistic) else float(stats.f.sf(statistic, *df))
    critical = float(stats.f.ppf(1 - alpha, *df))
    q = stats.studentized_range.ppf(1 - alpha, k, np.inf) / np.sqrt(2.0)
    cd = float(q * np.sqrt(k * (k + 1) / (6.0 * N)))
    return FriedmanResult(float(statistic), float(chi2), df, p_value, critical, ranks,
                          rank_sums, cd, alpha)


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = 500
    n_informative: int = 2
    n_noise: int = 0
    n_classes: int = 2
    blob_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_samples", "n_informative", "n_classes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_noise < 0 or self.blob_std <= 0:
            raise ValueError("n_noise must be >= 0 and blob_std > 0")
        if self.n_classes > 2 ** min(self.n_informative, 30):
            raise ValueError("too few informative features for that many classes")


CENTROID_SPACING = 10.0
BLOB_CLIP = 3.0


def make_synthetic(spec):
    """Gaussian blobs on distinct hypercube vertices, plus pure-noise columns.

    Centroids sit on vertices spaced ``CENTROID_SPACING * blob_std`` apart
    and deviations are clipped at ``BLOB_CLIP * blob_std``, so any two
    classes are separated along some axis by at least 4 * blob_std.
    """
    rng = np.random.default_rng(spec.seed)
    d, C = spec.n_informative, spec.n_classes
    vertices = set()
    while len(vertices) < C:
        vertices.add(tuple(rng.integers(0, 2, size=d)))
    centroids = np.array(sorted(vertices), dtype=float) * CENTROID_SPACING * spec.blob_std
    centroids = centroids[rng.permutation(C)]
    y = rng.permutation(np.arange(spec.n_samples) % C)
    dev = np.clip(rng.normal(0.0, spec.blob_std, size=(spec.n_samples, d)),
                  -BLOB_CLIP * spec.blob_std, BLOB_CLIP * spec.blob_std)
    informative = centroids[y] + dev
    noise = rng.normal(0.0, 1.0, size=(spec.n_samples, spec.n_noise))
    X = np.hstack([informative, noise])
    names = tuple(f"x{i + 1}" for i in range(d)) + tuple(
        f"noise{i + 1}" for i in range(spec.n_noise))
    schema = FeatureSchema(names, class_names=tuple(str(c) for c in range(C)))
    return Dataset(schema, X, y)


@dataclass
class EvalRun:
    """Per-instance metric records for one dataset and algorithm."""

    dataset: str
    algorithm: str = "lux"
    records: list = field(default_factory=list)

    def add(self, instance, metric, value):
        self.records.append({"algorithm": self.algorithm, "dataset": self.dataset,
                             "instance": int(instance), "metric": metric,
                             "value": float(value)})

    def values(self, metric):
        return np.array([r["value"] for r in self.records if r["metric"] == metric])

    def metrics(self):
        return list(dict.fromkeys(r["metric"] for r in self.records))

    def aggregate(self):
        """metric -> (mean, population std, count)."""
        out = {}
        for m in self.metrics():
            v = self.values(m)
            out[m] = (float(v.mean()), float(v.std()), int(v.size))
        return out


def write_records(runs, path, header_lines=()):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.DictWriter(fh, fieldnames=RECORD_FIELDS, lineterminator="\n")
        w.writeheader()
        for run in runs:
            for rec in run.records:
                w.writerow({**rec, "value": repr(rec["value"])})


def read_records(path):
    """Read a per-instance record CSV back into EvalRuns keyed by (algorithm, dataset)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))
    runs = {}
    for r in rows:
        key = (r.get("algorithm") or "lux", r["dataset"])
        run = runs.setdefault(key, EvalRun(key[1], key[0]))
        run.add(int(r["instance"]), r["metric"], float(r["value"]))
    return list(runs.values())


def write_summary(runs, path, header_lines=()):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "dataset", "metric", "mean", "std", "n"])
        for run in runs:
            for m, (mean, std, n) in run.aggregate().items():
                w.writerow([run.algorithm, run.dataset, m, f"{mean:.6f}", f"{std:.6f}", n])


def score_table(runs, metric):
    """Datasets x algorithms table of per-dataset means for ``metric``."""
    datasets = sorted({r.dataset for r in runs})
    algorithms = sorted({r.algorithm for r in runs})
    table = np.full((len(datasets), len(algorithms)), np.nan)
    for r in runs:
        v = r.values(metric)
        if v.size:
            table[datasets.index(r.dataset), algorithms.index(r.algorithm)] = v.mean()
    return table, datasets, algorithms


# -- harness -----------------------------------------------------------------

def _explain_shard(args):
    """Worker body: explain a shard of instances and collect metric records."""
    (name, train, test, model, params, items, runs, same_seed) = args
    from .explain import Explainer

    explainer = Explainer(train, model, params)
    run = EvalRun(name)
    bundles = []
    for inst, x, seed in items:
        t0 = time.perf_counter()
        try:
            bundle = explainer.explain(x, seed=seed)
        except Exception:  # an abstaining explainer scores zero fidelity
            run.add(inst, "local_fidelity", 0.0)
            continue
        run.add(inst, "runtime", time.perf_counter() - t0)
        run.add(inst, "local_fidelity", local_fidelity(bundle, train))
        run.add(inst, "coverage_fidelity", local_fidelity(bundle, train, model, on="coverage"))
        run.add(inst, "simplicity", simplicity(bundle.factual))
        run.add(inst, "rule_length", len(bundle.factual))
        run.add(inst, "shap_consistency", shap_consistency(bundle.factual, bundle.importances))
        run.add(inst, "global_fidelity", global_fidelity(bundle.tree, test, model))
        run.add(inst, "phantom_fraction", phantom_fraction(bundle.tree, test))
        run.add(inst, "tree_depth", bundle.tree.depth)
        run.add(inst, "n_synthetic", bundle.augmented.n_synthetic)
        if runs > 1:
            repeats = [bundle] + [explainer.explain(x, seed=seed if same_seed else seed + r)
                                  for r in range(1, runs)]
            run.add(inst, "stability_jaccard", stability_jaccard(repeats))
        bundles.append(bundle)
    return run, bundles


def evaluate(name, train, test, model, params=None, n_instances=100, seed=0, runs=1,
             same_seed=True, jobs=1, lipschitz=True):
    """Explain ``n_instances`` random test rows and record every metric.

    Instances are sampled with ``seed``; explanation ``i`` uses seed
    ``seed + i`` so shards are independent of how work is split.
    """
    rng = np.random.default_rng(seed)
    n = min(n_instances, len(test))
    picks = np.sort(rng.choice(len(test), size=n, replace=False))
    items = [(int(i), test.X[i], seed + j) for j, i in enumerate(picks)]
    jobs = max(1, min(jobs or os.cpu_count() or 1, len(items)))
    shards = [items[s::jobs] for s in range(jobs)]
    payload = [(name, train, test, model, params, shard, runs, same_seed) for shard in shards]
    if jobs == 1:
        results = [_explain_shard(payload[0])]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_explain_shard, payload))

    run = EvalRun(name)
    bundles = []
    for part, part_bundles in results:
        run.records.extend(part.records)
        bundles.extend(part_bundles)
    run.records.sort(key=lambda r: (r["instance"], r["metric"]))
    if lipschitz:
        # abstained instances have no bundle, so keep ids attached to bundles
        by_instance = {tuple(b.instance): b for b in bundles}
        kept = [(int(i), by_instance[tuple(test.X[i])]) for i in picks
                if tuple(test.X[i]) in by_instance]
        ordered = [b for _, b in kept]
        for (a, b), (inst, _) in zip(nearest_pairs(ordered, train), kept):
            try:
                run.add(inst, "lipschitz_stability", lipschitz_stability([(a, b)], train))
            except NoValidPairs:
                pass
    return run


def synthetic_sweep(dims, n_samples=500, n_instances=100, seed=0, n_noise=0, n_informative=None,
                    n_classes=2, params=None, knn_k=5, test_fraction=0.3, runs=1,
                    same_seed=True, jobs=1):
    """Evaluate over synthetic datasets of increasing dimensionality.

    With ``n_informative`` unset every dimension is informative; otherwise
    dimensions beyond ``n_informative`` are noise.
    """
    from .blackbox import knn_model
    from .dataset import train_test_split

    out = []
    for dim in dims:
        inf = dim if n_informative is None else n_informative
        spec = SyntheticSpec(n_samples, inf, max(dim - inf, 0) + n_noise, n_classes,
                             seed=seed + dim)
        data = make_synthetic(spec)
        train, test = train_test_split(data, test_fraction, seed=seed)
        model = knn_model(train, knn_k)
        out.append(evaluate(f"synthetic-{dim}", train, test, model, params, n_instances,
                            seed, runs, same_seed, jobs, lipschitz=False))
    return out
