"""Command-line entry point: ``lux explain``, ``lux benchmark`` and ``lux synth``.

Exit status is 0 on success, 1 for configuration errors (bad flags, unreadable
config, missing files or columns) and 2 when the pipeline itself fails.
Settings resolve as: command-line flag, then ``--config`` file, then the
``LUX_SEED`` environment variable (seed only), then built-in defaults.
Every written file starts with a provenance block listing the resolved
settings and the package version.
"""

import argparse
import csv
import os
import sys

import numpy as np

from . import __version__
from .errors import LuxError, MissingColumn

EXIT_OK, EXIT_CONFIG, EXIT_PIPELINE = 0, 1, 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.format_usage()}{self.prog}: error: {message}")


EXPLAIN_DEFAULTS = {
    "label_column": "label", "model": "knn:k=5", "k": 40, "sigma": 5,
    "stratification": "global", "metric": "euclidean", "max_depth": 5,
    "min_samples_split": 5, "min_gain": 1e-4, "oblique": True,
    "confidence_weighting": True, "oversample": True, "counterfactual": "nearest_neighbor",
    "n_coalitions": 512, "seed": 0,
}
BENCH_DEFAULTS = {
    **EXPLAIN_DEFAULTS, "n_instances": 100, "runs": 1, "same_instance": False,
    "test_fraction": 0.3, "n_samples": 500, "noise": 0, "jobs": 0,
    "score_metric": "local_fidelity", "timing": False,
}
SYNTH_DEFAULTS = {"dims": 2, "noise": 0, "n": 500, "seed": 0, "classes": 2, "blob_std": 1.0}

_BOOL = {"true": True, "on": True, "yes": True, "1": True,
         "false": False, "off": False, "no": False, "0": False}


def _pipeline_flags(p):
    p.add_argument("--config", help="flat key=value settings file")
    p.add_argument("--label-column")
    p.add_argument("--model", help="knn:k=INT or cmd:COMMAND")
    p.add_argument("--k", type=int, help="base neighborhood size K")
    p.add_argument("--sigma", type=int, help="minimum density cluster size")
    p.add_argument("--stratification", choices=("local", "global"))
    p.add_argument("--metric", choices=("euclidean", "manhattan"))
    p.add_argument("--max-depth", type=int)
    p.add_argument("--min-samples-split", type=int)
    p.add_argument("--min-gain", type=float)
    p.add_argument("--oblique", action=argparse.BooleanOptionalAction)
    p.add_argument("--confidence-weighting", action=argparse.BooleanOptionalAction)
    p.add_argument("--oversample", action=argparse.BooleanOptionalAction)
    p.add_argument("--counterfactual", choices=("nearest_neighbor", "medoid"))
    p.add_argument("--n-coalitions", type=int)
    p.add_argument("--seed", type=int)


def build_parser():
    parser = _Parser(prog="lux", description="Local rule-based explanations for tabular classifiers.")
    parser.add_argument("--version", action="version", version=f"lux {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    ex = sub.add_parser("explain", help="explain one instance")
    ex.add_argument("--data", help="CSV with a header row")
    target = ex.add_mutually_exclusive_group()
    target.add_argument("--instance", type=int, help="0-based data row to explain")
    target.add_argument("--values", help="comma-separated feature values to explain")
    _pipeline_flags(ex)
    ex.add_argument("--bundle", help="write the full explanation document here")
    ex.add_argument("--tree-dot", help="write the tree as Graphviz DOT")
    ex.add_argument("--tree-svg", help="write the tree as SVG")
    ex.add_argument("--dump-neighborhood", help="write neighborhood rows and roles as CSV")
    ex.add_argument("--importances", help="feature=value file replacing the Shapley estimate")
    ex.set_defaults(usage=ex.format_usage())

    bm = sub.add_parser("benchmark", help="run the evaluation suite")
    bm.add_argument("--data", action="append", default=[],
                    help="dataset CSV (repeatable); 'cancer' selects the built-in set")
    bm.add_argument("--synthetic", help="synthetic dims, e.g. 2-15 or 2,4,8")
    bm.add_argument("--n-samples", type=int)
    bm.add_argument("--noise", type=int, help="extra noise columns per synthetic set")
    bm.add_argument("--n-instances", type=int)
    bm.add_argument("--runs", type=int)
    bm.add_argument("--same-instance", action=argparse.BooleanOptionalAction,
                    help="repeat runs with the same seed instead of varying it")
    bm.add_argument("--test-fraction", type=float)
    bm.add_argument("--jobs", type=int, help="worker processes (0 = all cores)")
    bm.add_argument("--scores", action="append", default=[],
                    help="external per-instance score CSV (repeatable)")
    bm.add_argument("--score-metric", help="metric compared in the rank report")
    bm.add_argument("--timing", action=argparse.BooleanOptionalAction,
                    help="keep wall-clock runtime records (makes output non-reproducible)")
    _pipeline_flags(bm)
    bm.add_argument("--records", help="per-instance CSV output")
    bm.add_argument("--summary", help="summary CSV output")
    bm.add_argument("--report", help="Friedman/Nemenyi text report output")

    sy = sub.add_parser("synth", help="generate a synthetic dataset")
    sy.add_argument("--config")
    sy.add_argument("--dims", type=int, help="informative features")
    sy.add_argument("--noise", type=int, help="pure-noise features")
    sy.add_argument("--n", type=int, help="rows")
    sy.add_argument("--classes", type=int)
    sy.add_argument("--blob-std", type=float)
    sy.add_argument("--seed", type=int)
    sy.add_argument("--output", help="CSV path (standard output when omitted)")
    return parser


def read_config(path):
    """Parse a flat ``key=value`` file; ``#`` starts a comment line."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for n, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise ConfigError(f"{path}:{n}: expected key=value")
                out[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return out


def _coerce(key, raw, default):
    if isinstance(default, bool):
        if raw.lower() not in _BOOL:
            raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
        return _BOOL[raw.lower()]
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    return raw


def resolve(args, defaults):
    """Merge flags over config file over environment over defaults."""
    from_file = read_config(args.config) if getattr(args, "config", None) else {}
    unknown = sorted(set(from_file) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = dict(defaults)
    env_seed = os.environ.get("LUX_SEED")
    if env_seed is not None and "seed" in cfg:
        cfg["seed"] = _coerce("LUX_SEED", env_seed, 0)
    for key, raw in from_file.items():
        cfg[key] = _coerce(key, raw, defaults[key])
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def provenance(command, cfg, extra=()):
    lines = [f"lux {__version__}", f"command {command}"]
    lines += list(extra)
    lines += [f"{k}={cfg[k]}" for k in sorted(cfg)]
    return lines


def parse_model_spec(spec):
    kind, sep, rest = spec.partition(":")
    if kind == "knn" and sep:
        key, eq, value = rest.partition("=")
        if key != "k" or not eq:
            raise ConfigError(f"bad model spec {spec!r}; expected knn:k=INT")
        try:
            k = int(value)
        except ValueError:
            raise ConfigError(f"bad model spec {spec!r}; k must be an integer") from None
        if k < 1:
            raise ConfigError("knn k must be positive")
        return "knn", k
    if kind == "cmd" and sep and rest.strip():
        return "cmd", rest.strip()
    raise ConfigError(f"bad model spec {spec!r}; expected knn:k=INT or cmd:COMMAND")


def make_model(spec, train):
    from .blackbox import knn_model, subprocess_model

    kind, arg = parse_model_spec(spec)
    if kind == "knn":
        return knn_model(train, arg)
    return subprocess_model(arg)


def explain_params(cfg):
    from .explain import ExplainParams
    from .neighborhood import NeighborhoodParams
    from .tree import TreeParams

    try:
        return ExplainParams(
            neighborhood=NeighborhoodParams(cfg["k"], cfg["sigma"], cfg["stratification"],
                                            cfg["metric"]),
            tree=TreeParams(max_depth=cfg["max_depth"],
                            min_samples_split=cfg["min_samples_split"],
                            min_gain=cfg["min_gain"], oblique_enabled=cfg["oblique"],
                            confidence_weighting=cfg["confidence_weighting"]),
            oversample=cfg["oversample"], counterfactual=cfg["counterfactual"],
            n_coalitions=cfg["n_coalitions"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _load(path, label_column):
    from .dataset import load_csv

    if not os.path.exists(path):
        raise ConfigError(f"no such data file: {path}")
    try:
        return load_csv(path, label_column)
    except MissingColumn as exc:
        raise ConfigError(f"{path}: label column {exc} not found") from None


def _header(lines, prefix):
    return "".join(f"{prefix}{ln}\n" for ln in lines)


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def bundle_document(bundle, header):
    from .explain import render_rule

    out = [_header(header, "# "), "[factual]\n", render_rule(bundle.factual), "\n",
           "[counterfactuals]\n"]
    for cf in bundle.counterfactuals:
        example = ",".join(repr(float(v)) for v in cf.example)
        out.append(f"{render_rule(cf.rule)} | kind={cf.kind} | row={cf.row} | "
                   f"distance={cf.distance!r} | example={example}\n")
    out += ["[tree]\n", bundle.tree.serialize(), "[bundle]\n", bundle.to_json(), "\n"]
    return "".join(out)


def neighborhood_rows(bundle, data):
    """(index, role, synthetic, values, label) for every row the tree saw."""
    roles = dict(bundle.neighborhood.roles())
    rows = []
    for i in bundle.augmented.real_idx:
        rows.append((int(i), roles.get(int(i), ""), False, data.X[i]))
    for j, x in enumerate(bundle.augmented.synth_X):
        rows.append((-1, "synthetic", True, x))
    return rows


def cmd_explain(args):
    from .explain import Explainer, render_rule
    from .importance import importance_from_file
    from .viz import VizSpec, to_dot, to_svg

    if not args.data:
        raise ConfigError(f"{args.usage}lux explain: error: --data is required")
    if args.instance is None and args.values is None:
        raise ConfigError("one of --instance or --values is required")
    cfg = resolve(args, EXPLAIN_DEFAULTS)
    params = explain_params(cfg)
    data = _load(args.data, cfg["label_column"])
    if args.instance is not None:
        if not 0 <= args.instance < len(data):
            raise ConfigError(f"--instance {args.instance} is outside 0..{len(data) - 1}")
        x = data.X[args.instance]
    else:
        try:
            x = np.array([float(v) for v in args.values.split(",")])
        except ValueError:
            raise ConfigError(f"--values must be numbers: {args.values!r}") from None
        if x.size != data.n_features:
            raise ConfigError(f"--values has {x.size} entries, data has {data.n_features} features")

    model = make_model(cfg["model"], data)
    try:
        imp = importance_from_file(args.importances, data.schema) if args.importances else None
        bundle = Explainer(data, model, params).explain(x, seed=cfg["seed"], importances=imp)
    finally:
        close = getattr(model, "close", None)
        if close:
            close()

    target = f"instance row {args.instance}" if args.instance is not None else f"values {args.values}"
    header = provenance("explain", {**cfg, "data": args.data}, [target])
    print(render_rule(bundle.factual))
    for cf in bundle.counterfactuals:
        print(f"counterfactual: {render_rule(cf.rule)} (row {cf.row})")
    if args.bundle:
        _write(args.bundle, bundle_document(bundle, header))
    if args.tree_dot or args.tree_svg:
        spec = VizSpec.from_bundle(bundle)
        if args.tree_dot:
            _write(args.tree_dot, _header(header, "// ") + to_dot(spec))
        if args.tree_svg:
            svg = to_svg(spec)
            head, rest = svg.split("\n", 1)
            comment = "<!--\n" + _header([ln.replace("--", "- -") for ln in header], "  ") + "-->\n"
            _write(args.tree_svg, head + "\n" + comment + rest)
    if args.dump_neighborhood:
        with open(args.dump_neighborhood, "w", newline="", encoding="utf-8") as fh:
            fh.write(_header(header, "# "))
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "role", "synthetic", *data.schema.names])
            for idx, role, synth, values in neighborhood_rows(bundle, data):
                w.writerow([idx, role, "true" if synth else "false",
                            *(repr(float(v)) for v in values)])
    return EXIT_OK


def parse_dims(text):
    dims = []
    try:
        for part in text.split(","):
            lo, sep, hi = part.partition("-")
            dims.extend(range(int(lo), int(hi) + 1) if sep else [int(lo)])
    except ValueError:
        raise ConfigError(f"bad --synthetic value {text!r}") from None
    if not dims or min(dims) < 1:
        raise ConfigError("synthetic dims must be positive")
    return dims


def cmd_benchmark(args):
    from .dataset import breast_cancer, train_test_split
    from .metrics import (SyntheticSpec, evaluate, friedman_nemenyi, make_synthetic,
                          read_records, score_table, write_records, write_summary)

    cfg = resolve(args, BENCH_DEFAULTS)
    params = explain_params(cfg)
    if not args.data and not args.synthetic and not args.scores:
        raise ConfigError("nothing to do: give --data, --synthetic or --scores")
    for key in ("n_instances", "runs", "n_samples"):
        if cfg[key] < 1:
            raise ConfigError(f"{key} must be positive")
    if not 0 < cfg["test_fraction"] < 1:
        raise ConfigError("test_fraction must be in (0, 1)")

    datasets = []
    for path in args.data:
        data = breast_cancer() if path == "cancer" else _load(path, cfg["label_column"])
        name = path if path == "cancer" else os.path.splitext(os.path.basename(path))[0]
        datasets.append((name, data))
    for dim in parse_dims(args.synthetic) if args.synthetic else []:
        spec = SyntheticSpec(cfg["n_samples"], dim, cfg["noise"], seed=cfg["seed"] + dim)
        datasets.append((f"synthetic-{dim}", make_synthetic(spec)))

    runs = []
    for name, data in datasets:
        train, test = train_test_split(data, cfg["test_fraction"], seed=cfg["seed"])
        model = make_model(cfg["model"], train)
        try:
            run = evaluate(name, train, test, model, params, cfg["n_instances"], cfg["seed"],
                           cfg["runs"], cfg["same_instance"], cfg["jobs"] or None,
                           lipschitz=not name.startswith("synthetic"))
        finally:
            close = getattr(model, "close", None)
            if close:
                close()
        if not cfg["timing"]:
            run.records = [r for r in run.records if r["metric"] != "runtime"]
        runs.append(run)
        mean = run.aggregate()
        shown = ", ".join(f"{m}={mean[m][0]:.3f}" for m in
                          ("local_fidelity", "global_fidelity", "phantom_fraction",
                           "stability_jaccard") if m in mean)
        print(f"{name}: {shown}")

    header = provenance("benchmark", cfg, [f"datasets {' '.join(n for n, _ in datasets)}"])
    if args.records:
        write_records(runs, args.records, header)
    if args.summary:
        write_summary(runs, args.summary, header)

    external = []
    for path in args.scores:
        if not os.path.exists(path):
            raise ConfigError(f"no such score file: {path}")
        external.extend(read_records(path))
    if external:
        table, datasets_, algorithms = score_table(runs + external, cfg["score_metric"])
        keep = ~np.isnan(table).any(axis=1)
        result = friedman_nemenyi(table[keep])
        lines = [f"metric {cfg['score_metric']}",
                 f"datasets {int(keep.sum())} algorithms {len(algorithms)}",
                 f"friedman_chi2 {result.chi2:.6f}",
                 f"iman_davenport_F {result.statistic:.6f}",
                 f"df {result.df[0]} {result.df[1]}",
                 f"critical_value {result.critical_value:.4f}",
                 f"p_value {result.p_value:.6g}",
                 f"reject_null {'yes' if result.reject else 'no'}",
                 f"nemenyi_cd {result.critical_distance:.6f}",
                 "mean_ranks " + " ".join(f"{a}={r:.4f}" for a, r in zip(algorithms, result.ranks))]
        text = "\n".join(lines) + "\n"
        print(text, end="")
        if args.report:
            _write(args.report, _header(header, "# ") + text)
    return EXIT_OK


def cmd_synth(args):
    from .dataset import write_csv
    from .metrics import SyntheticSpec, make_synthetic

    cfg = resolve(args, SYNTH_DEFAULTS)
    try:
        spec = SyntheticSpec(cfg["n"], cfg["dims"], cfg["noise"], cfg["classes"],
                             cfg["blob_std"], cfg["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    data = make_synthetic(spec)
    write_csv(data, args.output or sys.stdout, header_lines=provenance("synth", cfg))
    return EXIT_OK


COMMANDS = {"explain": cmd_explain, "benchmark": cmd_benchmark, "synth": cmd_synth}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise ConfigError(parser.format_usage() + "lux: error: a command is required")
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except (LuxError, ValueError, ArithmeticError, OSError) as exc:
        print(f"lux: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
