"""Static renderings of an explanation tree: Graphviz DOT and standalone SVG.

Every node shows the data that reached it. Axis splits get a per-class
histogram of the split feature with the threshold marked. Oblique splits
get a two-feature grid (DOT) or scatter (SVG) with the boundary line.
The explained instance's path is drawn bold and the counterfactual's dashed.
"""

import html
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingSnapshot

# Okabe-Ito colorblind-safe palette
PALETTE = ("#E69F00", "#56B4E9", "#009E73", "#F0E442",
           "#0072B2", "#D55E00", "#CC79A7", "#000000")
INSTANCE_COLOR = "#D55E00"


def class_color(c):
    return PALETTE[c % len(PALETTE)]


@dataclass
class VizSpec:
    tree: object
    instance: np.ndarray
    counterfactual: np.ndarray = None
    bins: int = 20
    factual_path: list = field(init=False, repr=False)
    counterfactual_path: list = field(init=False, repr=False)

    def __post_init__(self):
        if self.bins < 1:
            raise ValueError("bins must be positive")
        self.instance = np.asarray(self.instance, dtype=float).ravel()
        self.factual_path = _node_path(self.tree, self.instance)
        if self.counterfactual is not None:
            self.counterfactual = np.asarray(self.counterfactual, dtype=float).ravel()
            self.counterfactual_path = _node_path(self.tree, self.counterfactual)
        else:
            self.counterfactual_path = []

    @classmethod
    def from_bundle(cls, bundle, bins=20):
        cf = bundle.counterfactuals[0].example if bundle.counterfactuals else None
        return cls(bundle.tree, bundle.instance, cf, bins)


def _node_path(tree, x):
    steps, leaf = tree.path(x)
    return [node for node, _ in steps] + [leaf]


def _check_snapshots(tree):
    if getattr(tree, "sample", None) is None:
        raise MissingSnapshot("tree carries no training sample")
    for node in tree.root.iter_nodes():
        if node.data_snapshot is None:
            raise MissingSnapshot(f"node at depth {node.depth} has no data snapshot")


def _number_nodes(tree):
    return {id(node): i for i, node in enumerate(tree.root.iter_nodes())}


def _edge_sets(spec, ids):
    def edges(path):
        return {(ids[id(a)], ids[id(b)]) for a, b in zip(path, path[1:])}
    return edges(spec.factual_path), edges(spec.counterfactual_path)


def _bin_counts(values, labels, lo, hi, bins, n_classes):
    span = hi - lo if hi > lo else 1.0
    pos = np.clip(((values - lo) / span * bins).astype(int), 0, bins - 1)
    counts = np.zeros((bins, n_classes), dtype=int)
    np.add.at(counts, (pos, labels), 1)
    return counts


def _axis_range(values, *extra):
    pts = np.concatenate([np.asarray(values, dtype=float).ravel(),
                          np.asarray([e for e in extra if e is not None], dtype=float)])
    lo, hi = float(pts.min()), float(pts.max())
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


# ---------------------------------------------------------------- DOT

LEVELS = 6


def _q(s):
    return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'


def _class_table(node, tree):
    total = node.class_hist.sum()
    rows = []
    for c, mass in enumerate(node.class_hist):
        share = mass / total if total > 0 else 0.0
        filled = int(round(share * 10))
        cells = "".join(
            f'<TD WIDTH="6" BGCOLOR="{class_color(c) if i < filled else "#FFFFFF"}"></TD>'
            for i in range(10))
        name = html.escape(tree.class_names[c])
        rows.append(f'<TR><TD ALIGN="LEFT">{name}</TD>{cells}<TD>{mass:.2f}</TD></TR>')
    return '<TABLE BORDER="0" CELLSPACING="0" CELLBORDER="0">' + "".join(rows) + "</TABLE>"


def _axis_histogram(node, tree, spec):
    split = node.split
    rows = node.data_snapshot
    values = tree.sample.X[rows, split.feature]
    labels = tree.sample.labels[rows]
    lo, hi = _axis_range(values, split.threshold)
    counts = _bin_counts(values, labels, lo, hi, spec.bins, len(tree.class_names))
    height = counts.sum(axis=1)
    scale = LEVELS / max(1, height.max())
    marker = int(np.clip((split.threshold - lo) / (hi - lo) * spec.bins, 0, spec.bins))

    table = []
    for level in range(LEVELS, 0, -1):
        cells = []
        for b in range(spec.bins):
            if b == marker:
                cells.append('<TD WIDTH="1" BGCOLOR="#000000"></TD>')
            stack = np.cumsum(counts[b]) * scale
            color = "#FFFFFF"
            for c in range(counts.shape[1]):
                if counts[b, c] and stack[c] >= level - 0.5:
                    color = class_color(c)
                    break
            cells.append(f'<TD WIDTH="6" HEIGHT="6" BGCOLOR="{color}"></TD>')
        if marker == spec.bins:
            cells.append('<TD WIDTH="1" BGCOLOR="#000000"></TD>')
        table.append("<TR>" + "".join(cells) + "</TR>")
    span = spec.bins + 1
    axis = (f'<TR><TD COLSPAN="{span}"><FONT POINT-SIZE="8">{lo:.2f} .. '
            f'{html.escape(tree.feature_names[split.feature])} .. {hi:.2f}'
            f' | split {split.threshold:.2f}</FONT></TD></TR>')
    return ('<TABLE BORDER="0" CELLSPACING="0" CELLPADDING="0">'
            + "".join(table) + axis + "</TABLE>")


def _oblique_grid(node, tree, spec, size=10):
    split = node.split
    rows = node.data_snapshot
    f1, f2 = split.feature, split.partner
    ys = tree.sample.X[rows, f1]
    xs = tree.sample.X[rows, f2]
    labels = tree.sample.labels[rows]
    on_path = any(n is node for n in spec.factual_path)
    inst = spec.instance if on_path else None
    x_lo, x_hi = _axis_range(xs, None if inst is None else inst[f2])
    y_lo, y_hi = _axis_range(ys, None if inst is None else inst[f1])
    n_classes = len(tree.class_names)

    def cell_of(v, lo, hi):
        return int(np.clip((v - lo) / (hi - lo) * size, 0, size - 1))

    votes = np.zeros((size, size, n_classes), dtype=int)
    for x, y, c in zip(xs, ys, labels):
        votes[cell_of(y, y_lo, y_hi), cell_of(x, x_lo, x_hi), c] += 1
    line = np.zeros((size, size), dtype=bool)
    for col in range(size):
        xc = x_lo + (col + 0.5) / size * (x_hi - x_lo)
        yc = split.alpha * xc + split.beta
        if y_lo <= yc <= y_hi:
            line[cell_of(yc, y_lo, y_hi), col] = True
    mark = None if inst is None else (cell_of(inst[f1], y_lo, y_hi), cell_of(inst[f2], x_lo, x_hi))

    table = []
    for r in range(size - 1, -1, -1):
        cells = []
        for col in range(size):
            color = "#FFFFFF"
            if votes[r, col].sum():
                color = class_color(int(np.argmax(votes[r, col])))
            if line[r, col]:
                color = "#000000"
            text = ""
            if mark == (r, col):
                text = f'<FONT COLOR="{INSTANCE_COLOR}">&#9679;</FONT>'
            cells.append(f'<TD WIDTH="8" HEIGHT="8" BGCOLOR="{color}">{text}</TD>')
        table.append("<TR>" + "".join(cells) + "</TR>")
    names = tree.feature_names
    axis = (f'<TR><TD COLSPAN="{size}"><FONT POINT-SIZE="8">'
            f'{html.escape(names[f2])} &#8594; / {html.escape(names[f1])} &#8593;'
            f'</FONT></TD></TR>')
    return ('<TABLE BORDER="0" CELLSPACING="0" CELLPADDING="0">'
            + "".join(table) + axis + "</TABLE>")


def _dot_label(node, tree, spec):
    parts = []
    if node.is_leaf:
        head = f"class = {tree.class_names[node.majority]} ({node.leaf_confidence:.2f})"
    else:
        head = node.split.describe(tree.feature_names, digits=2)
    parts.append(f"<TR><TD><B>{html.escape(head)}</B></TD></TR>")
    parts.append(f'<TR><TD><FONT POINT-SIZE="8">n = {node.n_rows}</FONT></TD></TR>')
    if not node.is_leaf:
        body = (_axis_histogram(node, tree, spec) if node.split.kind == "axis"
                else _oblique_grid(node, tree, spec))
        parts.append(f"<TR><TD>{body}</TD></TR>")
    parts.append(f"<TR><TD>{_class_table(node, tree)}</TD></TR>")
    return '<<TABLE BORDER="1" CELLBORDER="0" CELLSPACING="2">' + "".join(parts) + "</TABLE>>"


def _dot_attrs(node, tree):
    attrs = {"lux_n": str(node.n_rows),
             "lux_hist": ",".join(repr(float(v)) for v in node.class_hist)}
    if node.is_leaf:
        attrs["lux_kind"] = "leaf"
        attrs["lux_class"] = tree.class_names[node.majority]
    else:
        s = node.split
        attrs["lux_kind"] = s.kind
        attrs["lux_feature"] = tree.feature_names[s.feature]
        if s.kind == "axis":
            attrs["lux_threshold"] = repr(s.threshold)
        else:
            attrs["lux_partner"] = tree.feature_names[s.partner]
            attrs["lux_alpha"] = repr(s.alpha)
            attrs["lux_beta"] = repr(s.beta)
    return attrs


def to_dot(spec):
    """Graphviz DOT text with HTML-like node labels.

    Exact split values are attached as ``lux_*`` node attributes so tools
    can read them back without parsing the label.
    """
    tree = spec.tree
    _check_snapshots(tree)
    ids = _number_nodes(tree)
    factual, counter = _edge_sets(spec, ids)
    on_path = {ids[id(n)] for n in spec.factual_path}

    out = ["digraph explanation {",
           '  node [shape=plaintext, fontname="Helvetica"];',
           '  edge [fontname="Helvetica", fontsize=10];']
    for node in tree.root.iter_nodes():
        i = ids[id(node)]
        attrs = _dot_attrs(node, tree)
        if i in on_path:
            attrs["lux_instance_path"] = "true"
        extra = "".join(f", {k}={_q(v)}" for k, v in attrs.items())
        out.append(f"  n{i} [label={_dot_label(node, tree, spec)}{extra}];")
    for node in tree.root.iter_nodes():
        if node.is_leaf:
            continue
        for child, left in ((node.left, True), (node.right, False)):
            a, b = ids[id(node)], ids[id(child)]
            styles = []
            if (a, b) in factual:
                styles.append("bold")
            if (a, b) in counter:
                styles.append("dashed")
            cond = node.split.describe(tree.feature_names, left=left, digits=2)
            style = f", style={_q(','.join(styles))}" if styles else ""
            out.append(f"  n{a} -> n{b} [label={_q(cond)}{style}];")
    out.append("}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- SVG

PANEL_W, PANEL_H = 180, 120
GAP_X, GAP_Y = 24, 56
MARGIN = 20
TITLE_H = 28
LEGEND_H = 24


def _f(v):
    return f"{v:.2f}"


def _esc(s):
    return html.escape(str(s), quote=True)


def _layout(tree):
    """Top-left corner of every node panel: leaves side by side, parents centered."""
    pos = {}
    slot = [0]

    def place(node):
        if node.is_leaf:
            x = MARGIN + slot[0] * (PANEL_W + GAP_X)
            slot[0] += 1
        else:
            place(node.left)
            place(node.right)
            x = (pos[id(node.left)][0] + pos[id(node.right)][0]) / 2.0
        y = MARGIN + LEGEND_H + node.depth * (PANEL_H + TITLE_H + GAP_Y)
        pos[id(node)] = (x, y)

    place(tree.root)
    return pos, slot[0]


def _svg_histogram(node, tree, spec, x0, y0, on_path):
    split = node.split
    rows = node.data_snapshot
    values = tree.sample.X[rows, split.feature]
    labels = tree.sample.labels[rows]
    inst = spec.instance[split.feature] if on_path else None
    lo, hi = _axis_range(values, split.threshold, inst)
    counts = _bin_counts(values, labels, lo, hi, spec.bins, len(tree.class_names))
    top = max(1, counts.sum(axis=1).max())
    plot_h = PANEL_H - 30
    bw = (PANEL_W - 20) / spec.bins
    base = y0 + 10 + plot_h
    out = []
    for b in range(spec.bins):
        y = base
        for c in range(counts.shape[1]):
            if counts[b, c] == 0:
                continue
            h = counts[b, c] / top * plot_h
            y -= h
            out.append(f'<rect x="{_f(x0 + 10 + b * bw)}" y="{_f(y)}" width="{_f(bw)}" '
                       f'height="{_f(h)}" fill="{class_color(c)}"/>')

    def sx(v):
        return x0 + 10 + (v - lo) / (hi - lo) * (PANEL_W - 20)

    out.append(f'<line class="split" x1="{_f(sx(split.threshold))}" y1="{_f(y0 + 6)}" '
               f'x2="{_f(sx(split.threshold))}" y2="{_f(base)}" stroke="#000000" '
               f'stroke-width="1.5" data-threshold="{split.threshold!r}"/>')
    out.append(f'<text x="{_f(x0 + 10)}" y="{_f(base + 14)}" font-size="9">{_f(lo)}</text>')
    out.append(f'<text x="{_f(x0 + PANEL_W - 10)}" y="{_f(base + 14)}" font-size="9" '
               f'text-anchor="end">{_f(hi)}</text>')
    if inst is not None:
        out.append(f'<circle class="instance" cx="{_f(sx(inst))}" cy="{_f(base + 4)}" r="4" '
                   f'fill="{INSTANCE_COLOR}" stroke="#000000"/>')
    return out


def _svg_scatter(node, tree, spec, x0, y0, on_path):
    split = node.split
    rows = node.data_snapshot
    f1, f2 = split.feature, split.partner
    ys = tree.sample.X[rows, f1]
    xs = tree.sample.X[rows, f2]
    labels = tree.sample.labels[rows]
    inst = spec.instance if on_path else None
    x_lo, x_hi = _axis_range(xs, None if inst is None else inst[f2])
    y_lo, y_hi = _axis_range(ys, None if inst is None else inst[f1])
    left, right = x0 + 10, x0 + PANEL_W - 10
    top, bottom = y0 + 10, y0 + PANEL_H - 20

    def sx(v):
        return left + (v - x_lo) / (x_hi - x_lo) * (right - left)

    def sy(v):
        return bottom - (v - y_lo) / (y_hi - y_lo) * (bottom - top)

    out = [f'<rect x="{_f(left)}" y="{_f(top)}" width="{_f(right - left)}" '
           f'height="{_f(bottom - top)}" fill="none" stroke="#999999"/>']
    for x, y, c in zip(xs, ys, labels):
        out.append(f'<circle cx="{_f(sx(x))}" cy="{_f(sy(y))}" r="2" fill="{class_color(c)}"/>')
    # clip f1 = alpha * f2 + beta to the plot box
    a, b = split.alpha, split.beta
    pts = []
    for xv in (x_lo, x_hi):
        pts.append((xv, a * xv + b))
    if a != 0:
        for yv in (y_lo, y_hi):
            pts.append(((yv - b) / a, yv))
    inside = sorted({(round(p[0], 12), round(p[1], 12)) for p in pts
                     if x_lo - 1e-9 <= p[0] <= x_hi + 1e-9 and y_lo - 1e-9 <= p[1] <= y_hi + 1e-9})
    if len(inside) >= 2:
        (xa, ya), (xb, yb) = inside[0], inside[-1]
        out.append(f'<line class="split" x1="{_f(sx(xa))}" y1="{_f(sy(ya))}" '
                   f'x2="{_f(sx(xb))}" y2="{_f(sy(yb))}" stroke="#000000" stroke-width="1.5" '
                   f'data-alpha="{a!r}" data-beta="{b!r}"/>')
    names = tree.feature_names
    out.append(f'<text x="{_f((left + right) / 2)}" y="{_f(bottom + 13)}" font-size="9" '
               f'text-anchor="middle">{_esc(names[f2])}</text>')
    if inst is not None:
        out.append(f'<circle class="instance" cx="{_f(sx(inst[f2]))}" cy="{_f(sy(inst[f1]))}" '
                   f'r="4" fill="{INSTANCE_COLOR}" stroke="#000000"/>')
    return out


def _svg_leaf(node, tree, x0, y0):
    total = node.class_hist.sum()
    out = []
    x = x0 + 10
    width = PANEL_W - 20
    for c, mass in enumerate(node.class_hist):
        w = width * (mass / total if total > 0 else 0.0)
        if w > 0:
            out.append(f'<rect x="{_f(x)}" y="{_f(y0 + 40)}" width="{_f(w)}" height="24" '
                       f'fill="{class_color(c)}"/>')
        x += w
    out.append(f'<text x="{_f(x0 + PANEL_W / 2)}" y="{_f(y0 + 84)}" font-size="10" '
               f'text-anchor="middle">n = {node.n_rows}</text>')
    return out


def to_svg(spec):
    """Standalone SVG 1.1 document; identical input gives identical bytes."""
    tree = spec.tree
    _check_snapshots(tree)
    pos, n_leaves = _layout(tree)
    width = 2 * MARGIN + n_leaves * PANEL_W + (n_leaves - 1) * GAP_X
    width = max(width, 2 * MARGIN + 120 * len(tree.class_names))
    height = (2 * MARGIN + LEGEND_H
              + (tree.depth + 1) * (PANEL_H + TITLE_H) + tree.depth * GAP_Y)
    factual = {id(n) for n in spec.factual_path}

    def anchor_top(node):
        x, y = pos[id(node)]
        return x + PANEL_W / 2, y

    def anchor_bottom(node):
        x, y = pos[id(node)]
        return x + PANEL_W / 2, y + TITLE_H + PANEL_H

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_f(width)}" '
           f'height="{_f(height)}" viewBox="0 0 {_f(width)} {_f(height)}" '
           f'font-family="Helvetica, Arial, sans-serif">',
           f'<rect width="{_f(width)}" height="{_f(height)}" fill="#FFFFFF"/>']

    out.append('<g class="legend">')
    for c, name in enumerate(tree.class_names):
        lx = MARGIN + c * 120
        out.append(f'<rect x="{_f(lx)}" y="{_f(MARGIN)}" width="12" height="12" '
                   f'fill="{class_color(c)}"/>')
        out.append(f'<text x="{_f(lx + 16)}" y="{_f(MARGIN + 10)}" font-size="11">'
                   f'{_esc(name)}</text>')
    out.append("</g>")

    out.append('<g class="edges">')
    for node in tree.root.iter_nodes():
        for child, left in zip(node.children, (True, False)):
            (x1, y1), (x2, y2) = anchor_bottom(node), anchor_top(child)
            out.append(f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
                       f'stroke="#BBBBBB" stroke-width="1"/>')
            cond = node.split.describe(tree.feature_names, left=left, digits=2)
            out.append(f'<text x="{_f((x1 + x2) / 2)}" y="{_f((y1 + y2) / 2)}" font-size="9" '
                       f'text-anchor="middle">{_esc(cond)}</text>')
    out.append("</g>")

    def path_points(path):
        pts = []
        for i, node in enumerate(path):
            if i:
                pts.append(anchor_top(node))
            if i < len(path) - 1:
                pts.append(anchor_bottom(node))
        return " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)

    if len(spec.factual_path) > 1:
        out.append(f'<polyline class="factual-path" points="{path_points(spec.factual_path)}" '
                   f'fill="none" stroke="{INSTANCE_COLOR}" stroke-width="3"/>')
    if len(spec.counterfactual_path) > 1:
        out.append(f'<polyline class="counterfactual-path" '
                   f'points="{path_points(spec.counterfactual_path)}" fill="none" '
                   f'stroke="#0072B2" stroke-width="2" stroke-dasharray="6,4"/>')

    for node in tree.root.iter_nodes():
        x0, y0 = pos[id(node)]
        on_path = id(node) in factual
        if node.is_leaf:
            title = f"class = {tree.class_names[node.majority]} ({node.leaf_confidence:.2f})"
        else:
            title = node.split.describe(tree.feature_names, digits=2)
        stroke = INSTANCE_COLOR if on_path else "#666666"
        out.append(f'<g class="node {"leaf" if node.is_leaf else node.split.kind}">')
        out.append(f'<rect x="{_f(x0)}" y="{_f(y0)}" width="{PANEL_W}" '
                   f'height="{PANEL_H + TITLE_H}" rx="4" fill="#FFFFFF" stroke="{stroke}"/>')
        out.append(f'<text x="{_f(x0 + PANEL_W / 2)}" y="{_f(y0 + 17)}" font-size="11" '
                   f'text-anchor="middle">{_esc(title)}</text>')
        body_y = y0 + TITLE_H
        if node.is_leaf:
            out.extend(_svg_leaf(node, tree, x0, body_y))
        elif node.split.kind == "axis":
            out.extend(_svg_histogram(node, tree, spec, x0, body_y, on_path))
        else:
            out.extend(_svg_scatter(node, tree, spec, x0, body_y, on_path))
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
