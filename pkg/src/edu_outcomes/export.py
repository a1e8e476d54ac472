"""Text and Graphviz renderings of a single fitted tree.

Each displayed node shows its split condition (or predicted class), sample
count and Gini impurity to three decimals. Splits at the display depth are
shown with a summary of the subtree hidden beneath them.
"""
from __future__ import annotations

from .errors import NotASingleTree
from .models.tree import Tree, TreeEnsemble
from .table import FAIL, PASS


def _single(ensemble: TreeEnsemble) -> Tree:
    if not isinstance(ensemble, TreeEnsemble) or ensemble.mode != "single":
        raise NotASingleTree("tree export needs a single-tree model")
    return ensemble.trees[0]


def _subtree_size(tree: Tree, i: int) -> int:
    if tree.left[i] < 0:
        return 1
    return 1 + _subtree_size(tree, int(tree.left[i])) + _subtree_size(tree, int(tree.right[i]))


def _class(tree: Tree, i: int) -> str:
    n, f = int(tree.n_samples[i]), int(tree.n_fail[i])
    return FAIL if 2 * f >= n else PASS


def _condition(tree: Tree, i: int, names) -> str:
    miss = "left" if tree.default_left[i] else "right"
    return f"{names[int(tree.feature[i])]} < {tree.threshold[i]:.6g} (missing -> {miss})"


def _stats(tree: Tree, i: int) -> str:
    n, f = int(tree.n_samples[i]), int(tree.n_fail[i])
    return f"samples={n} fail={f} pass={n - f} gini={tree.impurity[i]:.3f} class={_class(tree, i)}"


def _walk(tree: Tree, max_depth: int):
    """Displayed nodes as (id, depth, parent, is_left, elided_count) in preorder."""
    out = []

    def rec(i, depth, parent, is_left):
        leaf = tree.left[i] < 0
        elided = 0 if leaf or depth < max_depth else _subtree_size(tree, i) - 1
        out.append((i, depth, parent, is_left, elided))
        if not leaf and depth < max_depth:
            rec(int(tree.left[i]), depth + 1, i, True)
            rec(int(tree.right[i]), depth + 1, i, False)

    rec(0, 0, -1, False)
    return out


def export_tree(ensemble: TreeEnsemble, max_depth: int = 3) -> str:
    """Indented text, one line per displayed node."""
    tree = _single(ensemble)
    if max_depth < 0:
        raise ValueError("display depth must be >= 0")
    names = ensemble.feature_names
    lines = []
    for i, depth, _, is_left, elided in _walk(tree, max_depth):
        pad = "  " * depth
        edge = "" if depth == 0 else ("[yes] " if is_left else "[no] ")
        if tree.left[i] < 0:
            body = f"leaf {i}: {_stats(tree, i)}"
        else:
            body = f"node {i}: {_condition(tree, i, names)} {_stats(tree, i)}"
            if elided:
                body += f" ... {elided} nodes below not shown"
        lines.append(pad + edge + body)
    return "\n".join(lines) + "\n"


def export_tree_dot(ensemble: TreeEnsemble, max_depth: int = 3) -> str:
    """Graphviz description of the same displayed nodes."""
    tree = _single(ensemble)
    names = ensemble.feature_names
    lines = ["digraph tree {", '  node [shape=box, fontname="Helvetica"];']
    for i, _, parent, is_left, elided in _walk(tree, max_depth):
        n, f = int(tree.n_samples[i]), int(tree.n_fail[i])
        parts = [] if tree.left[i] < 0 else [_condition(tree, i, names)]
        parts += [f"samples = {n}", f"value = [fail {f}, pass {n - f}]",
                  f"gini = {tree.impurity[i]:.3f}", f"class = {_class(tree, i)}"]
        if elided:
            parts.append(f"({elided} nodes below not shown)")
        label = "\\n".join(p.replace('"', '\\"') for p in parts)
        lines.append(f'  n{i} [label="{label}"];')
        if parent >= 0:
            lines.append(f'  n{parent} -> n{i} [label="{"yes" if is_left else "no"}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
