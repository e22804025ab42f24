"""Rooted phylogenetic trees, dissimilarity maps and ultrametrics.

A dissimilarity map on N leaves is stored as a flat float array of length
C(N, 2) in lexicographic pair order (1,2), (1,3), ..., (1,N), (2,3), ...,
(N-1,N). Leaf labels are 1..N; taxon names, when the Newick text uses
them, live in ``PhyloTree.names``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_TOL = 1e-9
LABELS = ("P", "Q")


# --------------------------------------------------------------------------
# pair indexing
# --------------------------------------------------------------------------

def n_pairs(n_leaves: int) -> int:
    return n_leaves * (n_leaves - 1) // 2


def n_leaves_for(d: int) -> int:
    """Inverse of :func:`n_pairs`; raises if ``d`` is not a triangular number."""
    n = int(round((1 + math.sqrt(1 + 8 * d)) / 2))
    if n < 2 or n_pairs(n) != d:
        raise ValueError(f"{d} is not C(N, 2) for any N >= 2")
    return n


def pair_to_flat(i: int, j: int, n_leaves: int) -> int:
    """1-based flat position of the pair ``(i, j)``, ``1 <= i < j <= N``."""
    if i > j:
        i, j = j, i
    if not (1 <= i < j <= n_leaves):
        raise ValueError(f"invalid pair ({i}, {j}) for N={n_leaves}")
    return (i - 1) * n_leaves - (i - 1) * i // 2 + (j - i)


def flat_to_pair(k: int, n_leaves: int) -> tuple[int, int]:
    """Inverse of :func:`pair_to_flat`."""
    if not (1 <= k <= n_pairs(n_leaves)):
        raise ValueError(f"flat index {k} out of range for N={n_leaves}")
    i = 1
    row = n_leaves - 1
    while k > row:
        k -= row
        i += 1
        row -= 1
    return i, i + k


def to_square(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    n = n_leaves_for(w.size)
    m = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    m[iu] = w
    m.T[iu] = w
    return m


def to_flat(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return m[np.triu_indices(m.shape[0], 1)].copy()


def as_dissimilarity(w) -> np.ndarray:
    arr = np.asarray(w, dtype=float)
    if arr.ndim != 1:
        raise ValueError("dissimilarity map must be a flat vector")
    n_leaves_for(arr.size)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("dissimilarity values must be finite and non-negative")
    return arr


# --------------------------------------------------------------------------
# trees
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Node:
    """Tree node. ``length`` is the branch to the parent (0 at the root)."""

    length: float = 0.0
    label: int | None = None
    children: tuple["Node", ...] = ()

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def leaves(self) -> list[int]:
        if self.is_leaf:
            return [self.label]
        return [lab for c in self.children for lab in c.leaves()]


@dataclass(frozen=True)
class PhyloTree:
    root: Node
    names: tuple[str, ...] | None = field(default=None, compare=False)

    @property
    def n_leaves(self) -> int:
        return len(self.root.leaves())

    def leaf_depths(self) -> dict[int, float]:
        out: dict[int, float] = {}
        stack = [(self.root, 0.0)]
        while stack:
            node, depth = stack.pop()
            if node.is_leaf:
                out[node.label] = depth
            for c in node.children:
                stack.append((c, depth + c.length))
        return out

    def height(self) -> float:
        return max(self.leaf_depths().values())

    def clades(self) -> frozenset[frozenset[int]]:
        """Non-trivial clusters (internal nodes other than the root)."""
        found: set[frozenset[int]] = set()

        def walk(node: Node) -> frozenset[int]:
            if node.is_leaf:
                return frozenset([node.label])
            s = frozenset().union(*(walk(c) for c in node.children))
            found.add(s)
            return s

        everything = walk(self.root)
        found.discard(everything)
        return frozenset(found)


def _check_labels(root: Node) -> None:
    labels = root.leaves()
    n = len(labels)
    if sorted(labels) != list(range(1, n + 1)):
        raise ValueError(f"leaf labels must be exactly 1..{n}, got {sorted(labels)}")


class NewickError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


_DELIMS = set("(),:;")


class _NewickParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            got = self.peek() or "end of input"
            raise NewickError(f"expected {ch!r}, found {got!r}", self.pos)
        self.pos += 1

    def read_name(self) -> str:
        self.skip_ws()
        if self.peek() == "'":
            start = self.pos
            end = self.text.find("'", self.pos + 1)
            if end < 0:
                raise NewickError("unterminated quoted label", start)
            self.pos = end + 1
            return self.text[start + 1:end]
        start = self.pos
        while (self.pos < len(self.text) and self.text[self.pos] not in _DELIMS
               and not self.text[self.pos].isspace()):
            self.pos += 1
        return self.text[start:self.pos]

    def read_length(self, required: bool) -> float | None:
        if self.peek() != ":":
            if required:
                raise NewickError("missing branch length", self.pos)
            return None
        self.pos += 1
        self.skip_ws()
        start = self.pos
        token = self.read_name()
        if not token:
            raise NewickError("empty branch length", start)
        try:
            value = float(token)
        except ValueError:
            raise NewickError(f"non-numeric branch length {token!r}", start) from None
        if not math.isfinite(value) or value < 0:
            raise NewickError(f"branch length must be finite and >= 0, got {token!r}", start)
        return value

    def subtree(self, is_root: bool):
        # returns a nested (raw_label, length, children) tuple
        start = self.peek() and self.pos
        if self.peek() == "(":
            self.pos += 1
            children = [self.subtree(False)]
            while self.peek() == ",":
                self.pos += 1
                children.append(self.subtree(False))
            self.expect(")")
            self.read_name()  # internal labels (support values etc.) are ignored
            length = self.read_length(required=not is_root)
            return (None, length or 0.0, children, start)
        name = self.read_name()
        if not name:
            got = self.peek() or "end of input"
            raise NewickError(f"expected a leaf label, found {got!r}", self.pos)
        length = self.read_length(required=not is_root)
        return (name, length or 0.0, [], start)

    def parse(self):
        tree = self.subtree(True)
        self.expect(";")
        if self.peek():
            raise NewickError("trailing characters after ';'", self.pos)
        return tree


def parse_newick(text: str, labels: Sequence[str] | None = None) -> PhyloTree:
    """Parse a single ';'-terminated Newick expression.

    Leaf names that are exactly the integers 1..N are used directly. Other
    names are mapped to 1..N through ``labels`` (position + 1) when given,
    otherwise by sorting the names lexically. Errors carry the character
    offset of the offending token.
    """
    raw = _NewickParser(text).parse()

    names: list[tuple[str, int]] = []

    def collect(t):
        name, _, children, start = t
        if not children:
            names.append((name, start))
        for c in children:
            collect(c)

    collect(raw)
    seen: dict[str, int] = {}
    for name, start in names:
        if name in seen:
            raise NewickError(f"duplicate leaf label {name!r}", start)
        seen[name] = start

    plain = [n for n, _ in names]
    table: tuple[str, ...] | None
    if labels is not None:
        table = tuple(labels)
        missing = set(plain) - set(table)
        if missing or len(table) != len(plain):
            raise ValueError(f"label table does not match tree leaves (unmatched: {sorted(missing)})")
    elif all(n.isdigit() for n in plain) and sorted(int(n) for n in plain) == list(range(1, len(plain) + 1)):
        table = None
    else:
        table = tuple(sorted(plain))
    index = ({n: int(n) for n in plain} if table is None
             else {n: k + 1 for k, n in enumerate(table)})

    def build(t) -> Node:
        name, length, children, _ = t
        if not children:
            return Node(length=length, label=index[name])
        return Node(length=length, children=tuple(build(c) for c in children))

    root = build(raw)
    return PhyloTree(root=root, names=table)


def _fmt(x: float) -> str:
    return repr(float(x))


def serialize_newick(tree: PhyloTree) -> str:
    def emit(node: Node, is_root: bool) -> str:
        if node.is_leaf:
            body = tree.names[node.label - 1] if tree.names else str(node.label)
        else:
            body = "(" + ",".join(emit(c, False) for c in node.children) + ")"
        return body if is_root else f"{body}:{_fmt(node.length)}"

    return emit(tree.root, True) + ";"


def read_newick_file(path: str | Path) -> list[PhyloTree]:
    trees = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            trees.append(parse_newick(line))
    return trees


def cophenetic(tree: PhyloTree) -> np.ndarray:
    """Path-length dissimilarity map of ``tree`` in lexicographic pair order."""
    _check_labels(tree.root)
    n = tree.n_leaves
    m = np.zeros((n, n))

    def walk(node: Node) -> dict[int, float]:
        # distance from ``node`` down to each leaf beneath it
        if node.is_leaf:
            return {node.label: 0.0}
        below = []
        for c in node.children:
            below.append({lab: dist + c.length for lab, dist in walk(c).items()})
        for a, b in itertools.combinations(below, 2):
            for la, da in a.items():
                for lb, db in b.items():
                    m[la - 1, lb - 1] = m[lb - 1, la - 1] = da + db
        merged: dict[int, float] = {}
        for part in below:
            merged.update(part)
        return merged

    walk(tree.root)
    return to_flat(m)


def is_ultrametric(w, tol: float = DEFAULT_TOL) -> bool:
    """Three-point condition: the max of every triple is attained at least twice."""
    w = as_dissimilarity(w)
    m = to_square(w)
    n = m.shape[0]
    if n < 3:
        return True
    tri = np.array(list(itertools.combinations(range(n), 3)))
    vals = np.stack([m[tri[:, 0], tri[:, 1]], m[tri[:, 0], tri[:, 2]], m[tri[:, 1], tri[:, 2]]], axis=1)
    vals.sort(axis=1)
    return bool(np.all(vals[:, 2] - vals[:, 1] <= tol))


def ultrametric_to_tree(w, tol: float = DEFAULT_TOL) -> PhyloTree:
    """Equidistant tree realising the ultrametric ``w``.

    Clusters are agglomerated at height ``w_ij / 2``; clusters that meet at
    the same height (within ``tol``) are merged into a single multifurcation.
    """
    w = as_dissimilarity(w)
    if not is_ultrametric(w, tol):
        raise ValueError("input violates the three-point condition")
    m = to_square(w)
    n = m.shape[0]
    # (node, height, member indices)
    clusters: list[tuple[Node, float, list[int]]] = [
        (Node(label=k + 1), 0.0, [k]) for k in range(n)
    ]
    while len(clusters) > 1:
        k = len(clusters)
        dist = np.full((k, k), np.inf)
        for a in range(k):
            for b in range(a + 1, k):
                dist[a, b] = dist[b, a] = m[np.ix_(clusters[a][2], clusters[b][2])].min()
        dmin = dist.min()
        # connected components of the "merges at dmin" graph
        parent = list(range(k))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in zip(*np.nonzero(dist <= dmin + tol)):
            parent[find(a)] = find(b)
        groups: dict[int, list[int]] = {}
        for a in range(k):
            groups.setdefault(find(a), []).append(a)
        h = dmin / 2.0
        nxt = []
        for members in sorted(groups.values()):
            if len(members) == 1:
                nxt.append(clusters[members[0]])
                continue
            kids = []
            for a in members:
                node, hc, _ = clusters[a]
                kids.append(Node(length=float(max(h - hc, 0.0)), label=node.label, children=node.children))
            idx = sorted(i for a in members for i in clusters[a][2])
            nxt.append((Node(children=tuple(kids)), h, idx))
        clusters = nxt
    return PhyloTree(root=clusters[0][0])


def same_topology(a, b, tol: float = DEFAULT_TOL) -> bool:
    """Whether two ultrametrics induce the same rooted tree topology."""
    return ultrametric_to_tree(a, tol).clades() == ultrametric_to_tree(b, tol).clades()


def binary_topologies(n_leaves: int) -> list[frozenset[frozenset[int]]]:
    """All rooted binary topologies on leaves 1..N, as clade sets.

    Built by the classic stepwise insertion of leaf k onto every edge
    (including above the root) of each topology on k-1 leaves.
    """
    if n_leaves < 2:
        raise ValueError("need at least 2 leaves")
    # nested tuple representation
    trees: list = [(1, 2)]
    for k in range(3, n_leaves + 1):
        nxt = []
        for t in trees:
            nxt.extend(_insert_everywhere(t, k))
        trees = nxt

    def clades(t, acc):
        if isinstance(t, int):
            return frozenset([t])
        s = clades(t[0], acc) | clades(t[1], acc)
        acc.add(s)
        return s

    out = []
    for t in trees:
        acc: set = set()
        full = clades(t, acc)
        acc.discard(full)
        out.append(frozenset(acc))
    return out


def _insert_everywhere(t, leaf):
    yield (t, leaf)
    if isinstance(t, tuple):
        for left in _insert_everywhere(t[0], leaf):
            yield (left, t[1])
        for right in _insert_everywhere(t[1], leaf):
            yield (t[0], right)


# --------------------------------------------------------------------------
# ultrametric CSV
# --------------------------------------------------------------------------

def write_ultrametric_csv(path: str | Path, points: Iterable, labels: Sequence[str] | None = None,
                          n_leaves: int | None = None) -> None:
    """Write points as ``n_leaves=<N>`` followed by one comma-separated row each.

    When ``labels`` is given, each row carries its class label (``P`` or
    ``Q``) as a trailing field.
    """
    rows = [np.asarray(p, dtype=float) for p in points]
    if n_leaves is None:
        if not rows:
            raise ValueError("cannot infer n_leaves from an empty point set")
        n_leaves = n_leaves_for(rows[0].size)
    d = n_pairs(n_leaves)
    if labels is not None and len(labels) != len(rows):
        raise ValueError("one label per point required")
    lines = [f"n_leaves={n_leaves}"]
    for k, r in enumerate(rows):
        if r.size != d:
            raise ValueError(f"row {k + 1} has {r.size} values, expected {d}")
        fields = [_fmt(v) for v in r]
        if labels is not None:
            if labels[k] not in LABELS:
                raise ValueError(f"unknown label {labels[k]!r}")
            fields.append(labels[k])
        lines.append(",".join(fields))
    Path(path).write_text("\n".join(lines) + "\n")


def read_ultrametric_csv(path: str | Path) -> tuple[int, np.ndarray, list[str] | None]:
    """Return ``(n_leaves, points, labels)``; ``labels`` is None for unlabeled files."""
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("n_leaves="):
        raise ValueError(f"{path}: first line must be 'n_leaves=<N>'")
    try:
        n_leaves = int(text[0].split("=", 1)[1])
    except ValueError:
        raise ValueError(f"{path}: malformed header {text[0]!r}") from None
    d = n_pairs(n_leaves)
    pts, labels = [], []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) == d + 1 and fields[-1] in LABELS:
            labels.append(fields.pop())
        if len(fields) != d:
            raise ValueError(f"{path}:{lineno}: expected {d} values, found {len(fields)}")
        try:
            pts.append([float(f) for f in fields])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric value") from None
    if labels and len(labels) != len(pts):
        raise ValueError(f"{path}: labels present on some rows but not others")
    arr = np.array(pts, dtype=float).reshape(len(pts), d)
    return n_leaves, arr, (labels or None)
