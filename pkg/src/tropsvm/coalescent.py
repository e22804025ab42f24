"""Two-class gene-tree datasets from the multispecies coalescent.

Each class gets its own Yule species tree of height ``depth =
population * ratio_c``; gene trees are then grown inside it backwards in
time, one sampled lineage per species. Time is measured in generations
and any two lineages in the same branch coalesce at rate
``1 / population``.

Random streams
--------------
All randomness comes from numpy's PCG64. For a config with seed ``s`` the
root ``SeedSequence(s)`` is split with ``spawn(2)`` into a P stream and a
Q stream. Each class stream is split again with ``spawn(1 +
trees_per_class)``: child 0 drives the species tree, child ``k`` the
``k``-th gene tree. Changing ``trees_per_class`` therefore never changes
the species trees, and gene tree ``k`` depends only on ``(s, class, k)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .phylo import (Node, PhyloTree, n_pairs, pair_to_flat, serialize_newick,
                    write_ultrametric_csv)

RNG_NAME = "numpy.PCG64/SeedSequence-spawn-v1"
DEFAULT_C_GRID = (0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 2.4, 3.6, 4.8, 6.0, 8.0, 10.0)


@dataclass(frozen=True)
class SimConfig:
    n_leaves: int = 5
    population: float = 10000.0
    ratio_c: float = 1.0
    trees_per_class: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n_leaves < 3:
            raise ValueError("n_leaves must be at least 3")
        if not self.population > 0 or not self.ratio_c > 0:
            raise ValueError("population and ratio_c must be positive")
        if self.trees_per_class < 1:
            raise ValueError("trees_per_class must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def depth(self) -> float:
        return self.population * self.ratio_c


@dataclass(frozen=True)
class LabeledDataset:
    points: np.ndarray
    labels: tuple[str, ...]
    n_leaves: int
    config: SimConfig | None = None
    species: tuple[PhyloTree, PhyloTree] | None = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.labels)

    def class_points(self, label: str) -> np.ndarray:
        mask = np.array([lab == label for lab in self.labels], dtype=bool)
        return self.points[mask]


def class_streams(seed: int, trees_per_class: int) -> list[list[np.random.Generator]]:
    """Generators per class: ``[species, gene_1, ..., gene_n]`` for P then Q."""
    out = []
    for cls in np.random.SeedSequence(seed).spawn(2):
        out.append([np.random.Generator(np.random.PCG64(s)) for s in cls.spawn(1 + trees_per_class)])
    return out


def yule_species_tree(n_leaves: int, depth: float, rng: np.random.Generator) -> PhyloTree:
    """Pure-birth tree grown forward in time, then scaled to height ``depth``.

    With ``k`` lineages alive the next split comes after an ``Exp(k)`` wait
    and hits a uniformly chosen lineage; after the last split one more wait
    sets the tips. Leaf labels are a uniform permutation of 1..N.
    """
    if n_leaves < 3:
        raise ValueError("n_leaves must be at least 3")
    if not depth > 0:
        raise ValueError("depth must be positive")
    # forward times of each split; lineage i is identified by its list index
    split_time: dict[int, float] = {}
    children: dict[int, tuple[int, int]] = {}
    alive = [0]
    next_id = 1
    t = 0.0
    while len(alive) < n_leaves:
        t += rng.exponential(1.0 / len(alive))
        pick = int(rng.integers(len(alive)))
        node = alive.pop(pick)
        split_time[node] = t
        children[node] = (next_id, next_id + 1)
        alive.extend([next_id, next_id + 1])
        next_id += 2
    t_end = t + rng.exponential(1.0 / len(alive))
    t_root = split_time[0]
    scale = depth / (t_end - t_root)
    labels = rng.permutation(n_leaves) + 1
    leaf_label = {node: int(lab) for node, lab in zip(sorted(alive), labels)}

    def build(node: int, parent_time: float) -> Node:
        if node in children:
            kids = tuple(build(c, split_time[node]) for c in children[node])
            return Node(length=(split_time[node] - parent_time) * scale, children=kids)
        return Node(length=(t_end - parent_time) * scale, label=leaf_label[node])

    return PhyloTree(root=build(0, t_root))


def _node_height(node: Node) -> float:
    if node.is_leaf:
        return 0.0
    c = node.children[0]
    return _node_height(c) + c.length


def coalescent_gene_tree(species: PhyloTree, population: float, rng: np.random.Generator,
                         return_tree: bool = False):
    """Gene-tree ultrametric for one lineage per species leaf.

    Lineages move up the species tree branch by branch. Inside a branch
    with ``k`` lineages the next coalescence waits ``Exp(k(k-1)/2 /
    population)``; any lineages left at the top of a branch pass to its
    parent, and above the root they merge until one remains. The distance
    between two leaves is twice the height of their merge.
    """
    if not population > 0:
        raise ValueError("population must be positive")
    n = species.n_leaves
    dist = np.zeros(n_pairs(n))

    # a lineage is (gene node, height of that node, leaf labels below it)
    def climb(lineages, bottom: float, top: float):
        h = bottom
        lineages = list(lineages)
        while len(lineages) > 1:
            k = len(lineages)
            h += rng.exponential(population / (k * (k - 1) / 2))
            if h >= top:
                break
            a, b = sorted(rng.choice(k, size=2, replace=False))
            (na, ha, la), (nb, hb, lb) = lineages[a], lineages[b]
            for x in la:
                for y in lb:
                    dist[pair_to_flat(x, y, n) - 1] = 2.0 * h
            merged = (Node(children=(_with_length(na, h - ha), _with_length(nb, h - hb))),
                      h, la + lb)
            lineages = [lin for idx, lin in enumerate(lineages) if idx not in (a, b)] + [merged]
        return lineages

    def walk(node: Node, top: float):
        h = _node_height(node)
        if node.is_leaf:
            lineages = [(Node(label=node.label), 0.0, [node.label])]
        else:
            lineages = []
            for c in node.children:
                lineages.extend(walk(c, h))
        return climb(lineages, h, top)

    (root_lineage,) = walk(species.root, np.inf)
    if return_tree:
        return dist, PhyloTree(root=root_lineage[0])
    return dist


def _with_length(node: Node, length: float) -> Node:
    return Node(length=length, label=node.label, children=node.children)


def generate_dataset(cfg: SimConfig) -> LabeledDataset:
    """``trees_per_class`` gene trees under each of two independent species trees."""
    streams = class_streams(cfg.seed, cfg.trees_per_class)
    points, labels, species = [], [], []
    for label, gens in zip(("P", "Q"), streams):
        tree = yule_species_tree(cfg.n_leaves, cfg.depth, gens[0])
        species.append(tree)
        for g in gens[1:]:
            points.append(coalescent_gene_tree(tree, cfg.population, g))
            labels.append(label)
    return LabeledDataset(points=np.array(points), labels=tuple(labels), n_leaves=cfg.n_leaves,
                          config=cfg, species=tuple(species))


def write_dataset(ds: LabeledDataset, path: str | Path) -> Path:
    """Write the labeled CSV and a ``.meta.json`` sidecar next to it."""
    path = Path(path)
    write_ultrametric_csv(path, ds.points, labels=list(ds.labels), n_leaves=ds.n_leaves)
    meta = {"format": "tropsvm-dataset-v1", "rng": RNG_NAME}
    if ds.config is not None:
        meta["config"] = asdict(ds.config)
        meta["config"]["depth"] = ds.config.depth
    if ds.species is not None:
        meta["species_newick"] = {"P": serialize_newick(ds.species[0]),
                                  "Q": serialize_newick(ds.species[1])}
    sidecar = path.with_name(path.name + ".meta.json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return sidecar
