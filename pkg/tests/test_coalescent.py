import json
from collections import Counter

import numpy as np
import pytest

from tropsvm.coalescent import (RNG_NAME, SimConfig, class_streams, coalescent_gene_tree,
                                generate_dataset, write_dataset, yule_species_tree)
from tropsvm.phylo import (binary_topologies, cophenetic, is_ultrametric, parse_newick,
                           read_ultrametric_csv, same_topology, ultrametric_to_tree)


def test_config_depth_and_validation():
    cfg = SimConfig(population=10000, ratio_c=0.2)
    assert cfg.depth == 10000 * 0.2
    for bad in (dict(n_leaves=2), dict(population=0), dict(ratio_c=-1), dict(trees_per_class=0)):
        with pytest.raises(ValueError):
            SimConfig(**bad)


def test_yule_three_leaf_frequencies():
    rng = np.random.default_rng(0)
    counts = Counter()
    for _ in range(10000):
        t = yule_species_tree(3, 1.0, rng)
        (cherry,) = [c for c in t.clades() if len(c) == 2]
        counts[cherry] += 1
    assert len(counts) == 3
    for v in counts.values():
        assert abs(v / 10000 - 1 / 3) <= 0.05


def test_yule_equidistant_with_exact_depth():
    rng = np.random.default_rng(1)
    for n in (3, 5, 8):
        for _ in range(50):
            t = yule_species_tree(n, 1234.5, rng)
            depths = list(t.leaf_depths().values())
            assert max(depths) == pytest.approx(1234.5, abs=1e-9)
            assert min(depths) == pytest.approx(1234.5, abs=1e-9)
            assert is_ultrametric(cophenetic(t), tol=1e-9)
            assert all(len(node.children) in (0, 2) for node in _nodes(t.root))


def _nodes(node):
    yield node
    for c in node.children:
        yield from _nodes(c)


def test_yule_deterministic():
    a = yule_species_tree(6, 10.0, np.random.default_rng(42))
    b = yule_species_tree(6, 10.0, np.random.default_rng(42))
    assert a == b


def test_yule_covers_all_four_leaf_topologies():
    rng = np.random.default_rng(2)
    seen = {yule_species_tree(4, 1.0, rng).clades() for _ in range(3000)}
    assert seen == set(binary_topologies(4))


def test_gene_trees_respect_species_tree():
    rng = np.random.default_rng(3)
    species = yule_species_tree(5, 5000.0, rng)
    s = cophenetic(species)
    for _ in range(300):
        g, tree = coalescent_gene_tree(species, 10000.0, rng, return_tree=True)
        assert is_ultrametric(g, tol=1e-6)
        assert np.all(g >= s - 1e-9)
        np.testing.assert_allclose(cophenetic(tree), g, rtol=1e-12)


def test_mean_coalescence_time_matches_population():
    population, depth = 100.0, 1000.0
    species = parse_newick(f"(1:{depth},2:{depth});")
    rng = np.random.default_rng(4)
    times = [coalescent_gene_tree(species, population, rng)[0] / 2 - depth for _ in range(10000)]
    assert np.mean(times) == pytest.approx(population, rel=0.10)
    assert min(times) >= 0


def test_within_branch_coalescence_rate():
    # lineages 1 and 2 meet at height 1 and share a branch of length 1000
    population = 50.0
    species = parse_newick("((1:1,2:1):1000,3:1001);")
    rng = np.random.default_rng(5)
    t = np.array([coalescent_gene_tree(species, population, rng)[0] / 2 - 1 for _ in range(4000)])
    assert np.all(t >= 0)
    assert np.mean(t <= 1000) == pytest.approx(1.0, abs=1e-3)
    assert np.mean(t) == pytest.approx(population, rel=0.10)
    # exponential waiting time: median = population * ln 2
    assert np.median(t) == pytest.approx(population * np.log(2), rel=0.10)


def _concordance(ratio_c, seed, draws=500):
    rng = np.random.default_rng(seed)
    population = 1000.0
    species = yule_species_tree(5, population * ratio_c, rng)
    s = cophenetic(species)
    hits = sum(same_topology(coalescent_gene_tree(species, population, rng), s) for _ in range(draws))
    return hits / draws


def test_concordance_grows_with_ratio():
    assert _concordance(10.0, 6) > _concordance(0.2, 6)


def test_generate_dataset_shape_and_labels():
    ds = generate_dataset(SimConfig(n_leaves=5, ratio_c=1.0, trees_per_class=20, seed=7))
    assert ds.points.shape == (40, 10)
    assert ds.labels == ("P",) * 20 + ("Q",) * 20
    assert ds.class_points("Q").shape == (20, 10)
    for lab, sp in zip("PQ", ds.species):
        s = cophenetic(sp)
        for g in ds.class_points(lab):
            assert is_ultrametric(g, tol=1e-6)
            assert np.all(g >= s - 1e-9)
    assert len(generate_dataset(SimConfig(trees_per_class=1, seed=1))) == 2


def test_generate_dataset_deterministic():
    cfg = SimConfig(n_leaves=5, ratio_c=2.4, trees_per_class=10, seed=99)
    a, b = generate_dataset(cfg), generate_dataset(cfg)
    np.testing.assert_array_equal(a.points, b.points)
    c = generate_dataset(SimConfig(n_leaves=5, ratio_c=2.4, trees_per_class=10, seed=100))
    assert not np.array_equal(a.points, c.points)


def test_stream_split_is_prefix_stable():
    # gene tree k depends only on (seed, class, k), not on how many are drawn
    small = generate_dataset(SimConfig(trees_per_class=3, seed=5))
    large = generate_dataset(SimConfig(trees_per_class=6, seed=5))
    np.testing.assert_array_equal(small.class_points("P"), large.class_points("P")[:3])
    np.testing.assert_array_equal(small.class_points("Q"), large.class_points("Q")[:3])
    assert len(class_streams(5, 3)) == 2 and len(class_streams(5, 3)[0]) == 4


def test_write_dataset_is_byte_identical(tmp_path):
    cfg = SimConfig(n_leaves=4, ratio_c=0.6, trees_per_class=5, seed=11)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    sa = write_dataset(generate_dataset(cfg), a)
    sb = write_dataset(generate_dataset(cfg), b)
    assert a.read_bytes() == b.read_bytes()
    assert sa.read_bytes() == sb.read_bytes()
    meta = json.loads(sa.read_text())
    assert meta["rng"] == RNG_NAME
    assert meta["config"]["depth"] == pytest.approx(6000.0)
    species_p = parse_newick(meta["species_newick"]["P"])
    assert species_p.height() == pytest.approx(6000.0)
    n, pts, labels = read_ultrametric_csv(a)
    assert n == 4 and pts.shape == (10, 6) and labels.count("P") == 5


def test_simulated_round_trip_many():
    ds = generate_dataset(SimConfig(n_leaves=5, ratio_c=0.4, trees_per_class=250, seed=12))
    for w in ds.points:
        np.testing.assert_allclose(cophenetic(ultrametric_to_tree(w)), w, atol=1e-9)
