import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cslsh.core import CostCounters, Dataset, Metric, RngSeed, _pack_bits
from cslsh.families import BitSampling, SignRandomProjection
from cslsh.forest import (
    FormatError,
    build_forest,
    expected_collisions,
    forest_from_bytes,
    forest_to_bytes,
)
from cslsh.oracle import naive_prefix_filter, naive_shortest_unique_prefix

SEED = RngSeed(404)


def random_instance(rng, n, dim):
    return Dataset.from_bits(rng.integers(0, 2, size=(n, dim), dtype=np.uint8))


def test_single_point_lives_at_the_root_and_is_always_found():
    ds = Dataset.from_bits(np.array([[1, 0, 1, 0]], dtype=np.uint8))
    forest = build_forest(ds, BitSampling(4), K=4, L=2, seed=SEED.child("single"))
    for tree in forest.trees:
        assert tree.stored_depth(0) == 0  # the empty prefix is already unique
        for i in range(5):
            assert forest.bucket(tree.index + 1, i, ds.point(0)).ids.tolist() == [0]


def test_identical_points_share_a_depth_k_leaf():
    ds = Dataset.from_bits(np.tile(np.array([[1, 0, 1, 0]], dtype=np.uint8), (6, 1)))
    forest = build_forest(ds, BitSampling(4), K=3, L=2, seed=SEED.child("dup"))
    for tree in forest.trees:
        for pid in range(6):
            assert tree.stored_depth(pid) == 3
        assert sorted(forest.bucket(tree.index + 1, 3, ds.point(0)).ids.tolist()) == list(range(6))


def test_stored_depth_matches_naive_shortest_unique_prefix():
    rng = SEED.child("depth").generator()
    ds = random_instance(rng, 8, 8)
    forest = build_forest(ds, BitSampling(8), K=8, L=3, seed=SEED.child("depth-f"))
    for tree in forest.trees:
        strings = [int(tree.sorted_strings[np.flatnonzero(tree.order == pid)[0]]) for pid in range(8)]
        for pid in range(8):
            assert tree.stored_depth(pid) == naive_shortest_unique_prefix(strings, 8, pid)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 32), st.integers(4, 12), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_bucket_equals_naive_filter(n, dim, K, seed):
    rng = np.random.default_rng(seed)
    ds = random_instance(rng, n, dim)
    forest = build_forest(ds, BitSampling(dim), K=K, L=2, seed=RngSeed(seed).child("f"))
    q = _pack_bits(rng.integers(0, 2, size=(1, dim), dtype=np.uint8))[0]
    for j in (1, 2):
        members = forest.trees[j - 1].members
        for i in range(K + 1):
            got = sorted(forest.bucket(j, i, q).ids.tolist())
            assert got == sorted(naive_prefix_filter(members, ds, q, i).tolist())
            assert forest.collision_count(j, i, q) == len(got)


def test_collision_counts_monotone_and_level0_full():
    rng = SEED.child("mono").generator()
    ds = random_instance(rng, 40, 10)
    forest = build_forest(ds, BitSampling(10), K=8, L=2, seed=SEED.child("mono-f"))
    q = _pack_bits(rng.integers(0, 2, size=(1, 10), dtype=np.uint8))[0]
    for j in (1, 2):
        assert forest.collision_count(j, 0, q) == 40
        counts = [forest.collision_count(j, i, q) for i in range(9)]
        assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_subtree_counts_partition_children():
    rng = SEED.child("part").generator()
    ds = random_instance(rng, 50, 8)
    forest = build_forest(ds, BitSampling(8), K=6, L=2, seed=SEED.child("part-f"))
    for tree in forest.trees:
        sizes = tree.end - tree.start
        for node in range(tree.node_count()):
            kids = [c for c in (tree.child0[node], tree.child1[node]) if c != -1]
            if kids:
                assert sizes[kids].sum() == sizes[node]


def test_cost_contract_node_visits():
    rng = SEED.child("cost").generator()
    ds = random_instance(rng, 64, 12)
    forest = build_forest(ds, BitSampling(12), K=10, L=1, seed=SEED.child("cost-f"))
    q = _pack_bits(rng.integers(0, 2, size=(1, 12), dtype=np.uint8))[0]
    for i in range(11):
        counters = CostCounters()
        cursor = forest.bucket(1, i, q, counters)
        assert cursor.node_visits <= i + 1
        assert counters.nodes_visited <= i + 1
        assert counters.hash_evaluations <= i


def test_enumeration_order_is_trie_then_id():
    # duplicates share a leaf; within the leaf the order is by id
    bits = np.vstack([np.zeros((3, 4), dtype=np.uint8), np.ones((2, 4), dtype=np.uint8)])
    ds = Dataset.from_bits(bits)
    forest = build_forest(ds, BitSampling(4), K=4, L=1, seed=SEED.child("ord"))
    ids = forest.bucket(1, 0, ds.point(0)).ids
    leaves = [forest.trees[0].stored_depth(p) for p in range(5)]
    assert leaves == [4, 4, 4, 4, 4]
    # the two duplicate groups each appear contiguously, ids ascending inside
    as_list = ids.tolist()
    assert sorted(as_list) == list(range(5))
    pos = {p: as_list.index(p) for p in range(5)}
    assert pos[0] < pos[1] < pos[2]
    assert pos[3] < pos[4]


def test_expected_collisions_closed_forms():
    rng = SEED.child("exp").generator()
    ds = random_instance(rng, 20, 8)
    fam = BitSampling(8)
    q = _pack_bits(rng.integers(0, 2, size=(1, 8), dtype=np.uint8))[0]
    assert expected_collisions(ds, fam, q, 0) == 20
    dup = Dataset.from_packed(np.tile(q, (7, 1)), 8)
    for i in range(4):
        assert expected_collisions(dup, fam, q, i) == pytest.approx(7.0)


def test_expected_collisions_monte_carlo_small():
    rng = SEED.child("mc").generator()
    ds = random_instance(rng, 16, 8)
    fam = BitSampling(8)
    q = _pack_bits(rng.integers(0, 2, size=(1, 8), dtype=np.uint8))[0]
    trees = 2000
    forest = build_forest(ds, fam, K=2, L=trees, seed=SEED.child("mc-f"))
    for i in (1, 2):
        counts = np.array([forest.collision_count(j, i, q) for j in range(1, trees + 1)], float)
        want = expected_collisions(ds, fam, q, i)
        se = counts.std(ddof=1) / np.sqrt(trees)
        assert abs(counts.mean() - want) <= 3 * se + 1e-2


def test_serialization_round_trip_and_rejection():
    rng = SEED.child("ser").generator()
    ds = random_instance(rng, 30, 16)
    forest = build_forest(ds, BitSampling(16), K=8, L=3, seed=SEED.child("ser-f"))
    blob = forest_to_bytes(forest)
    # deterministic build: same seed, same bytes
    again = build_forest(ds, BitSampling(16), K=8, L=3, seed=SEED.child("ser-f"))
    assert forest_to_bytes(again) == blob
    loaded = forest_from_bytes(blob, ds)
    q = _pack_bits(rng.integers(0, 2, size=(1, 16), dtype=np.uint8))[0]
    for j in (1, 2, 3):
        for i in range(9):
            assert (
                forest.bucket(j, i, q).ids.tolist()
                == loaded.bucket(j, i, q).ids.tolist()
            )
    with pytest.raises(FormatError):
        forest_from_bytes(b"JUNKJUNK" + blob[8:], ds)
    bad = bytearray(blob)
    bad[8] ^= 0xFF  # version word
    with pytest.raises(FormatError):
        forest_from_bytes(bytes(bad), ds)
    other = random_instance(rng, 31, 16)
    with pytest.raises(FormatError):
        forest_from_bytes(blob, other)


def test_serialization_srp_round_trip():
    rng = SEED.child("srp").generator()
    pts = rng.standard_normal((12, 5))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    ds = Dataset.from_reals(pts, Metric.ANGULAR)
    forest = build_forest(ds, SignRandomProjection(5), K=6, L=2, seed=SEED.child("srp-f"))
    loaded = forest_from_bytes(forest_to_bytes(forest), ds)
    q = rng.standard_normal(5)
    for j in (1, 2):
        for i in range(7):
            assert (
                forest.bucket(j, i, q).ids.tolist()
                == loaded.bucket(j, i, q).ids.tolist()
            )


def test_build_validation():
    ds = Dataset.from_bits(np.zeros((2, 4), dtype=np.uint8))
    with pytest.raises(ValueError):
        build_forest(ds, BitSampling(4), K=0, L=1, seed=SEED)
    with pytest.raises(ValueError):
        build_forest(ds, BitSampling(4), K=65, L=1, seed=SEED)
    forest = build_forest(ds, BitSampling(4), K=2, L=1, seed=SEED)
    with pytest.raises(ValueError):
        forest.bucket(1, 3, ds.point(0))
