"""The LSH Forest data structure: prefix tries over concatenated hash strings.

Each of the L trees hashes every point to a K-bit string and stores the set
of strings in a plain (uncompressed) binary trie. A point's pointer lives at
the node for the shortest prefix of its string that is unique in the tree, or
at the depth-K node when no unique prefix exists, so exact duplicates are
first-class. Every node keeps its subtree point count, which makes the
collision count |S_{i,j}(q)| an O(i) walk and bucket retrieval O(i + bucket).

Internally a tree is a sorted array of packed strings plus flat node arrays
(start/end into the sorted order and two child pointers); a node's points are
exactly the contiguous slice [start, end) of the sorted order, so subtree
counts are free and bucket enumeration is a slice.
"""

from __future__ import annotations

import struct

import numpy as np

from .core import CostCounters, Dataset, FormatError, Metric, RngSeed
from .families import (
    BitSampling,
    HashSpec,
    LshFamily,
    SignRandomProjection,
    pack_strings,
)

_EMPTY_IDS = np.empty(0, dtype=np.int64)


def _build_nodes(sorted_strings: np.ndarray, K: int):
    """Flat node arrays for the trie over pre-sorted packed strings.

    Children are materialized level by level with vectorized run splitting;
    a run of equal level-d prefixes becomes a node when its parent run held
    at least two points (the root always exists).
    """
    n = sorted_strings.shape[0]
    S = sorted_strings
    starts = [np.array([0], dtype=np.int32)]
    ends = [np.array([n], dtype=np.int32)]
    child0 = []
    child1 = []
    lvl_s = starts[0].astype(np.int64)
    lvl_e = ends[0].astype(np.int64)
    base = 1
    for d in range(K):
        c0 = np.full(lvl_s.size, -1, dtype=np.int32)
        c1 = np.full(lvl_s.size, -1, dtype=np.int32)
        active = (lvl_e - lvl_s) >= 2
        if not active.any():
            child0.append(c0)
            child1.append(c1)
            lvl_s = np.empty(0, dtype=np.int64)
            lvl_e = np.empty(0, dtype=np.int64)
            break
        a_pos = np.flatnonzero(active)
        a_s = lvl_s[a_pos]
        a_e = lvl_e[a_pos]
        bit = ((S >> np.uint64(K - 1 - d)) & np.uint64(1)).astype(np.int64)
        zeros = np.concatenate(([0], np.cumsum(1 - bit)))
        mid = a_s + (zeros[a_e] - zeros[a_s])
        has_l = mid > a_s
        has_r = mid < a_e
        counts = has_l.astype(np.int64) + has_r.astype(np.int64)
        off = np.concatenate(([0], np.cumsum(counts)[:-1]))
        c0[a_pos] = np.where(has_l, base + off, -1).astype(np.int32)
        c1[a_pos] = np.where(has_r, base + off + has_l, -1).astype(np.int32)
        child0.append(c0)
        child1.append(c1)
        total = int(counts.sum())
        ns = np.empty(total, dtype=np.int64)
        ne = np.empty(total, dtype=np.int64)
        lpos = off[has_l]
        ns[lpos] = a_s[has_l]
        ne[lpos] = mid[has_l]
        rpos = (off + has_l)[has_r]
        ns[rpos] = mid[has_r]
        ne[rpos] = a_e[has_r]
        starts.append(ns.astype(np.int32))
        ends.append(ne.astype(np.int32))
        lvl_s = ns
        lvl_e = ne
        base += total
    # Remaining levels (or the depth-K level) are all leaves.
    for _ in range(len(starts) - len(child0)):
        child0.append(np.full(starts[len(child0)].size, -1, dtype=np.int32))
        child1.append(np.full(starts[len(child1)].size, -1, dtype=np.int32))
    return (
        np.concatenate(starts),
        np.concatenate(ends),
        np.concatenate(child0),
        np.concatenate(child1),
    )


class LevelCursor:
    """Enumeration handle over one prefix bucket S_{i,j}(q).

    ``ids`` lists each member exactly once, in trie order (depth-first among
    leaves, by point id inside a leaf). ``node_visits`` counts the trie nodes
    touched to locate the bucket.
    """

    __slots__ = ("ids", "node_visits", "tree", "level")

    def __init__(self, ids: np.ndarray, node_visits: int, tree: int, level: int):
        self.ids = ids
        self.node_visits = node_visits
        self.tree = tree
        self.level = level

    def __iter__(self):
        return iter(self.ids)

    def __len__(self):
        return len(self.ids)


class ForestTrie:
    """One tree of the forest: K member hashes, the sorted string array, and
    the flat trie node arrays."""

    __slots__ = (
        "index",
        "K",
        "n",
        "members",
        "order",
        "sorted_strings",
        "start",
        "end",
        "child0",
        "child1",
    )

    def __init__(self, index: int, K: int, members: list[HashSpec], strings: np.ndarray):
        self.index = index
        self.K = K
        self.n = strings.shape[0]
        self.members = members
        order = np.argsort(strings, kind="stable")
        self.order = order.astype(np.int64)
        self.sorted_strings = strings[order]
        self.start, self.end, self.child0, self.child1 = _build_nodes(
            self.sorted_strings, K
        )

    def node_count(self) -> int:
        return self.start.shape[0]

    def query_bits(self, q, i: int) -> list[int]:
        """Hash values of q for levels 1..i (i member evaluations)."""
        return [self.members[d].evaluate(q) for d in range(i)]

    def _descend(self, bits, i: int):
        """Walk q's path to depth i. Returns (kind, node, depth, visits) with
        kind 'range' (internal/at-depth), 'leaf' (stopped early) or 'empty'."""
        node = 0
        d = 0
        visits = 1
        child0 = self.child0
        child1 = self.child1
        while d < i:
            c0 = child0[node]
            c1 = child1[node]
            if c0 == -1 and c1 == -1:
                return "leaf", node, d, visits
            nxt = c1 if bits[d] else c0
            if nxt == -1:
                return "empty", node, d, visits
            node = nxt
            d += 1
            visits += 1
        return "range", node, d, visits

    def _bucket_from_walk(self, kind, node, depth, bits, i):
        if kind == "empty":
            return _EMPTY_IDS
        s = self.start[node]
        e = self.end[node]
        if kind == "range":
            return self.order[s:e]
        # Stopped at a leaf above level i: a single point whose stored string
        # must still match q's length-i prefix (depth-K leaves hit 'range').
        qpref = 0
        for d in range(i):
            qpref = (qpref << 1) | bits[d]
        spref = int(self.sorted_strings[s]) >> (self.K - i)
        if spref == qpref:
            return self.order[s:e]
        return _EMPTY_IDS

    def bucket(self, q, i: int, counters: CostCounters | None = None) -> LevelCursor:
        """All points whose length-i hash prefix matches q's (level 0 = all)."""
        if not 0 <= i <= self.K:
            raise ValueError(f"level out of range [0, {self.K}]")
        if i == 0:
            if counters is not None:
                counters.nodes_visited += 1
                counters.buckets_opened += 1
            return LevelCursor(self.order, 1, self.index, 0)
        bits = self.query_bits(q, i)
        kind, node, depth, visits = self._descend(bits, i)
        ids = self._bucket_from_walk(kind, node, depth, bits, i)
        if counters is not None:
            counters.hash_evaluations += i
            counters.nodes_visited += visits
            counters.buckets_opened += 1
        return LevelCursor(ids, visits, self.index, i)

    def collision_count(self, q, i: int, counters: CostCounters | None = None) -> int:
        """|S_{i,j}(q)| from subtree counts, without enumerating the bucket."""
        if not 0 <= i <= self.K:
            raise ValueError(f"level out of range [0, {self.K}]")
        if i == 0:
            return self.n
        bits = self.query_bits(q, i)
        kind, node, depth, visits = self._descend(bits, i)
        if counters is not None:
            counters.hash_evaluations += i
            counters.nodes_visited += visits
        if kind == "empty":
            return 0
        if kind == "range":
            return int(self.end[node] - self.start[node])
        qpref = 0
        for d in range(i):
            qpref = (qpref << 1) | bits[d]
        spref = int(self.sorted_strings[self.start[node]]) >> (self.K - i)
        return int(self.end[node] - self.start[node]) if spref == qpref else 0

    def stored_depth(self, point_id: int) -> int:
        """Depth of the leaf holding a point (its shortest unique prefix, or
        K when none exists)."""
        pos = int(np.flatnonzero(self.order == point_id)[0])
        node = 0
        d = 0
        s = int(self.sorted_strings[pos])
        while True:
            c0 = self.child0[node]
            c1 = self.child1[node]
            if c0 == -1 and c1 == -1:
                return d
            bit = (s >> (self.K - 1 - d)) & 1
            node = c1 if bit else c0
            d += 1


class Forest:
    """L independent tries of depth K over one dataset."""

    def __init__(self, dataset: Dataset, family: LshFamily, K: int, L: int,
                 seed: RngSeed, trees: list[ForestTrie]):
        self.dataset = dataset
        self.family = family
        self.K = K
        self.L = L
        self.seed = seed
        self.trees = trees

    def bucket(self, j: int, i: int, q, counters: CostCounters | None = None) -> LevelCursor:
        """Bucket S_{i,j}(q); trees are 1-indexed."""
        return self.trees[j - 1].bucket(q, i, counters)

    def collision_count(self, j: int, i: int, q, counters: CostCounters | None = None) -> int:
        return self.trees[j - 1].collision_count(q, i, counters)


def build_forest(dataset: Dataset, family: LshFamily, K: int, L: int,
                 seed: RngSeed) -> Forest:
    """Build L tries of depth K; tree j draws its members from the ("tree", j)
    child seed so the structure is deterministic in the seed."""
    if K < 1 or L < 1:
        raise ValueError("K and L must be >= 1")
    if K > 64:
        raise ValueError("packed strings support at most K = 64 levels")
    family.check_compatible(dataset)
    trees = []
    for j in range(L):
        members = family.sample_members(seed.child("tree", j), K)
        strings = pack_strings(members, dataset)
        trees.append(ForestTrie(j, K, members, strings))
    return Forest(dataset, family, K, L, seed, trees)


def expected_collisions(dataset: Dataset, family: LshFamily, q, i: int) -> float:
    """Analytic expected bucket size at level i: sum over points of the
    collision probability raised to i."""
    if i < 0:
        raise ValueError("level must be nonnegative")
    family.check_compatible(dataset)
    d = dataset.distances_to(dataset.check_query(q))
    p = family.collision_probability_many(d)
    return float(np.sum(p**i)) if i else float(dataset.n)


# ---------------------------------------------------------------------------
# Serialization: versioned binary layout, little-endian throughout.

_MAGIC = b"CSLSHFOR"
_VERSION = 1
_METRIC_CODE = {Metric.HAMMING: 0, Metric.EUCLIDEAN: 1, Metric.ANGULAR: 2}
_METRIC_FROM = {v: k for k, v in _METRIC_CODE.items()}
_FAMILY_CODE = {"bit-sampling": 0, "sign-random-projection": 1}
_FAMILY_FROM = {v: k for k, v in _FAMILY_CODE.items()}


def _seed_bytes(seed: RngSeed) -> bytes:
    out = [struct.pack("<QI", seed.master & 0xFFFFFFFFFFFFFFFF, len(seed.path))]
    for tag, idx in seed.path:
        raw = tag.encode()
        out.append(struct.pack("<H", len(raw)) + raw + struct.pack("<Q", idx))
    return b"".join(out)


def _read_seed(buf: memoryview, off: int):
    master, plen = struct.unpack_from("<QI", buf, off)
    off += 12
    path = []
    for _ in range(plen):
        (tlen,) = struct.unpack_from("<H", buf, off)
        off += 2
        tag = bytes(buf[off : off + tlen]).decode()
        off += tlen
        (idx,) = struct.unpack_from("<Q", buf, off)
        off += 8
        path.append((tag, idx))
    return RngSeed(master, tuple(path)), off


def forest_to_bytes(forest: Forest) -> bytes:
    header = _MAGIC + struct.pack(
        "<IQIBBII",
        _VERSION,
        forest.dataset.n,
        forest.dataset.dim,
        _METRIC_CODE[forest.dataset.metric],
        _FAMILY_CODE[forest.family.kind],
        forest.K,
        forest.L,
    )
    parts = [header, _seed_bytes(forest.seed)]
    for tree in forest.trees:
        if forest.family.kind == "bit-sampling":
            params = np.array([m.param for m in tree.members], dtype="<u4")
        else:
            params = np.stack([m.param for m in tree.members]).astype("<f8")
        parts.append(params.tobytes())
        parts.append(tree.order.astype("<i8").tobytes())
        parts.append(tree.sorted_strings.astype("<u8").tobytes())
        parts.append(struct.pack("<Q", tree.node_count()))
        for arr in (tree.start, tree.end, tree.child0, tree.child1):
            parts.append(arr.astype("<i4").tobytes())
    return b"".join(parts)


def forest_from_bytes(data: bytes, dataset: Dataset) -> Forest:
    buf = memoryview(data)
    if bytes(buf[:8]) != _MAGIC:
        raise FormatError("not a serialized forest (bad magic)")
    version, n, dim, mcode, fcode, K, L = struct.unpack_from("<IQIBBII", buf, 8)
    if version != _VERSION:
        raise FormatError(f"unsupported forest format version {version}")
    off = 8 + struct.calcsize("<IQIBBII")
    if n != dataset.n or dim != dataset.dim or _METRIC_FROM[mcode] is not dataset.metric:
        raise FormatError("forest does not match the provided dataset")
    family_kind = _FAMILY_FROM[fcode]
    if family_kind == "bit-sampling":
        family: LshFamily = BitSampling(dim)
    else:
        family = SignRandomProjection(dim)
    seed, off = _read_seed(buf, off)
    trees = []
    for j in range(L):
        if family_kind == "bit-sampling":
            params = np.frombuffer(buf, dtype="<u4", count=K, offset=off)
            off += 4 * K
            members = [HashSpec(family, int(p)) for p in params]
        else:
            params = np.frombuffer(buf, dtype="<f8", count=K * dim, offset=off)
            off += 8 * K * dim
            members = [
                HashSpec(family, params[k * dim : (k + 1) * dim].copy())
                for k in range(K)
            ]
        order = np.frombuffer(buf, dtype="<i8", count=n, offset=off).copy()
        off += 8 * n
        strings = np.frombuffer(buf, dtype="<u8", count=n, offset=off).copy()
        off += 8 * n
        (ncount,) = struct.unpack_from("<Q", buf, off)
        off += 8
        arrs = []
        for _ in range(4):
            arrs.append(np.frombuffer(buf, dtype="<i4", count=ncount, offset=off).copy())
            off += 4 * ncount
        tree = ForestTrie.__new__(ForestTrie)
        tree.index = j
        tree.K = K
        tree.n = n
        tree.members = members
        tree.order = order
        tree.sorted_strings = strings
        tree.start, tree.end, tree.child0, tree.child1 = arrs
        trees.append(tree)
    if off != len(data):
        raise FormatError("trailing bytes after forest payload")
    return Forest(dataset, family, K, L, seed, trees)


def save_forest(forest: Forest, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(forest_to_bytes(forest))


def load_forest(path: str, dataset: Dataset) -> Forest:
    with open(path, "rb") as fh:
        return forest_from_bytes(fh.read(), dataset)
