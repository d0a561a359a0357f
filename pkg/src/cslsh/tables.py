"""A lazily built sequence of independent LSH hash tables and exact
nearest-neighbor search over it by confirmation sampling.

Table i hashes every point with a fresh K_cat-fold concatenation and maps
each concatenated value to its bucket. One draw from the sampling
distribution inspects q's bucket in the next table and returns the bucket's
order-minimum, or a uniformly random point when the bucket is empty, so the
nearest neighbor is always at least as likely to be drawn as any other point.
Running confirmation sampling with t = ceil(log2(1/delta)) over the sequence
then returns the exact nearest neighbor with probability at least 1 - delta
using about (t + 1)/p1 tables in expectation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .confirmation import CsState
from .core import Dataset, RngSeed
from .families import LshFamily, pack_strings


class SequenceExhausted(RuntimeError):
    """Raised when a query needs more tables than the configured maximum."""


@dataclass
class QueryStats:
    """Per-query accounting: tables touched (= samples drawn), candidate
    distance computations, hash evaluations and empty-bucket fallbacks."""

    tables_queried: int = 0
    distance_computations: int = 0
    hash_evaluations: int = 0
    empty_bucket_fallbacks: int = 0

    @property
    def total_work(self) -> int:
        return self.hash_evaluations + self.distance_computations

    def as_dict(self) -> dict:
        return {
            "tables_queried": self.tables_queried,
            "distance_computations": self.distance_computations,
            "hash_evaluations": self.hash_evaluations,
            "empty_bucket_fallbacks": self.empty_bucket_fallbacks,
            "total_work": self.total_work,
        }


class HashTable:
    """One table: K_cat concatenated members and value -> bucket slices."""

    __slots__ = ("index", "members", "values", "order", "buckets")

    def __init__(self, index: int, members, dataset: Dataset):
        self.index = index
        self.members = members
        values = pack_strings(members, dataset)
        order = np.argsort(values, kind="stable")
        self.order = order.astype(np.int64)
        self.values = values[order]
        bounds = np.flatnonzero(np.diff(self.values)) + 1
        starts = np.concatenate(([0], bounds))
        ends = np.concatenate((bounds, [dataset.n]))
        self.buckets = {
            int(self.values[s]): (int(s), int(e)) for s, e in zip(starts, ends)
        }

    def bucket_ids(self, value: int) -> np.ndarray:
        span = self.buckets.get(value)
        if span is None:
            return self.order[:0]
        return self.order[span[0] : span[1]]


@dataclass
class NnResult:
    point: int
    stats: QueryStats
    confirmed: bool
    t: int


class TableSequence:
    """Lazily grown sequence of hash tables over one dataset.

    Table i is seeded from the ("table", i) child of the master seed, so it
    is identical no matter when it is materialized. ``k_cat`` defaults to the
    smallest width whose estimated expected bucket size is at most one.
    """

    def __init__(self, dataset: Dataset, family: LshFamily, k_cat: int | None,
                 l_max: int, seed: RngSeed):
        if l_max < 1:
            raise ValueError("l_max must be >= 1")
        family.check_compatible(dataset)
        self.dataset = dataset
        self.family = family
        self.l_max = l_max
        self.seed = seed
        if k_cat is None:
            k_cat = default_k_cat(dataset, family, seed)
        if k_cat < 1:
            raise ValueError("k_cat must be >= 1")
        self.k_cat = k_cat
        self._tables: dict[int, HashTable] = {}

    def table(self, i: int) -> HashTable:
        """Materialize (or fetch) table i, 1-indexed."""
        if i < 1:
            raise ValueError("table indices start at 1")
        if i > self.l_max:
            raise SequenceExhausted(f"table {i} exceeds l_max={self.l_max}")
        tab = self._tables.get(i)
        if tab is None:
            members = self.family.sample_members(
                self.seed.child("table", i), self.k_cat
            )
            tab = HashTable(i, members, self.dataset)
            self._tables[i] = tab
        return tab

    def built_count(self) -> int:
        return len(self._tables)

    def sample_once(self, q, i: int, rng: np.random.Generator,
                    stats: QueryStats, max_candidates: int | None = None):
        """One draw from the sampling distribution using table i.

        Returns (distance, point id). A nonempty bucket yields its unique
        order-minimum (inspecting at most ``max_candidates`` members, in
        stored order, when a budget is given); an empty bucket yields a
        uniformly random point, which costs one distance computation.
        """
        tab = self.table(i)
        value = 0
        for m in tab.members:
            value = (value << 1) | m.evaluate(q)
        stats.hash_evaluations += self.k_cat
        stats.tables_queried += 1
        ids = tab.bucket_ids(value)
        if len(ids) == 0:
            stats.empty_bucket_fallbacks += 1
            stats.distance_computations += 1
            pid = int(rng.integers(self.dataset.n))
            d = self.dataset.distances_to(q, np.array([pid]))[0]
            return (d.item(), pid)
        if max_candidates is not None and len(ids) > max_candidates:
            ids = ids[:max_candidates]
        stats.distance_computations += len(ids)
        d = self.dataset.distances_to(q, ids)
        if d.dtype.kind == "i":
            best = int(np.argmin(d * self.dataset.n + ids))
        else:
            best = int(np.lexsort((ids, d))[0])
        return (d[best].item(), int(ids[best]))

    def query_nn(self, seq_q, delta: float, seed: RngSeed | None = None) -> NnResult:
        """Exact NN search: confirmation sampling with a fresh table per draw.

        If the sequence is exhausted before t confirmations, the best point
        seen so far is returned with ``confirmed=False``.
        """
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        t = max(1, math.ceil(math.log2(1.0 / delta)))
        q = self.dataset.check_query(seq_q)
        rng = (seed or self.seed.child("query")).generator()
        stats = QueryStats()
        state = CsState(t)
        i = 1
        while True:
            if i > self.l_max:
                pid = state.best[1] if state.best is not None else -1
                return NnResult(pid, stats, False, t)
            sample = self.sample_once(q, i, rng, stats)
            if state.update(sample):
                return NnResult(state.best[1], stats, True, t)
            i += 1

    def query_nn_budgeted(self, seq_q, delta: float, L: int,
                          seed: RngSeed | None = None) -> NnResult:
        """Fixed-table variant: rounds r = 1..ceil(log2 n) re-run confirmation
        sampling over tables 1..L with a per-table candidate budget of 2**r,
        stopping at the first confirmed round. Failure probability grows to
        at most delta * ceil(log2 n)."""
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if L > self.l_max:
            raise ValueError("L exceeds l_max")
        t = max(1, math.ceil(math.log2(1.0 / delta)))
        q = self.dataset.check_query(seq_q)
        rng = (seed or self.seed.child("query")).generator()
        stats = QueryStats()
        rounds = max(1, math.ceil(math.log2(max(2, self.dataset.n))))
        best = None
        for r in range(1, rounds + 1):
            budget = 2**r
            state = CsState(t)
            for i in range(1, L + 1):
                sample = self.sample_once(q, i, rng, stats, max_candidates=budget)
                if best is None or sample < best:
                    best = sample
                if state.update(sample):
                    return NnResult(state.best[1], stats, True, t)
        return NnResult(best[1] if best else -1, stats, False, t)


def default_k_cat(dataset: Dataset, family: LshFamily, seed: RngSeed,
                  sample_pairs: int = 256, cap: int = 64) -> int:
    """Smallest concatenation width whose expected bucket size, estimated
    from sampled data-to-data distances, is at most one."""
    rng = seed.child("k-cat").generator()
    m = min(sample_pairs, dataset.n * (dataset.n - 1) // 2 or 1)
    a = rng.integers(dataset.n, size=m)
    b = rng.integers(dataset.n, size=m)
    keep = a != b
    if not keep.any():
        return 1
    a, b = a[keep], b[keep]
    if dataset.metric.value == "hamming":
        d = np.bitwise_count(dataset.words[a] ^ dataset.words[b]).sum(axis=1)
    else:
        d = np.array(
            [
                float(
                    np.linalg.norm(dataset.reals[x] - dataset.reals[y])
                    if dataset.metric.value == "euclidean"
                    else _angle(dataset.reals[x], dataset.reals[y])
                )
                for x, y in zip(a, b)
            ]
        )
    p = family.collision_probability_many(d)
    for k in range(1, cap + 1):
        if dataset.n * float(np.mean(p**k)) <= 1.0:
            return k
    return cap


def _angle(x, y):
    cos = float(x @ y / (np.linalg.norm(x) * np.linalg.norm(y)))
    return math.acos(min(1.0, max(-1.0, cos)))
