"""The fully adaptive, parameter-free LSH Forest query.

The query operates on R = Theta(log n) independent forests of L' trees each
(L' a power of two). For j = 1, 2, 4, ..., L' it measures collision counts
top-down to find the smallest level i at which the first j trees stay within
a 10*i*j collision budget in at least half of the forests, then runs
budget-capped confirmation sampling at levels i and i-1 in every forest. It
reports the closest point seen as soon as the sampling terminates in a
quarter of the forests at either level. If the tree budget runs out first, a
bottom-up phase sweeps the forests in lock-step, dropping one level (and
restarting the sampling) whenever half of the searches have consumed their
last tree; level 0 scans the whole dataset, so termination is certain.

Nothing here ever evaluates a collision probability; the only structural
requirement is that the family's collision probability is non-increasing in
distance.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .confirmation import CsState
from .core import CostCounters, Dataset, FormatError, Metric, RngSeed
from .families import LshFamily
from .forest import Forest, build_forest, forest_from_bytes, forest_to_bytes


@dataclass(frozen=True)
class AdaptiveConfig:
    """Tunable constants; the defaults are the algorithm's own."""

    c_forests: float = 8.0        # R = max(1, ceil(c_forests * ln n))
    t: int = 3                    # confirmations per sampling instance
    collision_cap: int = 10       # budget multiplier: cap = collision_cap*i*j
    terminate_quorum: float = 0.25
    advance_quorum: float = 0.5


def forests_for(n: int, config: AdaptiveConfig) -> int:
    return max(1, math.ceil(config.c_forests * math.log(max(2, n))))


def trees_per_forest(L: int, R: int) -> int:
    """Largest power of two at most L / R, but at least 1."""
    ratio = max(1, L // R)
    return 1 << (ratio.bit_length() - 1)


class ForestEnsemble:
    """R independent forests sharing one dataset, family and depth K."""

    def __init__(self, dataset: Dataset, family: LshFamily, K: int, L: int,
                 seed: RngSeed, config: AdaptiveConfig = AdaptiveConfig(),
                 l_prime: int | None = None, forests: list[Forest] | None = None):
        self.dataset = dataset
        self.family = family
        self.K = K
        self.L = L
        self.seed = seed
        self.config = config
        self.R = forests_for(dataset.n, config)
        if l_prime is None:
            l_prime = trees_per_forest(L, self.R)
        if l_prime < 1 or (l_prime & (l_prime - 1)) != 0:
            raise ValueError("trees per forest must be a positive power of two")
        self.l_prime = l_prime
        if forests is None:
            forests = [
                build_forest(dataset, family, K, l_prime, seed.child("forest", r))
                for r in range(self.R)
            ]
        self.forests = forests

    def total_trees(self) -> int:
        return self.R * self.l_prime


def build_ensemble(dataset: Dataset, family: LshFamily, K: int, L: int,
                   seed: RngSeed, config: AdaptiveConfig = AdaptiveConfig(),
                   l_prime: int | None = None) -> ForestEnsemble:
    return ForestEnsemble(dataset, family, K, L, seed, config, l_prime)


@dataclass
class AdaptiveResult:
    point: int
    counters: CostCounters
    level: int          # level at which the terminating quorum was met
    phase: str          # "for-loop" or "bottom-up"
    rounds_spread: int  # max lock-step imbalance observed (fairness check)


class _TreeCursor:
    """Per-(query, tree) lazy state: q's hash bits and the walk down q's path.

    Hash bits are evaluated one level at a time (each charged once) and the
    node path is extended on demand, so a scan to level i costs exactly i new
    hash evaluations and at most i + 1 node visits, however often the tree is
    revisited at other levels.
    """

    __slots__ = ("tree", "q", "counters", "bits", "nbits", "path", "plen", "leaf")

    def __init__(self, tree, q, counters: CostCounters):
        self.tree = tree
        self.q = q
        self.counters = counters
        self.bits = []
        self.nbits = 0
        self.path = [0]
        self.plen = 1
        self.leaf = False
        counters.nodes_visited += 1

    def _bit(self, d: int) -> int:
        while self.nbits <= d:
            self.bits.append(self.tree.members[self.nbits].evaluate(self.q))
            self.nbits += 1
            self.counters.hash_evaluations += 1
        return self.bits[d]

    def _extend(self, i: int) -> None:
        tree = self.tree
        while self.plen <= i and not self.leaf:
            node = self.path[-1]
            c0 = tree.child0[node]
            c1 = tree.child1[node]
            if c0 == -1 and c1 == -1:
                self.leaf = True
                break
            nxt = c1 if self._bit(self.plen - 1) else c0
            if nxt == -1:
                self.path.append(-1)
                self.plen += 1
                self.leaf = True
                break
            self.path.append(nxt)
            self.plen += 1
            self.counters.nodes_visited += 1

    def _node_at(self, i: int) -> int:
        """Node covering q's level-i bucket, or -1 when the bucket is empty.
        A walk that stopped at a single-point leaf above level i checks the
        stored string's remaining bits against q's."""
        self._extend(i)
        if self.plen > i:
            return self.path[i]
        node = self.path[-1]
        if node == -1:
            return -1
        tree = self.tree
        if tree.end[node] - tree.start[node] == 1:
            s = int(tree.sorted_strings[tree.start[node]])
            for d in range(self.plen - 1, i):
                if ((s >> (tree.K - 1 - d)) & 1) != self._bit(d):
                    return -1
        return node

    def count(self, i: int) -> int:
        if i == 0:
            return self.tree.n
        node = self._node_at(i)
        if node == -1:
            return 0
        return int(self.tree.end[node] - self.tree.start[node])

    def bucket(self, i: int) -> np.ndarray:
        if i == 0:
            return self.tree.order
        node = self._node_at(i)
        if node == -1:
            return self.tree.order[:0]
        return self.tree.order[self.tree.start[node] : self.tree.end[node]]


class _QueryState:
    """Everything owned by one adaptive query."""

    def __init__(self, ensemble: ForestEnsemble, q, seed: RngSeed):
        self.ensemble = ensemble
        self.dataset = ensemble.dataset
        self.q = ensemble.dataset.check_query(q)
        self.counters = CostCounters()
        self.cursors = [
            [None] * ensemble.l_prime for _ in range(ensemble.R)
        ]
        self.rngs = [
            seed.child("forest", r).generator() for r in range(ensemble.R)
        ]
        self.best_key = None  # (distance, id) over every candidate inspected
        self.rounds_spread = 0
        ds = ensemble.dataset
        if ds.metric is Metric.HAMMING and ds.words.shape[1] == 1:
            self._words = ds.words[:, 0]
            self._qword = np.uint64(self.q[0])
        else:
            self._words = None
        self._idshift = ds.id_bits

    def cursor(self, f: int, tau: int) -> _TreeCursor:
        cur = self.cursors[f][tau]
        if cur is None:
            cur = _TreeCursor(self.ensemble.forests[f].trees[tau], self.q, self.counters)
            self.cursors[f][tau] = cur
        return cur

    def _track(self, key) -> None:
        if self.best_key is None or key < self.best_key:
            self.best_key = key

    def inspect_bucket(self, ids: np.ndarray, limit: int | None = None):
        """Distance-scan a bucket (optionally truncated) and return the key
        of its minimum under the query order, or None for an empty scan.

        Keys are packed ints ``(distance << id_bits) | id`` for single-word
        Hamming data and (distance, id) tuples otherwise; both compare
        lexicographically by (distance, id).
        """
        m = len(ids)
        truncated = False
        if limit is not None and m > limit:
            ids = ids[:limit]
            m = limit
            truncated = True
        if m == 0:
            return None, 0, truncated
        c = self.counters
        c.collisions_inspected += m
        c.buckets_opened += 1
        if self._words is not None:
            if m < 40:
                words = self._words
                qw = self._qword
                shift = self._idshift
                best = None
                for pid in ids:
                    k = (int(words[pid] ^ qw).bit_count() << shift) | int(pid)
                    if best is None or k < best:
                        best = k
            else:
                d = np.bitwise_count(self._words[ids] ^ self._qword).astype(np.int64)
                keys = (d << self._idshift) | ids
                best = int(keys.min())
            self._track(best)
            return best, m, truncated
        d = self.dataset.distances_to(self.q, ids)
        if d.dtype.kind == "i":
            pos = int(np.argmin(d * self.dataset.n + ids))
        else:
            pos = int(np.lexsort((ids, d))[0])
        key = (d[pos].item(), int(ids[pos]))
        self._track(key)
        return key, m, truncated

    def draw_uniform(self, f: int):
        """Empty-bucket fallback: a uniformly random point, one distance."""
        pid = int(self.rngs[f].integers(self.dataset.n))
        c = self.counters
        c.collisions_inspected += 1
        c.buckets_opened += 1
        if self._words is not None:
            key = (int(self._words[pid] ^ self._qword).bit_count() << self._idshift) | pid
        else:
            d = self.dataset.distances_to(self.q, np.array([pid]))[0].item()
            key = (d, pid)
        self._track(key)
        return key

    def best_point(self) -> int:
        key = self.best_key
        if key is None:
            return -1
        if isinstance(key, tuple):
            return key[1]
        return key & ((1 << self._idshift) - 1)


def choose_level(state: _QueryState, j: int) -> int:
    """Smallest level i such that trees 1..j stay within collision_cap*i*j
    collisions in at least half of the forests; K when none qualifies.

    The scan proceeds top-down one level at a time across all forests and
    stops at the first level where half qualify, so no cursor descends past
    the answer: O(i * j) node visits and hash evaluations per forest.
    Qualification is monotone in i (counts fall, budgets grow), so the
    level-synchronous scan returns the same level a per-forest scan would.
    """
    ens = state.ensemble
    cap_mult = ens.config.collision_cap * j
    need = math.ceil(ens.R / 2)
    cursors = [[state.cursor(f, tau) for tau in range(j)] for f in range(ens.R)]
    for i in range(1, ens.K + 1):
        budget = cap_mult * i
        qualifying = 0
        for forest_cursors in cursors:
            total = 0
            for cur in forest_cursors:
                total += cur.count(i)
                if total > budget:
                    break
            if total <= budget:
                qualifying += 1
        if qualifying >= need:
            return i
    return ens.K


@dataclass
class LevelPairStatus:
    """Per-forest outcome of the two budget-capped sampling instances."""

    terminated_hi: bool = False
    terminated_lo: bool = False

    @property
    def terminated(self) -> bool:
        return self.terminated_hi or self.terminated_lo


class _CappedRun:
    """One budget-capped confirmation-sampling instance inside a forest."""

    __slots__ = ("state", "f", "level", "cap", "cs", "collisions", "done", "terminated")

    def __init__(self, state: _QueryState, f: int, level: int, cap: int, t: int):
        self.state = state
        self.f = f
        self.level = level
        self.cap = cap
        self.cs = CsState(t)
        self.collisions = 0
        self.done = False
        self.terminated = False

    def feed_tree(self, tau: int) -> None:
        """Consume the bucket of tree ``tau`` (0-based) at this run's level."""
        if self.done:
            return
        state = self.state
        remaining = self.cap - self.collisions
        if remaining <= 0:
            self.done = True
            return
        if self.level == 0:
            ids = state.ensemble.forests[self.f].trees[tau].order
        else:
            ids = state.cursor(self.f, tau).bucket(self.level)
        if len(ids) == 0:
            key = state.draw_uniform(self.f)
            self.collisions += 1
        else:
            key, used, truncated = state.inspect_bucket(ids, remaining)
            self.collisions += used
            if truncated:
                # Budget ran out mid-bucket: candidates seen still feed the
                # global best, but the draw is void and the run is spent.
                self.done = True
                return
        if self.cs.update(key):
            self.done = True
            self.terminated = True


def run_level_pair(state: _QueryState, i: int, j: int) -> list[LevelPairStatus]:
    """In each forest, run capped confirmation sampling at levels i and i-1
    over the buckets of trees 1..j, interleaving the two levels."""
    ens = state.ensemble
    cfg = ens.config
    cap = cfg.collision_cap * i * j
    statuses = []
    for f in range(ens.R):
        hi = _CappedRun(state, f, i, cap, cfg.t)
        lo = _CappedRun(state, f, i - 1, cap, cfg.t)
        for tau in range(j):
            hi.feed_tree(tau)
            lo.feed_tree(tau)
            if hi.done and lo.done:
                break
        statuses.append(LevelPairStatus(hi.terminated, lo.terminated))
    return statuses


def quorum_check(statuses: list[LevelPairStatus], fraction: float = 0.25) -> bool:
    """True when a quarter of the forests terminated at the upper level or a
    quarter terminated at the lower level (quorums are per level)."""
    need = math.ceil(len(statuses) * fraction)
    hi = sum(1 for s in statuses if s.terminated_hi)
    lo = sum(1 for s in statuses if s.terminated_lo)
    return hi >= need or lo >= need


def bottom_up_phase(state: _QueryState, start_level: int) -> int:
    """Lock-step sweep: one bucket per forest per round at the current level;
    drop a level (restarting every sampling instance) once half the searches
    have consumed tree L', and stop once a quarter terminate. At level 0 every
    bucket is the whole dataset, so termination is certain.

    Returns the level at which the terminating quorum was met.
    """
    ens = state.ensemble
    cfg = ens.config
    R = ens.R
    lprime = ens.l_prime
    need_term = math.ceil(R * cfg.terminate_quorum)
    need_adv = math.ceil(R * cfg.advance_quorum)
    level = max(0, start_level)
    while True:
        runs = [_CappedRun(state, f, level, 2**62, cfg.t) for f in range(R)]
        taus = [0] * R
        while True:
            advanced = False
            for f in range(R):
                run = runs[f]
                if run.done or (level > 0 and taus[f] >= lprime):
                    continue
                run.feed_tree(taus[f] % lprime)
                taus[f] += 1
                advanced = True
            live = [
                taus[f]
                for f in range(R)
                if not runs[f].done and (level == 0 or taus[f] < lprime)
            ]
            if live:
                spread = max(live) - min(live)
                if spread > state.rounds_spread:
                    state.rounds_spread = spread
            terminated = sum(1 for r in runs if r.terminated)
            if terminated >= need_term:
                return level
            if level > 0:
                exhausted = sum(
                    1 for f in range(R) if not runs[f].terminated and taus[f] >= lprime
                )
                if exhausted >= need_adv:
                    break  # drop a level, start everything over
                if not advanced:
                    break  # nothing can move: treat as exhausted
            elif not advanced:
                # Level 0 cannot stall: every run draws the full dataset and
                # terminates after t+1 draws.
                return level
        level = max(0, level - 1)


def adaptive_nearest_neighbor(ensemble: ForestEnsemble, q,
                              seed: RngSeed | None = None) -> AdaptiveResult:
    """Run the adaptive query and return the closest point seen at the
    moment the terminating quorum was met, with full work accounting."""
    if seed is None:
        seed = ensemble.seed.child("query")
    state = _QueryState(ensemble, q, seed)
    j = 1
    while True:
        i = choose_level(state, j)
        statuses = run_level_pair(state, i, j)
        if quorum_check(statuses, ensemble.config.terminate_quorum):
            return AdaptiveResult(
                state.best_point(), state.counters, i, "for-loop", state.rounds_spread
            )
        if j >= ensemble.l_prime:
            level = bottom_up_phase(state, i - 1)
            return AdaptiveResult(
                state.best_point(), state.counters, level, "bottom-up",
                state.rounds_spread,
            )
        j *= 2


# ---------------------------------------------------------------------------
# Ensemble serialization: a counted sequence of forest payloads.

_ENS_MAGIC = b"CSLSHENS"
_ENS_VERSION = 1


def ensemble_to_bytes(ensemble: ForestEnsemble) -> bytes:
    parts = [
        _ENS_MAGIC,
        struct.pack(
            "<IIIIdIddQ",
            _ENS_VERSION,
            ensemble.R,
            ensemble.l_prime,
            ensemble.K,
            ensemble.config.c_forests,
            ensemble.config.t,
            ensemble.config.terminate_quorum,
            ensemble.config.advance_quorum,
            ensemble.L,
        ),
        struct.pack("<I", ensemble.config.collision_cap),
    ]
    for forest in ensemble.forests:
        blob = forest_to_bytes(forest)
        parts.append(struct.pack("<Q", len(blob)))
        parts.append(blob)
    return b"".join(parts)


def ensemble_from_bytes(data: bytes, dataset: Dataset) -> ForestEnsemble:
    if data[:8] != _ENS_MAGIC:
        raise FormatError("not a serialized ensemble (bad magic)")
    head = struct.Struct("<IIIIdIddQ")
    version, R, l_prime, K, c_forests, t, tq, aq, L = head.unpack_from(data, 8)
    off = 8 + head.size
    (collision_cap,) = struct.unpack_from("<I", data, off)
    off += 4
    if version != _ENS_VERSION:
        raise FormatError(f"unsupported ensemble format version {version}")
    config = AdaptiveConfig(c_forests, t, collision_cap, tq, aq)
    forests = []
    seed = None
    for _ in range(R):
        (blen,) = struct.unpack_from("<Q", data, off)
        off += 8
        forest = forest_from_bytes(data[off : off + blen], dataset)
        off += blen
        forests.append(forest)
        seed = seed or forest.seed
    if off != len(data):
        raise FormatError("trailing bytes after ensemble payload")
    base_seed = RngSeed(seed.master, seed.path[:-1]) if seed.path else seed
    ens = ForestEnsemble(
        dataset, forests[0].family, K, L, base_seed, config,
        l_prime=l_prime, forests=forests,
    )
    if ens.R != R:
        ens.R = R  # honor the serialized forest count
        ens.forests = forests
    return ens


def save_ensemble(ensemble: ForestEnsemble, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(ensemble_to_bytes(ensemble))


def load_ensemble(path: str, dataset: Dataset) -> ForestEnsemble:
    with open(path, "rb") as fh:
        return ensemble_from_bytes(fh.read(), dataset)
