"""Monotone locality-sensitive hash families.

Two families ship, both with exact analytic collision probabilities and
single-bit hash values:

* ``BitSampling``  -- Hamming metric; a member is a uniformly drawn coordinate
  index and hashes a point to that bit. Collision probability 1 - d/dim.
* ``SignRandomProjection`` -- Angular metric; a member is a standard-normal
  direction and hashes a point to the sign of the inner product. Collision
  probability 1 - theta/pi.

Concatenations of K members are packed into integers with level 1 in the most
significant of K bits, so a level-i prefix is ``value >> (K - i)``.
"""

from __future__ import annotations

import numpy as np

from .core import Dataset, Metric, RngSeed


class LshFamily:
    """Base class: a seeded, monotone family over one metric and dimension."""

    kind: str
    metric: Metric

    def __init__(self, dim: int):
        if dim <= 0:
            raise ValueError("dimension must be positive")
        self.dim = dim

    def sample_member(self, seed: RngSeed) -> "HashSpec":
        raise NotImplementedError

    def sample_members(self, seed: RngSeed, count: int) -> list["HashSpec"]:
        """Members for levels 0..count-1, derived from per-level child seeds."""
        return [self.sample_member(seed.child("level", k)) for k in range(count)]

    def collision_probability(self, d) -> float:
        raise NotImplementedError

    def collision_probability_many(self, d: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def check_compatible(self, dataset: Dataset) -> None:
        if dataset.metric is not self.metric:
            raise ValueError(
                f"{self.kind} family requires the {self.metric.value} metric"
            )
        if dataset.dim != self.dim:
            raise ValueError("family/dataset dimension mismatch")


class HashSpec:
    """One sampled member of a family; evaluation is pure and deterministic."""

    __slots__ = ("family", "param")

    def __init__(self, family: LshFamily, param):
        self.family = family
        self.param = param

    def evaluate(self, x) -> int:
        """Hash a single raw point (packed words or float row) to a bit."""
        return self.family._evaluate_one(self.param, x)

    def evaluate_dataset(self, dataset: Dataset) -> np.ndarray:
        """Vectorized evaluation over all dataset points, as uint64 0/1."""
        self.family.check_compatible(dataset)
        return self.family._evaluate_all(self.param, dataset)


class BitSampling(LshFamily):
    kind = "bit-sampling"
    metric = Metric.HAMMING

    def sample_member(self, seed: RngSeed) -> HashSpec:
        idx = int(seed.generator().integers(self.dim))
        return HashSpec(self, idx)

    def _evaluate_one(self, idx: int, x) -> int:
        words = np.asarray(x, dtype=np.uint64)
        if words.shape != ((self.dim + 63) // 64,):
            raise ValueError("dimension mismatch")
        return int((words[idx // 64] >> np.uint64(idx % 64)) & np.uint64(1))

    def _evaluate_all(self, idx: int, dataset: Dataset) -> np.ndarray:
        return dataset.coordinate_bits(idx)

    def collision_probability(self, d) -> float:
        if d < 0 or d > self.dim:
            raise ValueError(f"Hamming distance out of range [0, {self.dim}]")
        return 1.0 - d / self.dim

    def collision_probability_many(self, d: np.ndarray) -> np.ndarray:
        d = np.asarray(d, dtype=np.float64)
        if (d < 0).any() or (d > self.dim).any():
            raise ValueError(f"Hamming distance out of range [0, {self.dim}]")
        return 1.0 - d / self.dim


class SignRandomProjection(LshFamily):
    kind = "sign-random-projection"
    metric = Metric.ANGULAR

    def sample_member(self, seed: RngSeed) -> HashSpec:
        direction = seed.generator().standard_normal(self.dim)
        return HashSpec(self, direction)

    def _evaluate_one(self, direction: np.ndarray, x) -> int:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValueError("dimension mismatch")
        return 1 if float(x @ direction) >= 0.0 else 0

    def _evaluate_all(self, direction: np.ndarray, dataset: Dataset) -> np.ndarray:
        return (dataset.reals @ direction >= 0.0).astype(np.uint64)

    def collision_probability(self, theta) -> float:
        if theta < -1e-12 or theta > np.pi + 1e-12:
            raise ValueError("angle out of range [0, pi]")
        theta = min(max(theta, 0.0), np.pi)
        return 1.0 - theta / np.pi

    def collision_probability_many(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        if (theta < -1e-12).any() or (theta > np.pi + 1e-12).any():
            raise ValueError("angle out of range [0, pi]")
        return 1.0 - np.clip(theta, 0.0, np.pi) / np.pi


def make_family(kind: str, dim: int) -> LshFamily:
    if kind in ("bit-sampling", "bitsampling"):
        return BitSampling(dim)
    if kind in ("sign-random-projection", "simhash", "srp"):
        return SignRandomProjection(dim)
    raise ValueError(f"unknown family kind: {kind}")


def family_for_metric(metric: Metric, dim: int) -> LshFamily:
    if metric is Metric.HAMMING:
        return BitSampling(dim)
    if metric is Metric.ANGULAR:
        return SignRandomProjection(dim)
    raise ValueError(f"no shipped family for the {metric.value} metric")


class HashString:
    """A length-K sequence of hash bits packed with level 1 most significant."""

    __slots__ = ("value", "length")

    def __init__(self, value: int, length: int):
        self.value = int(value)
        self.length = length

    def value_at(self, level: int) -> int:
        """The level-th hash value, 1-based."""
        if not 1 <= level <= self.length:
            raise IndexError("level out of range")
        return (self.value >> (self.length - level)) & 1

    def prefix(self, i: int) -> int:
        if not 0 <= i <= self.length:
            raise IndexError("prefix length out of range")
        return self.value >> (self.length - i) if i else 0

    def values(self) -> list[int]:
        return [self.value_at(k) for k in range(1, self.length + 1)]

    def __eq__(self, other):
        return (
            isinstance(other, HashString)
            and self.length == other.length
            and self.value == other.value
        )

    def __hash__(self):
        return hash((self.value, self.length))

    def __repr__(self):
        return f"HashString({format(self.value, f'0{self.length}b')})"


def concat_hash(members: list[HashSpec], x) -> HashString:
    """Evaluate K members on a point and pack the bits into a HashString."""
    if not members:
        raise ValueError("need at least one member")
    k = len(members)
    value = 0
    for lvl, m in enumerate(members):
        value |= m.evaluate(x) << (k - 1 - lvl)
    return HashString(value, k)


def pack_strings(members: list[HashSpec], dataset: Dataset) -> np.ndarray:
    """Packed hash strings for every dataset point, as uint64 (K <= 64)."""
    k = len(members)
    if k > 64:
        raise ValueError("packed strings support at most 64 levels")
    out = np.zeros(dataset.n, dtype=np.uint64)
    for lvl, m in enumerate(members):
        out |= m.evaluate_dataset(dataset) << np.uint64(k - 1 - lvl)
    return out
