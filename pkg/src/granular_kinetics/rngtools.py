"""Seeded RNG streams and mergeable statistics.

Every stochastic routine in the package draws from a Generator derived
here.  Streams are named: ``derive_rng(master, "dsmc", "collisions")``
always yields the same stream for the same master seed, independent of
what other streams were created, so runs are reproducible and estimator
work can be split across streams and merged in index order.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


def _token(name: str | int) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name) & 0xFFFFFFFF
    digest = hashlib.sha256(str(name).encode()).digest()
    return int.from_bytes(digest[:4], "little")


def seed_sequence(master_seed: int, *path: str | int) -> np.random.SeedSequence:
    """SeedSequence for a named stream under ``master_seed``."""
    return np.random.SeedSequence(entropy=int(master_seed),
                                  spawn_key=tuple(_token(p) for p in path))


def derive_rng(master_seed: int, *path: str | int) -> np.random.Generator:
    """Independent, reproducible Generator for a named stream."""
    return np.random.default_rng(seed_sequence(master_seed, *path))


def split_rngs(rng_or_seed, k: int, *path: str | int) -> list[np.random.Generator]:
    """``k`` child generators; deterministic in (seed, path, index)."""
    if isinstance(rng_or_seed, np.random.Generator):
        # spawn (numpy >= 1.25) keeps child streams independent
        return [np.random.default_rng(s) for s in rng_or_seed.bit_generator.seed_seq.spawn(k)]
    return [derive_rng(int(rng_or_seed), *path, i) for i in range(k)]


@dataclass
class SeedLineage:
    """Provenance record attached to ensembles and reports."""

    master_seed: int
    path: tuple = ()

    def child(self, *names: str | int) -> "SeedLineage":
        return SeedLineage(self.master_seed, self.path + names)

    def rng(self) -> np.random.Generator:
        return derive_rng(self.master_seed, *self.path)

    def as_dict(self) -> dict:
        return {"master_seed": self.master_seed, "path": list(self.path)}


@dataclass
class Welford:
    """Streaming mean / variance with exact pairwise merge.

    The merge lets per-stream partial sums combine in index order, so the
    final estimate does not depend on execution interleaving.
    """

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def update(self, values: np.ndarray) -> "Welford":
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            return self
        n_b = values.size
        mean_b = float(values.mean())
        m2_b = float(((values - mean_b) ** 2).sum())
        self.merge(Welford(n_b, mean_b, m2_b))
        return self

    def merge(self, other: "Welford") -> "Welford":
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        self.m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        self.mean = self.mean + delta * other.count / n
        self.count = n
        return self

    @property
    def variance(self) -> float:
        if self.count < 2:
            return float("nan")
        return self.m2 / (self.count - 1)

    @property
    def std_error(self) -> float:
        if self.count < 2:
            return float("nan")
        return float(np.sqrt(max(self.variance, 0.0) / self.count))
