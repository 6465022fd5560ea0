"""
Shared helpers: reproducible random streams and small numeric utilities.
"""

from typing import List, Sequence, Tuple

import numpy as np

# Stream purposes, mixed into the seed so that different consumers of the
# same master seed never share a stream.
RUN_STREAM = 0
SCHEDULE_STREAM = 1
INIT_STREAM = 2


def run_seed_key(master_seed: int, run_index: int, purpose: int = RUN_STREAM) -> Tuple[int, int, int]:
    """The (master_seed, purpose, run_index) triple identifying one stream."""
    if master_seed < 0 or run_index < 0 or purpose < 0:
        raise ValueError("seeds, purposes and run indices must be non-negative")
    return (int(master_seed), int(purpose), int(run_index))


def derive_rng(master_seed: int, run_index: int = 0, purpose: int = RUN_STREAM) -> np.random.Generator:
    """
    Build an independent Philox (counter-based, 64-bit) stream for one run.

    Args:
        master_seed: Experiment seed (u64)
        run_index: Index of the run inside the experiment
        purpose: Stream family (runs, schedule draws, initial conditions)

    Returns:
        numpy Generator backed by Philox

    Example:
        rng = derive_rng(2024, run_index=7)
        rng.random()
    """
    master, purpose, index = run_seed_key(master_seed, run_index, purpose)
    seq = np.random.SeedSequence(entropy=master, spawn_key=(purpose, index))
    return np.random.Generator(np.random.Philox(seq))


def as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return derive_rng(int(seed_or_rng))


def strictly_increasing(values: Sequence[float]) -> bool:
    return all(b > a for a, b in zip(values, values[1:]))


class CumulativeTable:
    """
    Fenwick tree over non-negative weights.

    Point updates and prefix-sum searches both cost O(log N), so sampling an
    index proportional to its weight never rescans the whole vector.
    """

    def __init__(self, weights: Sequence[float]):
        self.values: List = np.asarray(weights).tolist()
        self.size = len(self.values)
        tree = [0] * (self.size + 1)
        for i in range(1, self.size + 1):
            tree[i] += self.values[i - 1]
            parent = i + (i & -i)
            if parent <= self.size:
                tree[parent] += tree[i]
        self.tree = tree
        self._top = 1 << (self.size.bit_length() - 1) if self.size else 0

    def __len__(self) -> int:
        return self.size

    def __getitem__(self, index: int):
        return self.values[index]

    def set(self, index: int, value) -> None:
        delta = value - self.values[index]
        if delta == 0:
            return
        self.values[index] = value
        j = index + 1
        while j <= self.size:
            self.tree[j] += delta
            j += j & -j

    def prefix(self, count: int):
        """Sum of the first count weights."""
        total = 0
        j = count
        while j > 0:
            total += self.tree[j]
            j -= j & -j
        return total

    @property
    def total(self):
        return self.prefix(self.size)

    def find(self, target) -> int:
        """Index i with prefix(i) <= target < prefix(i + 1)."""
        pos, remaining, step = 0, target, self._top
        while step:
            nxt = pos + step
            if nxt <= self.size and self.tree[nxt] <= remaining:
                pos = nxt
                remaining -= self.tree[nxt]
            step >>= 1
        if pos < self.size and self.values[pos] > 0:
            return pos
        # float round-off landed on a zero weight or past the end
        return self._nearest_positive(pos)

    def _nearest_positive(self, pos: int) -> int:
        for i in range(min(pos, self.size - 1), -1, -1):
            if self.values[i] > 0:
                return i
        for i in range(pos, self.size):
            if self.values[i] > 0:
                return i
        raise ValueError("all weights are zero")
