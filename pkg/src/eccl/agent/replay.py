"""Proportional prioritized experience replay over a fixed-size ring buffer.

Priorities live in an array-backed binary sum tree so that drawing an
experience with probability p_i / sum(p) costs O(log capacity).  New
experiences enter at the running maximum priority; once trained on, their
priority becomes (|td_error| + priority_epsilon) ** alpha.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SumTree:
    """Fixed-capacity sum tree; leaf i sits at node capacity + i."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._nodes = np.zeros(2 * capacity, dtype=np.float64)

    def total(self) -> float:
        return float(self._nodes[1])

    def get(self, slot: int) -> float:
        return float(self._nodes[self.capacity + slot])

    def set(self, slot: int, value: float):
        if not 0 <= slot < self.capacity:
            raise IndexError(f"slot {slot} out of range")
        if value < 0:
            raise ValueError("priorities must be non-negative")
        node = self.capacity + slot
        self._nodes[node] = value
        node //= 2
        # refresh ancestors from their children: immune to the cancellation
        # that delta-propagation suffers with mixed-magnitude priorities
        while node >= 1:
            self._nodes[node] = self._nodes[2 * node] + self._nodes[2 * node + 1]
            node //= 2

    def find_prefix(self, mass: float) -> int:
        """Leaf slot whose cumulative-priority interval contains `mass`."""
        node = 1
        while node < self.capacity:
            left = 2 * node
            if mass < self._nodes[left]:
                node = left
            else:
                mass -= self._nodes[left]
                node = left + 1
        return node - self.capacity

    def leaves(self) -> np.ndarray:
        return self._nodes[self.capacity:].copy()


@dataclass
class Experience:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool
    next_legal_mask: np.ndarray
    map_id: int = -1


@dataclass
class SampleBatch:
    experiences: list
    tree_indices: np.ndarray   # leaf slots
    stamps: np.ndarray         # insertion counters, for stale-update detection
    weights: np.ndarray        # importance-sampling weights in (0, 1]


class ReplayBank:
    def __init__(self, capacity: int, alpha: float = 0.6, priority_epsilon: float = 1e-3):
        self.capacity = capacity
        self.alpha = alpha
        self.priority_epsilon = priority_epsilon
        self.tree = SumTree(capacity)
        self._data = [None] * capacity
        self._stamps = np.full(capacity, -1, dtype=np.int64)
        self._counter = 0
        self.size = 0
        self.max_priority = 1.0

    def insert(self, exp: Experience):
        slot = self._counter % self.capacity
        self._data[slot] = exp
        self._stamps[slot] = self._counter
        self.tree.set(slot, self.max_priority)
        self._counter += 1
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, beta: float, rng) -> SampleBatch:
        if self.size < batch_size:
            raise ValueError(f"replay bank holds {self.size} < batch size {batch_size}")
        total = self.tree.total()
        segment = total / batch_size
        slots = np.empty(batch_size, dtype=np.int64)
        priorities = np.empty(batch_size, dtype=np.float64)
        for k in range(batch_size):
            mass = (k + rng.random()) * segment
            slot = self.tree.find_prefix(mass)
            if slot >= self.size:  # float-boundary guard: never hand out an empty slot
                slot = self.size - 1
            slots[k] = slot
            priorities[k] = self.tree.get(slot)
        probs = priorities / total
        weights = (self.size * probs) ** (-beta)
        weights = weights / weights.max()
        return SampleBatch(
            experiences=[self._data[s] for s in slots],
            tree_indices=slots,
            stamps=self._stamps[slots].copy(),
            weights=weights,
        )

    def update_priorities(self, tree_indices, stamps, losses) -> int:
        """Set p = (|loss| + eps)^alpha per sample; returns count of stale
        indices skipped (slot recycled since the sample was drawn)."""
        skipped = 0
        for slot, stamp, loss in zip(tree_indices, stamps, losses):
            slot = int(slot)
            if self._stamps[slot] != stamp:
                skipped += 1
                continue
            p = (abs(float(loss)) + self.priority_epsilon) ** self.alpha
            self.tree.set(slot, p)
            if p > self.max_priority:
                self.max_priority = p
        return skipped

    def __len__(self):
        return self.size
