"""Proportional prioritized replay on a sum tree."""

from __future__ import annotations

import numpy as np


class EmptyBufferError(RuntimeError):
    pass


class SumTree:
    """Binary heap of partial sums; leaves live at ``[cap2, cap2 + capacity)``."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.cap2 = 1 << max(0, (self.capacity - 1).bit_length())
        self.tree = np.zeros(2 * self.cap2)

    @property
    def total(self) -> float:
        return float(self.tree[1])

    @property
    def leaves(self) -> np.ndarray:
        return self.tree[self.cap2:self.cap2 + self.capacity]

    def update(self, idx, values) -> None:
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        node = idx + self.cap2
        self.tree[node] = values
        node = np.unique(node // 2)
        while node.size and node[0] >= 1:
            self.tree[node] = self.tree[2 * node] + self.tree[2 * node + 1]
            if node[0] == 1:
                break
            node = np.unique(node // 2)

    def find(self, values) -> np.ndarray:
        """Leaf index whose cumulative range contains each value."""
        v = np.array(values, dtype=float)
        node = np.ones(len(v), dtype=np.int64)
        while node[0] < self.cap2:
            left = 2 * node
            # go right when the value exceeds the left subtree mass
            go_right = v >= self.tree[left]
            v = np.where(go_right, v - self.tree[left], v)
            node = np.where(go_right, left + 1, left)
        return node - self.cap2


class PrioritizedReplay:
    def __init__(self, capacity=50_000, state_dim=551, alpha=0.6, eps=1e-3):
        self.capacity = int(capacity)
        self.alpha = float(alpha)
        self.eps = float(eps)
        self.tree = SumTree(self.capacity)
        self.states = np.zeros((self.capacity, state_dim))
        self.next_states = np.zeros((self.capacity, state_dim))
        self.actions = np.zeros(self.capacity, dtype=np.int64)
        self.rewards = np.zeros(self.capacity)
        self.dones = np.zeros(self.capacity, dtype=bool)
        self.size = 0
        self.pos = 0
        self.max_priority = 1.0

    def __len__(self):
        return self.size

    def push(self, state, action, reward, next_state, done) -> int:
        if not 0 <= int(action) < 25:
            raise ValueError(f"action index {action} outside [0, 25)")
        i = self.pos
        self.states[i] = state
        self.next_states[i] = next_state
        self.actions[i] = action
        self.rewards[i] = reward
        self.dones[i] = done
        self.tree.update(i, self.max_priority)
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return i

    def set_priorities(self, idx, priorities) -> None:
        """Assign already-exponentiated priorities directly."""
        p = np.asarray(priorities, dtype=float)
        self.tree.update(idx, p)
        self.max_priority = max(self.max_priority, float(p.max()))

    def update(self, idx, td_errors) -> None:
        self.set_priorities(idx, (np.abs(np.asarray(td_errors, dtype=float)) + self.eps) ** self.alpha)

    def probabilities(self) -> np.ndarray:
        leaves = self.tree.leaves[:self.size]
        return leaves / leaves.sum()

    def sample(self, batch_size: int, beta: float, rng):
        """I.i.d. draws proportional to priority.

        Returns (indices, importance weights normalised by the largest
        possible weight, batch dict).
        """
        if self.size == 0:
            raise EmptyBufferError("cannot sample from an empty replay buffer")
        total = self.tree.total
        u = rng.random(batch_size) * total
        idx = self.tree.find(u)
        leaves = self.tree.leaves
        # guard against float round-off landing on an empty leaf
        bad = (idx >= self.size) | (leaves[np.minimum(idx, self.capacity - 1)] <= 0)
        if bad.any():
            idx[bad] = np.minimum(idx[bad], self.size - 1)
            while True:
                bad = leaves[idx] <= 0
                if not bad.any():
                    break
                idx[bad] -= 1
        p = leaves[idx] / total
        p_min = leaves[:self.size].min() / total
        w = (self.size * p) ** (-beta) / (self.size * p_min) ** (-beta)
        batch = {"states": self.states[idx], "actions": self.actions[idx], "rewards": self.rewards[idx],
                 "next_states": self.next_states[idx], "dones": self.dones[idx]}
        return idx, w, batch
