"""
Ring buffer of transitions for off-policy updates.
"""
from dataclasses import dataclass

import numpy as np


@dataclass
class Batch:
    states: np.ndarray       # (N, state_dim)
    actions: np.ndarray      # (N, action_dim)
    rewards: np.ndarray      # (N,)
    next_states: np.ndarray  # (N, state_dim)
    dones: np.ndarray        # (N,), 1.0 where the target must not bootstrap

    def __len__(self) -> int:
        return len(self.rewards)


class ReplayBuffer:
    """Keeps the last `capacity` transitions; sampling is uniform with replacement."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self.states = np.zeros((self.capacity, state_dim))
        self.actions = np.zeros((self.capacity, action_dim))
        self.rewards = np.zeros(self.capacity)
        self.next_states = np.zeros((self.capacity, state_dim))
        self.dones = np.zeros(self.capacity)
        self.idx = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, state, action, reward: float, next_state, done: bool):
        self.states[self.idx] = state
        self.actions[self.idx] = action
        self.rewards[self.idx] = reward
        self.next_states[self.idx] = next_state
        self.dones[self.idx] = float(done)
        self.idx = (self.idx + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch_size: int) -> Batch:
        if self.size == 0:
            raise ValueError("Cannot sample from an empty replay buffer")
        rows = rng.integers(0, self.size, size=batch_size)
        return Batch(
            states=self.states[rows],
            actions=self.actions[rows],
            rewards=self.rewards[rows],
            next_states=self.next_states[rows],
            dones=self.dones[rows]
        )
