"""Ring-buffer experience memories with uniform with-replacement sampling.

One Memory class serves both tuple kinds: task-level transitions
(joint obs, joint action, shared reward, joint next obs) and extended teacher
experiences (aligned obs/action/next-obs sequences sharing a single reward).
Fields are fixed-shape float arrays declared up front, stored column-wise so
sampling a batch is a handful of fancy-index reads rather than a Python loop.
"""

from __future__ import annotations

import numpy as np

TASK_CAPACITY = 1_000_000
TEACHER_CAPACITY = 10_000


class Memory:
    """FIFO ring buffer over fixed-shape named fields.

    capacity bounds the tuple count; storage grows geometrically up to it so a
    short run never allocates the full ring. reinit() drops contents but keeps
    capacity and storage.
    """

    def __init__(self, capacity: int, fields: dict):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.fields = {name: tuple(shape) for name, shape in fields.items()}
        self._alloc = 0
        self._buf = {}
        self._ptr = 0
        self.size = 0

    def _grow(self, needed: int):
        new_alloc = max(needed, 256, 2 * self._alloc)
        new_alloc = min(new_alloc, self.capacity)
        for name, shape in self.fields.items():
            buf = np.zeros((new_alloc,) + shape)
            if self.size:
                buf[: self.size] = self._buf[name][: self.size]
            self._buf[name] = buf
        self._alloc = new_alloc

    def push(self, **values) -> None:
        if set(values) != set(self.fields):
            raise ValueError(
                f"expected fields {sorted(self.fields)}, got {sorted(values)}"
            )
        if self.size == self._alloc and self._alloc < self.capacity:
            if self._ptr != self.size:
                raise RuntimeError("ring pointer out of sync")  # pragma: no cover
            self._grow(self.size + 1)
        for name, shape in self.fields.items():
            v = np.asarray(values[name], dtype=float)
            if v.shape != shape:
                raise ValueError(
                    f"field {name!r} expects shape {shape}, got {v.shape}"
                )
            self._buf[name][self._ptr] = v
        self._ptr = (self._ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        """Uniform sample WITH replacement. Errors if fewer tuples than asked."""
        if batch_size > self.size:
            raise ValueError(
                f"memory holds {self.size} tuples, cannot sample {batch_size}"
            )
        idx = rng.integers(0, self.size, size=batch_size)
        return {name: self._buf[name][idx] for name in self.fields}

    def all(self) -> dict:
        """Every stored tuple in insertion-ring order (oldest first not guaranteed
        once wrapped; used for full-batch updates where order is irrelevant)."""
        return {name: self._buf[name][: self.size].copy() for name in self.fields}

    def get(self, index: int) -> dict:
        if not 0 <= index < self.size:
            raise IndexError(index)
        return {name: self._buf[name][index].copy() for name in self.fields}

    def reinit(self) -> None:
        self._ptr = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size


def task_memory(obs_dim: int, act_dim: int, n_agents: int = 2,
                capacity: int = TASK_CAPACITY) -> Memory:
    """Memory for task-level transitions (shared by both learners)."""
    return Memory(
        capacity,
        fields={
            "obs": (n_agents, obs_dim),
            "act": (n_agents, act_dim),
            "rew": (),
            "next_obs": (n_agents, obs_dim),
        },
    )


def teacher_memory(seq_len: int, teacher_obs_dim: int,
                   capacity: int = TEACHER_CAPACITY) -> Memory:
    """Memory for one teacher's extended experiences.

    Sequences hold BOTH teachers' observations/actions per manager step (the
    centralized teacher critics need the joint view); the single reward is the
    owning teacher's. Fixed seq_len enforces the equal-length invariant.
    """
    return Memory(
        capacity,
        fields={
            "obs_seq": (seq_len, 2, teacher_obs_dim),
            "act_seq": (seq_len, 2, 4),
            "rew": (),
            "next_obs_seq": (seq_len, 2, teacher_obs_dim),
        },
    )
