"""Deterministic 2D box-push worlds for two cooperating point agents.

Two agents push one box (cooperative one-box push) or two boxes of different
mass (cooperative two-box push) toward fixed targets. A box accelerates only
while BOTH agents are inside its contact radius, and only the pushing
(toward-box) component of each agent's force transfers to it. The team reward
is the negative mean box-to-target distance, so nothing changes until a box
actually moves.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

# Delivery radius used both for early termination and for "delivered" checks.
DELIVERY_RADIUS = 0.1


@dataclasses.dataclass
class WorldConfig:
    """Static description of a box-push world.

    box_init / target_pos / box_mass all have one entry per box. Positions are
    JSON-friendly pairs, not arrays.
    """

    n_boxes: int = 1
    box_init: list = dataclasses.field(default_factory=lambda: [(-0.25, 0.0)])
    target_pos: list = dataclasses.field(default_factory=lambda: [(-0.85, 0.0)])
    box_mass: list = dataclasses.field(default_factory=lambda: [1.0])
    max_steps: int = 50
    dt: float = 0.1
    damping: float = 0.75
    # force-to-acceleration gain for agents and boxes alike, the usual
    # particle-world sensitivity; without it nothing crosses the arena
    # inside one episode
    accel: float = 3.0
    contact_radius: float = 0.15
    arena_half_width: float = 1.0
    seed: int = 0
    reward_scale: float = 1.0
    reward_baseline: float = 0.0
    early_termination: bool = True

    def __post_init__(self):
        if self.n_boxes not in (1, 2):
            raise ValueError(f"n_boxes must be 1 or 2, got {self.n_boxes}")
        for name in ("box_init", "target_pos", "box_mass"):
            if len(getattr(self, name)) != self.n_boxes:
                raise ValueError(f"{name} must have {self.n_boxes} entries")

    def to_json_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["box_init"] = [list(p) for p in self.box_init]
        d["target_pos"] = [list(p) for p in self.target_pos]
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "WorldConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown WorldConfig keys: {sorted(unknown)}")
        d = dict(d)
        for name in ("box_init", "target_pos"):
            if name in d:
                d[name] = [tuple(float(x) for x in p) for p in d[name]]
        return cls(**d)

    @property
    def obs_dim(self) -> int:
        # own pos, own vel, each box pos, each target pos, peer pos
        return 2 + 2 + 2 * self.n_boxes + 2 * self.n_boxes + 2

    def targets_array(self) -> np.ndarray:
        return np.array(self.target_pos, dtype=float)


def cobp_config(**overrides) -> WorldConfig:
    """Default one-box world: a single box pushed to the left target."""
    cfg = dict(
        n_boxes=1,
        box_init=[(-0.25, 0.0)],
        target_pos=[(-0.85, 0.0)],
        box_mass=[1.0],
        max_steps=50,
    )
    cfg.update(overrides)
    return WorldConfig(**cfg)


def ctbp_config(**overrides) -> WorldConfig:
    """Default two-box world: the second box is 3x heavier."""
    cfg = dict(
        n_boxes=2,
        box_init=[(-0.25, 0.0), (0.25, 0.0)],
        target_pos=[(-0.85, 0.0), (0.85, 0.0)],
        box_mass=[1.0, 3.0],
        max_steps=100,
    )
    cfg.update(overrides)
    return WorldConfig(**cfg)


def initial_mean_distance(config: WorldConfig) -> float:
    """Mean box-to-target distance at reset, before anything moves."""
    boxes = np.asarray(config.box_init, dtype=float)
    targets = config.targets_array()
    return float(np.sqrt(((boxes - targets) ** 2).sum(axis=1)).mean())


@dataclasses.dataclass
class WorldState:
    agent_pos: np.ndarray  # (2, 2)
    agent_vel: np.ndarray  # (2, 2)
    box_pos: np.ndarray  # (n_boxes, 2)
    box_vel: np.ndarray  # (n_boxes, 2)
    t: int = 0

    def copy(self) -> "WorldState":
        return WorldState(
            self.agent_pos.copy(),
            self.agent_vel.copy(),
            self.box_pos.copy(),
            self.box_vel.copy(),
            self.t,
        )


def reset(config: WorldConfig, rng: np.random.Generator) -> WorldState:
    """Fresh episode: boxes at their configured spots, agents placed uniformly."""
    w = config.arena_half_width
    agent_pos = rng.uniform(-w, w, size=(2, 2))
    return WorldState(
        agent_pos=agent_pos,
        agent_vel=np.zeros((2, 2)),
        box_pos=np.array(config.box_init, dtype=float),
        box_vel=np.zeros((config.n_boxes, 2)),
        t=0,
    )


def step(state: WorldState, forces: np.ndarray, config: WorldConfig):
    """Advance one tick. Returns (next_state, reward, done).

    All contact tests and push directions are evaluated on the pre-step state,
    then everything integrates simultaneously (v <- damping*v + accel*f*dt,
    p <- p + v*dt) and positions clamp to the arena. Stepping a finished
    episode is a contract violation.
    """
    if episode_done(state, config):
        raise RuntimeError("step() called on a finished episode")
    f = np.clip(np.asarray(forces, dtype=float), -1.0, 1.0)
    if f.shape != (2, 2):
        raise ValueError(f"forces must have shape (2, 2), got {f.shape}")

    w = config.arena_half_width
    nxt = state.copy()

    # Box accelerations from the pre-step configuration.
    box_acc = np.zeros((config.n_boxes, 2))
    for b in range(config.n_boxes):
        delta = state.box_pos[b] - state.agent_pos  # (2, 2) agent -> box
        dist = np.sqrt((delta * delta).sum(axis=1))
        if np.all(dist <= config.contact_radius):
            push = np.zeros(2)
            for i in range(2):
                if dist[i] > 0.0:
                    u = delta[i] / dist[i]
                    comp = f[i] @ u
                    if comp > 0.0:
                        push = push + comp * u
            box_acc[b] = config.accel * push / config.box_mass[b]

    nxt.agent_vel = config.damping * state.agent_vel \
        + config.accel * f * config.dt
    nxt.agent_pos = np.clip(state.agent_pos + nxt.agent_vel * config.dt, -w, w)
    nxt.box_vel = config.damping * state.box_vel + box_acc * config.dt
    nxt.box_pos = np.clip(state.box_pos + nxt.box_vel * config.dt, -w, w)
    nxt.t = state.t + 1

    dists = np.sqrt(((nxt.box_pos - config.targets_array()) ** 2).sum(axis=1))
    # reward_baseline shifts the zero point without changing which policies
    # are optimal; sessions set it to the reset-state distance so an episode
    # that never moves a box scores exactly zero.
    reward = config.reward_scale * (config.reward_baseline - float(dists.mean()))
    done = nxt.t >= config.max_steps
    if config.early_termination and bool(np.all(dists <= DELIVERY_RADIUS)):
        done = True
    return nxt, reward, done


def episode_done(state: WorldState, config: WorldConfig) -> bool:
    if state.t >= config.max_steps:
        return True
    if config.early_termination:
        dists = np.sqrt(
            ((state.box_pos - config.targets_array()) ** 2).sum(axis=1)
        )
        if bool(np.all(dists <= DELIVERY_RADIUS)):
            return True
    return False


def delivered(state: WorldState, config: WorldConfig) -> bool:
    """True when every box sits within the delivery radius of its target."""
    dists = np.sqrt(((state.box_pos - config.targets_array()) ** 2).sum(axis=1))
    return bool(np.all(dists <= DELIVERY_RADIUS))


def observe(state: WorldState, agent_index: int, config: WorldConfig) -> np.ndarray:
    """Per-agent flat observation.

    Layout: own position (2), own velocity (2), each box position (2 per box),
    each target position (2 per box), peer position (2).
    """
    if agent_index not in (0, 1):
        raise ValueError(f"agent_index must be 0 or 1, got {agent_index}")
    peer = 1 - agent_index
    return np.concatenate(
        [
            state.agent_pos[agent_index],
            state.agent_vel[agent_index],
            state.box_pos.ravel(),
            config.targets_array().ravel(),
            state.agent_pos[peer],
        ]
    )


def observe_both(state: WorldState, config: WorldConfig) -> np.ndarray:
    """(2, obs_dim) stacked observations for both agents."""
    return np.stack([observe(state, 0, config), observe(state, 1, config)])


_ROT = {
    0: np.array([[1.0, 0.0], [0.0, 1.0]]),
    90: np.array([[0.0, -1.0], [1.0, 0.0]]),
    180: np.array([[-1.0, 0.0], [0.0, -1.0]]),
    270: np.array([[0.0, 1.0], [-1.0, 0.0]]),
}


def remap_action(v: np.ndarray, rotation_deg: int) -> np.ndarray:
    """Rotate a 2-vector about the origin by 0/90/180/270 degrees.

    Used to give one agent a heterogeneous action space: its executed forces
    (primitive level) or sub-goal displacements (manager level) pass through
    this map before the world sees them.
    """
    if rotation_deg not in _ROT:
        raise ValueError(f"rotation must be one of {sorted(_ROT)}, got {rotation_deg}")
    v = np.asarray(v, dtype=float)
    return _ROT[rotation_deg] @ v


def rotation_matrix(rotation_deg: int) -> np.ndarray:
    if rotation_deg not in _ROT:
        raise ValueError(f"rotation must be one of {sorted(_ROT)}, got {rotation_deg}")
    return _ROT[rotation_deg].copy()
