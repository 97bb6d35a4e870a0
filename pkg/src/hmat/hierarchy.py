"""Two-level control: a manager emits a subgoal every few steps, a frozen
worker turns (obs, subgoal) into forces.

The manager is trained with the exact same machinery as the primitive
learners, just on aggregated tuples whose "action" is the subgoal. The worker
is pretrained once on randomly resampled subgoals with an intrinsic reward
(negative distance to the subgoal) and then frozen and shared by every
hierarchical method.
"""

import dataclasses

import numpy as np

from . import env, td3
from .replay import task_memory
from .td3 import HIDDEN_DIM, AgentPolicy, Td3Config


@dataclasses.dataclass
class HierarchyConfig:
    horizon: int = 5
    subgoal_scale: float = 1.0
    worker_frozen: bool = True

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1, got %r" % (self.horizon,))
        if self.subgoal_scale <= 0:
            raise ValueError("subgoal_scale must be positive")

    def check_episode_length(self, max_steps):
        # manager decisions land on 0, H, 2H, ...; partial tails are legal
        # but the reference tasks keep H | T
        if max_steps % self.horizon != 0:
            raise ValueError("episode length %d is not a multiple of the "
                             "subgoal period %d" % (max_steps, self.horizon))

    def decisions_per_episode(self, max_steps):
        return -(-max_steps // self.horizon)


def manager_act(policy, obs, cfg, hier, step, rng=None, explore=False):
    """Pick a subgoal in world coordinates. Only legal on period boundaries."""
    if step % hier.horizon != 0:
        raise ValueError("manager acts every %d steps, got step %d"
                         % (hier.horizon, step))
    a = td3.act(policy, obs, cfg, rng, explore)
    return hier.subgoal_scale * a


def worker_act(worker, obs, subgoal, cfg, rng=None, explore=False):
    """Primitive force from the (frozen) worker conditioned on a subgoal."""
    obs = np.asarray(obs, dtype=float)
    subgoal = np.asarray(subgoal, dtype=float)
    x = np.concatenate([obs, subgoal])
    if x.shape[0] != worker.actor.spec.in_dim:
        raise ValueError("worker expects obs+subgoal of length %d, got %d"
                         % (worker.actor.spec.in_dim, x.shape[0]))
    return td3.act(worker, x, cfg, rng, explore)


def intrinsic_reward(agent_pos, subgoal):
    return -float(np.linalg.norm(np.asarray(agent_pos, dtype=float)
                                 - np.asarray(subgoal, dtype=float)))


def create_worker(obs_dim, rng, hidden_dim=HIDDEN_DIM):
    """Single-agent policy over (obs ++ subgoal) -> force."""
    return AgentPolicy.create(obs_dim + 2, 2, obs_dim + 2, 2, rng,
                              hidden_dim=hidden_dim)


def create_manager(obs_dim, rng, n_agents=2, hidden_dim=HIDDEN_DIM):
    """One manager policy; its critics see joint obs and joint subgoals."""
    return AgentPolicy.create(obs_dim, 2, n_agents * obs_dim, n_agents * 2,
                              rng, hidden_dim=hidden_dim)


def _sample_subgoal(pos, half_width, rng):
    # local box around the agent keeps targets reachable within a few periods
    return np.clip(pos + rng.uniform(-0.5, 0.5, 2), -half_width, half_width)


def pretrain_worker(world_cfg, steps, rng, td3_cfg=None, hier=None,
                    loss_log=None):
    """Train the shared worker with single-agent TD3 on intrinsic reward.

    Both agents act with independent subgoals and feed one shared memory and
    one shared policy. Subgoals resample every `hier.horizon` steps in a
    +-0.5 box around each agent.
    """
    cfg = td3_cfg or Td3Config()
    hier = hier or HierarchyConfig()
    worker = create_worker(world_cfg.obs_dim, rng)
    mem = task_memory(world_cfg.obs_dim + 2, 2, n_agents=1)
    w = world_cfg.arena_half_width

    state = env.reset(world_cfg, rng)
    goals = [_sample_subgoal(state.agent_pos[j], w, rng) for j in range(2)]
    for t in range(steps):
        if env.episode_done(state, world_cfg):
            state = env.reset(world_cfg, rng)
            goals = [_sample_subgoal(state.agent_pos[j], w, rng)
                     for j in range(2)]
        elif t % hier.horizon == 0:
            goals = [_sample_subgoal(state.agent_pos[j], w, rng)
                     for j in range(2)]
        obs = env.observe_both(state, world_cfg)
        xs = [np.concatenate([obs[j], goals[j]]) for j in range(2)]
        acts = [td3.act(worker, xs[j], cfg, rng, explore=True)
                for j in range(2)]
        state, _, _ = env.step(state, np.stack(acts), world_cfg)
        next_obs = env.observe_both(state, world_cfg)
        for j in range(2):
            r_int = intrinsic_reward(state.agent_pos[j], goals[j])
            mem.push(obs=xs[j][None], act=acts[j][None], rew=r_int,
                     next_obs=np.concatenate([next_obs[j], goals[j]])[None])
        losses = td3.train_rounds([worker], mem, cfg, rng, 1)
        if loss_log is not None and losses:
            loss_log.append(losses[0])
    return worker


def evaluate_worker(worker, world_cfg, rng, n_trials=100, n_steps=25,
                    td3_cfg=None):
    """Mean final distance to a freshly sampled local subgoal after a short
    greedy rollout. The pretraining target is < 0.1."""
    cfg = td3_cfg or Td3Config()
    w = world_cfg.arena_half_width
    dists = []
    for _ in range(n_trials):
        state = env.reset(world_cfg, rng)
        goals = [_sample_subgoal(state.agent_pos[j], w, rng) for j in range(2)]
        for _ in range(n_steps):
            obs = env.observe_both(state, world_cfg)
            acts = [worker_act(worker, obs[j], goals[j], cfg)
                    for j in range(2)]
            state, _, done = env.step(state, np.stack(acts), world_cfg)
            if done:
                break
        for j in range(2):
            dists.append(float(np.linalg.norm(state.agent_pos[j] - goals[j])))
    return float(np.mean(dists))


def aggregate_manager_tuple(transitions, horizon):
    """Collapse up to `horizon` consecutive primitive steps under one subgoal
    into a single manager tuple (obs, act, summed reward, next_obs)."""
    if not 1 <= len(transitions) <= horizon:
        raise ValueError("expected 1..%d transitions, got %d"
                         % (horizon, len(transitions)))
    steps = [tr["step"] for tr in transitions]
    if steps[0] % horizon != 0:
        raise ValueError("transitions start mid-period at step %d" % steps[0])
    if steps != list(range(steps[0], steps[0] + len(steps))):
        raise ValueError("transitions are not consecutive: %r" % (steps,))
    return {
        "obs": np.asarray(transitions[0]["obs"], dtype=float),
        "act": np.asarray(transitions[0]["act"], dtype=float),
        "rew": float(sum(tr["rew"] for tr in transitions)),
        "next_obs": np.asarray(transitions[-1]["next_obs"], dtype=float),
    }
