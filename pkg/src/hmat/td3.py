"""Twin-delayed DDPG for N cooperating agents (MATD3).

Decentralized actors (own observation in, tanh action out) with centralized
twin critics over the joint observation and joint action. The same update
code runs the one-agent case (plain TD3, used for worker pretraining) and the
manager level of the hierarchical variant; only the tensors passed in change.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .nets import AdamState, LayerSpec, Net, adam_step, soft_update

HIDDEN_DIM = 64


@dataclasses.dataclass
class Td3Config:
    gamma: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    target_noise_sigma: float = 0.2
    target_noise_clip: float = 0.5
    exploration_sigma: float = 0.1
    batch_size: int = 128
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    # L2 penalty on the actor's pre-tanh output; keeps actors off the
    # saturated rails where the squash gradient vanishes
    actor_preact_reg: float = 1e-3


class AgentPolicy:
    """One agent's actor, twin critics, their targets and Adam states."""

    def __init__(self, actor: Net, critic1: Net, critic2: Net):
        self.actor = actor
        self.critic1 = critic1
        self.critic2 = critic2
        self.actor_target = actor.copy()
        self.critic1_target = critic1.copy()
        self.critic2_target = critic2.copy()
        self.adam_actor = AdamState(actor.n_params)
        self.adam_critic1 = AdamState(critic1.n_params)
        self.adam_critic2 = AdamState(critic2.n_params)
        self.update_count = 0

    @classmethod
    def create(cls, obs_dim: int, act_dim: int, joint_obs_dim: int,
               joint_act_dim: int, rng: np.random.Generator,
               hidden_dim: int = HIDDEN_DIM, actor_head: str = "tanh",
               split_tanh: int = 0) -> "AgentPolicy":
        actor_spec = LayerSpec(obs_dim, hidden_dim, act_dim, actor_head, split_tanh)
        critic_spec = LayerSpec(joint_obs_dim + joint_act_dim, hidden_dim, 1, "linear")
        return cls(
            Net.init(actor_spec, rng),
            Net.init(critic_spec, rng),
            Net.init(critic_spec, rng),
        )

    def clone(self) -> "AgentPolicy":
        c = AgentPolicy.__new__(AgentPolicy)
        c.actor = self.actor.copy()
        c.critic1 = self.critic1.copy()
        c.critic2 = self.critic2.copy()
        c.actor_target = self.actor_target.copy()
        c.critic1_target = self.critic1_target.copy()
        c.critic2_target = self.critic2_target.copy()
        c.adam_actor = self.adam_actor.copy()
        c.adam_critic1 = self.adam_critic1.copy()
        c.adam_critic2 = self.adam_critic2.copy()
        c.update_count = self.update_count
        return c

    def theta_concat(self) -> np.ndarray:
        """All live+target parameters, for bitwise-unchanged assertions."""
        return np.concatenate([
            self.actor.theta, self.critic1.theta, self.critic2.theta,
            self.actor_target.theta, self.critic1_target.theta,
            self.critic2_target.theta,
        ])


def act(policy: AgentPolicy, obs: np.ndarray, cfg: Td3Config,
        rng: np.random.Generator | None = None, explore: bool = False) -> np.ndarray:
    """Deterministic tanh action; exploration adds clipped Gaussian noise."""
    a, _ = policy.actor.forward(obs)
    if explore:
        if rng is None:
            raise ValueError("explore=True needs an rng")
        a = np.clip(a + cfg.exploration_sigma * rng.standard_normal(a.shape),
                    -1.0, 1.0)
    return a


def _joint_input(obs: np.ndarray, acts: np.ndarray) -> np.ndarray:
    """(B, n, do) + (B, n, da) -> (B, n*do + n*da) critic input."""
    b = obs.shape[0]
    return np.concatenate([obs.reshape(b, -1), acts.reshape(b, -1)], axis=1)


def td_targets(policies: list, agent_index: int, batch: dict, cfg: Td3Config,
               rng: np.random.Generator) -> np.ndarray:
    """Clipped-double-Q targets y = r + gamma * min_b Q_b(o', pi_t(o') + eps).

    Target actions come from every agent's target actor with clipped smoothing
    noise per coordinate; the min is over agent_index's target critics.
    """
    next_obs = batch["next_obs"]
    b, n, _ = next_obs.shape
    next_acts = []
    for j, pol in enumerate(policies):
        a, _ = pol.actor_target.forward(next_obs[:, j])
        next_acts.append(a)
    next_acts = np.stack(next_acts, axis=1)
    noise = np.clip(
        cfg.target_noise_sigma * rng.standard_normal(next_acts.shape),
        -cfg.target_noise_clip, cfg.target_noise_clip,
    )
    next_acts = np.clip(next_acts + noise, -1.0, 1.0)
    x = _joint_input(next_obs, next_acts)
    me = policies[agent_index]
    q1, _ = me.critic1_target.forward(x)
    q2, _ = me.critic2_target.forward(x)
    return batch["rew"] + cfg.gamma * np.minimum(q1[:, 0], q2[:, 0])


def update_critics(policies: list, agent_index: int, batch: dict,
                   cfg: Td3Config, rng: np.random.Generator) -> float:
    """One Adam MSE step for both of agent_index's critics. Returns the loss
    (sum of the two per-critic mean squared errors, targets held fixed)."""
    y = td_targets(policies, agent_index, batch, cfg, rng)
    x = _joint_input(batch["obs"], batch["act"])
    me = policies[agent_index]
    b = x.shape[0]
    total = 0.0
    for critic, adam in ((me.critic1, me.adam_critic1),
                         (me.critic2, me.adam_critic2)):
        q, cache = critic.forward(x)
        diff = q[:, 0] - y
        total += float(diff @ diff) / b
        grad, _ = critic.backward(cache, (2.0 / b) * diff[:, None])
        adam_step(critic, grad, adam, cfg.critic_lr)
    return total


def actor_objective_grad(policies: list, agent_index: int, batch: dict,
                         cfg: Td3Config | None = None):
    """Gradient of J = mean Q1(o, a)|a_i=pi_i(o_i) minus the preactivation
    penalty, wrt agent i's actor params.

    Peer action slots are filled by the peers' current actors and receive no
    gradient; the critic's parameters are read, not written. Without a cfg
    the penalty coefficient is zero (the bare objective).
    """
    obs = batch["obs"]
    b, n, _ = obs.shape
    me = policies[agent_index]
    acts = []
    actor_cache = None
    for j, pol in enumerate(policies):
        a, cache = pol.actor.forward(obs[:, j])
        if j == agent_index:
            actor_cache = cache
        acts.append(a)
    acts = np.stack(acts, axis=1)
    x = _joint_input(obs, acts)
    q, qcache = me.critic1.forward(x)
    j_val = float(q.mean())
    _, dx = me.critic1.backward(qcache, np.full((b, 1), 1.0 / b))
    da = dx.reshape(b, -1)
    n_do = obs.shape[1] * obs.shape[2]
    act_dim = acts.shape[2]
    lo = n_do + agent_index * act_dim
    d_own = da[:, lo:lo + act_dim]
    reg = cfg.actor_preact_reg if cfg is not None else 0.0
    dz2_extra = None
    if reg > 0.0:
        z2 = me.actor.head_preactivation(actor_cache)
        j_val -= reg * float((z2 * z2).mean())
        dz2_extra = -reg * 2.0 * z2 / z2.size
    grad, _ = me.actor.backward(actor_cache, d_own, dz2_extra)
    return grad, j_val


def update_actor(policies: list, agent_index: int, batch: dict,
                 cfg: Td3Config) -> float:
    """Gradient-ascent Adam step on the deterministic policy objective."""
    grad, j_val = actor_objective_grad(policies, agent_index, batch, cfg)
    me = policies[agent_index]
    adam_step(me.actor, -grad, me.adam_actor, cfg.actor_lr)
    return -j_val


def update_targets(policy: AgentPolicy, cfg: Td3Config) -> None:
    soft_update(policy.actor_target, policy.actor, cfg.tau)
    soft_update(policy.critic1_target, policy.critic1, cfg.tau)
    soft_update(policy.critic2_target, policy.critic2, cfg.tau)


def train_rounds(policies: list, memory, cfg: Td3Config,
                 rng: np.random.Generator, n_rounds: int) -> list:
    """Shared update cadence: per round each agent takes one critic step on
    its own sampled batch; every policy_delay rounds the actor and the target
    nets follow. Skips silently while the memory is shorter than a batch.

    Returns the per-round critic losses summed over agents."""
    losses = []
    if len(memory) < cfg.batch_size:
        return losses
    for _ in range(n_rounds):
        total = 0.0
        for i, pol in enumerate(policies):
            batch = memory.sample(cfg.batch_size, rng)
            total += update_critics(policies, i, batch, cfg, rng)
            pol.update_count += 1
            if pol.update_count % cfg.policy_delay == 0:
                update_actor(policies, i, batch, cfg)
                update_targets(pol, cfg)
        losses.append(total)
    return losses


def full_batch_rounds(policies: list, batch: dict, cfg: Td3Config,
                      rng: np.random.Generator, n_rounds: int) -> None:
    """n_rounds of updates on one fixed full batch (temporary-policy path).

    Same cadence as train_rounds but without sampling; used by the advice
    evaluation step where the batch is the whole advising episode.
    """
    for _ in range(n_rounds):
        for i, pol in enumerate(policies):
            update_critics(policies, i, batch, cfg, rng)
            pol.update_count += 1
            if pol.update_count % cfg.policy_delay == 0:
                update_actor(policies, i, batch, cfg)
                update_targets(pol, cfg)
