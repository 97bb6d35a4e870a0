"""Experiment orchestration: session configs, evaluation, learning curves,
metrics, transfer experiments, the progress diagnostic and asynchronous
teacher training."""

import dataclasses
import os
import time

import numpy as np

from . import env, rollout, td3
from .hierarchy import HierarchyConfig
from .td3 import Td3Config

DOMAINS = ("cobp", "ctbp")
KINDS = ("matd3", "hmatd3", "ai", "aici", "hai", "haici", "mat", "hmat")
TEACHER_REWARDS = ("cr", "dr", "veg")

# session budgets per domain: episodes S, steps per episode T, self-practice
# budget T-bar
DOMAIN_BUDGETS = {"cobp": (600, 50, 100), "ctbp": (1800, 100, 200)}


@dataclasses.dataclass
class SessionConfig:
    domain: str = "cobp"
    kind: str = "hmatd3"
    S: int = 600
    T: int = 50
    t_bar: int = 100
    eval_every: int = 10
    eval_episodes: int = 5
    seed: int = 0
    teacher_reward_kind: str = "cr"
    rotation: int = 0
    worker_path: str = ""
    expert_path: str = ""
    teacher_path: str = ""
    # teaching knobs
    k_temp: int = 10
    f_teacher: int = 10
    teacher_batch: int = 8
    veg_percentile: float = 75.0
    gumbel_temperature: float = 1.0
    teacher_explore_sigma: float = 0.1
    teacher_critic_loss: str = "square_of_mean"
    recent_window: int = 3
    # task-level exploration: whole-team random decisions with probability
    # epsilon, annealed linearly over the first anneal_frac of the session
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_anneal_frac: float = 0.5
    # per-step discount; decision-level discount is gamma_base**horizon so a
    # five-step subgoal discounts like five primitive steps
    gamma_base: float = 0.99

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError("domain must be one of %s, got %r"
                             % (DOMAINS, self.domain))
        if self.kind not in KINDS:
            raise ValueError("kind must be one of %s, got %r"
                             % (KINDS, self.kind))
        if self.teacher_reward_kind not in TEACHER_REWARDS:
            raise ValueError("teacher_reward_kind must be one of %s, got %r"
                             % (TEACHER_REWARDS, self.teacher_reward_kind))
        for name in ("S", "T", "t_bar", "eval_every", "eval_episodes",
                     "k_temp", "f_teacher", "teacher_batch"):
            if getattr(self, name) <= 0:
                raise ValueError("%s must be positive" % name)
        if self.t_bar % self.T != 0:
            raise ValueError("t_bar (%d) must be a multiple of T (%d)"
                             % (self.t_bar, self.T))
        if self.teacher_critic_loss not in ("square_of_mean",
                                            "mean_of_squares"):
            raise ValueError("unknown teacher_critic_loss %r"
                             % (self.teacher_critic_loss,))
        if not (0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0):
            raise ValueError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if not (0.0 < self.epsilon_anneal_frac <= 1.0):
            raise ValueError("epsilon_anneal_frac must be in (0, 1]")
        if not (0.0 < self.gamma_base < 1.0):
            raise ValueError("gamma_base must be in (0, 1)")

    @classmethod
    def for_domain(cls, domain, **overrides):
        s, t, t_bar = DOMAIN_BUDGETS[domain]
        base = {"domain": domain, "S": s, "T": t, "t_bar": t_bar}
        base.update(overrides)
        return cls(**base)

    def effective_seed(self):
        """Env var HMAT_SEED overrides the configured seed."""
        raw = os.environ.get("HMAT_SEED")
        return int(raw) if raw else self.seed

    def world_config(self):
        made = env.cobp_config() if self.domain == "cobp" else env.ctbp_config()
        if made.max_steps != self.T:
            made = dataclasses.replace(made, max_steps=self.T)
        # zero the reward at the reset state: progress shows up as positive
        # reward instead of a large negative offset the critics would spend
        # the whole session chasing
        made = dataclasses.replace(
            made, reward_baseline=env.initial_mean_distance(made))
        # run episodes full length: stored tuples carry no terminal flag, so
        # the value of a delivered box must be grounded by real post-delivery
        # steps or the critics chase an unreachable extrapolation upward
        made = dataclasses.replace(made, early_termination=False)
        return made

    def eval_world_config(self):
        """Same world with the delivery-absorbs done contract restored.

        Used for delivery-rate evaluation only; return curves stay on
        fixed-length episodes so their values are comparable across kinds.
        """
        return dataclasses.replace(self.world_config(),
                                   early_termination=True)

    def hierarchical(self):
        return self.kind in ("hmatd3", "hai", "haici", "hmat")

    def horizon(self):
        return 5 if self.hierarchical() else 1

    def td3_config(self):
        return Td3Config(gamma=self.gamma_base ** self.horizon())

    def epsilon_for_episode(self, episode):
        """Linear anneal from epsilon_start to epsilon_end, then hold."""
        span = self.epsilon_anneal_frac * self.S
        frac = min(1.0, episode / span) if span > 0 else 1.0
        return self.epsilon_start + frac * (self.epsilon_end
                                            - self.epsilon_start)


@dataclasses.dataclass
class Metrics:
    v_bar: float
    auc: float

    def __post_init__(self):
        if not (np.isfinite(self.v_bar) and np.isfinite(self.auc)):
            raise ValueError("metrics must be finite")


class CurveRecorder:
    """Collects (episode, eval_return, wall_clock_s) rows as training runs."""

    def __init__(self):
        self.rows = []
        self._t0 = time.time()

    def add(self, episode, eval_return):
        if self.rows and episode <= self.rows[-1][0]:
            raise ValueError("episode indices must strictly increase")
        self.rows.append((float(episode), float(eval_return),
                          time.time() - self._t0))


def evaluate(world_cfg, policies, cfg, hier, worker, rng, n_episodes,
             rotations=(0, 0)):
    """Mean greedy return; exploration and advising disabled."""
    return rollout.evaluate_policies(world_cfg, policies, cfg, hier, worker,
                                     rng, n_episodes, rotations)


def compute_metrics(curve):
    """v_bar = final eval return; auc = trapezoid over the episode axis."""
    if not curve:
        raise ValueError("cannot compute metrics of an empty curve")
    episodes = np.array([row[0] for row in curve])
    returns = np.array([row[1] for row in curve])
    auc = float(np.trapz(returns, episodes))
    return Metrics(v_bar=float(returns[-1]), auc=auc)


def curve_to_csv(curve, path):
    with open(path, "w") as f:
        f.write("episode,eval_return,wall_clock_s\n")
        for episode, ret, wall in curve:
            f.write("%g,%.10g,%.3f\n" % (episode, ret, wall))


def create_task_policies(world_cfg, rng, n_agents=2):
    """Fresh decision-level policies (identical shapes at both levels)."""
    return [td3.AgentPolicy.create(world_cfg.obs_dim, 2,
                                   n_agents * world_cfg.obs_dim, n_agents * 2,
                                   rng)
            for _ in range(n_agents)]
