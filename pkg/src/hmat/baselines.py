"""Heuristic advising baselines and the shared no-teaching session loop.

Ask-importance (AI): a student asks for advice whenever the spread of its own
Q-values over candidate actions clears a threshold; the frozen expert then
answers with its greedy action. The "check importance" variant (AICI) lets
the expert veto: it only advises when its own state importance clears the
threshold and its action differs enough from the student's. Hierarchical
variants apply the same rules to subgoals instead of forces.
"""

import dataclasses
import math

import numpy as np

from . import replay, rollout, session, td3
from .hierarchy import HierarchyConfig


@dataclasses.dataclass
class HeuristicConfig:
    ask_threshold: float = None
    correct_threshold: float = None
    n_probe_actions: int = 8
    calibration_samples: int = 500
    calibration_percentile: float = 60.0

    def __post_init__(self):
        for name in ("ask_threshold", "correct_threshold"):
            v = getattr(self, name)
            if v is not None and not v >= 0:
                raise ValueError("%s must be >= 0, got %r" % (name, v))
        if self.n_probe_actions < 2:
            raise ValueError("n_probe_actions must be >= 2")


def state_importance(critic, obs_vec, probe_actions):
    """Q-value spread over candidate actions: max_a Q(o,a) - min_a Q(o,a)."""
    probe_actions = np.asarray(probe_actions, dtype=float)
    if probe_actions.shape[0] < 2:
        raise ValueError("need at least 2 probe actions")
    x = np.concatenate([np.tile(np.asarray(obs_vec, dtype=float),
                                (probe_actions.shape[0], 1)),
                        probe_actions], axis=1)
    q, _ = critic.forward(x)
    return float(q.max() - q.min())


class ExpertAdviser:
    """Frozen expert advice at either level.

    Hierarchical sessions use the expert managers directly. Primitive
    sessions compose a force as worker(obs, expert subgoal) and judge
    importance with the worker's critic, since the expert itself has no
    primitive-level policy.
    """

    def __init__(self, managers, hier, worker=None):
        self.managers = managers
        self.hier = hier
        self.worker = worker

    def action(self, j, obs_j):
        g, _ = self.managers[j].actor.forward(obs_j)
        if self.worker is None:
            return g
        goal = self.hier.subgoal_scale * g
        f, _ = self.worker.actor.forward(np.concatenate([obs_j, goal]))
        return f

    def importance(self, j, joint_obs, joint_probes, obs_j, force_probes):
        if self.worker is None:
            return state_importance(self.managers[j].critic1,
                                    joint_obs.reshape(-1), joint_probes)
        g, _ = self.managers[j].actor.forward(obs_j)
        goal = self.hier.subgoal_scale * g
        return state_importance(self.worker.critic1,
                                np.concatenate([obs_j, goal]), force_probes)


class HeuristicAdvisor:
    """Applies the AI or AICI rule per student at each decision point."""

    def __init__(self, kind, students, expert, heur, rng, thresholds):
        if kind not in ("ai", "aici"):
            raise ValueError("heuristic kind must be ai or aici")
        self.kind = kind
        self.students = students
        self.expert = expert
        self.heur = heur
        self.rng = rng
        self.thresholds = thresholds
        self.advised_count = 0
        self.decision_count = 0

    def _probes(self, intended_j, expert_j):
        n_extra = self.heur.n_probe_actions - 2
        extras = self.rng.uniform(-1.0, 1.0, (n_extra, 2))
        return np.concatenate([[intended_j, expert_j], extras])

    def decide(self, joint_obs, intended, j):
        """-> (advised action or None, diagnostics)."""
        self.decision_count += 1
        ask = self.thresholds["ask_student"]
        if math.isinf(ask):
            return None
        expert_a = self.expert.action(j, joint_obs[j])
        cands = self._probes(intended[j], expert_a)
        joint_probes = np.tile(intended.reshape(-1), (len(cands), 1))
        joint_probes[:, 2 * j:2 * j + 2] = cands
        imp_student = state_importance(self.students[j].critic1,
                                       joint_obs.reshape(-1), joint_probes)
        if imp_student <= ask:
            return None
        if self.kind == "aici":
            imp_expert = self.expert.importance(j, joint_obs, joint_probes,
                                                joint_obs[j], cands)
            diff = float(np.linalg.norm(intended[j] - expert_a))
            if imp_expert <= self.thresholds["ask_expert"]:
                return None
            if diff <= self.thresholds["correct"]:
                return None
        self.advised_count += 1
        return expert_a

    def advise(self, t, state, obs, intended):
        recorded = intended.copy()
        for j in range(2):
            advised = self.decide(obs, intended, j)
            if advised is not None:
                recorded[j] = advised
        return recorded


def calibrate_thresholds(world_cfg, students, expert, cfg, hier, worker, heur,
                         rng):
    """Percentile thresholds from a bootstrap of the statistics themselves.

    Rolls advice-free exploratory episodes with the student's initial
    policies, collecting student importance, expert importance and action
    difference at every decision, then cuts each at the configured
    percentile. Explicit thresholds in the config short-circuit this.
    """
    need = heur.calibration_samples
    imp_student, imp_expert, diffs = [], [], []
    probe = HeuristicAdvisor("aici", students, expert, heur, rng,
                             {"ask_student": 0.0, "ask_expert": 0.0,
                              "correct": 0.0})
    while len(imp_student) < need:
        res = rollout.run_episode(world_cfg, students, cfg, hier, worker,
                                  rng, rng, explore=True)
        for dec in res["decisions"]:
            if len(imp_student) >= need:
                break
            obs, intended = dec["obs"], dec["intended"]
            for j in range(2):
                expert_a = expert.action(j, obs[j])
                cands = probe._probes(intended[j], expert_a)
                joint_probes = np.tile(intended.reshape(-1), (len(cands), 1))
                joint_probes[:, 2 * j:2 * j + 2] = cands
                imp_student.append(state_importance(
                    students[j].critic1, obs.reshape(-1), joint_probes))
                imp_expert.append(expert.importance(j, obs, joint_probes,
                                                    obs[j], cands))
                diffs.append(float(np.linalg.norm(intended[j] - expert_a)))
    pct = heur.calibration_percentile
    resolved = {
        "ask_student": float(np.percentile(imp_student, pct)),
        "ask_expert": float(np.percentile(imp_expert, pct)),
        "correct": float(np.percentile(diffs, pct)),
    }
    if heur.ask_threshold is not None:
        resolved["ask_student"] = heur.ask_threshold
        resolved["ask_expert"] = heur.ask_threshold
    if heur.correct_threshold is not None:
        resolved["correct"] = heur.correct_threshold
    return resolved


def run_baseline_session(scfg, heur=None, worker=None, expert_managers=None,
                         update_rounds_per_episode=None):
    """One full no-teaching or heuristic-advising session.

    Returns (curve rows, task policies). Hierarchical kinds need the frozen
    worker; advising kinds additionally need the frozen expert managers.
    Exploration follows the config's annealed whole-team epsilon schedule on
    top of the usual Gaussian action noise.
    """
    kind = scfg.kind
    if kind == "mat" or kind == "hmat":
        raise ValueError("learned-teacher sessions run elsewhere, got %r"
                         % (kind,))
    heur = heur or HeuristicConfig()
    world_cfg = scfg.world_config()
    cfg = scfg.td3_config()
    streams = rollout.make_streams(scfg.effective_seed())

    if scfg.hierarchical():
        if worker is None:
            raise ValueError("hierarchical session needs the frozen worker")
        hier = HierarchyConfig()
        level_worker = worker
    else:
        hier = HierarchyConfig(horizon=1)
        level_worker = None
    hier.check_episode_length(scfg.T)

    students = session.create_task_policies(world_cfg, streams["init"])
    advisor = None
    if kind in ("ai", "aici", "hai", "haici"):
        if expert_managers is None:
            raise ValueError("advising session needs the expert checkpoint")
        expert = ExpertAdviser(expert_managers, HierarchyConfig(),
                               worker=None if scfg.hierarchical() else worker)
        base_kind = "ai" if kind in ("ai", "hai") else "aici"
        thresholds = calibrate_thresholds(world_cfg, students, expert, cfg,
                                          hier, level_worker, heur,
                                          streams["advice"])
        advisor = HeuristicAdvisor(base_kind, students, expert, heur,
                                   streams["advice"], thresholds)

    memory = replay.task_memory(world_cfg.obs_dim, 2)
    rotations = (scfg.rotation, scfg.rotation)
    rounds = update_rounds_per_episode

    recorder = session.CurveRecorder()
    recorder.add(0, session.evaluate(world_cfg, students, cfg, hier,
                                     level_worker, streams["eval"],
                                     scfg.eval_episodes, rotations))
    for episode in range(1, scfg.S + 1):
        res = rollout.run_episode(world_cfg, students, cfg, hier,
                                  level_worker, streams["env"],
                                  streams["explore"], explore=True,
                                  advisor=advisor, rotations=rotations,
                                  epsilon=scfg.epsilon_for_episode(episode - 1))
        rollout.push_tuples(memory, res["tuples"])
        # one critic round per transition collected at the learner's own
        # timescale, so the replay ratio stays level across horizons
        td3.train_rounds(students, memory, cfg, streams["sample"],
                         rounds if rounds is not None else len(res["tuples"]))
        if episode % scfg.eval_every == 0:
            recorder.add(episode, session.evaluate(
                world_cfg, students, cfg, hier, level_worker,
                streams["eval"], scfg.eval_episodes, rotations))
    return recorder.rows, students
