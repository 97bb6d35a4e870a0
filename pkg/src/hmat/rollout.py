"""Shared episode drivers and named rng streams.

One driver covers both control levels: with a worker, decisions are subgoals
issued every `horizon` steps and executed by the frozen worker; without one
(horizon 1), decisions are the forces themselves. Advisors hook into the
decision point and may override what gets recorded and executed, which is how
every teaching variant plugs in.

Seeding discipline: each consumer owns a named stream so that disabling one
consumer (say, advice) provably cannot perturb the others.
"""

import math

import numpy as np

from . import env, hierarchy, td3

STREAM_NAMES = ("init", "env", "explore", "sample", "teacher", "advice",
                "eval")


def make_streams(seed):
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(len(STREAM_NAMES))
    return {name: np.random.default_rng(c)
            for name, c in zip(STREAM_NAMES, children)}


def executed_decisions(recorded, state, hier, worker, rotations):
    """World-frame decision each agent actually executes.

    Forces rotate about the origin; subgoals rotate their displacement about
    the agent, so a remapped actuator distorts direction but not reach.
    """
    out = []
    for j in range(2):
        if worker is None:
            out.append(env.remap_action(recorded[j], rotations[j]))
        else:
            g = hier.subgoal_scale * recorded[j]
            if rotations[j]:
                d = g - state.agent_pos[j]
                g = state.agent_pos[j] + env.remap_action(d, rotations[j])
            out.append(g)
    return out


def sample_push_plan(rng, state, world_cfg, object_frac=0.85, aim_frac=0.5,
                     aim_jitter=0.08, push_min=0.3, push_max=0.9):
    """Random exploration plan for one stretch of decisions.

    Usually a herding plan: pick a box and a destination to walk it to,
    near that box's goal half the time and at a uniform direction and
    distance otherwise. Occasionally an unstructured pair of independent
    waypoints instead. A plan is a POLICY over decision points, not a fixed
    waypoint: see plan_decision.
    """
    if rng.uniform() < object_frac:
        b = int(rng.integers(len(state.box_pos)))
        if rng.uniform() < aim_frac:
            dest = (world_cfg.targets_array()[b]
                    + aim_jitter * rng.standard_normal(2))
        else:
            theta = rng.uniform(0.0, 2.0 * np.pi)
            dest = state.box_pos[b] + rng.uniform(push_min, push_max) * \
                np.array([math.cos(theta), math.sin(theta)])
        return {"box": b, "dest": np.clip(dest, -1.0, 1.0)}
    return {"points": rng.uniform(-1.0, 1.0, (2, 2))}


def plan_decision(plan, state, flat=False):
    """Joint decision a plan issues from the current state.

    Boxes move only while BOTH agents sit inside the contact disc and only
    force components pointing into the box transfer, so herding has two
    behaviors: rendezvous at a staging point behind the box (behind relative
    to where it should go), then drive through the box toward the
    destination so it gets shoved ahead of the pair. Every decision re-aims
    at the destination, which caps lateral drift, and small per-agent
    offsets keep the pair straddling the push axis so the shove stays
    straight. At subgoal level the decision is the waypoint itself; at force
    level it is a braked pursuit of the staging point plus a forward bias
    once staged, because a pure position servo settles at zero net force
    and a zero force moves nothing.
    """
    if "points" in plan:
        return plan["points"].copy()
    box = state.box_pos[plan["box"]]
    gap = np.asarray(plan["dest"], dtype=float) - box
    d_goal = np.linalg.norm(gap)
    if d_goal < 0.06:
        if flat:
            return np.clip(-0.9 * state.agent_vel, -1.0, 1.0)
        return np.clip(state.agent_pos.copy(), -1.0, 1.0)
    u = gap / d_goal
    perp = np.array([-u[1], u[0]])
    side = np.sign((state.agent_pos - box) @ perp)
    if side[0] == side[1]:
        side = np.array([1.0, -1.0]) if side[0] >= 0 else np.array([-1.0, 1.0])
    offs = side[:, None] * 0.04 * perp[None, :]
    if flat:
        stage = box - 0.10 * u + offs
        err = stage - state.agent_pos
        staged = np.sqrt((err * err).sum(axis=1)) < 0.2
        f = 6.0 * err - 0.9 * state.agent_vel + 0.3 * u * staged[:, None]
        return np.clip(f, -1.0, 1.0)
    stage = box - 0.18 * u + offs
    d_stage = np.sqrt(((stage - state.agent_pos) ** 2).sum(axis=1))
    wp = box + 0.16 * u + offs if np.all(d_stage < 0.14) else stage
    return np.clip(wp, -1.0, 1.0)


def run_episode(world_cfg, policies, cfg, hier, worker, rng_env, rng_explore,
                explore=True, advisor=None, rotations=(0, 0),
                random_agents=(), epsilon=0.0, hold_refresh=0.05):
    """One episode. Returns decision-level tuples ready for the task memory,
    the per-step rewards, and the per-decision record the advisors build on.

    Agents listed in random_agents act randomly every decision (warmup
    exploration for fresh policies). With epsilon > 0, whole decisions are
    replaced by a random push plan for BOTH agents at once; the joint flip
    matters because contact needs the pair, so independent per-agent
    randomness squares the odds of ever touching a box together. Consecutive
    random decisions keep following one plan unless a hold_refresh draw
    rerolls it: walking a box across the arena takes many pushes in one
    direction, so replanning every decision would never string them together.
    """
    state = env.reset(world_cfg, rng_env)
    tuples, rewards, decisions = [], [], []
    block = []
    recorded = None
    goals_exec = None
    plan = None
    while not env.episode_done(state, world_cfg):
        t = state.t
        obs = env.observe_both(state, world_cfg)
        if t % hier.horizon == 0:
            if block:
                tuples.append(hierarchy.aggregate_manager_tuple(
                    block, hier.horizon))
                block = []
            joint_flip = epsilon > 0.0 and rng_explore.uniform() < epsilon
            if joint_flip or random_agents == (0, 1):
                if plan is None or rng_explore.uniform() < hold_refresh:
                    plan = sample_push_plan(rng_explore, state, world_cfg)
                intended = plan_decision(plan, state, flat=worker is None)
            else:
                plan = None
                intended = np.stack([
                    rng_explore.uniform(-1.0, 1.0, 2)
                    if j in random_agents
                    else td3.act(policies[j], obs[j], cfg, rng_explore,
                                 explore=explore)
                    for j in range(2)])
            recorded = intended
            if advisor is not None:
                recorded = advisor.advise(t, state, obs, intended)
            goals_exec = executed_decisions(recorded, state, hier, worker,
                                            rotations)
            decisions.append({"obs": obs, "intended": intended.copy(),
                              "recorded": recorded.copy()})
        if worker is None:
            forces = np.stack(goals_exec)
        else:
            forces = np.stack([
                hierarchy.worker_act(worker, obs[j], goals_exec[j], cfg)
                for j in range(2)])
        state, r, _ = env.step(state, forces, world_cfg)
        block.append({"obs": obs, "act": recorded.copy(), "rew": r,
                      "step": t, "next_obs": env.observe_both(state, world_cfg)})
        rewards.append(r)
    if block:
        tuples.append(hierarchy.aggregate_manager_tuple(block, hier.horizon))
    return {
        "tuples": tuples,
        "rewards": rewards,
        "return": float(sum(rewards)),
        "decisions": decisions,
        "delivered": env.delivered(state, world_cfg),
        "steps": state.t,
    }


def evaluate_policies(world_cfg, policies, cfg, hier, worker, rng,
                      n_episodes, rotations=(0, 0)):
    """Mean greedy return over n_episodes (no exploration, no advising)."""
    returns = []
    for _ in range(n_episodes):
        res = run_episode(world_cfg, policies, cfg, hier, worker, rng, rng,
                          explore=False, rotations=rotations)
        returns.append(res["return"])
    return float(np.mean(returns))


def delivery_rate(world_cfg, policies, cfg, hier, worker, rng, n_episodes,
                  rotations=(0, 0)):
    """Fraction of greedy episodes that deliver every box.

    Pass a world with early termination on so delivery is judged by the
    environment's own done contract (delivery absorbs) rather than by
    wherever a fixed-length rollout happens to leave the box afterwards.
    """
    hits = 0
    for _ in range(n_episodes):
        res = run_episode(world_cfg, policies, cfg, hier, worker, rng, rng,
                          explore=False, rotations=rotations)
        hits += bool(res["delivered"])
    return hits / n_episodes


def push_tuples(memory, tuples):
    for tup in tuples:
        memory.push(obs=tup["obs"], act=tup["act"], rew=tup["rew"],
                    next_obs=tup["next_obs"])
