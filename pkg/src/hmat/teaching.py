"""Learned advising on top of the task-level learners.

Each agent owns a teacher that watches both task policies at every decision
point and either passes or overrides its peer's subgoal. Advice is scored by
what a throwaway copy of the students learns from the advising episode alone,
so the teachers get credit for long-term effect on the student, not for the
episode's raw reward. Teachers are TD3-style policies themselves, trained on
sequences of their own advising decisions.
"""

import collections

import numpy as np

from . import nets, replay, rollout, session, td3
from .hierarchy import HierarchyConfig

# teacher action: advised subgoal (2, tanh) + advise/pass logits (2)
TEACHER_ACTION_DIM = 4
ADVISE, PASS = 0, 1

# composite features appended after the joint task observation
EXTRA_DIM = 13


def teacher_obs_dim(obs_dim):
    return 2 * obs_dim + EXTRA_DIM


def obs_slices(obs_dim):
    """Field layout of one teacher's composite observation."""
    base = 2 * obs_dim
    return {
        "joint_obs": slice(0, base),
        "own_goal": slice(base, base + 2),
        "cross_goal": slice(base + 2, base + 4),
        "q_own_on_student": base + 4,
        "q_own_on_cross": base + 5,
        "student_goal": slice(base + 6, base + 8),
        "q_student_on_student": base + 8,
        "q_student_on_cross": base + 9,
        "r_advise": base + 10,
        "r_practice": base + 11,
        "t_remain": base + 12,
    }


def _q1(policy, joint_obs, own_index, g_own, g_other):
    """policy's first critic on the joint decision (own slot, other slot)."""
    acts = np.empty((2, 2))
    acts[own_index] = g_own
    acts[1 - own_index] = g_other
    x = np.concatenate([joint_obs, acts.reshape(-1)])
    v, _ = policy.critic1.forward(x)
    return float(v[0])


def build_teacher_obs(i, policies, obs, intended, r_advise, r_practice,
                      t_remain):
    """Composite observation for teacher i, whose student is agent 1 - i.

    Joint task observation in agent order, then: the teacher's own intended
    subgoal, the subgoal the teacher's actor picks in the student's shoes,
    value estimates of both candidate joint decisions from the teacher's and
    the student's first critics, the student's intended subgoal, the recent
    advising and practice returns, and the fraction of the session left.
    """
    j = 1 - i
    obs = np.asarray(obs, dtype=float)
    intended = np.asarray(intended, dtype=float)
    joint = obs.reshape(-1)
    cross, _ = policies[i].actor.forward(obs[j])
    return np.concatenate([
        joint,
        intended[i],
        cross,
        [_q1(policies[i], joint, i, intended[i], intended[j]),
         _q1(policies[i], joint, i, intended[i], cross)],
        intended[j],
        [_q1(policies[j], joint, i, intended[i], intended[j]),
         _q1(policies[j], joint, i, intended[i], cross)],
        [r_advise, r_practice, t_remain],
    ])


def create_teacher_policies(obs_dim, rng):
    """Two teachers over composite observations. The actor emits an advised
    subgoal plus advise/pass logits; the critics score the joint teacher
    action, so they take both composite observations and both actions."""
    d = teacher_obs_dim(obs_dim)
    return [td3.AgentPolicy.create(d, TEACHER_ACTION_DIM, 2 * d,
                                   2 * TEACHER_ACTION_DIM, rng,
                                   actor_head="split", split_tanh=2)
            for _ in range(2)]


def create_teacher_memories(obs_dim, T, horizon,
                            capacity=replay.TEACHER_CAPACITY):
    """One sequence memory per teacher (rewards differ, sequences match)."""
    seq_len = -(-T // horizon)
    return [replay.teacher_memory(seq_len, teacher_obs_dim(obs_dim),
                                  capacity=capacity)
            for _ in range(2)]


def decide_advice(teacher, tobs, sigma, temperature, rng=None, explore=False):
    """One advise/pass call. Returns (action, advise_flag).

    The subgoal half explores with Gaussian noise like any task actor; the
    advise/pass half samples a hard one-hot through Gumbel noise on the
    logits. Greedy execution takes the argmax logit, no noise anywhere.
    """
    out, _ = teacher.actor.forward(tobs)
    what, logits = out[:2].copy(), out[2:]
    if explore:
        what = np.clip(what + sigma * rng.standard_normal(2), -1.0, 1.0)
        _, hard = nets.gumbel_softmax(logits, temperature, rng)
    else:
        hard = nets.one_hot_argmax(logits)
    return np.concatenate([what, hard]), bool(hard[ADVISE] == 1.0)


class TeacherAdvisor:
    """Decision-point hook for the episode driver.

    Builds both teachers' composite observations from the students' intended
    subgoals, lets each teacher advise or pass, and keeps the per-decision
    trace the session later turns into teacher experiences.

    force_pass makes every draw exactly as usual and then discards the
    advice. The advice stream is consumed identically but the task rollout
    never sees an override, which is the no-teaching control.
    """

    def __init__(self, teachers, students, sigma, temperature, rng,
                 r_advise, r_practice, t_remain, explore=True,
                 force_pass=False):
        self.teachers = teachers
        self.students = students
        self.sigma = sigma
        self.temperature = temperature
        self.rng = rng
        self.r_advise = r_advise
        self.r_practice = r_practice
        self.t_remain = t_remain
        self.explore = explore
        self.force_pass = force_pass
        self.obs_trace = []
        self.act_trace = []
        self.advised = [0, 0]

    def advise(self, t, state, obs, intended):
        del t, state
        tobs = np.stack([
            build_teacher_obs(i, self.students, obs, intended,
                              self.r_advise, self.r_practice, self.t_remain)
            for i in range(2)])
        recorded = np.asarray(intended, dtype=float).copy()
        acts = np.zeros((2, TEACHER_ACTION_DIM))
        for i in range(2):
            act, advising = decide_advice(self.teachers[i], tobs[i],
                                          self.sigma, self.temperature,
                                          self.rng, self.explore)
            if advising and self.force_pass:
                act = act.copy()
                act[2:] = 0.0
                act[2 + PASS] = 1.0
                advising = False
            if advising:
                recorded[1 - i] = act[:2]
                self.advised[i] += 1
            acts[i] = act
        self.obs_trace.append(tobs)
        self.act_trace.append(acts)
        return recorded


def batch_from_tuples(tuples):
    """Full-batch dict from one episode's decision tuples."""
    return {
        "obs": np.stack([t["obs"] for t in tuples]).astype(float),
        "act": np.stack([t["act"] for t in tuples]).astype(float),
        "rew": np.asarray([t["rew"] for t in tuples], dtype=float),
        "next_obs": np.stack([t["next_obs"] for t in tuples]).astype(float),
    }


def _practice(policies, world_cfg, cfg, hier, worker, seed, n_episodes,
              epsilon):
    """Teacher-free rollouts from an explicit seed. Returns the decision
    tuples, the summed reward and the environment steps consumed."""
    rng_env, rng_explore = (np.random.default_rng(c)
                            for c in np.random.SeedSequence(seed).spawn(2))
    tuples, total, steps = [], 0.0, 0
    for _ in range(n_episodes):
        res = rollout.run_episode(world_cfg, policies, cfg, hier, worker,
                                  rng_env, rng_explore, explore=True,
                                  epsilon=epsilon)
        tuples.extend(res["tuples"])
        total += res["return"]
        steps += res["steps"]
    return tuples, float(total), steps


def evaluate_advice(students, batch, world_cfg, cfg, hier, worker, k_temp,
                    n_episodes, seed, epsilon=0.0, with_before=False):
    """Score an advising episode by what a throwaway copy learns from it.

    Clones the students, runs k_temp full-batch update rounds on the
    advising episode's decision tuples alone, then rolls the copies out for
    n_episodes of self-practice. The callers' policies are never touched and
    every random draw derives from the explicit seed, so equal inputs give
    bit-equal results. with_before also rolls out the pre-update copies
    under the same seed, the paired baseline for improvement scores.
    """
    # integer sub-seeds, so the paired rollouts can rebuild identical rngs
    upd, roll = (int(s) for s in
                 np.random.SeedSequence(seed).generate_state(2, np.uint64))
    before_return = None
    if with_before:
        pre = [p.clone() for p in students]
        _, before_return, _ = _practice(pre, world_cfg, cfg, hier, worker,
                                        roll, n_episodes, epsilon)
    temp = [p.clone() for p in students]
    td3.full_batch_rounds(temp, batch, cfg, np.random.default_rng(upd),
                          k_temp)
    tuples, total, steps = _practice(temp, world_cfg, cfg, hier, worker,
                                     roll, n_episodes, epsilon)
    return {"temp": temp, "tuples": tuples, "practice_return": total,
            "before_return": before_return, "steps": steps}


def mean_student_q(student, batch):
    """The student's own first-critic estimate averaged over an episode."""
    b = batch["obs"].shape[0]
    x = np.concatenate([batch["obs"].reshape(b, -1),
                        batch["act"].reshape(b, -1)], axis=1)
    q, _ = student.critic1.forward(x)
    return float(q.mean())


class VegThreshold:
    """Running advise-worthiness bar: a high quantile of the student value
    estimates seen so far. An empty history means nothing clears the bar."""

    def __init__(self, percentile=75.0):
        self.percentile = percentile
        self.history = []

    def threshold(self):
        if not self.history:
            return np.inf
        return float(np.percentile(self.history, self.percentile))

    def update(self, value):
        self.history.append(float(value))


def teacher_reward(kind, practice_return, before_return=None, student_q=None,
                   threshold=None):
    """Scalar feedback for one advising iteration.

    cr: the self-practice return itself. dr: improvement over the same-seed
    rollout of the not-yet-updated copy. veg: 1 when the student's own value
    estimate beat the running bar, else 0.
    """
    if kind == "cr":
        return float(practice_return)
    if kind == "dr":
        return float(practice_return - before_return)
    if kind == "veg":
        return 1.0 if student_q > threshold else 0.0
    raise ValueError("unknown teacher reward kind %r" % (kind,))


def build_teacher_experience(obs_trace, act_trace, temp, obs_dim,
                             r_practice_new, t_remain_new):
    """Extended experiences for both teachers from one advising iteration.

    The next composite observation replays the same decision points against
    the students as they stand after absorbing the advice: the student's
    subgoal, the student-owned value entries, the practice return and the
    time left are recomputed with the temporary policies, while every
    teacher-owned entry carries over unchanged. Returns (obs_seq, act_seq,
    next_obs_seq) with the sequences shaped (L, 2, d) and (L, 2, 4).
    """
    sl = obs_slices(obs_dim)
    obs_seq = np.asarray(obs_trace, dtype=float)
    act_seq = np.asarray(act_trace, dtype=float)
    nxt = obs_seq.copy()
    for i in range(2):
        j = 1 - i
        for t in range(obs_seq.shape[0]):
            o = obs_seq[t, i]
            joint = o[sl["joint_obs"]]
            obs_j = joint.reshape(2, obs_dim)[j]
            own = o[sl["own_goal"]]
            cross = o[sl["cross_goal"]]
            g_new, _ = temp[j].actor.forward(obs_j)
            row = nxt[t, i]
            row[sl["student_goal"]] = g_new
            row[sl["q_student_on_student"]] = _q1(temp[j], joint, i, own,
                                                  g_new)
            row[sl["q_student_on_cross"]] = _q1(temp[j], joint, i, own,
                                                cross)
            row[sl["r_practice"]] = r_practice_new
            row[sl["t_remain"]] = t_remain_new
    return obs_seq, act_seq, nxt


def teacher_joint_input(obs_pair, act_pair):
    """(B, 2, d) observations + (B, 2, 4) actions -> critic input rows."""
    b = obs_pair.shape[0]
    return np.concatenate([obs_pair.reshape(b, -1),
                           act_pair.reshape(b, -1)], axis=1)


def _target_actions(teachers, nxt, cfg, temperature, rng):
    """Smoothed target-policy actions at every next composite observation.

    nxt is (B, L, 2, d); returns (B, L, 2, 4). The subgoal half gets the
    usual clipped Gaussian smoothing; the advise/pass half uses the target
    softmax probabilities with no dither, so the bootstrap averages over the
    advise decision instead of betting on one branch.
    """
    B, L = nxt.shape[:2]
    out = np.empty((B, L, 2, TEACHER_ACTION_DIM))
    for m in range(2):
        y, _ = teachers[m].actor_target.forward(nxt[:, :, m].reshape(B * L, -1))
        eps = np.clip(cfg.target_noise_sigma * rng.standard_normal((B * L, 2)),
                      -cfg.target_noise_clip, cfg.target_noise_clip)
        what = np.clip(y[:, :2] + eps, -1.0, 1.0)
        when = nets.softmax(y[:, 2:] / temperature)
        out[:, :, m] = np.concatenate([what, when], axis=1).reshape(B, L, -1)
    return out


def update_teacher_critics(teachers, i, batch, cfg, temperature, rng,
                           square_of_mean=True):
    """One Adam step for both of teacher i's critics on a sequence batch.

    Each experience shares one reward across its decision sequence, so the
    default loss squares the mean per-step residual within an experience
    before averaging over the batch. mean_of_squares is the flat TD variant.
    Returns the summed twin loss.
    """
    obs, act = batch["obs_seq"], batch["act_seq"]
    rew, nxt = batch["rew"], batch["next_obs_seq"]
    B, L = obs.shape[:2]
    tgt = _target_actions(teachers, nxt, cfg, temperature, rng)
    xn = teacher_joint_input(nxt.reshape(B * L, 2, -1),
                             tgt.reshape(B * L, 2, -1))
    q1t, _ = teachers[i].critic1_target.forward(xn)
    q2t, _ = teachers[i].critic2_target.forward(xn)
    y = rew[:, None] + cfg.gamma * np.minimum(q1t[:, 0],
                                              q2t[:, 0]).reshape(B, L)
    x = teacher_joint_input(obs.reshape(B * L, 2, -1),
                            act.reshape(B * L, 2, -1))
    total = 0.0
    for crit, adam in ((teachers[i].critic1, teachers[i].adam_critic1),
                       (teachers[i].critic2, teachers[i].adam_critic2)):
        q, cache = crit.forward(x)
        resid = y - q[:, 0].reshape(B, L)
        if square_of_mean:
            m = resid.mean(axis=1)
            total += float((m * m).mean())
            dq = np.repeat(-2.0 * m / (B * L), L).reshape(B, L)
        else:
            total += float((resid * resid).mean())
            dq = -2.0 * resid / (B * L)
        grad, _ = crit.backward(cache, dq.reshape(B * L, 1))
        nets.adam_step(crit, grad, adam, cfg.critic_lr)
    return total


def teacher_actor_objective_grad(teachers, i, batch, cfg, temperature, rng):
    """Gradient of J = mean Q1 over all decision points wrt teacher i's
    actor, with i's action replayed through the live actor.

    The advise/pass half goes through a soft Gumbel sample whose noise is
    held fixed for the step; the peer's action comes from the peer's current
    actor with its own sample. Returns (flat_grad, j_value).
    """
    obs = batch["obs_seq"]
    B, L = obs.shape[:2]
    d = obs.shape[-1]
    acts = np.empty((B * L, 2, TEACHER_ACTION_DIM))
    caches, softs = [None, None], [None, None]
    for m in range(2):
        y, cache = teachers[m].actor.forward(obs[:, :, m].reshape(B * L, -1))
        soft, _ = nets.gumbel_softmax(y[:, 2:], temperature, rng)
        acts[:, m] = np.concatenate([y[:, :2], soft], axis=1)
        caches[m], softs[m] = cache, soft
    x = teacher_joint_input(obs.reshape(B * L, 2, -1), acts)
    q, qcache = teachers[i].critic1.forward(x)
    j_val = float(q.mean())
    _, dx = teachers[i].critic1.backward(qcache,
                                         np.full((B * L, 1), 1.0 / (B * L)))
    d_act = dx[:, 2 * d:].reshape(B * L, 2, TEACHER_ACTION_DIM)[:, i]
    dlogits = nets.gumbel_softmax_backward(d_act[:, 2:], softs[i],
                                           temperature)
    dout = np.concatenate([d_act[:, :2], dlogits], axis=1)
    reg = cfg.actor_preact_reg
    dz2_extra = None
    if reg > 0.0:
        z2 = teachers[i].actor.head_preactivation(caches[i])
        j_val -= reg * float((z2 * z2).mean())
        dz2_extra = -reg * 2.0 * z2 / z2.size
    grad, _ = teachers[i].actor.backward(caches[i], dout, dz2_extra)
    return grad, j_val


def update_teachers(teachers, memories, cfg, temperature, rng,
                    batch_size=8, square_of_mean=True):
    """One training round for both teachers from their sequence memories.

    Mirrors the task cadence: critic step every call, actor and target nets
    every policy_delay calls. Sampling waits until a memory holds a batch.
    Returns the per-teacher critic losses (None while waiting).
    """
    losses = []
    for i in range(2):
        if len(memories[i]) < batch_size:
            losses.append(None)
            continue
        batch = memories[i].sample(batch_size, rng)
        losses.append(update_teacher_critics(teachers, i, batch, cfg,
                                             temperature, rng,
                                             square_of_mean))
        teachers[i].update_count += 1
        if teachers[i].update_count % cfg.policy_delay == 0:
            grad, _ = teacher_actor_objective_grad(teachers, i, batch, cfg,
                                                   temperature, rng)
            nets.adam_step(teachers[i].actor, -grad, teachers[i].adam_actor,
                           cfg.actor_lr)
            td3.update_targets(teachers[i], cfg)
    return losses


def _window_mean(window):
    return float(np.mean(window)) if window else 0.0


def hmat_session(scfg, teachers=None, teacher_memories=None, worker=None,
                 expert=None, force_pass=False, teacher_explore=True):
    """One advising session over a fresh student team.

    Every iteration runs one advising episode, scores it through a throwaway
    copy of the students (whose self-practice rollouts also land in the
    replay memory), then trains the students on everything collected. The
    episode budget S charges each iteration 1 for the advising episode plus
    t_bar/T for the practice, so curves are comparable to the non-advised
    sessions at equal environment experience.

    teachers=None runs the identical loop without advising draws, the
    no-teaching control. Teachers and their memories persist across calls;
    the task policies start fresh, with agent 0 seeded from `expert`'s nets
    (knowledge only, no optimizer state) when one is given.
    """
    world_cfg = scfg.world_config()
    cfg = scfg.td3_config()
    hier = (HierarchyConfig() if scfg.hierarchical()
            else HierarchyConfig(horizon=1))
    streams = rollout.make_streams(scfg.effective_seed())
    students = session.create_task_policies(world_cfg, streams["init"])
    if expert is not None:
        students[0] = td3.AgentPolicy(expert.actor.copy(),
                                      expert.critic1.copy(),
                                      expert.critic2.copy())
    memory = replay.task_memory(world_cfg.obs_dim, 2)
    if teachers is not None and teacher_memories is None:
        teacher_memories = create_teacher_memories(world_cfg.obs_dim,
                                                   scfg.T, hier.horizon)
    advise_window = collections.deque(maxlen=scfg.recent_window)
    practice_window = collections.deque(maxlen=scfg.recent_window)
    veg = [VegThreshold(scfg.veg_percentile) for _ in range(2)]
    n_practice = scfg.t_bar // scfg.T
    per_iter = 1.0 + scfg.t_bar / scfg.T
    n_iters = int(round(scfg.S / per_iter))

    recorder = session.CurveRecorder()
    recorder.add(0, session.evaluate(world_cfg, students, cfg, hier, worker,
                                     streams["eval"], scfg.eval_episodes))
    advised = [0, 0]
    losses_log = []
    e = 0.0
    next_eval = float(scfg.eval_every)
    next_teacher = float(scfg.f_teacher)
    for _ in range(n_iters):
        advisor = None
        if teachers is not None:
            advisor = TeacherAdvisor(
                teachers, students, scfg.teacher_explore_sigma,
                scfg.gumbel_temperature, streams["advice"],
                _window_mean(advise_window), _window_mean(practice_window),
                (scfg.S - e) / scfg.S, explore=teacher_explore,
                force_pass=force_pass)
        res = rollout.run_episode(world_cfg, students, cfg, hier, worker,
                                  streams["env"], streams["explore"],
                                  explore=True, advisor=advisor,
                                  epsilon=scfg.epsilon_for_episode(e))
        rollout.push_tuples(memory, res["tuples"])
        batch = batch_from_tuples(res["tuples"])
        seed = int(streams["teacher"].integers(2 ** 63))
        ev = evaluate_advice(
            students, batch, world_cfg, cfg, hier, worker, scfg.k_temp,
            n_practice, seed, epsilon=scfg.epsilon_for_episode(e + 1.0),
            with_before=(teachers is not None
                         and scfg.teacher_reward_kind == "dr"))
        rollout.push_tuples(memory, ev["tuples"])
        advise_window.append(res["return"])
        practice_window.append(ev["practice_return"])
        if teachers is not None:
            for i in range(2):
                student_q = mean_student_q(students[1 - i], batch)
                r_i = teacher_reward(scfg.teacher_reward_kind,
                                     ev["practice_return"],
                                     ev["before_return"], student_q,
                                     veg[i].threshold())
                veg[i].update(student_q)
                if i == 0:
                    obs_seq, act_seq, nxt = build_teacher_experience(
                        advisor.obs_trace, advisor.act_trace, ev["temp"],
                        world_cfg.obs_dim,
                        _window_mean(practice_window),
                        max(0.0, (scfg.S - (e + per_iter)) / scfg.S))
                teacher_memories[i].push(obs_seq=obs_seq, act_seq=act_seq,
                                         rew=r_i, next_obs_seq=nxt)
                advised[i] += advisor.advised[i]
        td3.train_rounds(students, memory, cfg, streams["sample"],
                         len(res["tuples"]) + len(ev["tuples"]))
        e += per_iter
        while teachers is not None and e + 1e-9 >= next_teacher:
            losses_log.append(update_teachers(
                teachers, teacher_memories, cfg, scfg.gumbel_temperature,
                streams["advice"], scfg.teacher_batch,
                scfg.teacher_critic_loss == "square_of_mean"))
            next_teacher += scfg.f_teacher
        while e + 1e-9 >= next_eval:
            recorder.add(next_eval, session.evaluate(
                world_cfg, students, cfg, hier, worker, streams["eval"],
                scfg.eval_episodes))
            next_eval += scfg.eval_every
    return {"curve": recorder.rows, "students": students,
            "teachers": teachers, "teacher_memories": teacher_memories,
            "advised": advised, "teacher_losses": losses_log,
            "episodes": e}
