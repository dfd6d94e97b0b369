"""Seeded learning loops.

Every run draws from three independent PCG64 streams spawned from one seed:
stream 0 drives the environment (next-state draws, shared exploration coin),
streams 1 and 2 drive the two players' action choices. Each stream yields one
uniform per use, so a run is a pure function of (game, agents, seed).
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

from ..core import FastGame, StrategyProfile, spawn_streams
from ..equilibrium import make_selector, nash_q_value
from .agents import OpponentModelAgent, PartialInfoAgent, RandomAgent
from .schedules import ExplorationSchedule, LearningRateSchedule, VisitCounter
from .trace import EPISODE_COLUMNS, EPISODE_INT_COLUMNS, Trace


class UniformStream:
    """Block-buffered ``rng.random()``; yields the same numbers as scalar calls."""

    def __init__(self, rng, block=8192):
        self.rng = rng
        self.block = block
        self._buf = []
        self._i = 0

    def __call__(self):
        if self._i == len(self._buf):
            self._buf = self.rng.random(self.block).tolist()
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return u


@dataclass
class Checkpoint:
    t: int
    tables: tuple
    profile: StrategyProfile


@dataclass
class RunResult:
    """Outcome of a learning run.

    ``tables`` holds each player's learned table (marginal ``(S, A_i)`` or
    joint ``(S, A1, A2)``), ``profile`` the final greedy/equilibrium profile.
    """

    tables: tuple
    profile: StrategyProfile
    trace: Trace
    checkpoints: list = field(default_factory=list)
    visit_counts: tuple = ()
    models: tuple = (None, None)
    n_fallbacks: int = 0
    final_state: int = 0

    def __iter__(self):
        return iter((self.tables, self.profile, self.trace))


def _next_state(fast, row, u):
    nxt = fast.next_states[row]
    if len(nxt) == 1:
        return nxt[0]
    k = bisect.bisect_right(fast.next_cum[row], u)
    return nxt[min(k, len(nxt) - 1)]


def _profile(game, agents):
    return StrategyProfile(agents[0].strategy_table(game.n_states),
                           agents[1].strategy_table(game.n_states))


def _tables(agents):
    return tuple(ag.table() for ag in agents)


def run_agents(game, agents, n_steps, exploration=None, seed=0, s0=0, checkpoint_every=None):
    """Drive two agents through ``n_steps`` transitions of ``game``.

    Player ``i``'s agent receives only ``(t, s, own action, own reward, s')``,
    plus the opponent's action when ``agent.observes_opponent`` is set.
    Reaching a terminal state restarts from ``s0`` and increments the
    ``episode`` column.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    exploration = exploration or ExplorationSchedule()
    fast = FastGame.from_game(game)
    streams = spawn_streams(seed, 3)
    u_env, u_1, u_2 = (UniformStream(g) for g in streams)
    ag1, ag2 = agents
    n2 = fast.n_actions[1]
    n1n2 = fast.n_actions[0] * n2
    rew1, rew2 = fast.rewards
    terminal = fast.terminal
    decay = exploration.resolve(n_steps)
    eps_min = exploration.epsilon_min
    see_1, see_2 = ag1.observes_opponent, ag2.observes_opponent
    trace = Trace()
    push = trace.append
    checkpoints = []
    s, episode = int(s0), 0

    for t in range(n_steps):
        eps = max(eps_min, 1.0 / (1.0 + t / decay))
        a1 = ag1.act(s, eps, u_1())
        a2 = ag2.act(s, eps, u_2())
        row = s * n1n2 + a1 * n2 + a2
        s_next = _next_state(fast, row, u_env())
        r1, r2 = rew1[row], rew2[row]
        done = terminal[s_next]
        if see_1:
            al1, d1 = ag1.update(t, s, a1, r1, s_next, done, a_opp=a2)
        else:
            al1, d1 = ag1.update(t, s, a1, r1, s_next, done)
        if see_2:
            al2, d2 = ag2.update(t, s, a2, r2, s_next, done, a_opp=a1)
        else:
            al2, d2 = ag2.update(t, s, a2, r2, s_next, done)
        push(t, episode, s, a1, a2, r1, r2, s_next, al1, al2, eps, d1, d2, ag1.absmax, ag2.absmax)
        if checkpoint_every and (t + 1) % checkpoint_every == 0:
            checkpoints.append(Checkpoint(t + 1, _tables(agents), _profile(game, agents)))
        if done:
            s, episode = int(s0), episode + 1
        else:
            s = s_next

    counts = tuple(getattr(ag, "counter", None) and ag.counter.counts for ag in agents)
    models = tuple(ag.model() if isinstance(ag, OpponentModelAgent) else None for ag in agents)
    return RunResult(_tables(agents), _profile(game, agents), trace, checkpoints, counts, models,
                     final_state=s)


def partial_info_agents(game, schedule=None, tie_tol=1e-9, state_maps=None):
    schedule = schedule or LearningRateSchedule()
    maps = state_maps or (None, None)
    agents = []
    for i in range(2):
        m = maps[i]
        n_obs = game.n_states if m is None else int(max(m)) + 1
        agents.append(PartialInfoAgent(game.n_actions[i], n_obs, game.gammas[i], schedule,
                                       tie_tol, m))
    return agents


def run_partial_info(game, schedule=None, exploration=None, n_steps=4000, seed=0, tie_tol=1e-9,
                     checkpoint_every=None, state_maps=None, s0=0):
    """Both players run marginal Q-learning on their own observations.

    Returns a :class:`RunResult`; unpacking gives ``(tables, profile, trace)``.
    """
    agents = partial_info_agents(game, schedule, tie_tol, state_maps)
    return run_agents(game, agents, n_steps, exploration, seed, s0, checkpoint_every)


def opponent_likelihood(game, player):
    """``f(s, own, s') -> [p(s' | s, own, b) for b]`` for the given player."""
    if game.n_states * game.n_actions_1 * game.n_actions_2 * game.n_states <= 4_000_000:
        dense = game.transition
        if player == 0:
            return lambda s, a, sn: dense[s, a, :, sn].tolist()
        return lambda s, a, sn: dense[s, :, a, sn].tolist()
    p = game.transition_matrix
    n1, n2 = game.n_actions_1, game.n_actions_2

    def lookup(s, a, sn):
        if player == 0:
            rows = [(s * n1 + a) * n2 + b for b in range(n2)]
        else:
            rows = [(s * n1 + b) * n2 + a for b in range(n1)]
        return np.asarray(p[rows, [sn] * len(rows)]).ravel().tolist()

    return lookup


def own_action_rewards(game, player):
    """True when ``player``'s reward at every state ignores the opponent's action."""
    r = game.reward(player)
    axis = 2 if player == 0 else 1
    return bool(np.all(r == np.take(r, [0], axis=axis)))


def inference_agent(game, player=0, method="em_filter", schedule=None, tie_tol=1e-9,
                    refresh_every=100, history_cap=100_000, em_tol=1e-8, em_max_iter=200):
    if method == "em_filter" and not own_action_rewards(game, player):
        raise ValueError(f"em_filter needs player {player + 1}'s reward to depend only on "
                         "(state, own action)")
    lik = opponent_likelihood(game, player) if method == "em_filter" else None
    return OpponentModelAgent(game.n_actions[player], game.n_actions[1 - player], game.n_states,
                              game.gammas[player], schedule, method, tie_tol, lik, refresh_every,
                              history_cap, em_tol, em_max_iter)


def run_inference_learner(game, method="em_filter", schedule=None, exploration=None, n_steps=4000,
                          seed=0, player=0, tie_tol=1e-9, refresh_every=100, history_cap=100_000,
                          checkpoint_every=None, s0=0):
    """One player learns against an opponent model; the other runs partial-information learning.

    ``method`` is ``"em_filter"`` (opponent inferred from transitions) or
    ``"empirical_frequency"`` (fictitious play on observed actions).
    """
    schedule = schedule or LearningRateSchedule()
    learner = inference_agent(game, player, method, schedule, tie_tol, refresh_every, history_cap)
    other = partial_info_agents(game, schedule, tie_tol)[1 - player]
    agents = [learner, other] if player == 0 else [other, learner]
    return run_agents(game, agents, n_steps, exploration, seed, s0, checkpoint_every)


def run_random(game, n_steps=1000, seed=0, s0=0):
    agents = [RandomAgent(game.n_actions_1), RandomAgent(game.n_actions_2)]
    return run_agents(game, agents, n_steps, None, seed, s0)


def _mixed_draw(x, epsilon, u):
    n = len(x)
    base = epsilon / n
    acc = 0.0
    for a, p in enumerate(x):
        acc += (1.0 - epsilon) * p + base
        if u < acc:
            return a
    return max(a for a, p in enumerate(x) if (1.0 - epsilon) * p + base > 0)


def run_full_info(game, schedule=None, exploration=None, selector="lemke_howson", n_steps=4000,
                  seed=0, checkpoint_every=None, s0=0):
    """Joint-action Nash-Q learning with one shared equilibrium selection per state.

    Both players observe everything. Stage-game equilibria are cached per
    state and recomputed after that state's tables change.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    schedule = schedule or LearningRateSchedule()
    exploration = exploration or ExplorationSchedule()
    if isinstance(selector, str):
        selector = make_selector(selector)
    fast = FastGame.from_game(game)
    u_env, u_1, u_2 = (UniformStream(g) for g in spawn_streams(seed, 3))
    n_s, (n1, n2) = game.n_states, game.n_actions
    g1, g2 = game.gammas
    q = (np.zeros((n_s, n1, n2)), np.zeros((n_s, n1, n2)))
    counter = VisitCounter((n_s, n1 * n2))
    rate = schedule.rate_function()
    cache = [None] * n_s

    def equilibrium(s):
        if cache[s] is None:
            v1, v2, x, y = nash_q_value(q[0][s], q[1][s], selector)
            cache[s] = (v1, v2, x.tolist(), y.tolist())
        return cache[s]

    rew1, rew2 = fast.rewards
    terminal = fast.terminal
    decay = exploration.resolve(n_steps)
    trace = Trace()
    checkpoints = []
    absmax = [0.0, 0.0]
    s, episode = int(s0), 0

    def profile():
        eqs = [equilibrium(k) for k in range(n_s)]
        return StrategyProfile(np.array([e[2] for e in eqs]), np.array([e[3] for e in eqs]))

    for t in range(n_steps):
        eps = max(exploration.epsilon_min, 1.0 / (1.0 + t / decay))
        _, _, x, y = equilibrium(s)
        a1 = _mixed_draw(x, eps, u_1())
        a2 = _mixed_draw(y, eps, u_2())
        row = (s * n1 + a1) * n2 + a2
        s_next = _next_state(fast, row, u_env())
        r1, r2 = rew1[row], rew2[row]
        done = terminal[s_next]
        nv1, nv2 = (0.0, 0.0) if done else equilibrium(s_next)[:2]
        alpha = rate(t, counter.increment(s, a1 * n2 + a2))
        deltas = []
        for i, (r, g, nv) in enumerate(((r1, g1, nv1), (r2, g2, nv2))):
            old = q[i][s, a1, a2]
            new = (1.0 - alpha) * old + alpha * (r + g * nv)
            q[i][s, a1, a2] = new
            deltas.append(abs(new - old))
            absmax[i] = max(absmax[i], abs(new))
        cache[s] = None
        trace.append(t, episode, s, a1, a2, r1, r2, s_next, alpha, alpha, eps, deltas[0], deltas[1],
                     absmax[0], absmax[1])
        if checkpoint_every and (t + 1) % checkpoint_every == 0:
            checkpoints.append(Checkpoint(t + 1, (q[0].copy(), q[1].copy()), profile()))
        if done:
            s, episode = int(s0), episode + 1
        else:
            s = s_next

    counts = counter.counts.reshape(n_s, n1, n2)
    return RunResult((q[0].copy(), q[1].copy()), profile(), trace, checkpoints, (counts, counts),
                     n_fallbacks=getattr(selector, "n_fallbacks", 0), final_state=s)


@dataclass
class EpisodicResult:
    tables: tuple
    profile: StrategyProfile
    trace: Trace
    checkpoints: list
    agents: tuple
    visit_counts: tuple
    n_steps: int


def run_episodic(game, agents, n_episodes, start_state, exploration=None, seed=0,
                 max_episode_len=200, checkpoint_every=None):
    """Episodic training with a shared exploration coin per step.

    At each step one environment uniform decides whether both players act
    uniformly at random (probability ``eps`` for the episode) or greedily with
    random tie-breaking. Terminal states bootstrap zero. Episodes are cut at
    ``max_episode_len`` steps. The trace has one row per episode and
    checkpoints are taken every ``checkpoint_every`` episodes.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    exploration = exploration or ExplorationSchedule()
    fast = FastGame.from_game(game)
    u_env, u_1, u_2 = (UniformStream(g) for g in spawn_streams(seed, 3))
    ag1, ag2 = agents
    n2 = fast.n_actions[1]
    n1n2 = fast.n_actions[0] * n2
    rew1, rew2 = fast.rewards
    terminal = fast.terminal
    decay = exploration.resolve(n_episodes)
    see_1, see_2 = ag1.observes_opponent, ag2.observes_opponent
    trace = Trace(EPISODE_COLUMNS, EPISODE_INT_COLUMNS)
    checkpoints = []
    t = 0
    for e in range(n_episodes):
        eps = max(exploration.epsilon_min, 1.0 / (1.0 + e / decay))
        s = int(start_state)
        ret1 = ret2 = 0.0
        t_start, done, steps = t, False, 0
        while steps < max_episode_len:
            mix = 1.0 if u_env() < eps else 0.0
            a1 = ag1.act(s, mix, u_1())
            a2 = ag2.act(s, mix, u_2())
            row = s * n1n2 + a1 * n2 + a2
            s_next = _next_state(fast, row, u_env())
            r1, r2 = rew1[row], rew2[row]
            done = terminal[s_next]
            if see_1:
                ag1.update(t, s, a1, r1, s_next, done, a_opp=a2)
            else:
                ag1.update(t, s, a1, r1, s_next, done)
            if see_2:
                ag2.update(t, s, a2, r2, s_next, done, a_opp=a1)
            else:
                ag2.update(t, s, a2, r2, s_next, done)
            ret1 += r1
            ret2 += r2
            t += 1
            steps += 1
            s = s_next
            if done:
                break
        trace.append(e, t_start, steps, ret1, ret2, eps, int(done), int(not done), ag1.absmax,
                     ag2.absmax)
        if checkpoint_every and (e + 1) % checkpoint_every == 0:
            checkpoints.append(Checkpoint(e + 1, _tables(agents), _profile(game, agents)))
    counts = tuple(getattr(ag, "counter", None) and ag.counter.counts for ag in agents)
    return EpisodicResult(_tables(agents), _profile(game, agents), trace, checkpoints,
                          tuple(agents), counts, t)


def evaluate_greedy(game, agents, start_state, n_rollouts=100, seed=0, max_episode_len=200):
    """Greedy rollouts (random tie-breaks); rows are ``(return_1, return_2, steps, terminal)``."""
    fast = FastGame.from_game(game)
    u_env, u_1, u_2 = (UniformStream(g) for g in spawn_streams(seed, 3))
    n2 = fast.n_actions[1]
    n1n2 = fast.n_actions[0] * n2
    out = np.zeros((n_rollouts, 4))
    for k in range(n_rollouts):
        s, ret1, ret2, done, steps = int(start_state), 0.0, 0.0, False, 0
        while steps < max_episode_len and not done:
            a1 = agents[0].act(s, 0.0, u_1())
            a2 = agents[1].act(s, 0.0, u_2())
            row = s * n1n2 + a1 * n2 + a2
            s_next = _next_state(fast, row, u_env())
            ret1 += fast.rewards[0][row]
            ret2 += fast.rewards[1][row]
            done = fast.terminal[s_next]
            s = s_next
            steps += 1
        out[k] = ret1, ret2, steps, float(done)
    return out
