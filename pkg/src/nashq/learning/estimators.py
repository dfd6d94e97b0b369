"""Estimator-style wrappers around the run loops.

``fit(game)`` trains on a :class:`~nashq.core.StochasticGame` and stores
fitted attributes with a trailing underscore. ``predict_proba(states)``
returns the learned strategies and ``predict(states)`` the canonical greedy
actions (lowest id among ties).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..validation import check_game, check_positive_int, check_states
from .agents import PartialInfoAgent
from .runners import (evaluate_greedy, run_episodic, run_full_info, run_inference_learner,
                      run_partial_info)
from .schedules import ExplorationSchedule, LearningRateSchedule


def _schedule(s, default=None):
    if s is None:
        return default or LearningRateSchedule()
    return s if isinstance(s, LearningRateSchedule) else LearningRateSchedule.from_dict(s)


def _exploration(e):
    if e is None:
        return ExplorationSchedule()
    return e if isinstance(e, ExplorationSchedule) else ExplorationSchedule.from_dict(e)


class _ProfileMixin:
    def predict_proba(self, states=None):
        """``(pi_1[states], pi_2[states])`` of the fitted profile."""
        check_is_fitted(self, "profile_")
        states = check_states(states, self.profile_.n_states)
        return self.profile_.pi_1[states], self.profile_.pi_2[states]

    def predict(self, states=None):
        """Greedy joint action per state, shape ``(n, 2)``."""
        p1, p2 = self.predict_proba(states)
        return np.stack([p1.argmax(axis=1), p2.argmax(axis=1)], axis=1)

    def _store(self, result):
        self.result_ = result
        self.q_tables_ = result.tables
        self.profile_ = result.profile
        self.trace_ = result.trace
        self.checkpoints_ = result.checkpoints
        self.visit_counts_ = result.visit_counts
        return self


class PartialInfoQLearning(_ProfileMixin, BaseEstimator):
    """Both players learn marginal Q-tables from their own observations.

    Parameters
    ----------
    n_steps : int
    schedule : LearningRateSchedule or dict, optional
        Defaults to the stair schedule of width 250.
    exploration : ExplorationSchedule or dict, optional
    tie_tol : float
    checkpoint_every : int, optional
        Snapshot cadence in steps.
    random_state : int
    """

    def __init__(self, n_steps=4000, schedule=None, exploration=None, tie_tol=1e-9,
                 checkpoint_every=50, random_state=0):
        self.n_steps = n_steps
        self.schedule = schedule
        self.exploration = exploration
        self.tie_tol = tie_tol
        self.checkpoint_every = checkpoint_every
        self.random_state = random_state

    def fit(self, game, y=None):
        check_game(game)
        check_positive_int(self.n_steps, "n_steps")
        res = run_partial_info(game, _schedule(self.schedule), _exploration(self.exploration),
                               self.n_steps, self.random_state, self.tie_tol,
                               self.checkpoint_every)
        return self._store(res)


class NashQLearning(_ProfileMixin, BaseEstimator):
    """Full-information joint-action learner with a shared stage-game equilibrium."""

    def __init__(self, n_steps=4000, schedule=None, exploration=None, selector="lemke_howson",
                 checkpoint_every=50, random_state=0):
        self.n_steps = n_steps
        self.schedule = schedule
        self.exploration = exploration
        self.selector = selector
        self.checkpoint_every = checkpoint_every
        self.random_state = random_state

    def fit(self, game, y=None):
        check_game(game)
        check_positive_int(self.n_steps, "n_steps")
        res = run_full_info(game, _schedule(self.schedule), _exploration(self.exploration),
                            self.selector, self.n_steps, self.random_state, self.checkpoint_every)
        self.n_fallbacks_ = res.n_fallbacks
        return self._store(res)


class InferenceQLearning(_ProfileMixin, BaseEstimator):
    """Player ``player`` learns against an opponent model; the other learns marginally.

    ``method`` is ``"em_filter"`` or ``"empirical_frequency"``.
    """

    def __init__(self, n_steps=4000, method="em_filter", player=0, schedule=None,
                 exploration=None, tie_tol=1e-9, refresh_every=100, history_cap=100_000,
                 checkpoint_every=50, random_state=0):
        self.n_steps = n_steps
        self.method = method
        self.player = player
        self.schedule = schedule
        self.exploration = exploration
        self.tie_tol = tie_tol
        self.refresh_every = refresh_every
        self.history_cap = history_cap
        self.checkpoint_every = checkpoint_every
        self.random_state = random_state

    def fit(self, game, y=None):
        check_game(game)
        check_positive_int(self.n_steps, "n_steps")
        res = run_inference_learner(game, self.method, _schedule(self.schedule),
                                    _exploration(self.exploration), self.n_steps,
                                    self.random_state, self.player, self.tie_tol,
                                    self.refresh_every, self.history_cap, self.checkpoint_every)
        self.opponent_model_ = res.models[self.player]
        return self._store(res)


class EpisodicPartialInfoQLearning(BaseEstimator):
    """Episodic marginal Q-learning for games with terminal states.

    ``observation`` is ``"full"`` or ``"blind"`` per player; blind players need
    ``state_maps``. The default schedule is a constant rate of 0.5.
    """

    def __init__(self, n_episodes=10_000, max_episode_len=200, start_state=None, schedule=None,
                 exploration=None, tie_tol=1e-9, state_maps=None, random_state=0):
        self.n_episodes = n_episodes
        self.max_episode_len = max_episode_len
        self.start_state = start_state
        self.schedule = schedule
        self.exploration = exploration
        self.tie_tol = tie_tol
        self.state_maps = state_maps
        self.random_state = random_state

    def _start(self, game):
        if self.start_state is not None:
            return int(self.start_state)
        return int((game.metadata or {}).get("start_state", 0))

    def fit(self, game, y=None):
        check_game(game)
        check_positive_int(self.n_episodes, "n_episodes")
        sched = _schedule(self.schedule, LearningRateSchedule("constant", value=0.5))
        maps = self.state_maps or (None, None)
        agents = []
        for i in range(2):
            m = maps[i]
            n_obs = game.n_states if m is None else int(max(m)) + 1
            agents.append(PartialInfoAgent(game.n_actions[i], n_obs, game.gammas[i], sched,
                                           self.tie_tol, m))
        res = run_episodic(game, agents, self.n_episodes, self._start(game),
                           _exploration(self.exploration), self.random_state,
                           self.max_episode_len)
        self.agents_ = res.agents
        self.q_tables_ = res.tables
        self.trace_ = res.trace
        self.visit_counts_ = res.visit_counts
        self.n_steps_ = res.n_steps
        return self

    def evaluate(self, game, n_rollouts=100, seed=0):
        """Greedy rollouts; rows are ``(return_1, return_2, steps, terminal)``."""
        check_is_fitted(self, "agents_")
        return evaluate_greedy(game, self.agents_, self._start(game), n_rollouts, seed,
                               self.max_episode_len)

    def success_rate(self, game, n_rollouts=100, seed=0, target=20.0):
        """Fraction of greedy rollouts whose joint return equals ``target``."""
        out = self.evaluate(game, n_rollouts, seed)
        return float(np.mean(out[:, 0] + out[:, 1] == target))
