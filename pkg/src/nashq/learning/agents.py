"""Tabular learners, one object per player.

Agents keep their tables as nested Python lists because the per-step work is
a handful of scalar operations, where numpy call overhead dominates. Each
agent sees only what its ``update`` signature hands it; the runners decide
what that is, which is how the information barrier is enforced.
"""
from __future__ import annotations

import numpy as np

from .schedules import LearningRateSchedule, VisitCounter


def partial_info_update(qbar, rec, next_best, alpha, gamma, player=0):
    """Stochastic-approximation update of one marginal Q entry.

    Returns a copy of ``qbar`` with entry ``(rec.s, own action)`` set to
    ``(1 - alpha) * old + alpha * (r + gamma * next_best)``.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    q = np.array(qbar, dtype=float)
    a = rec.a1 if player == 0 else rec.a2
    r = rec.r1 if player == 0 else rec.r2
    q[rec.s, a] = (1.0 - alpha) * q[rec.s, a] + alpha * (r + gamma * next_best)
    return q


def _draw(ties, n, epsilon, u):
    # index of the first action whose cumulative mixed weight exceeds u
    share = (1.0 - epsilon) / len(ties)
    base = epsilon / n
    acc = 0.0
    for a in range(n):
        acc += base + share if a in ties else base
        if u < acc:
            return a
    return n - 1 if epsilon > 0 else ties[-1]


def _ties(row, tol):
    m = max(row)
    return [a for a, v in enumerate(row) if v >= m - tol]


class PartialInfoAgent:
    """Marginal Q-learner over own actions only.

    Parameters
    ----------
    n_actions : int
    n_obs : int
        Number of observation ids. Equals the number of states unless a
        ``state_map`` projects states onto coarser observations.
    gamma : float
    schedule : LearningRateSchedule
    tie_tol : float
        Actions within this distance of the maximum form the best-response set.
    state_map : sequence of int, optional
        Observation id for every state.
    """

    observes_opponent = False

    def __init__(self, n_actions, n_obs, gamma, schedule=None, tie_tol=1e-9, state_map=None):
        self.n_actions = int(n_actions)
        self.n_obs = int(n_obs)
        self.gamma = float(gamma)
        self.schedule = schedule or LearningRateSchedule()
        self.tie_tol = tie_tol
        self.state_map = None if state_map is None else [int(o) for o in state_map]
        self.q = [[0.0] * self.n_actions for _ in range(self.n_obs)]
        self.counter = VisitCounter((self.n_obs, self.n_actions))
        self._rate = self.schedule.rate_function()
        self.absmax = 0.0

    def observe(self, s):
        return s if self.state_map is None else self.state_map[s]

    def best_response(self, s):
        return _ties(self.q[self.observe(s)], self.tie_tol)

    def act(self, s, epsilon, u):
        """Sample from ``(1 - epsilon) * best_response + epsilon * uniform`` with uniform draw ``u``."""
        return _draw(self.best_response(s), self.n_actions, epsilon, u)

    def update(self, t, s, a, r, s_next, done):
        """Apply the marginal update; returns ``(alpha, |change|)``."""
        o = self.observe(s)
        row = self.q[o]
        alpha = self._rate(t, self.counter.increment(o, a))
        nb = 0.0 if done else max(self.q[self.observe(s_next)])
        old = row[a]
        new = (1.0 - alpha) * old + alpha * (r + self.gamma * nb)
        row[a] = new
        if abs(new) > self.absmax:
            self.absmax = abs(new)
        return alpha, abs(new - old)

    def table(self):
        return np.array(self.q, dtype=float)

    def state_table(self, n_states):
        """Table indexed by state rather than observation."""
        q = self.table()
        return q if self.state_map is None else q[np.asarray(self.state_map[:n_states])]

    def strategy_table(self, n_states):
        """Canonical best response (uniform over ties) at every state."""
        out = np.zeros((n_states, self.n_actions))
        for s in range(n_states):
            ties = self.best_response(s)
            out[s, ties] = 1.0 / len(ties)
        return out


class OpponentModelAgent:
    """Joint-action learner that averages over an opponent-strategy estimate.

    The table is indexed ``q[s][own][opp]``. Each step updates the row of the
    taken own action, weighting opponent columns by how plausible they are:
    the observed action when it is visible (``empirical_frequency``), or the
    normalized EM posterior when it must be inferred (``em_filter``). The
    bootstrap is ``max_a sum_b pi_hat(s', b) q(s', a, b)``.

    For ``em_filter`` the agent needs ``likelihood(s, a, s_next)``, the vector
    of transition probabilities over the opponent's actions.
    """

    def __init__(self, n_actions, n_opp, n_states, gamma, schedule=None, method="em_filter",
                 tie_tol=1e-9, likelihood=None, refresh_every=100, history_cap=100_000,
                 em_tol=1e-8, em_max_iter=200):
        if method not in ("em_filter", "empirical_frequency"):
            raise ValueError(f"unknown opponent model {method!r}")
        if method == "em_filter" and likelihood is None:
            raise ValueError("em_filter needs the transition likelihood")
        self.n_actions = int(n_actions)
        self.n_opp = int(n_opp)
        self.n_states = int(n_states)
        self.gamma = float(gamma)
        self.schedule = schedule or LearningRateSchedule()
        self.method = method
        self.tie_tol = tie_tol
        self.likelihood = likelihood
        self.refresh_every = int(refresh_every)
        self.history_cap = int(history_cap)
        self.em_tol = em_tol
        self.em_max_iter = em_max_iter
        self.observes_opponent = method == "empirical_frequency"

        self.q = [[[0.0] * self.n_opp for _ in range(self.n_actions)] for _ in range(self.n_states)]
        self.pi_hat = [[1.0 / self.n_opp] * self.n_opp for _ in range(self.n_states)]
        self.counter = VisitCounter((self.n_states, self.n_actions))
        self._rate = self.schedule.rate_function()
        self._freq = [[0] * self.n_opp for _ in range(self.n_states)]
        self._hist_s = np.zeros(self.history_cap, dtype=np.int64)
        self._hist_l = np.zeros((self.history_cap, self.n_opp))
        self._n_hist = 0
        self._n_seen = 0
        self.absmax = 0.0
        self.last_model = None

    def values(self, s):
        pi = self.pi_hat[s]
        return [sum(p * v for p, v in zip(pi, row)) for row in self.q[s]]

    def best_response(self, s):
        return _ties(self.values(s), self.tie_tol)

    def act(self, s, epsilon, u):
        return _draw(self.best_response(s), self.n_actions, epsilon, u)

    def _weights(self, s, a, s_next, a_opp):
        if self.observes_opponent:
            counts = self._freq[s]
            counts[a_opp] += 1
            total = sum(counts)
            self.pi_hat[s] = [c / total for c in counts]
            w = [0.0] * self.n_opp
            w[a_opp] = 1.0
            return w
        lik = self.likelihood(s, a, s_next)
        i = self._n_seen % self.history_cap
        self._hist_s[i] = s
        self._hist_l[i] = lik
        self._n_seen += 1
        self._n_hist = min(self._n_seen, self.history_cap)
        post = [li * p for li, p in zip(lik, self.pi_hat[s])]
        top = max(post)
        if top <= 0.0:
            return [1.0] * self.n_opp
        return [p / top for p in post]

    def refresh(self):
        """Re-estimate the opponent strategy by EM on the retained history."""
        from .inference import em_from_arrays

        n = self._n_hist
        model = em_from_arrays(self._hist_s[:n], self._hist_l[:n], self.n_states,
                               tol=self.em_tol, max_iter=self.em_max_iter)
        self.pi_hat = model.pi_hat.tolist()
        self.last_model = model
        return model

    def update(self, t, s, a, r, s_next, done, a_opp=None):
        w = self._weights(s, a, s_next, a_opp)
        nb = 0.0 if done else max(self.values(s_next))
        target = r + self.gamma * nb
        alpha = self._rate(t, self.counter.increment(s, a))
        row = self.q[s][a]
        delta = 0.0
        for b, wb in enumerate(w):
            if wb > 0.0:
                step = alpha * wb
                old = row[b]
                new = (1.0 - step) * old + step * target
                row[b] = new
                delta = max(delta, abs(new - old))
                if abs(new) > self.absmax:
                    self.absmax = abs(new)
        if not self.observes_opponent and self._n_seen % self.refresh_every == 0:
            self.refresh()
        return alpha, delta

    def table(self):
        return np.array(self.q, dtype=float)

    def marginal_table(self):
        """``sum_b pi_hat(s, b) q(s, a, b)`` as an ``(S, A)`` array."""
        return np.array([self.values(s) for s in range(self.n_states)])

    def strategy_table(self, n_states):
        out = np.zeros((n_states, self.n_actions))
        for s in range(n_states):
            ties = self.best_response(s)
            out[s, ties] = 1.0 / len(ties)
        return out

    def model(self):
        from .inference import OpponentModel

        visits = np.bincount(self._hist_s[:self._n_hist], minlength=self.n_states)
        if self.observes_opponent:
            visits = np.array([sum(c) for c in self._freq], dtype=np.int64)
        base = self.last_model
        return OpponentModel(np.array(self.pi_hat), self.method,
                             converged=True if base is None else base.converged,
                             n_iter=0 if base is None else base.n_iter,
                             log_likelihood=float("nan") if base is None else base.log_likelihood,
                             n_flagged=0 if base is None else base.n_flagged,
                             visits=visits)


class RandomAgent:
    """Uniform random play; never learns."""

    observes_opponent = False

    def __init__(self, n_actions):
        self.n_actions = int(n_actions)
        self.absmax = 0.0

    def act(self, s, epsilon, u):
        return min(int(u * self.n_actions), self.n_actions - 1)

    def update(self, t, s, a, r, s_next, done):
        return 0.0, 0.0

    def table(self):
        return np.zeros((0, self.n_actions))

    def strategy_table(self, n_states):
        return np.full((n_states, self.n_actions), 1.0 / self.n_actions)
