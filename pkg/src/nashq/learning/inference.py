"""Opponent-strategy inference from observed state transitions.

The inferring player sees ``(s, own action, s')`` and knows the transition
kernel, so each record yields a likelihood over the opponent's hidden action.
EM over those likelihoods estimates a stationary opponent strategy per state.
Empirical frequencies are the full-information counterpart (fictitious play).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..core import as_simplex


class EMMonotonicityError(ArithmeticError):
    """Observed-data log-likelihood decreased across an EM iteration."""


@dataclass
class OpponentModel:
    """Estimated opponent strategy ``pi_hat[s]``; unvisited states are uniform."""

    pi_hat: np.ndarray
    method: str
    converged: bool = True
    n_iter: int = 0
    log_likelihood: float = float("nan")
    n_flagged: int = 0
    visits: np.ndarray = field(default=None)

    def total_variation(self, pi_true):
        return 0.5 * np.abs(self.pi_hat - np.asarray(pi_true)).sum(axis=1)


def _sides(game, player):
    n_own = game.n_actions[player]
    n_opp = game.n_actions[1 - player]
    return n_own, n_opp


def transition_likelihoods(game, history, player=0):
    """States visited and ``L[t, b] = p(s'_t | s_t, own a_t, opponent b)``."""
    n_own, n_opp = _sides(game, player)
    if not len(history):
        return np.zeros(0, dtype=np.int64), np.zeros((0, n_opp))
    recs = np.array([(r.s, r.a1, r.a2, r.s_next) for r in history], dtype=np.int64)
    s, a1, a2, s_next = recs.T
    own = a1 if player == 0 else a2
    b = np.arange(n_opp)
    if player == 0:
        rows = (s[:, None] * game.n_actions_1 + own[:, None]) * game.n_actions_2 + b[None, :]
    else:
        rows = (s[:, None] * game.n_actions_1 + b[None, :]) * game.n_actions_2 + own[:, None]
    cols = np.broadcast_to(s_next[:, None], rows.shape)
    lik = np.asarray(game.transition_matrix[rows.ravel(), cols.ravel()]).reshape(rows.shape)
    return s, lik


def _posteriors(lik, prior):
    joint = lik * prior
    den = joint.sum(axis=1)
    flagged = den <= 0.0
    safe = np.where(flagged, 1.0, den)
    post = np.where(flagged[:, None], prior, joint / safe[:, None])
    return post, den, flagged


def log_likelihood(states, lik, pi_hat):
    """Observed-data log-likelihood, skipping records impossible under ``pi_hat``."""
    den = (lik * pi_hat[states]).sum(axis=1)
    ok = den > 0.0
    return float(np.log(den[ok]).sum())


def em_posterior(game, rec, pi_prior, player=0):
    """Posterior over the opponent's action in ``rec`` given prior ``pi_prior``.

    An observed transition that no supported opponent action can produce
    leaves the prior unchanged.
    """
    prior = as_simplex(pi_prior)
    _, lik = transition_likelihoods(game, [rec], player)
    post, _, _ = _posteriors(lik, prior[None, :])
    return post[0]


def _em_step(states, lik, pi_hat, n_states):
    post, den, flagged = _posteriors(lik, pi_hat[states])
    n_opp = pi_hat.shape[1]
    visits = np.bincount(states, minlength=n_states)
    new = np.stack([np.bincount(states, weights=post[:, b], minlength=n_states)
                    for b in range(n_opp)], axis=1)
    seen = visits > 0
    # row totals equal the visit counts exactly in real arithmetic; dividing by
    # them keeps rows on the simplex to rounding, which the monotonicity check needs
    new[seen] /= new[seen].sum(axis=1, keepdims=True)
    new[~seen] = 1.0 / n_opp
    return new, int(flagged.sum()), visits


def em_iterate(history, model, game, player=0, check_monotone=True):
    """One EM update of ``model`` from ``history``.

    The new strategy at a visited state is the average posterior over the
    records at that state. Raises :class:`EMMonotonicityError` if the
    observed-data log-likelihood falls by more than 1e-10.
    """
    if not len(history):
        raise ValueError("em_iterate needs a non-empty history")
    states, lik = transition_likelihoods(game, history, player)
    return _em_iterate_arrays(states, lik, model, game.n_states, check_monotone)


def _em_iterate_arrays(states, lik, model, n_states, check_monotone=True):
    old = np.asarray(model.pi_hat, dtype=float)
    new, flagged, visits = _em_step(states, lik, old, n_states)
    ll_old = log_likelihood(states, lik, old)
    ll_new = log_likelihood(states, lik, new)
    if check_monotone and flagged == 0 and ll_new < ll_old - 1e-10:
        raise EMMonotonicityError(f"log-likelihood fell from {ll_old!r} to {ll_new!r}")
    return OpponentModel(new, "em_filter", converged=False, n_iter=model.n_iter + 1,
                         log_likelihood=ll_new, n_flagged=flagged, visits=visits)


def em_from_arrays(states, lik, n_states, tol=1e-8, max_iter=1000, check_monotone=True):
    """EM from the uniform initializer on precomputed likelihood rows."""
    n_opp = lik.shape[1]
    model = OpponentModel(np.full((n_states, n_opp), 1.0 / n_opp), "em_filter",
                          visits=np.bincount(states, minlength=n_states))
    if states.size == 0:
        model.log_likelihood = 0.0
        return model
    model.log_likelihood = log_likelihood(states, lik, model.pi_hat)
    for _ in range(max_iter):
        new = _em_iterate_arrays(states, lik, model, n_states, check_monotone)
        change = np.abs(new.pi_hat - model.pi_hat).max()
        model = new
        if change < tol:
            model.converged = True
            break
    return model


def em_estimate(history, game, tol=1e-8, max_iter=1000, player=0):
    """Iterate :func:`em_iterate` from uniform until the max-norm change drops below ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    states, lik = transition_likelihoods(game, history, player)
    return em_from_arrays(states, lik, game.n_states, tol, max_iter)


def empirical_frequency(history, game, player=0):
    """Fictitious-play frequencies of the opponent's observed actions per state."""
    n_opp = game.n_actions[1 - player]
    counts = np.zeros((game.n_states, n_opp))
    for r in history:
        counts[r.s, r.a2 if player == 0 else r.a1] += 1
    visits = counts.sum(axis=1)
    pi = np.full_like(counts, 1.0 / n_opp)
    seen = visits > 0
    pi[seen] = counts[seen] / visits[seen, None]
    return OpponentModel(pi, "empirical_frequency", visits=visits.astype(np.int64))


class EMOpponentEstimator(BaseEstimator):
    """Estimator wrapper around :func:`em_estimate`.

    ``fit(history, game)`` stores ``pi_hat_``, ``converged_``, ``n_iter_`` and
    ``log_likelihood_``.
    """

    def __init__(self, tol=1e-8, max_iter=1000, player=0):
        self.tol = tol
        self.max_iter = max_iter
        self.player = player

    def fit(self, history, game):
        model = em_estimate(history, game, tol=self.tol, max_iter=self.max_iter, player=self.player)
        self.model_ = model
        self.pi_hat_ = model.pi_hat
        self.converged_ = model.converged
        self.n_iter_ = model.n_iter
        self.log_likelihood_ = model.log_likelihood
        return self

    def predict_proba(self, states):
        check_is_fitted(self, "pi_hat_")
        return self.pi_hat_[np.asarray(states, dtype=int)]


class FrequencyOpponentEstimator(BaseEstimator):
    def __init__(self, player=0):
        self.player = player

    def fit(self, history, game):
        self.model_ = empirical_frequency(history, game, self.player)
        self.pi_hat_ = self.model_.pi_hat
        return self

    def predict_proba(self, states):
        check_is_fitted(self, "pi_hat_")
        return self.pi_hat_[np.asarray(states, dtype=int)]
