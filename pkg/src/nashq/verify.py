"""Reconstruction of full-information Q-functions and epsilon-Nash certification.

Given a stationary profile, the joint Q-function of each player is the unique
fixed point of ``Q = r + gamma P (pi_1 Q pi_2)``. Marginalizing it over the
opponent's strategy must reproduce a player's learned marginal table at a
solution of the marginal equations; certification checks that neither player
can gain more than ``tol`` by any unilateral stationary deviation.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .core import check_profile, joint_weights, solve_discounted, value_of_profile

DEFAULT_CERT_TOL = 0.05


class ContractionError(ArithmeticError):
    """A reconstruction sweep shrank by less than the discount factor allows."""


@dataclass
class ReconstructedQ:
    """Joint Q-functions of a fixed profile.

    ``residual`` is the explicit sup-norm defect ``|r + gamma P v(Q) - Q|`` of
    the returned tables, maximized over players.
    """

    q_tilde_1: np.ndarray
    q_tilde_2: np.ndarray
    residuals: tuple
    iterations: tuple
    converged: bool
    tol: float

    @property
    def residual(self):
        return max(self.residuals)

    def q(self, player):
        return (self.q_tilde_1, self.q_tilde_2)[player]


def _sweeps(game, w, player, tol, max_iter):
    r = game.reward(player).ravel()
    gamma = game.gamma(player)
    p = game.transition_matrix
    n_s = game.n_states
    wf = w.reshape(n_s, -1)
    q = np.zeros_like(r)
    prev = None
    for it in range(1, max_iter + 1):
        v = (q.reshape(n_s, -1) * wf).sum(axis=1)
        new = r + gamma * (p @ v)
        change = float(np.abs(new - q).max())
        q = new
        # allow rounding noise once changes reach machine precision
        if prev is not None and change > (gamma + 1e-9) * prev + 1e-13:
            raise ContractionError(f"sweep {it}: change {change:.3e} after {prev:.3e} "
                                   f"exceeds factor {gamma}")
        prev = change
        if change < tol * (1.0 - gamma):
            break
    else:
        it = max_iter + 1
    v = (q.reshape(n_s, -1) * wf).sum(axis=1)
    residual = float(np.abs(r + gamma * (p @ v) - q).max())
    shape = (n_s, game.n_actions_1, game.n_actions_2)
    return q.reshape(shape), residual, it


def reconstruct_full_q(game, profile, tol=1e-10, max_iter=100_000):
    """Iterate the joint Bellman map of ``profile`` from zero for both players.

    Each player stops once a sweep changes the table by less than
    ``tol * (1 - gamma)``, which bounds the distance to the fixed point by
    ``tol``. ``iterations`` exceeding ``max_iter`` marks an unconverged result.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = joint_weights(check_profile(game, profile))
    out = [_sweeps(game, w, i, tol, max_iter) for i in range(2)]
    converged = all(it <= max_iter for _, _, it in out)
    return ReconstructedQ(out[0][0], out[1][0], (out[0][1], out[1][1]), (out[0][2], out[1][2]),
                          converged, tol)


def marginalize(q_joint, profile, player):
    """Average a joint table over the opponent's strategy: ``(S, A_player)``."""
    if player == 0:
        return np.einsum("sab,sb->sa", q_joint, profile.pi_2)
    return np.einsum("sab,sa->sb", q_joint, profile.pi_1)


def marginal_consistency(qbar, recon, profile, player):
    """Max-norm defect between ``qbar`` and the opponent-averaged reconstruction."""
    return float(np.abs(np.asarray(qbar) - marginalize(recon.q(player), profile, player)).max())


def convergence_metric(qbar_t, recon, profile_t, player):
    """Distance of a learned table at time t to the reconstructed reference.

    ``recon`` is built from the final learned profile. Marginal tables are
    compared against the reference averaged with the time-t opponent strategy;
    joint tables are compared entrywise.
    """
    q = np.asarray(qbar_t, dtype=float)
    if q.ndim == 3:
        return float(np.abs(q - recon.q(player)).max())
    return marginal_consistency(q, recon, profile_t, player)


def induced_mdp(game, profile, player):
    """Player ``player``'s MDP against the fixed opponent strategy.

    Returns rewards ``(S, A_i)`` and a sparse kernel ``(S*A_i, S)``.
    """
    check_profile(game, profile)
    n_s, n1, n2 = game.n_states, game.n_actions_1, game.n_actions_2
    r = game.reward(player)
    if player == 0:
        opp = profile.pi_2
        rows = np.repeat(np.arange(n_s * n1), n2)
        weights = np.repeat(opp, n1, axis=0).ravel()
        r_bar = np.einsum("sab,sb->sa", r, opp)
        n_own = n1
        cols = np.arange(n_s * n1 * n2)
    else:
        opp = profile.pi_1
        s_idx, a_idx, b_idx = np.meshgrid(np.arange(n_s), np.arange(n2), np.arange(n1), indexing="ij")
        rows = (s_idx * n2 + a_idx).ravel()
        cols = ((s_idx * n1 + b_idx) * n2 + a_idx).ravel()
        weights = opp[s_idx, b_idx].ravel()
        r_bar = np.einsum("sab,sa->sb", r, opp)
        n_own = n2
    avg = sparse.csr_matrix((weights, (rows, cols)), shape=(n_s * n_own, n_s * n1 * n2))
    return r_bar, sparse.csr_matrix(avg @ game.transition_matrix)


def policy_iteration(r_bar, p_bar, gamma, policy=None, max_iter=10_000, tol=1e-12):
    """Exact optimal values of a finite MDP by Howard policy iteration.

    Improvement switches action only on a gain above ``tol``, so the loop ends.
    Returns ``(v, policy, n_iter)``.
    """
    n_s, n_a = r_bar.shape
    idx = np.arange(n_s)
    policy = np.zeros(n_s, dtype=int) if policy is None else np.asarray(policy, dtype=int).copy()
    for it in range(1, max_iter + 1):
        rows = idx * n_a + policy
        v = solve_discounted(p_bar[rows], r_bar[idx, policy], gamma, tol=1e-11)
        q = r_bar + gamma * (p_bar @ v).reshape(n_s, n_a)
        best = q.argmax(axis=1)
        improve = q[idx, best] > q[idx, policy] + tol * max(1.0, float(np.abs(v).max()))
        if not improve.any():
            return v, policy, it
        policy = np.where(improve, best, policy)
    raise ArithmeticError("policy iteration did not terminate")


@dataclass
class NashCertificate:
    """Best unilateral improvement per player at a profile.

    ``passed`` holds exactly when ``max(gap_1, gap_2) <= tolerance``.
    """

    gap_1: float
    gap_2: float
    tolerance: float
    passed: bool
    best_responses: tuple = field(default=(), repr=False)
    iterations: tuple = ()

    @property
    def gap(self):
        return max(self.gap_1, self.gap_2)

    def to_dict(self):
        return {"gap_1": self.gap_1, "gap_2": self.gap_2, "tolerance": self.tolerance,
                "passed": self.passed, "policy_iterations": list(self.iterations)}


def certify_nash(game, profile, tol=DEFAULT_CERT_TOL):
    """Certify ``profile`` as a ``tol``-Nash equilibrium.

    Each gap is ``max_s (v_star(s) - v(s))`` where ``v`` is the player's value
    under the profile and ``v_star`` the optimum of the player's best-response
    MDP, solved exactly by policy iteration.
    """
    values = value_of_profile(game, profile)
    gaps, brs, iters = [], [], []
    for i in range(2):
        r_bar, p_bar = induced_mdp(game, profile, i)
        start = np.asarray(profile.strategy(i)).argmax(axis=1)
        v_star, br, n_iter = policy_iteration(r_bar, p_bar, game.gamma(i), start)
        gaps.append(max(0.0, float((v_star - values[i]).max())))
        brs.append(br)
        iters.append(n_iter)
    return NashCertificate(gaps[0], gaps[1], float(tol), max(gaps) <= tol, tuple(brs),
                           tuple(iters))


def run_fingerprint(game, seed, schedule):
    """Identity of a run: game hash, seed and learning-rate schedule."""
    sched = schedule.to_dict() if hasattr(schedule, "to_dict") else schedule
    body = {"game_sha256": game.fingerprint(), "seed": int(seed), "schedule": sched}
    digest = hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()
    return dict(body, digest=digest)


def certificate_document(cert, recon=None, fingerprint=None, extra=None):
    """JSON-ready certificate with gaps, tolerance, residuals and iterations."""
    doc = {"gap_1": cert.gap_1, "gap_2": cert.gap_2, "tolerance": cert.tolerance,
           "passed": cert.passed, "policy_iterations": list(cert.iterations)}
    if recon is not None:
        doc["reconstruction"] = {"residual_1": recon.residuals[0], "residual_2": recon.residuals[1],
                                 "iterations_1": recon.iterations[0],
                                 "iterations_2": recon.iterations[1],
                                 "tol": recon.tol, "converged": recon.converged}
    if fingerprint is not None:
        doc["fingerprint"] = fingerprint
    if extra:
        doc.update(extra)
    return doc
