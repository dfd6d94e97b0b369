"""Game model, probability primitives and seeded trajectory simulation.

States and actions are dense integer ids ``0..n-1``. A game stores its
transition kernel as a sparse ``(S*A1*A2, S)`` matrix so that the same type
serves a 10-state random game and a 6562-state gridworld.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

SIMPLEX_TOL = 1e-12
RENORM_TOL = 1e-9
DIRECT_SOLVE_MAX_STATES = 2000
# dense JSON transitions above this many entries are written in CSR form
DENSE_JSON_MAX_ENTRIES = 2_000_000


class InvalidSimplexError(ValueError):
    """Raised when weights are not a probability vector within tolerance."""


class InvalidGameError(ValueError):
    """Raised when a game definition violates the model's invariants."""


def as_simplex(weights, renorm_tol=RENORM_TOL):
    """Validate ``weights`` as a probability vector and return a float array.

    Inputs whose total is within ``renorm_tol`` of one are renormalized so the
    result sums to one within 1e-12; anything further off is rejected.
    """
    w = np.array(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise InvalidSimplexError(f"expected a non-empty 1-d vector, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise InvalidSimplexError("weights must be finite")
    if w.min() < -renorm_tol or w.max() > 1.0 + renorm_tol:
        raise InvalidSimplexError(f"weights outside [0, 1]: min={w.min()!r}, max={w.max()!r}")
    total = w.sum()
    if abs(total - 1.0) > renorm_tol:
        raise InvalidSimplexError(f"weights sum to {total!r}, not 1")
    w = np.clip(w, 0.0, 1.0)
    if abs(w.sum() - 1.0) > SIMPLEX_TOL:
        w = w / w.sum()
    return w


def as_simplex_rows(array, renorm_tol=RENORM_TOL, name="array"):
    """Row-wise :func:`as_simplex` over the last axis of ``array``."""
    a = np.array(array, dtype=float)
    if a.ndim < 1 or a.shape[-1] == 0:
        raise InvalidSimplexError(f"{name}: empty last axis")
    if not np.all(np.isfinite(a)):
        raise InvalidSimplexError(f"{name}: entries must be finite")
    if a.min() < -renorm_tol or a.max() > 1.0 + renorm_tol:
        raise InvalidSimplexError(f"{name}: entries outside [0, 1]")
    totals = a.sum(axis=-1)
    bad = np.abs(totals - 1.0) > renorm_tol
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise InvalidSimplexError(f"{name}{list(idx)} sums to {totals[idx]!r}, not 1")
    a = np.clip(a, 0.0, 1.0)
    totals = a.sum(axis=-1, keepdims=True)
    return np.where(np.abs(totals - 1.0) > SIMPLEX_TOL, a / totals, a)


def _index_from_uniform(cumulative, u):
    # first index whose cumulative weight exceeds u; zero-weight entries never win
    i = int(np.searchsorted(cumulative, u, side="right"))
    if i >= len(cumulative):
        i = int(np.flatnonzero(np.diff(np.concatenate(([0.0], cumulative))) > 0)[-1])
    return i


def sample_from(dist, rng):
    """Draw one index from ``dist`` using a single ``rng.random()`` call."""
    w = as_simplex(dist)
    return _index_from_uniform(np.cumsum(w), rng.random())


def make_rng(seed=None):
    """Return a PCG64 generator; a Generator passes through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derive_seed(master_seed, index):
    """Seed for run ``index`` of a sweep: ``SeedSequence([master, index])``."""
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1)[0])


def spawn_streams(seed, n):
    """``n`` independent generators from one integer seed (env first, then players)."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(n)]


class TrajectoryRecord(NamedTuple):
    t: int
    s: int
    a1: int
    a2: int
    r1: float
    r2: float
    s_next: int


def _freeze(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class StochasticGame:
    """Finite two-player general-sum stochastic game.

    Parameters
    ----------
    reward_1, reward_2 : array_like, shape (S, A1, A2)
    transition : array_like of shape (S, A1, A2, S) or sparse matrix of shape (S*A1*A2, S)
        Row ``(s*A1 + a1)*A2 + a2`` of the sparse form is ``p(.|s, a1, a2)``.
    gamma_1, gamma_2 : float in (0, 1)
    terminal : array_like of bool, shape (S,), optional
        Absorbing states; learners bootstrap zero from them.
    metadata : dict, optional
        Free-form JSON-serializable annotations (names, maps).
    """

    def __init__(self, reward_1, reward_2, transition, gamma_1, gamma_2, terminal=None,
                 metadata=None):
        r1 = np.asarray(reward_1, dtype=float)
        r2 = np.asarray(reward_2, dtype=float)
        if r1.ndim != 3 or r1.shape != r2.shape or 0 in r1.shape:
            raise InvalidGameError(f"reward shapes must match (S, A1, A2): {r1.shape} vs {r2.shape}")
        if not (np.all(np.isfinite(r1)) and np.all(np.isfinite(r2))):
            raise InvalidGameError("rewards must be finite")
        n_states, n1, n2 = r1.shape
        for name, g in (("gamma_1", gamma_1), ("gamma_2", gamma_2)):
            if not (0.0 < float(g) < 1.0):
                raise InvalidGameError(f"{name} must lie in (0, 1), got {g!r}")
        self.reward_1 = _freeze(r1)
        self.reward_2 = _freeze(r2)
        self.gamma_1 = float(gamma_1)
        self.gamma_2 = float(gamma_2)
        self.transition_matrix = self._check_transition(transition, n_states, n1, n2)
        if terminal is None:
            term = np.zeros(n_states, dtype=bool)
        else:
            term = np.asarray(terminal, dtype=bool)
            if term.shape != (n_states,):
                raise InvalidGameError(f"terminal mask must have shape ({n_states},)")
        term.setflags(write=False)
        self.terminal = term
        self.metadata = dict(metadata or {})
        self.reward_bound = float(max(np.abs(r1).max(), np.abs(r2).max()))
        self._dense = None

    @staticmethod
    def _check_transition(transition, n_states, n1, n2):
        rows = n_states * n1 * n2
        if sparse.issparse(transition):
            p = sparse.csr_matrix(transition, dtype=float, copy=True)
            if p.shape != (rows, n_states):
                raise InvalidGameError(f"sparse transition must have shape {(rows, n_states)}, got {p.shape}")
        else:
            dense = np.asarray(transition, dtype=float)
            if dense.shape != (n_states, n1, n2, n_states):
                raise InvalidGameError(
                    f"transition must have shape {(n_states, n1, n2, n_states)}, got {dense.shape}")
            p = sparse.csr_matrix(dense.reshape(rows, n_states))
        p.eliminate_zeros()
        p.sort_indices()
        if p.nnz and (not np.all(np.isfinite(p.data)) or p.data.min() < -SIMPLEX_TOL):
            raise InvalidGameError("transition probabilities must be finite and non-negative")
        totals = np.asarray(p.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(totals - 1.0) > RENORM_TOL)
        if bad.size:
            s, rem = divmod(int(bad[0]), n1 * n2)
            a1, a2 = divmod(rem, n2)
            raise InvalidGameError(f"transition row (s={s}, a1={a1}, a2={a2}) sums to {totals[bad[0]]!r}")
        p.data = np.clip(p.data, 0.0, None)
        totals = np.asarray(p.sum(axis=1)).ravel()
        scale = np.where(np.abs(totals - 1.0) > SIMPLEX_TOL, 1.0 / totals, 1.0)
        if np.any(scale != 1.0):
            p = sparse.csr_matrix(sparse.diags(scale) @ p)
        return p

    @property
    def n_states(self):
        return self.reward_1.shape[0]

    @property
    def n_actions_1(self):
        return self.reward_1.shape[1]

    @property
    def n_actions_2(self):
        return self.reward_1.shape[2]

    @property
    def n_actions(self):
        return self.n_actions_1, self.n_actions_2

    @property
    def gammas(self):
        return self.gamma_1, self.gamma_2

    @property
    def transition(self):
        """Dense ``(S, A1, A2, S)`` view; only sensible for small games."""
        if self._dense is None:
            d = self.transition_matrix.toarray().reshape(
                self.n_states, self.n_actions_1, self.n_actions_2, self.n_states)
            d.setflags(write=False)
            self._dense = d
        return self._dense

    def reward(self, player):
        """Reward tensor of ``player`` (0 or 1), axes (S, A1, A2)."""
        return (self.reward_1, self.reward_2)[player]

    def gamma(self, player):
        return (self.gamma_1, self.gamma_2)[player]

    def row_index(self, s, a1, a2):
        return (s * self.n_actions_1 + a1) * self.n_actions_2 + a2

    def transition_row(self, s, a1, a2):
        return self.transition_matrix.getrow(self.row_index(s, a1, a2)).toarray().ravel()

    def value_bound(self, player):
        """Sup-norm bound ``M / (1 - gamma_i)`` on values and zero-initialized Q-tables."""
        return self.reward_bound / (1.0 - self.gamma(player))

    def fingerprint(self):
        """SHA-256 over the canonical JSON encoding, metadata excluded."""
        doc = game_to_dict(self)
        doc.pop("metadata", None)
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def __repr__(self):
        return (f"StochasticGame(n_states={self.n_states}, n_actions={self.n_actions}, "
                f"gamma=({self.gamma_1}, {self.gamma_2}))")


@dataclass(frozen=True, eq=False)
class StrategyProfile:
    """Stationary strategies: ``pi_1[s]`` over A1 and ``pi_2[s]`` over A2."""

    pi_1: np.ndarray
    pi_2: np.ndarray

    def __post_init__(self):
        p1 = as_simplex_rows(self.pi_1, name="pi_1")
        p2 = as_simplex_rows(self.pi_2, name="pi_2")
        if p1.ndim != 2 or p2.ndim != 2 or p1.shape[0] != p2.shape[0]:
            raise InvalidSimplexError("pi_1 and pi_2 must be (S, A_i) arrays over the same states")
        p1.setflags(write=False)
        p2.setflags(write=False)
        object.__setattr__(self, "pi_1", p1)
        object.__setattr__(self, "pi_2", p2)

    @classmethod
    def uniform(cls, game):
        s, n1, n2 = game.n_states, game.n_actions_1, game.n_actions_2
        return cls(np.full((s, n1), 1.0 / n1), np.full((s, n2), 1.0 / n2))

    @classmethod
    def pure(cls, game, actions_1, actions_2):
        p1 = np.zeros((game.n_states, game.n_actions_1))
        p2 = np.zeros((game.n_states, game.n_actions_2))
        p1[np.arange(game.n_states), actions_1] = 1.0
        p2[np.arange(game.n_states), actions_2] = 1.0
        return cls(p1, p2)

    def __eq__(self, other):
        if not isinstance(other, StrategyProfile):
            return NotImplemented
        return np.array_equal(self.pi_1, other.pi_1) and np.array_equal(self.pi_2, other.pi_2)

    __hash__ = None

    def strategy(self, player):
        return (self.pi_1, self.pi_2)[player]

    @property
    def n_states(self):
        return self.pi_1.shape[0]

    def to_dict(self):
        return {"pi_1": self.pi_1.tolist(), "pi_2": self.pi_2.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["pi_1"], dtype=float), np.array(d["pi_2"], dtype=float))


def check_profile(game, profile):
    if profile.pi_1.shape != (game.n_states, game.n_actions_1) or \
            profile.pi_2.shape != (game.n_states, game.n_actions_2):
        raise InvalidGameError(
            f"profile shapes {profile.pi_1.shape}, {profile.pi_2.shape} do not match {game!r}")
    return profile


def step(game, s, profile, rng, t=0):
    """Simulate one transition from state ``s``.

    Draws ``a1``, ``a2`` and then ``s_next`` with three consecutive
    ``rng.random()`` calls, in that order.
    """
    if not 0 <= s < game.n_states:
        raise ValueError(f"state {s} out of range [0, {game.n_states})")
    check_profile(game, profile)
    a1 = sample_from(profile.pi_1[s], rng)
    a2 = sample_from(profile.pi_2[s], rng)
    s_next = sample_from(game.transition_row(s, a1, a2), rng)
    return TrajectoryRecord(t, s, a1, a2, float(game.reward_1[s, a1, a2]),
                            float(game.reward_2[s, a1, a2]), s_next)


def joint_weights(profile):
    """``w[s, a1, a2] = pi_1(s, a1) * pi_2(s, a2)``."""
    return profile.pi_1[:, :, None] * profile.pi_2[:, None, :]


def averaging_operator(game, weights):
    """Sparse ``(S, S*A1*A2)`` matrix summing rows of the kernel with ``weights``."""
    n_states = game.n_states
    block = game.n_actions_1 * game.n_actions_2
    rows = np.repeat(np.arange(n_states), block)
    cols = np.arange(n_states * block)
    return sparse.csr_matrix((np.asarray(weights, float).ravel(), (rows, cols)),
                             shape=(n_states, n_states * block))


def induced_chain(game, profile):
    """Strategy-averaged rewards ``(r_pi_1, r_pi_2)`` and state kernel ``P_pi`` (sparse)."""
    w = joint_weights(check_profile(game, profile))
    p_pi = averaging_operator(game, w) @ game.transition_matrix
    r1 = np.einsum("sab,sab->s", w, game.reward_1)
    r2 = np.einsum("sab,sab->s", w, game.reward_2)
    return (r1, r2), sparse.csr_matrix(p_pi)


def solve_discounted(p, r, gamma, tol=1e-10, max_iter=100_000):
    """Solve ``v = r + gamma * P v``; direct for small chains, contraction otherwise."""
    n = r.shape[0]
    if n <= DIRECT_SOLVE_MAX_STATES:
        a = np.eye(n) - gamma * (p.toarray() if sparse.issparse(p) else p)
        v = np.linalg.solve(a, r)
        if np.abs(a @ v - r).max() < tol:
            return v
        # one refinement step for ill-conditioned systems
        v = v + np.linalg.solve(a, r - a @ v)
        res = np.abs(a @ v - r).max()
        if res >= tol:
            raise ArithmeticError(f"linear solve residual {res:.3e} exceeds {tol:.1e}")
        return v
    if sparse.issparse(p):
        try:
            v = splinalg.spsolve(sparse.identity(n, format="csc") - gamma * p.tocsc(), r)
            if np.abs(v - r - gamma * (p @ v)).max() < tol:
                return v
        except RuntimeError:
            pass
    v = np.zeros(n)
    for _ in range(max_iter):
        v_new = r + gamma * (p @ v)
        if np.abs(v_new - v).max() < tol * (1.0 - gamma):
            return v_new
        v = v_new
    raise ArithmeticError("value iteration did not reach tolerance")


def value_of_profile(game, profile):
    """Exact discounted values ``(v1, v2)`` of a stationary profile, per state."""
    (r1, r2), p_pi = induced_chain(game, profile)
    return solve_discounted(p_pi, r1, game.gamma_1), solve_discounted(p_pi, r2, game.gamma_2)


def game_to_dict(game):
    """Encode ``game`` in the JSON game schema."""
    n_entries = game.transition_matrix.shape[0] * game.n_states
    if n_entries <= DENSE_JSON_MAX_ENTRIES:
        transitions = game.transition.tolist()
    else:
        p = game.transition_matrix
        transitions = {"format": "csr", "shape": list(p.shape), "indptr": p.indptr.tolist(),
                       "indices": p.indices.tolist(), "data": p.data.tolist()}
    out = {
        "n_states": game.n_states,
        "n_actions": [game.n_actions_1, game.n_actions_2],
        "gamma": [game.gamma_1, game.gamma_2],
        "rewards": [game.reward_1.tolist(), game.reward_2.tolist()],
        "transitions": transitions,
    }
    if game.terminal.any():
        out["terminal"] = np.flatnonzero(game.terminal).tolist()
    if game.metadata:
        out["metadata"] = game.metadata
    return out


_GAME_KEYS = {"n_states", "n_actions", "gamma", "rewards", "transitions", "terminal", "metadata"}


def game_from_dict(d):
    """Inverse of :func:`game_to_dict`; validates every field."""
    unknown = set(d) - _GAME_KEYS
    if unknown:
        raise InvalidGameError(f"unknown game fields: {sorted(unknown)}")
    try:
        n_states = int(d["n_states"])
        n1, n2 = (int(x) for x in d["n_actions"])
        g1, g2 = (float(x) for x in d["gamma"])
        r1, r2 = (np.array(x, dtype=float) for x in d["rewards"])
        trans = d["transitions"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidGameError(f"malformed game document: {exc}") from exc
    if r1.shape != (n_states, n1, n2):
        raise InvalidGameError(f"rewards shape {r1.shape} disagrees with n_states/n_actions")
    if isinstance(trans, dict):
        if trans.get("format") != "csr":
            raise InvalidGameError("sparse transitions must declare format 'csr'")
        p = sparse.csr_matrix((np.array(trans["data"], float), np.array(trans["indices"], int),
                               np.array(trans["indptr"], int)), shape=tuple(trans["shape"]))
    else:
        p = np.array(trans, dtype=float)
    terminal = None
    if "terminal" in d:
        terminal = np.zeros(n_states, dtype=bool)
        terminal[np.array(d["terminal"], dtype=int)] = True
    return StochasticGame(r1, r2, p, g1, g2, terminal=terminal, metadata=d.get("metadata"))


def save_game(game, path):
    with open(path, "w") as fh:
        json.dump(game_to_dict(game), fh)
        fh.write("\n")


def load_game(path):
    with open(path) as fh:
        return game_from_dict(json.load(fh))


@dataclass
class FastGame:
    """Plain-list mirror of a game for the per-step learning loops."""

    n_states: int
    n_actions: tuple
    rewards: tuple          # rewards[i][row] for row = (s*A1 + a1)*A2 + a2
    next_states: list       # next_states[row] -> list of successor ids
    next_cum: list          # matching cumulative probabilities
    terminal: list
    gammas: tuple
    single_successor: bool = field(default=False)

    @classmethod
    def from_game(cls, game):
        p = game.transition_matrix
        indptr, indices, data = p.indptr, p.indices, p.data
        nxt, cum = [], []
        for row in range(p.shape[0]):
            lo, hi = indptr[row], indptr[row + 1]
            nxt.append(indices[lo:hi].tolist())
            cum.append(np.cumsum(data[lo:hi]).tolist())
        return cls(game.n_states, game.n_actions,
                   (game.reward_1.ravel().tolist(), game.reward_2.ravel().tolist()),
                   nxt, cum, game.terminal.tolist(), game.gammas,
                   bool(np.all(np.diff(indptr) == 1)))
