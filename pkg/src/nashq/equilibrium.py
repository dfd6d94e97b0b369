"""Per-state equilibrium machinery for bi-matrix games."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

SUPPORT_ENUM_MAX_ACTIONS = 9
CERT_TOL = 1e-9


class SolverFailure(RuntimeError):
    """An equilibrium solver terminated without a certified equilibrium."""


@dataclass(frozen=True)
class BimatrixGame:
    """One-shot game: row player gets ``payoff_1[i, j]``, column player ``payoff_2[i, j]``."""

    payoff_1: np.ndarray
    payoff_2: np.ndarray

    def __post_init__(self):
        a = np.array(self.payoff_1, dtype=float)
        b = np.array(self.payoff_2, dtype=float)
        if a.ndim != 2 or a.shape != b.shape or 0 in a.shape:
            raise ValueError(f"payoff shapes must agree and be 2-d: {a.shape} vs {b.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("payoffs must be finite")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "payoff_1", a)
        object.__setattr__(self, "payoff_2", b)

    @property
    def shape(self):
        return self.payoff_1.shape

    def to_game(self, gamma_1=0.9, gamma_2=0.9):
        """The repeated game as a one-state :class:`~nashq.core.StochasticGame`."""
        from .core import StochasticGame

        m, n = self.shape
        return StochasticGame(self.payoff_1[None], self.payoff_2[None], np.ones((1, m, n, 1)),
                              gamma_1, gamma_2)


class BestResponseSet(NamedTuple):
    argmax_indices: tuple
    canonical_strategy: np.ndarray


def best_response_set(q_row, tie_tol=1e-9):
    """Actions within ``tie_tol`` of the maximum, and the uniform mix over them."""
    q = np.asarray(q_row, dtype=float)
    if q.ndim != 1 or q.size == 0:
        raise ValueError("q_row must be a non-empty vector")
    if tie_tol < 0:
        raise ValueError("tie_tol must be non-negative")
    idx = np.flatnonzero(q >= q.max() - tie_tol)
    strategy = np.zeros(q.size)
    strategy[idx] = 1.0 / idx.size
    return BestResponseSet(tuple(int(i) for i in idx), strategy)


def verify_bimatrix_nash(game, pair):
    """Largest gain either player gets from a pure deviation (0 at an exact equilibrium)."""
    x = np.asarray(pair[0], dtype=float)
    y = np.asarray(pair[1], dtype=float)
    if x.shape != (game.shape[0],) or y.shape != (game.shape[1],):
        raise ValueError("strategy dimensions do not match the game")
    ay = game.payoff_1 @ y
    xb = x @ game.payoff_2
    gap = max(ay.max() - x @ ay, xb.max() - xb @ y)
    return max(float(gap), 0.0)


def pure_nash_enumeration(game, tol=1e-12):
    """All cells that are mutual best responses, in row-major order."""
    a, b = game.payoff_1, game.payoff_2
    row_best = a >= a.max(axis=0, keepdims=True) - tol
    col_best = b >= b.max(axis=1, keepdims=True) - tol
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(row_best & col_best))]


def _lex_min_ratio_row(tableau, col, lex_cols, piv_tol=1e-12, tie_tol=1e-12):
    cands = np.flatnonzero(tableau[:, col] > piv_tol)
    if cands.size == 0:
        return None
    pivots = tableau[cands, col]
    for c in lex_cols:
        ratios = tableau[cands, c] / pivots
        keep = ratios <= ratios.min() + tie_tol * max(1.0, abs(ratios.min()))
        cands, pivots = cands[keep], pivots[keep]
        if cands.size == 1:
            break
    return int(cands[0])


def _pivot(tableau, basis, row, col):
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])
    leaving = basis[row]
    basis[row] = col
    return leaving


def lemke_howson(game, initial_label=0, max_pivots=None):
    """One equilibrium by complementary pivoting from the artificial equilibrium.

    Labels ``0..m-1`` are the row player's actions and ``m..m+n-1`` the column
    player's. The minimum-ratio test is lexicographic over (rhs, initial-basis
    columns), so degenerate games cannot cycle.

    Raises
    ------
    SolverFailure
        On ray termination, exhausting ``max_pivots`` (default ``10 (m+n)^2``)
        or an output that fails certification at 1e-9.
    """
    m, n = game.shape
    if not 0 <= initial_label < m + n:
        raise ValueError(f"initial_label must be in [0, {m + n})")
    if max_pivots is None:
        max_pivots = 10 * (m + n) ** 2
    a = game.payoff_1 - game.payoff_1.min() + 1.0
    b = game.payoff_2 - game.payoff_2.min() + 1.0

    # columns are indexed by label, last column is the rhs
    # row tableau: A y + r = 1 (slacks r_i carry labels 0..m-1, y_j carries m+j)
    t_row = np.hstack([np.eye(m), a, np.ones((m, 1))])
    basis_row = list(range(m))
    # column tableau: B^T x + s = 1 (x_i carries label i, s_j carries m+j)
    t_col = np.hstack([b.T, np.eye(n), np.ones((n, 1))])
    basis_col = list(range(m, m + n))
    rhs = m + n
    lex_row = [rhs] + list(range(m))
    lex_col = [rhs] + list(range(m, m + n))

    entering = initial_label
    use_col = entering < m  # x_k lives in the column tableau
    for _ in range(max_pivots):
        if use_col:
            tab, basis, lex = t_col, basis_col, lex_col
        else:
            tab, basis, lex = t_row, basis_row, lex_row
        row = _lex_min_ratio_row(tab, entering, lex)
        if row is None:
            raise SolverFailure("ray termination in Lemke-Howson")
        leaving = _pivot(tab, basis, row, entering)
        if leaving == initial_label:
            break
        entering = leaving
        use_col = not use_col
    else:
        raise SolverFailure(f"Lemke-Howson exceeded {max_pivots} pivots")

    x = np.zeros(m)
    for r, lab in enumerate(basis_col):
        if lab < m:
            x[lab] = t_col[r, rhs]
    y = np.zeros(n)
    for r, lab in enumerate(basis_row):
        if lab >= m:
            y[lab - m] = t_row[r, rhs]
    x = np.clip(x, 0.0, None)
    y = np.clip(y, 0.0, None)
    if x.sum() <= 0 or y.sum() <= 0:
        raise SolverFailure("Lemke-Howson returned a degenerate point")
    x, y = x / x.sum(), y / y.sum()
    gap = verify_bimatrix_nash(game, (x, y))
    if gap > CERT_TOL:
        raise SolverFailure(f"Lemke-Howson output failed certification (gap {gap:.3e})")
    return x, y


def _indifferent_mix(payoff, support_own, support_other):
    # mix over support_other making every action in support_own indifferent
    k = len(support_other)
    sub = payoff[np.ix_(support_own, support_other)]
    lhs = np.zeros((len(support_own) + 1, k + 1))
    lhs[:-1, :k] = sub
    lhs[:-1, k] = -1.0
    lhs[-1, :k] = 1.0
    rhs = np.zeros(len(support_own) + 1)
    rhs[-1] = 1.0
    sol = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    if np.abs(lhs @ sol - rhs).max() > 1e-9:
        return None
    return sol[:k]


def support_enumeration(game, max_support=None):
    """Every equilibrium found by solving indifference conditions on equal-size supports.

    Supports are visited by size, then lexicographically (row support first).
    For nondegenerate games the list is complete up to ``max_support``.
    Duplicate equilibria are dropped.
    """
    m, n = game.shape
    if m > SUPPORT_ENUM_MAX_ACTIONS or n > SUPPORT_ENUM_MAX_ACTIONS:
        raise ValueError(f"support enumeration is limited to {SUPPORT_ENUM_MAX_ACTIONS} actions per player")
    if max_support is None:
        max_support = min(m, n)
    found = []
    for k in range(1, min(max_support, m, n) + 1):
        for rows in itertools.combinations(range(m), k):
            for cols in itertools.combinations(range(n), k):
                y_s = _indifferent_mix(game.payoff_1, list(rows), list(cols))
                if y_s is None or y_s.min() < -1e-12:
                    continue
                x_s = _indifferent_mix(game.payoff_2.T, list(cols), list(rows))
                if x_s is None or x_s.min() < -1e-12:
                    continue
                x = np.zeros(m)
                y = np.zeros(n)
                x[list(rows)] = np.clip(x_s, 0.0, None)
                y[list(cols)] = np.clip(y_s, 0.0, None)
                x, y = x / x.sum(), y / y.sum()
                if verify_bimatrix_nash(game, (x, y)) > CERT_TOL:
                    continue
                if any(np.abs(x - u).max() <= 1e-9 and np.abs(y - v).max() <= 1e-9 for u, v in found):
                    continue
                found.append((x, y))
    return found


class LemkeHowsonSelector:
    """Lemke-Howson from ``initial_label``; first support-enumeration result on failure."""

    def __init__(self, initial_label=0, fallback=True):
        self.initial_label = initial_label
        self.fallback = fallback
        self.n_fallbacks = 0

    def __call__(self, game):
        try:
            return lemke_howson(game, self.initial_label % sum(game.shape))
        except SolverFailure:
            if not self.fallback:
                raise
        self.n_fallbacks += 1
        return first_support_equilibrium(game)


def first_support_equilibrium(game):
    eqs = support_enumeration(game)
    if not eqs:
        raise SolverFailure("support enumeration found no equilibrium")
    return eqs[0]


SELECTORS = {
    "lemke_howson": LemkeHowsonSelector,
    "support_enumeration": lambda: first_support_equilibrium,
}


def make_selector(name="lemke_howson", **kwargs):
    try:
        return SELECTORS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown equilibrium selector {name!r}; choose from {sorted(SELECTORS)}") from None


def nash_q_value(q1, q2, selector=None):
    """Equilibrium values ``(x' q1 y, x' q2 y, x, y)`` of the stage game ``(q1, q2)``."""
    game = BimatrixGame(q1, q2)
    if selector is None:
        selector = LemkeHowsonSelector()
    if game.shape == (1, 1):
        x, y = np.ones(1), np.ones(1)
    else:
        x, y = selector(game)
    return float(x @ game.payoff_1 @ y), float(x @ game.payoff_2 @ y), x, y
