"""Game instances: seeded random games, the two-agent gridworld and fixtures."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import ClassVar

import numpy as np
from scipy import sparse

from .core import StochasticGame
from .equilibrium import BimatrixGame


@dataclass(frozen=True)
class RandomGameSpec:
    """Random stochastic game: ``d_s`` states, ``d1 x d2`` actions.

    ``h`` correlates the players' rewards: ``r2 = h * r1 + (1 - h) * U``.
    """

    d1: int = 5
    d2: int = 7
    d_s: int = 10
    h: float = 0.8
    gamma_1: float = 0.9
    gamma_2: float = 0.8
    seed: int = 0

    def __post_init__(self):
        for name in ("d1", "d2", "d_s"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not 0.0 <= self.h <= 1.0:
            raise ValueError(f"h must lie in [0, 1], got {self.h!r}")
        for name in ("gamma_1", "gamma_2"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")

    def to_dict(self):
        return asdict(self)


def generate_random_game(spec=None, **overrides):
    """Draw a game from ``spec``.

    Draw order from ``default_rng(seed)``: ``r1``, the noise for ``r2``, then
    the transition weights, which are normalized per row.
    """
    spec = spec or RandomGameSpec()
    if overrides:
        spec = RandomGameSpec(**dict(asdict(spec), **overrides))
    rng = np.random.default_rng(spec.seed)
    shape = (spec.d_s, spec.d1, spec.d2)
    r1 = rng.random(shape)
    r2 = spec.h * r1 + (1.0 - spec.h) * rng.random(shape)
    p = rng.random(shape + (spec.d_s,))
    p /= p.sum(axis=-1, keepdims=True)
    return StochasticGame(r1, r2, p, spec.gamma_1, spec.gamma_2,
                          metadata={"kind": "random_game", "spec": spec.to_dict()})


# gridworld moves, in action-id order
MOVES = {"Left": (-1, 0), "Right": (1, 0), "Up": (0, 1), "Down": (0, -1)}
ACTION_NAMES = tuple(MOVES)


@dataclass(frozen=True)
class GridworldSpec:
    """Two agents crossing a grid to reach their own targets.

    Cells are ``(x, y)`` with ``y = 0`` the bottom row. The reward constants
    are fixed class attributes.
    """

    width: int = 9
    height: int = 9
    start_1: tuple = (0, 0)
    start_2: tuple = (8, 0)
    target_1: tuple = (8, 8)
    target_2: tuple = (0, 8)
    max_episode_len: int = 200
    gamma: float = 0.95

    reward_goal: ClassVar[float] = 10.0
    reward_collision: ClassVar[float] = -0.5
    reward_step: ClassVar[float] = 0.0

    def __post_init__(self):
        object.__setattr__(self, "start_1", tuple(self.start_1))
        object.__setattr__(self, "start_2", tuple(self.start_2))
        object.__setattr__(self, "target_1", tuple(self.target_1))
        object.__setattr__(self, "target_2", tuple(self.target_2))
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        cells = [self.start_1, self.start_2, self.target_1, self.target_2]
        for c in cells:
            if len(c) != 2 or not (0 <= c[0] < self.width and 0 <= c[1] < self.height):
                raise ValueError(f"cell {c} lies outside the {self.width}x{self.height} grid")
        if len(set(cells)) != 4:
            raise ValueError("starts and targets must be four distinct cells")
        if self.max_episode_len < 1:
            raise ValueError("max_episode_len must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")

    @property
    def n_cells(self):
        return self.width * self.height

    @property
    def terminal_state(self):
        return self.n_cells * self.n_cells

    def cell(self, xy):
        return xy[1] * self.width + xy[0]

    def xy(self, cell):
        return cell % self.width, cell // self.width

    def state(self, cell_1, cell_2):
        return cell_1 * self.n_cells + cell_2

    def cells(self, state):
        """``(cell_1, cell_2)`` of a non-terminal state."""
        return divmod(state, self.n_cells)

    @property
    def start_state(self):
        return self.state(self.cell(self.start_1), self.cell(self.start_2))

    def to_dict(self):
        d = asdict(self)
        for k in ("start_1", "start_2", "target_1", "target_2"):
            d[k] = list(d[k])
        return d


def gridworld_move(spec, cell_1, cell_2, a1, a2):
    """Joint move from ``(cell_1, cell_2)``.

    Returns ``(new_1, new_2, (r1, r2), done)``. Off-map moves bounce the mover;
    targeting the same cell, swapping cells, or moving into a cell the other
    agent keeps bounces the movers involved. Each bounce costs the collision
    penalty. Reaching one's own target pays the goal reward and ends the
    episode.
    """
    pos = (cell_1, cell_2)
    dest = []
    bounced = [False, False]
    for i, a in enumerate((a1, a2)):
        x, y = spec.xy(pos[i])
        dx, dy = MOVES[ACTION_NAMES[a]]
        nx, ny = x + dx, y + dy
        if 0 <= nx < spec.width and 0 <= ny < spec.height:
            dest.append(spec.cell((nx, ny)))
        else:
            dest.append(pos[i])
            bounced[i] = True
    if dest[0] == dest[1] or (dest[0] == pos[1] and dest[1] == pos[0]):
        dest = list(pos)
        bounced = [True, True]
    changed = True
    while changed:
        changed = False
        for i in range(2):
            if dest[i] == dest[1 - i] and dest[i] != pos[i]:
                dest[i] = pos[i]
                bounced[i] = True
                changed = True
    rewards = [spec.reward_collision if b else spec.reward_step for b in bounced]
    done = False
    for i, target in enumerate((spec.target_1, spec.target_2)):
        if dest[i] == spec.cell(target):
            rewards[i] = spec.reward_goal
            done = True
    return dest[0], dest[1], (rewards[0], rewards[1]), done


def gridworld_map(spec):
    """Text map, top row first: ``1``/``2`` starts, ``A``/``B`` targets of players 1/2."""
    marks = {spec.start_1: "1", spec.start_2: "2", spec.target_1: "A", spec.target_2: "B"}
    lines = []
    for y in range(spec.height - 1, -1, -1):
        lines.append("".join(marks.get((x, y), ".") for x in range(spec.width)))
    return "\n".join(lines)


def build_gridworld(spec=None):
    """Gridworld as an episodic stochastic game.

    State ``cell_1 * n_cells + cell_2`` encodes both positions; the last state
    is an absorbing terminal with zero reward. Transitions are deterministic
    and stored sparsely.
    """
    spec = spec or GridworldSpec()
    nc = spec.n_cells
    n_states = nc * nc + 1
    term = spec.terminal_state
    n_a = len(ACTION_NAMES)
    r1 = np.zeros((n_states, n_a, n_a))
    r2 = np.zeros((n_states, n_a, n_a))
    nxt = np.full((n_states, n_a, n_a), term, dtype=np.int64)
    for c1 in range(nc):
        for c2 in range(nc):
            s = c1 * nc + c2
            for a1 in range(n_a):
                for a2 in range(n_a):
                    n1, n2, (g1, g2), done = gridworld_move(spec, c1, c2, a1, a2)
                    r1[s, a1, a2] = g1
                    r2[s, a1, a2] = g2
                    nxt[s, a1, a2] = term if done else n1 * nc + n2
    n_rows = n_states * n_a * n_a
    p = sparse.csr_matrix((np.ones(n_rows), nxt.ravel(), np.arange(n_rows + 1)),
                          shape=(n_rows, n_states))
    terminal = np.zeros(n_states, dtype=bool)
    terminal[term] = True
    meta = {"kind": "gridworld", "spec": spec.to_dict(), "start_state": spec.start_state,
            "actions": list(ACTION_NAMES), "map": gridworld_map(spec)}
    return StochasticGame(r1, r2, p, spec.gamma, spec.gamma, terminal=terminal, metadata=meta)


def blind_state_maps(spec):
    """Observation maps where each player sees only its own cell (terminal maps to ``n_cells``)."""
    nc = spec.n_cells
    own_1 = [s // nc for s in range(nc * nc)] + [nc]
    own_2 = [s % nc for s in range(nc * nc)] + [nc]
    return own_1, own_2


def build_spurious_game(base, n_states, seed=0, gamma_1=0.9, gamma_2=0.8):
    """Copy the bimatrix ``base`` at every state with random transitions.

    Rewards ignore the state, so any state dependence in learned strategies
    is spurious. One state gives the repeated bimatrix game.
    """
    if int(n_states) != n_states or n_states < 1:
        raise ValueError("n_states must be a positive integer")
    rng = np.random.default_rng(seed)
    m, n = base.shape
    r1 = np.broadcast_to(base.payoff_1, (n_states, m, n)).copy()
    r2 = np.broadcast_to(base.payoff_2, (n_states, m, n)).copy()
    p = rng.random((n_states, m, n, n_states))
    p /= p.sum(axis=-1, keepdims=True)
    return StochasticGame(r1, r2, p, gamma_1, gamma_2, metadata={"kind": "spurious", "seed": seed})


@dataclass(frozen=True)
class CanonicalGame:
    name: str
    bimatrix: BimatrixGame
    equilibria: tuple
    note: str = ""

    def stochastic(self, gamma_1=0.9, gamma_2=0.9):
        return self.bimatrix.to_game(gamma_1, gamma_2)


def canonical_games():
    """Small bimatrix fixtures with their hand-derived equilibria."""
    half = (np.array([0.5, 0.5]), np.array([0.5, 0.5]))
    mp = np.array([[1.0, -1.0], [-1.0, 1.0]])
    # actions: cooperate, defect; payoffs are negated prison years
    pd = np.array([[-1.0, -3.0], [0.0, -2.0]])
    bos_1 = np.array([[2.0, 0.0], [0.0, 1.0]])
    bos_2 = np.array([[1.0, 0.0], [0.0, 2.0]])
    e = np.eye(2)
    games = [
        CanonicalGame("matching_pennies", BimatrixGame(mp, -mp), (half,),
                      "unique mixed equilibrium"),
        CanonicalGame("prisoners_dilemma", BimatrixGame(pd, pd.T), ((e[1], e[1]),),
                      "defection strictly dominant"),
        CanonicalGame("battle_of_the_sexes", BimatrixGame(bos_1, bos_2),
                      ((e[0], e[0]), (e[1], e[1]),
                       (np.array([2.0, 1.0]) / 3.0, np.array([1.0, 2.0]) / 3.0)),
                      "two pure equilibria and one mixed"),
        CanonicalGame("zero", BimatrixGame(np.zeros((2, 2)), np.zeros((2, 2))), (),
                      "every profile is an equilibrium"),
    ]
    return {g.name: g for g in games}
