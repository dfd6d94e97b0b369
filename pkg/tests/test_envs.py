import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nashq.core import StrategyProfile
from nashq.envs import (ACTION_NAMES, GridworldSpec, RandomGameSpec, blind_state_maps,
                        build_gridworld, build_spurious_game, canonical_games,
                        generate_random_game, gridworld_move)
from nashq.equilibrium import (lemke_howson, pure_nash_enumeration, support_enumeration,
                               verify_bimatrix_nash)

L, R, U, D = (ACTION_NAMES.index(n) for n in ("Left", "Right", "Up", "Down"))


def test_random_game_defaults():
    spec = RandomGameSpec()
    assert (spec.d1, spec.d2, spec.d_s, spec.h, spec.gamma_1, spec.gamma_2) == (5, 7, 10, 0.8, 0.9, 0.8)
    g = generate_random_game(spec)
    assert g.reward_1.shape == (10, 5, 7) and g.transition.shape == (10, 5, 7, 10)
    for r in (g.reward_1, g.reward_2):
        assert r.min() >= 0.0 and r.max() <= 1.0
    assert np.all(g.transition >= 0) and np.allclose(g.transition.sum(-1), 1.0, atol=1e-12)
    assert g.gammas == (0.9, 0.8)


def test_random_game_reward_formula():
    g = generate_random_game(RandomGameSpec(h=1.0, seed=2))
    assert np.array_equal(g.reward_1, g.reward_2)
    g = generate_random_game(RandomGameSpec(h=0.0, seed=2))
    assert abs(np.corrcoef(g.reward_1.ravel(), g.reward_2.ravel())[0, 1]) < 0.15
    # replay of the documented draw order
    spec = RandomGameSpec(d1=2, d2=3, d_s=4, h=0.3, seed=9)
    rng = np.random.default_rng(9)
    r1 = rng.random((4, 2, 3))
    r2 = 0.3 * r1 + 0.7 * rng.random((4, 2, 3))
    p = rng.random((4, 2, 3, 4))
    g = generate_random_game(spec)
    assert np.array_equal(g.reward_1, r1) and np.array_equal(g.reward_2, r2)
    assert np.allclose(g.transition, p / p.sum(-1, keepdims=True), atol=1e-15)


@given(st.integers(0, 2**32 - 1))
def test_random_game_pure_in_seed(seed):
    a = generate_random_game(RandomGameSpec(d1=2, d2=2, d_s=3, seed=seed))
    b = generate_random_game(RandomGameSpec(d1=2, d2=2, d_s=3, seed=seed))
    assert a.fingerprint() == b.fingerprint()
    assert np.array_equal(a.transition, b.transition)


def test_random_spec_validation():
    for kw in ({"d1": 0}, {"h": 1.5}, {"gamma_1": 1.0}, {"d_s": 2.5}):
        with pytest.raises(ValueError):
            RandomGameSpec(**kw)


def test_gridworld_examples():
    spec = GridworldSpec()
    t1, t2 = spec.cell(spec.target_1), spec.cell(spec.target_2)
    below_1, below_2 = spec.cell((8, 7)), spec.cell((0, 7))
    n1, n2, rewards, done = gridworld_move(spec, below_1, below_2, U, U)
    assert (n1, n2, rewards, done) == (t1, t2, (10.0, 10.0), True)
    # both step into the same empty cell
    a, b = spec.cell((3, 4)), spec.cell((5, 4))
    assert gridworld_move(spec, a, b, R, L) == (a, b, (-0.5, -0.5), False)
    # left wall bump while the other moves freely
    a, b = spec.cell((0, 3)), spec.cell((5, 5))
    assert gridworld_move(spec, a, b, L, U) == (a, spec.cell((5, 6)), (-0.5, 0.0), False)


def test_gridworld_swap_and_blocking():
    spec = GridworldSpec()
    a, b = spec.cell((3, 3)), spec.cell((4, 3))
    assert gridworld_move(spec, a, b, R, L) == (a, b, (-0.5, -0.5), False)
    # player 1 walks into a cell player 2 keeps by bumping the wall
    a, b = spec.cell((7, 0)), spec.cell((8, 0))
    assert gridworld_move(spec, a, b, R, R) == (a, b, (-0.5, -0.5), False)
    # following into a vacated cell is legal
    a, b = spec.cell((3, 3)), spec.cell((4, 3))
    assert gridworld_move(spec, a, b, R, R) == (b, spec.cell((5, 3)), (0.0, 0.0), False)


def test_gridworld_one_arrival_ends_episode():
    spec = GridworldSpec()
    n1, n2, rewards, done = gridworld_move(spec, spec.cell((8, 7)), spec.cell((4, 4)), U, D)
    assert done and rewards == (10.0, 0.0)


def test_gridworld_game_structure():
    spec = GridworldSpec()
    g = build_gridworld(spec)
    term = spec.terminal_state
    assert g.n_states == 81 * 81 + 1 and g.n_actions == (4, 4)
    assert g.terminal[term] and g.terminal.sum() == 1
    assert g.metadata["start_state"] == spec.start_state
    assert g.metadata["map"].splitlines()[0] == "B.......A"
    p = g.transition_matrix
    assert p[g.row_index(term, 0, 0), term] == 1.0
    assert np.all(g.reward_1[term] == 0) and np.all(g.reward_2[term] == 0)
    assert set(np.unique(g.reward_1)) <= {-0.5, 0.0, 10.0}


@given(st.integers(0, 80), st.integers(0, 80), st.integers(0, 3), st.integers(0, 3))
def test_gridworld_moves_at_most_one_cell(c1, c2, a1, a2):
    spec = GridworldSpec()
    if c1 == c2:
        return
    n1, n2, _, _ = gridworld_move(spec, c1, c2, a1, a2)
    for old, new in ((c1, n1), (c2, n2)):
        (x, y), (nx, ny) = spec.xy(old), spec.xy(new)
        assert abs(x - nx) + abs(y - ny) <= 1
    assert n1 != n2


def test_gridworld_spec_validation_and_blind_maps():
    with pytest.raises(ValueError):
        GridworldSpec(start_1=(9, 0))
    with pytest.raises(ValueError):
        GridworldSpec(target_1=(0, 0))
    spec = GridworldSpec(width=3, height=3, start_1=(0, 0), start_2=(2, 0), target_1=(2, 2),
                         target_2=(0, 2))
    own_1, own_2 = blind_state_maps(spec)
    s = spec.state(4, 7)
    assert own_1[s] == 4 and own_2[s] == 7 and own_1[spec.terminal_state] == 9


def test_spurious_game():
    base = canonical_games()["prisoners_dilemma"].bimatrix
    g = build_spurious_game(base, 5, seed=3)
    for s in range(1, 5):
        assert np.array_equal(g.reward_1[s], g.reward_1[0])
        assert np.array_equal(g.reward_2[s], g.reward_2[0])
    assert np.allclose(g.transition.sum(-1), 1.0)
    one = build_spurious_game(base, 1)
    assert np.array_equal(one.reward_1, base.to_game().reward_1)
    assert np.all(one.transition == 1.0)
    with pytest.raises(ValueError):
        build_spurious_game(base, 0)


def test_canonical_fixtures():
    games = canonical_games()
    assert set(games) >= {"matching_pennies", "prisoners_dilemma", "battle_of_the_sexes", "zero"}
    mp = games["matching_pennies"]
    eqs = support_enumeration(mp.bimatrix)
    assert len(eqs) == 1 and np.allclose(eqs[0][0], 0.5) and np.allclose(eqs[0][1], 0.5)
    pd = games["prisoners_dilemma"]
    assert pure_nash_enumeration(pd.bimatrix) == [(1, 1)]
    x, y = lemke_howson(pd.bimatrix)
    assert np.array_equal(x, [0, 1]) and np.array_equal(y, [0, 1])
    assert not np.any(games["zero"].bimatrix.payoff_1)
    for fixture in games.values():
        for pair in fixture.equilibria:
            assert verify_bimatrix_nash(fixture.bimatrix, pair) <= 1e-12
    g = mp.stochastic()
    assert g.n_states == 1 and StrategyProfile.uniform(g).pi_1.shape == (1, 2)
