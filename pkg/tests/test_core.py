import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import sparse

from conftest import one_state_game, zero_game
from nashq.core import (FastGame, InvalidGameError, InvalidSimplexError, StochasticGame,
                        StrategyProfile, TrajectoryRecord, as_simplex, derive_seed, game_from_dict,
                        game_to_dict, induced_chain, load_game, make_rng, sample_from, save_game,
                        spawn_streams, step, value_of_profile)
from nashq.envs import RandomGameSpec, generate_random_game


def test_sample_from_point_masses():
    rng = make_rng(3)
    assert sample_from([1.0], rng) == 0
    assert all(sample_from([0, 1, 0], rng) == 1 for _ in range(50))


def test_sample_from_frequencies():
    rng = make_rng(11)
    draws = np.array([sample_from([0.5, 0.5], rng) for _ in range(100_000)])
    assert abs(draws.mean() - 0.5) < 0.01


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=10), st.integers(0, 2**31))
def test_sample_from_law_of_large_numbers(weights, seed):
    w = np.array(weights) / np.sum(weights)
    rng = make_rng(seed)
    u = rng.random(100_000)
    idx = np.minimum(np.searchsorted(np.cumsum(w), u, side="right"), len(w) - 1)
    tv = 0.5 * np.abs(np.bincount(idx, minlength=len(w)) / len(u) - w).sum()
    assert tv < 0.02
    # the scalar sampler consumes the same stream
    rng2 = make_rng(seed)
    assert [sample_from(w, rng2) for _ in range(20)] == idx[:20].tolist()


def test_sample_from_rejects_bad_simplex():
    with pytest.raises(InvalidSimplexError):
        sample_from([0.5, 0.6], make_rng(0))
    with pytest.raises(InvalidSimplexError):
        sample_from([-0.1, 1.1], make_rng(0))


def test_as_simplex_renormalizes_small_drift():
    w = as_simplex([0.5, 0.5 + 5e-10])
    assert abs(w.sum() - 1.0) <= 1e-12
    exact = np.array([0.25, 0.75])
    assert as_simplex(exact).tobytes() == exact.tobytes()


def test_game_validation():
    r = np.zeros((2, 2, 2))
    p = np.full((2, 2, 2, 2), 0.5)
    StochasticGame(r, r, p, 0.9, 0.5)
    with pytest.raises(InvalidGameError):
        StochasticGame(r, r, p, 1.0, 0.5)
    with pytest.raises(InvalidGameError):
        StochasticGame(r, r, p * 1.1, 0.9, 0.5)
    with pytest.raises(InvalidGameError):
        StochasticGame(r, np.zeros((2, 2, 3)), p, 0.9, 0.5)
    bad = r.copy()
    bad[0, 0, 0] = np.inf
    with pytest.raises(InvalidGameError):
        StochasticGame(bad, r, p, 0.9, 0.5)


def test_sparse_and_dense_transitions_agree(small_game):
    dense = small_game.transition
    g = StochasticGame(small_game.reward_1, small_game.reward_2,
                       sparse.csr_matrix(dense.reshape(-1, small_game.n_states)), 0.9, 0.8)
    assert np.array_equal(g.transition, dense)
    assert g.fingerprint() == small_game.fingerprint()


def test_reward_bound_stored(small_game):
    m = max(np.abs(small_game.reward_1).max(), np.abs(small_game.reward_2).max())
    assert small_game.reward_bound == m
    assert small_game.value_bound(0) == pytest.approx(m / 0.1)


def test_step_deterministic_and_one_state():
    p = np.zeros((2, 1, 1, 2))
    p[0, 0, 0, 1] = 1.0
    p[1, 0, 0, 0] = 1.0
    r = np.array([[[1.0]], [[2.0]]])
    g = StochasticGame(r, -r, p, 0.9, 0.9)
    rec = step(g, 0, StrategyProfile.uniform(g), make_rng(0), t=4)
    assert rec == TrajectoryRecord(4, 0, 0, 0, 1.0, -1.0, 1)
    g1 = one_state_game([[1, 2], [3, 4]], [[0, 0], [0, 0]])
    rng = make_rng(1)
    assert all(step(g1, 0, StrategyProfile.uniform(g1), rng).s_next == 0 for _ in range(20))


def test_step_matches_hand_rolled_sampler(small_game):
    prof = StrategyProfile(np.array([[0.3, 0.7]] * 3), np.array([[0.2, 0.3, 0.5]] * 3))
    rng = make_rng(42)
    recs = []
    s = 0
    for t in range(200):
        rec = step(small_game, s, prof, rng, t)
        recs.append(rec)
        s = rec.s_next
    # replay oracle: three uniforms per step, inverse-CDF in index order
    u = make_rng(42).random(600).reshape(200, 3)
    s = 0
    for t, rec in enumerate(recs):
        a1 = int(np.searchsorted(np.cumsum(prof.pi_1[s]), u[t, 0], side="right"))
        a2 = int(np.searchsorted(np.cumsum(prof.pi_2[s]), u[t, 1], side="right"))
        sn = int(np.searchsorted(np.cumsum(small_game.transition[s, a1, a2]), u[t, 2], side="right"))
        assert (rec.s, rec.a1, rec.a2, rec.s_next) == (s, a1, a2, sn)
        assert rec.r1 == small_game.reward_1[s, a1, a2]
        s = sn


def test_identical_seeds_identical_streams(small_game):
    prof = StrategyProfile.uniform(small_game)

    def roll(seed):
        rng, s, out = make_rng(seed), 0, []
        for t in range(100):
            rec = step(small_game, s, prof, rng, t)
            out.append(rec)
            s = rec.s_next
        return out

    assert roll(5) == roll(5)
    assert roll(5) != roll(6)


def test_value_of_profile_simple_cases():
    g = one_state_game([[1.0]], [[2.0]], 0.9, 0.5)
    v1, v2 = value_of_profile(g, StrategyProfile.uniform(g))
    assert v1[0] == pytest.approx(10.0, abs=1e-12)
    assert v2[0] == pytest.approx(4.0, abs=1e-12)
    z = zero_game()
    v1, v2 = value_of_profile(z, StrategyProfile.uniform(z))
    assert np.all(v1 == 0) and np.all(v2 == 0)


def test_value_of_profile_linear_residual(default_game):
    prof = StrategyProfile.uniform(default_game)
    (r1, r2), p = induced_chain(default_game, prof)
    v1, v2 = value_of_profile(default_game, prof)
    assert np.abs(v1 - r1 - 0.9 * (p @ v1)).max() < 1e-10
    assert np.abs(v2 - r2 - 0.8 * (p @ v2)).max() < 1e-10


def test_value_of_profile_monte_carlo():
    g = generate_random_game(RandomGameSpec(d1=2, d2=2, d_s=2, gamma_1=0.5, gamma_2=0.5, seed=3))
    prof = StrategyProfile.uniform(g)
    v1, _ = value_of_profile(g, prof)
    # vectorized rollouts from state 0, truncated where gamma^T * M / (1 - gamma) < 1e-6
    rng = np.random.default_rng(9)
    n, horizon = 100_000, 22
    s = np.zeros(n, dtype=int)
    ret = np.zeros(n)
    cum = np.cumsum(g.transition, axis=-1)
    for t in range(horizon):
        a1 = rng.integers(0, 2, n)
        a2 = rng.integers(0, 2, n)
        ret += 0.5 ** t * g.reward_1[s, a1, a2]
        u = rng.random(n)
        s = np.minimum((u[:, None] >= cum[s, a1, a2]).sum(axis=1), 1)
    se = ret.std() / np.sqrt(n)
    assert abs(ret.mean() - v1[0]) < 3 * se


@given(st.integers(0, 10_000))
def test_value_bound_property(seed):
    g = generate_random_game(RandomGameSpec(d1=2, d2=3, d_s=4, seed=seed))
    rng = np.random.default_rng(seed)
    prof = StrategyProfile(rng.dirichlet(np.ones(2), 4), rng.dirichlet(np.ones(3), 4))
    v1, v2 = value_of_profile(g, prof)
    assert np.abs(v1).max() <= g.value_bound(0) + 1e-9
    assert np.abs(v2).max() <= g.value_bound(1) + 1e-9


def test_json_round_trip_lossless(tmp_path, default_game):
    path = tmp_path / "g.json"
    save_game(default_game, path)
    g = load_game(path)
    assert np.array_equal(g.reward_1, default_game.reward_1)
    assert np.array_equal(g.reward_2, default_game.reward_2)
    assert np.array_equal(g.transition, default_game.transition)
    assert g.gammas == default_game.gammas
    assert g.fingerprint() == default_game.fingerprint()
    doc = json.loads(path.read_text())
    assert set(doc) == {"n_states", "n_actions", "gamma", "rewards", "transitions", "metadata"}
    assert np.array(doc["transitions"]).shape == (10, 5, 7, 10)


def test_json_rejects_unknown_fields(default_game):
    d = game_to_dict(default_game)
    d["extra"] = 1
    with pytest.raises(InvalidGameError):
        game_from_dict(d)


def test_json_csr_form_round_trip():
    from nashq.envs import build_gridworld

    g = build_gridworld()
    d = json.loads(json.dumps(game_to_dict(g)))
    assert d["transitions"]["format"] == "csr"
    g2 = game_from_dict(d)
    assert (g2.transition_matrix != g.transition_matrix).nnz == 0
    assert np.array_equal(g2.terminal, g.terminal)
    assert g2.metadata == g.metadata


def test_seed_helpers():
    assert derive_seed(7, 1) == derive_seed(7, 1)
    assert derive_seed(7, 1) != derive_seed(7, 2)
    a = [g.random() for g in spawn_streams(3, 3)]
    b = [g.random() for g in spawn_streams(3, 3)]
    assert a == b and len(set(a)) == 3


def test_fast_game_mirror(small_game):
    fast = FastGame.from_game(small_game)
    for s in range(3):
        for a1 in range(2):
            for a2 in range(3):
                row = small_game.row_index(s, a1, a2)
                assert fast.rewards[0][row] == small_game.reward_1[s, a1, a2]
                p = np.zeros(3)
                p[fast.next_states[row]] = np.diff([0.0] + fast.next_cum[row])
                assert np.allclose(p, small_game.transition[s, a1, a2], atol=1e-15)


def test_profile_is_read_only(small_game):
    prof = StrategyProfile.uniform(small_game)
    with pytest.raises(ValueError):
        prof.pi_1[0, 0] = 1.0
    assert StrategyProfile.from_dict(prof.to_dict()) == prof
