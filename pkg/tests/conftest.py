import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nashq.core import StochasticGame
from nashq.envs import RandomGameSpec, generate_random_game

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

# criterion id -> (passed, detail); filled by test_acceptance, printed at the end
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture
def small_game():
    return generate_random_game(RandomGameSpec(d1=2, d2=3, d_s=3, seed=7))


@pytest.fixture
def default_game():
    return generate_random_game(RandomGameSpec())


def one_state_game(r1, r2, gamma_1=0.9, gamma_2=0.9):
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    m, n = r1.shape
    return StochasticGame(r1[None], r2[None], np.ones((1, m, n, 1)), gamma_1, gamma_2)


def zero_game(n_states=3, n1=2, n2=2, seed=0):
    rng = np.random.default_rng(seed)
    p = rng.random((n_states, n1, n2, n_states))
    p /= p.sum(-1, keepdims=True)
    z = np.zeros((n_states, n1, n2))
    return StochasticGame(z, z, p, 0.9, 0.8)
