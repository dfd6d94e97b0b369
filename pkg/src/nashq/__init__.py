"""Partial-information Nash Q-learning for two-player stochastic games."""
from .core import StochasticGame, StrategyProfile, load_game, save_game, value_of_profile
from .envs import GridworldSpec, RandomGameSpec, build_gridworld, generate_random_game
from .equilibrium import BimatrixGame, lemke_howson, support_enumeration
from .verify import certify_nash, reconstruct_full_q

__version__ = "0.1.0"

__all__ = [
    "BimatrixGame", "GridworldSpec", "RandomGameSpec", "StochasticGame", "StrategyProfile",
    "build_gridworld", "certify_nash", "generate_random_game", "lemke_howson", "load_game",
    "reconstruct_full_q", "save_game", "support_enumeration", "value_of_profile",
]
