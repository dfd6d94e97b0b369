"""Input checks shared by the estimators and the experiment runner."""
from __future__ import annotations

import numbers

import numpy as np

from .core import StochasticGame


def check_game(game):
    if not isinstance(game, StochasticGame):
        raise TypeError(f"expected a StochasticGame, got {type(game).__name__}")
    return game


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_probability(value, name, low_open=False):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise ValueError(f"{name} must be a number, got {value!r}")
    ok = (0.0 < value <= 1.0) if low_open else (0.0 <= value <= 1.0)
    if not ok:
        raise ValueError(f"{name} out of range: {value!r}")
    return float(value)


def check_discount(value, name="gamma"):
    if not isinstance(value, numbers.Real) or isinstance(value, bool) or not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {value!r}")
    return float(value)


def check_states(states, n_states):
    """Integer state ids in range; ``None`` means all states."""
    if states is None:
        return np.arange(n_states)
    s = np.atleast_1d(np.asarray(states))
    if s.dtype.kind not in "iu":
        raise ValueError("state ids must be integers")
    if s.size and (s.min() < 0 or s.max() >= n_states):
        raise ValueError(f"state ids must lie in [0, {n_states})")
    return s.astype(np.int64)
